#pragma once

#include <cstddef>
#include <deque>
#include <string>

#include "ris/diffkit/tensor.hpp"

namespace ris::diffkit {

template <class T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  Mat<T> first_moment;
  Mat<T> second_moment;
};

/// Owns trainable arrays with their gradients and Adam moments. Addresses of
/// stored params are stable, layers keep raw pointers into the store.
template <class T>
class ParamStore {
 public:
  Param<T>& add(std::string name, int rows, int cols) {
    Param<T>& p = params_.emplace_back();
    p.name = std::move(name);
    p.value = Mat<T>::Zero(rows, cols);
    p.grad = Mat<T>::Zero(rows, cols);
    p.first_moment = Mat<T>::Zero(rows, cols);
    p.second_moment = Mat<T>::Zero(rows, cols);
    return p;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }

  std::size_t size() const { return params_.size(); }
  Param<T>& operator[](std::size_t i) { return params_[i]; }
  const Param<T>& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  long step() const { return step_; }
  long& step() { return step_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

 private:
  std::deque<Param<T>> params_;
  long step_ = 0;
};

}  // namespace ris::diffkit
