#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ris::diffkit {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Shape {
  int height = 1;
  int width = 1;
  int channels = 1;

  int pixels() const { return height * width; }
  int size() const { return height * width * channels; }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
  }
};

/// Activations of `count` samples. Row (s * H + y) * W + x of `data` holds
/// the channel vector of pixel (y, x) of sample s, so a flattened sample is a
/// contiguous row-major run of H*W*C values.
template <class T>
struct Batch {
  int count = 0;
  Shape shape;
  Mat<T> data;

  Batch() = default;
  Batch(int n, Shape s) : count(n), shape(s), data(Mat<T>::Zero(n * s.pixels(), s.channels)) {}

  T& at(int sample, int y, int x, int c) {
    return data((sample * shape.height + y) * shape.width + x, c);
  }
  T at(int sample, int y, int x, int c) const {
    return data((sample * shape.height + y) * shape.width + x, c);
  }

  // View of one sample as 1 x (H*W*C).
  auto flat_row(int sample) const {
    return Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(
        data.data() + static_cast<Eigen::Index>(sample) * shape.size(), shape.size());
  }

  void check(const char* who) const {
    if (data.rows() != static_cast<Eigen::Index>(count) * shape.pixels() ||
        data.cols() != shape.channels)
      throw std::invalid_argument(std::string(who) + ": batch storage does not match its shape");
  }
};

template <class To, class From>
Batch<To> cast_batch(const Batch<From>& in) {
  Batch<To> out;
  out.count = in.count;
  out.shape = in.shape;
  out.data = in.data.template cast<To>();
  return out;
}

}  // namespace ris::diffkit
