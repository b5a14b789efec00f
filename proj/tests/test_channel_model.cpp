#include <cmath>
#include <complex>

#include <gtest/gtest.h>

#include "ris/channel_model.hpp"
#include "ris/random.hpp"

using namespace ris;

namespace {

CMatrix random_matrix(int rows, int cols, Rng& rng) {
  CMatrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = cplx(standard_normal(rng), standard_normal(rng));
  return m;
}

// Channel taps on the T_s grid followed by a unitary K-point DFT; delays must be
// integer multiples of T_s for an exact match.
CMatrix dft_oracle(const PathSet& paths, const ArrayGeometry& geo, const OfdmGrid& grid) {
  const int k_count = grid.k_subcarriers;
  const int n = geo.size();
  std::vector<CMatrix> taps(static_cast<std::size_t>(k_count), CMatrix::Zero(n, 1));
  for (const auto& p : paths.paths) {
    const long tap = std::lround(p.delay_s / grid.sample_period_s);
    const double cycles = grid.carrier_hz * p.delay_s;
    const cplx gain = p.amplitude * std::exp(cplx(0.0, -2.0 * kPi * (cycles - std::floor(cycles))));
    CVector a(n);
    for (int i = 0; i < geo.n_v; ++i)
      for (int j = 0; j < geo.n_h; ++j) {
        const double u = std::cos(p.elevation_rad);
        const double v = std::sin(p.elevation_rad) * std::cos(p.azimuth_rad);
        a(i * geo.n_h + j) = std::exp(cplx(0.0, -2.0 * kPi * geo.spacing_over_lambda * (i * u + j * v)));
      }
    taps[static_cast<std::size_t>(tap)] += gain * a;
  }
  CMatrix h = CMatrix::Zero(n, k_count);
  for (int k = 0; k < k_count; ++k)
    for (int l = 0; l < k_count; ++l)
      h.col(k) += taps[static_cast<std::size_t>(l)] * std::exp(cplx(0.0, -2.0 * kPi * k * l / k_count));
  return h / std::sqrt(static_cast<double>(k_count));
}

double rate_loop(const CMatrix& h, const CMatrix& g, const CVector& theta, double s2) {
  double total = 0.0;
  for (int k = 0; k < h.cols(); ++k) {
    cplx y = 0.0;
    for (int n = 0; n < h.rows(); ++n) y += g(n, k) * h(n, k) * theta(n);
    total += std::log2(1.0 + std::norm(y) / s2);
  }
  return total / static_cast<double>(h.cols());
}

}  // namespace

TEST(SteeringVector, SingleElementIsOne) {
  const auto a = steering_vector({1, 1, 0.5}, 0.3, 1.1);
  ASSERT_EQ(a.size(), 1);
  EXPECT_EQ(a(0), cplx(1.0, 0.0));
}

TEST(SteeringVector, BroadsideVertical) {
  const auto a = steering_vector({2, 1, 0.5}, kPi / 2, 0.4);
  EXPECT_NEAR(std::abs(a(0) - 1.0), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(a(1) - 1.0), 0.0, 1e-15);
}

TEST(SteeringVector, SixtyDegreesGivesMinusI) {
  const auto a = steering_vector({2, 1, 0.5}, kPi / 3, 0.0);
  EXPECT_NEAR(std::abs(a(1) - cplx(0.0, -1.0)), 0.0, 1e-12);
}

TEST(SteeringVector, UnitModulusAndKroneckerOrder) {
  const ArrayGeometry geo{3, 5, 0.5};
  const double el = 1.1, az = -0.7;
  const auto a = steering_vector(geo, el, az);
  const double u = std::cos(el), v = std::sin(el) * std::cos(az);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) {
      const cplx want = std::exp(cplx(0.0, -kPi * (i * u + j * v)));
      EXPECT_NEAR(std::abs(a(i * 5 + j) - want), 0.0, 1e-12);
      EXPECT_NEAR(std::abs(a(i * 5 + j)), 1.0, 1e-12);
    }
}

TEST(Geometry, Validation) {
  EXPECT_THROW((ArrayGeometry{0, 2, 0.5}.validate()), std::invalid_argument);
  EXPECT_THROW((ArrayGeometry{2, 2, 0.0}.validate()), std::invalid_argument);
  EXPECT_THROW((OfdmGrid{0, 1e-8, 1e9}.validate()), std::invalid_argument);
  EXPECT_EQ((ArrayGeometry{8, 8, 0.5}.size()), 64);
}

TEST(PathSet, RejectsZeroPaths) { EXPECT_THROW(gen_pathset(0, {16, 1e-8, 2.5e9}, 1), std::invalid_argument); }

TEST(PathSet, SinglePathHasUnitAmplitude) {
  const auto p = gen_pathset(1, {16, 1e-8, 2.5e9}, 3);
  EXPECT_NEAR(std::abs(p.paths[0].amplitude), 1.0, 1e-14);
}

TEST(PathSet, DeterministicInSeed) {
  const OfdmGrid grid{16, 1e-8, 2.5e9};
  const auto a = gen_pathset(5, grid, 7), b = gen_pathset(5, grid, 7), c = gen_pathset(5, grid, 8);
  for (int p = 0; p < 5; ++p) {
    EXPECT_EQ(a.paths[p].amplitude, b.paths[p].amplitude);
    EXPECT_EQ(a.paths[p].delay_s, b.paths[p].delay_s);
    EXPECT_EQ(a.paths[p].elevation_rad, b.paths[p].elevation_rad);
    EXPECT_EQ(a.paths[p].azimuth_rad, b.paths[p].azimuth_rad);
  }
  EXPECT_NE(a.paths[0].amplitude, c.paths[0].amplitude);
}

TEST(PathSet, UnitPowerAndSupportsOverSeedSweep) {
  const OfdmGrid grid{16, 1e-8, 2.5e9};
  const PathStatistics st;
  double mean = 0.0;
  const int draws = 10000;
  for (int s = 0; s < draws; ++s) {
    const auto p = gen_pathset(5, grid, static_cast<std::uint64_t>(s));
    double power = 0.0;
    for (const auto& path : p.paths) {
      power += std::norm(path.amplitude);
      ASSERT_GE(path.delay_s, 0.0);
      ASSERT_LT(path.delay_s, 16 * 1e-8 / 4);
      ASSERT_GE(path.elevation_rad, st.elevation_lo);
      ASSERT_LE(path.elevation_rad, st.elevation_hi);
      ASSERT_GT(path.azimuth_rad, st.azimuth_lo);
      ASSERT_LT(path.azimuth_rad, st.azimuth_hi);
    }
    mean += power / draws;
  }
  EXPECT_NEAR(mean, 1.0, 1e-12);
}

TEST(FreqChannel, ZeroDelayColumnsIdentical) {
  const ArrayGeometry geo{2, 3, 0.5};
  const OfdmGrid grid{8, 1e-8, 2.4e9};
  PathSet ps;
  ps.paths.push_back({cplx(0.6, -0.8), 0.0, 1.0, 0.3});
  const CMatrix h = freq_channel(ps, geo, grid);
  const CVector want = ps.paths[0].amplitude * steering_vector(geo, 1.0, 0.3) / std::sqrt(8.0);
  for (int k = 0; k < 8; ++k) EXPECT_LT((h.col(k) - want).norm(), 1e-14);
}

TEST(FreqChannel, FullScaleDims) {
  const ArrayGeometry geo{8, 8, 0.5};
  const OfdmGrid grid{64, 1e-8, 2.5e9};
  const CMatrix h = freq_channel(gen_pathset(5, grid, 1), geo, grid);
  EXPECT_EQ(h.rows(), 64);
  EXPECT_EQ(h.cols(), 64);
  EXPECT_TRUE(h.allFinite());
}

TEST(FreqChannel, MatchesDftOracleOnIntegerDelays) {
  const ArrayGeometry geo{1, 1, 0.5};
  const OfdmGrid grid{4, 1e-8, 2.5e9};
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    PathSet ps;
    for (int p = 0; p < 2; ++p)
      ps.paths.push_back({cplx(standard_normal(rng), standard_normal(rng)), static_cast<double>(rng() % 4) * 1e-8,
                          uniform(rng, 0.5, 2.5), uniform(rng, -1.5, 1.5)});
    const CMatrix h = freq_channel(ps, geo, grid);
    const CMatrix o = dft_oracle(ps, geo, grid);
    EXPECT_LT((h - o).norm() / o.norm(), 1e-10);
  }
}

TEST(FreqChannel, LinearInAmplitudes) {
  const ArrayGeometry geo{2, 2, 0.5};
  const OfdmGrid grid{8, 1e-8, 2.5e9};
  auto ps = gen_pathset(3, grid, 9);
  const CMatrix h = freq_channel(ps, geo, grid);
  const cplx c(0.3, -1.7);
  for (auto& p : ps.paths) p.amplitude *= c;
  EXPECT_LT((freq_channel(ps, geo, grid) - c * h).norm(), 1e-12 * h.norm());
}

TEST(FreqChannel, SinglePathNormIndependentOfAngles) {
  const ArrayGeometry geo{4, 4, 0.5};
  const OfdmGrid grid{16, 1e-8, 2.5e9};
  for (double el : {0.6, 1.2, 2.0})
    for (double az : {-1.0, 0.2, 1.4}) {
      PathSet ps;
      ps.paths.push_back({cplx(0.8, 0.6), 3.3e-8, el, az});
      // N entries of modulus 1 times |amp|^2 / K per column, K columns
      EXPECT_NEAR(freq_channel(ps, geo, grid).squaredNorm(), 16.0, 1e-9);
    }
}

TEST(Tensor, ZeroInZeroOut) {
  const auto t = build_tensor(CMatrix::Zero(3, 2), CMatrix::Zero(3, 2));
  EXPECT_EQ(t.values.cols(), 4);
  EXPECT_EQ(t.values.norm(), 0.0);
}

TEST(Tensor, SliceOrder) {
  CMatrix h = CMatrix::Zero(2, 2), g = CMatrix::Zero(2, 2);
  h(0, 0) = cplx(1.0, 2.0);
  g(1, 0) = cplx(3.0, 4.0);
  const auto t = build_tensor(h, g);
  EXPECT_EQ(t.at(0, 0, 0), 1.0);
  EXPECT_EQ(t.at(0, 0, 1), 2.0);
  EXPECT_EQ(t.at(1, 0, 2), 3.0);
  EXPECT_EQ(t.at(1, 0, 3), 4.0);
}

TEST(Tensor, RoundTripIsExact) {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const CMatrix h = random_matrix(5, 3, rng), g = random_matrix(5, 3, rng);
    const auto back = split_tensor(build_tensor(h, g));
    EXPECT_TRUE(back.h == h);
    EXPECT_TRUE(back.g == g);
  }
}

TEST(Tensor, DimensionMismatchThrows) {
  EXPECT_THROW(build_tensor(CMatrix::Zero(3, 2), CMatrix::Zero(2, 2)), std::invalid_argument);
}

TEST(Rate, ZeroChannelGivesZero) {
  Rng rng(2);
  EXPECT_EQ(achievable_rate(CMatrix::Zero(4, 3), random_matrix(4, 3, rng), CVector::Ones(4), 0.1), 0.0);
}

TEST(Rate, ScalarClosedForm) {
  const CMatrix one = CMatrix::Ones(1, 1);
  EXPECT_DOUBLE_EQ(achievable_rate(one, one, CVector::Ones(1), 1.0), 1.0);
}

TEST(Rate, MatchesScalarLoop) {
  Rng rng(3);
  const CMatrix h = random_matrix(4, 2, rng), g = random_matrix(4, 2, rng);
  CVector theta(4);
  for (int i = 0; i < 4; ++i) theta(i) = std::polar(1.0, uniform(rng, -kPi, kPi));
  const double want = rate_loop(h, g, theta, 0.3);
  EXPECT_NEAR(achievable_rate(h, g, theta, 0.3), want, 1e-12 * want);
}

TEST(Rate, GlobalPhaseInvariance) {
  Rng rng(4);
  const CMatrix h = random_matrix(6, 5, rng), g = random_matrix(6, 5, rng);
  const CVector theta = random_matrix(6, 1, rng).col(0);
  const double r0 = achievable_rate(h, g, theta, 0.5);
  EXPECT_NEAR(achievable_rate(h, g, theta * std::polar(1.0, 1.234), 0.5), r0, 1e-12 * r0);
}

TEST(Rate, RejectsBadNoiseAndLength) {
  const CMatrix one = CMatrix::Ones(2, 1);
  EXPECT_THROW(achievable_rate(one, one, CVector::Ones(2), 0.0), std::invalid_argument);
  EXPECT_THROW(achievable_rate(one, one, CVector::Ones(3), 1.0), std::invalid_argument);
}
