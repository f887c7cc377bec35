#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>

#include "test_util.hpp"
#include "windcast/iceemdan.hpp"
#include "windcast/synthetic.hpp"

using namespace windcast;
using windcast::testing::pearson;

namespace {

std::vector<double> two_tone(std::size_t n) {
  SyntheticSpec spec;
  spec.components = {{1.0, 0.05, 0.0}, {1.0, 0.005, 0.0}};
  spec.length = n;
  return generate_synthetic(spec).values;
}

IceemdanParams fast_params(std::size_t max_imfs) {
  IceemdanParams p;
  p.realizations = 20;
  p.max_imfs = max_imfs;
  p.max_sift_iters = 50;
  p.seed = 17;
  return p;
}

double max_abs(const std::vector<double>& x) {
  double m = 0;
  for (double v : x) m = std::max(m, std::fabs(v));
  return m;
}

}  // namespace

TEST(NoiseBank, RealizationsAreStandardised) {
  const NoiseBank bank(2000, 8, 3, 99, {50, 1e-8});
  for (std::size_t j = 0; j < bank.realizations(); ++j) {
    EXPECT_LT(std::fabs(mean_of(bank.noise(j))), 0.05);
    EXPECT_LT(std::fabs(std_of(bank.noise(j)) - 1.0), 0.05);
    EXPECT_NEAR(std_of(bank.mode(j, 1)), 1.0, 1e-12);
  }
  EXPECT_TRUE(bank.mode(0, 0).empty());
  EXPECT_TRUE(bank.mode(0, 4).empty());
}

TEST(Iceemdan, TenModesReconstructTwoTone) {
  const auto x = two_tone(2000);
  const auto d = iceemdan(x, fast_params(10));
  ASSERT_EQ(d.imfs.size(), 10u);
  EXPECT_EQ(d.subseries().size(), 11u);
  for (const auto& imf : d.imfs) EXPECT_EQ(imf.size(), x.size());
  EXPECT_LE(d.max_reconstruction_error(x), 1e-8 * (max_abs(x) + 1.0));
}

TEST(Iceemdan, ZeroSignalDecomposesToZeros) {
  IceemdanParams p;
  p.realizations = 90;
  const std::vector<double> x(500, 0.0);
  const auto d = iceemdan(x, p);
  ASSERT_EQ(d.imfs.size(), 10u);
  for (const auto& imf : d.imfs)
    for (double v : imf) EXPECT_EQ(v, 0.0);
  for (double v : d.residue) EXPECT_EQ(v, 0.0);
}

TEST(Iceemdan, DeterministicPerSeed) {
  const auto x = two_tone(600);
  const auto a = iceemdan(x, fast_params(4));
  const auto b = iceemdan(x, fast_params(4));
  EXPECT_EQ(a.imfs, b.imfs);
  EXPECT_EQ(a.residue, b.residue);
  auto other = fast_params(4);
  other.seed = 18;
  EXPECT_NE(iceemdan(x, other).imfs, a.imfs);
}

TEST(Iceemdan, ThreadCountDoesNotChangeResult) {
  const auto x = two_tone(600);
  const auto serial = iceemdan(x, fast_params(3));
  setenv("WINDCAST_THREADS", "4", 1);
  const auto threaded = iceemdan(x, fast_params(3));
  setenv("WINDCAST_THREADS", "0", 1);
  EXPECT_EQ(serial.imfs, threaded.imfs);
  EXPECT_EQ(serial.residue, threaded.residue);
}

TEST(Iceemdan, ModesOrderedByFrequency) {
  const auto x = two_tone(2000);
  const auto d = iceemdan(x, fast_params(6));
  std::vector<std::size_t> crossings;
  for (const auto& imf : d.imfs) {
    if (max_abs(imf) == 0.0) break;
    crossings.push_back(count_zero_crossings(imf));
  }
  ASSERT_GE(crossings.size(), 2u);
  for (std::size_t k = 1; k < crossings.size(); ++k)
    EXPECT_GE(crossings[k - 1], crossings[k]) << "mode " << k + 1;
}

TEST(Iceemdan, TonesLandInDistinctModes) {
  SyntheticSpec spec;
  spec.length = 2000;
  spec.components = {{1.0, 0.05, 0.0}};
  const auto fast = generate_synthetic(spec).values;
  spec.components = {{1.0, 0.005, 0.0}};
  const auto slow = generate_synthetic(spec).values;
  const auto x = two_tone(2000);
  const auto d = iceemdan(x, fast_params(8));

  double best_fast = -1, best_slow = -1;
  std::size_t fast_mode = 0, slow_mode = 0;
  for (std::size_t k = 0; k < d.imfs.size(); ++k) {
    if (max_abs(d.imfs[k]) == 0.0) continue;
    const double cf = pearson(d.imfs[k], fast), cs = pearson(d.imfs[k], slow);
    if (cf > best_fast) best_fast = cf, fast_mode = k;
    if (cs > best_slow) best_slow = cs, slow_mode = k;
  }
  EXPECT_LT(fast_mode, slow_mode);
  EXPECT_GT(best_fast, 0.5);
  EXPECT_GT(best_slow, 0.9);
}

TEST(Iceemdan, SharedNoiseBankMatchesOwnBank) {
  const auto x = two_tone(500);
  const auto p = fast_params(4);
  const NoiseBank bank(x.size(), p.realizations, 6, p.seed, p.sift());
  const auto a = iceemdan(x, p, &bank);
  const auto b = iceemdan(x, p);
  EXPECT_EQ(a.imfs, b.imfs);
  EXPECT_EQ(a.residue, b.residue);
}

TEST(Iceemdan, InputErrors) {
  EXPECT_THROW(iceemdan(std::vector<double>{1, 2, 3}, fast_params(2)), DataError);
  std::vector<double> x(100, 1.0);
  x[40] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(iceemdan(x, fast_params(2)), DataError);
  auto bad = fast_params(2);
  bad.noise_ratio = 0.0;
  EXPECT_THROW(iceemdan(two_tone(100), bad), ConfigError);
  bad = fast_params(2);
  bad.realizations = 0;
  EXPECT_THROW(iceemdan(two_tone(100), bad), ConfigError);
}
