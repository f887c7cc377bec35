#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "windcast/csv.hpp"
#include "windcast/metrics.hpp"
#include "windcast/series.hpp"
#include "windcast/synthetic.hpp"

using namespace windcast;
using windcast::testing::scratch_dir;
using windcast::testing::write_text;

namespace {

/// Straight transcription of the five index definitions, kept separate from
/// compute_metrics on purpose.
struct NaiveMetrics {
  double mae, mape, mre, mse, rmse;
};

NaiveMetrics naive_metrics(const std::vector<double>& g, const std::vector<double>& f) {
  const double T = static_cast<double>(g.size());
  double sq = 0, ab = 0, rel = 0;
  for (std::size_t u = 0; u < g.size(); ++u) sq += (g[u] - f[u]) * (g[u] - f[u]);
  for (std::size_t u = 0; u < g.size(); ++u) ab += std::fabs(g[u] - f[u]);
  for (std::size_t u = 0; u < g.size(); ++u) rel += std::fabs(g[u] - f[u]) / std::fabs(g[u]);
  return {ab / T, rel / T * 100.0, rel / T, sq / T, std::sqrt(sq / T)};
}

bool rel_close(double a, double b, double tol) {
  return std::fabs(a - b) <= tol * std::max({std::fabs(a), std::fabs(b), 1e-300});
}

}  // namespace

TEST(Metrics, IdentityIsZero) {
  const auto m = compute_metrics(std::vector<double>{2, 4}, std::vector<double>{2, 4});
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.mape, 0.0);
  EXPECT_EQ(m.mre, 0.0);
  EXPECT_EQ(m.mse, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_EQ(m.n, 2u);
}

TEST(Metrics, SwappedPair) {
  // |1-2|/1 = 1 and |2-1|/2 = 0.5, mean 0.75.
  const auto m = compute_metrics(std::vector<double>{1, 2}, std::vector<double>{2, 1});
  EXPECT_DOUBLE_EQ(m.mae, 1.0);
  EXPECT_DOUBLE_EQ(m.mse, 1.0);
  EXPECT_DOUBLE_EQ(m.rmse, 1.0);
  EXPECT_DOUBLE_EQ(m.mape, 75.0);
  EXPECT_DOUBLE_EQ(m.mre, 0.75);
}

TEST(Metrics, SinglePoint) {
  const auto m = compute_metrics(std::vector<double>{5}, std::vector<double>{3});
  EXPECT_DOUBLE_EQ(m.mae, 2.0);
  EXPECT_DOUBLE_EQ(m.mse, 4.0);
  EXPECT_DOUBLE_EQ(m.rmse, 2.0);
  EXPECT_DOUBLE_EQ(m.mape, 40.0);
  EXPECT_DOUBLE_EQ(m.mre, 0.4);
}

TEST(Metrics, ZeroGroundListsIndices) {
  try {
    compute_metrics(std::vector<double>{1, 0, 3, 0}, std::vector<double>{1, 1, 1, 1});
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("1,3"), std::string::npos) << msg;
  }
}

TEST(Metrics, LengthMismatchAndEmpty) {
  EXPECT_THROW(compute_metrics(std::vector<double>{1, 2}, std::vector<double>{1}),
               DataError);
  EXPECT_THROW(compute_metrics(std::vector<double>{}, std::vector<double>{}), DataError);
}

TEST(Metrics, MatchesNaiveOracleOnRandomPairs) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.next() % 200;
    auto g = windcast::testing::random_vector(rng, n, 0.5, 20.0);
    auto f = windcast::testing::random_vector(rng, n, 0.0, 25.0);
    const auto m = compute_metrics(g, f);
    const auto o = naive_metrics(g, f);
    EXPECT_TRUE(rel_close(m.mae, o.mae, 1e-12));
    EXPECT_TRUE(rel_close(m.mape, o.mape, 1e-12));
    EXPECT_TRUE(rel_close(m.mre, o.mre, 1e-12));
    EXPECT_TRUE(rel_close(m.mse, o.mse, 1e-12));
    EXPECT_TRUE(rel_close(m.rmse, o.rmse, 1e-12));
    EXPECT_TRUE(rel_close(m.rmse * m.rmse, m.mse, 1e-12));
    EXPECT_TRUE(rel_close(m.mre * 100.0, m.mape, 1e-12));
    EXPECT_LE(m.mae, m.rmse * (1 + 1e-12));
  }
}

TEST(Split, SmallSeries) {
  TimeSeries s{{1, 2, 3, 4}, 0, 600.0, "x"};
  auto [a, b] = split(s, 2);
  EXPECT_EQ(a.values, (std::vector<double>{1, 2}));
  EXPECT_EQ(b.values, (std::vector<double>{3, 4}));
  EXPECT_EQ(b.start_time, 1200);
}

TEST(Split, YearHalves) {
  TimeSeries s;
  s.values.resize(105120);
  std::iota(s.values.begin(), s.values.end(), 0.0);
  auto [train, test] = split(s, 52560);
  EXPECT_EQ(train.size(), 52560u);
  EXPECT_EQ(test.size(), 52560u);
  std::vector<double> joined = train.values;
  joined.insert(joined.end(), test.values.begin(), test.values.end());
  EXPECT_EQ(joined, s.values);
}

TEST(Split, BoundaryOutOfRange) {
  TimeSeries s{{1, 2, 3}, 0, 1.0, "x"};
  EXPECT_THROW(split(s, 0), DataError);
  EXPECT_THROW(split(s, 3), DataError);
}

TEST(Split, ConcatenationIsLosslessForEveryBoundary) {
  Rng rng(3);
  TimeSeries s{windcast::testing::random_vector(rng, 37), 0, 1.0, "x"};
  for (std::size_t b = 1; b < s.size(); ++b) {
    auto [head, tail] = split(s, b);
    auto joined = head.values;
    joined.insert(joined.end(), tail.values.begin(), tail.values.end());
    ASSERT_EQ(joined, s.values);
  }
}

TEST(Scale, ForwardAndErrors) {
  TimeSeries s{{0, 5, 10}, 0, 1.0, "x"};
  auto [scaled, p] = minmax_scale(s);
  EXPECT_EQ(scaled.values, (std::vector<double>{0, 0.5, 1}));
  TimeSeries flat{{3, 3}, 0, 1.0, "x"};
  EXPECT_THROW(minmax_scale(flat), DataError);
}

TEST(Scale, RoundTripOnRandomSeries) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    TimeSeries s{windcast::testing::random_vector(rng, 100, -50, 80), 0, 1.0, "x"};
    auto [scaled, p] = minmax_scale(s);
    const auto back = inverse_scale(scaled, p);
    for (std::size_t i = 0; i < s.size(); ++i)
      ASSERT_LE(std::fabs(back.values[i] - s.values[i]), 1e-12 * std::fabs(s.values[i]) + 1e-12);
  }
}

TEST(Synthetic, PureSine) {
  SyntheticSpec spec;
  spec.components = {{1.0, 0.01, 0.0}};
  spec.length = 100;
  const auto s = generate_synthetic(spec);
  ASSERT_EQ(s.size(), 100u);
  for (double v : s.values) EXPECT_LE(std::fabs(v), 1.0);
  EXPECT_NEAR(s.values[25], 1.0, 1e-12);
}

TEST(Synthetic, EmptyRecipeIsZero) {
  SyntheticSpec spec;
  spec.length = 10;
  for (double v : generate_synthetic(spec).values) EXPECT_EQ(v, 0.0);
}

TEST(Synthetic, DeterministicPerSeed) {
  auto spec = two_tone_benchmark_spec();
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  EXPECT_EQ(a.values, b.values);
  spec.seed += 1;
  EXPECT_NE(generate_synthetic(spec).values, a.values);
}

TEST(Synthetic, ZeroLengthRejected) {
  SyntheticSpec spec;
  EXPECT_THROW(generate_synthetic(spec), ConfigError);
}

TEST(Csv, TwoRows) {
  const auto dir = scratch_dir("csv_two");
  write_text(dir / "a.csv",
             "timestamp,wind_speed\n2018-01-01T00:00:00Z,3.1\n2018-01-01T00:10:00Z,3.4\n");
  const auto s = load_csv(dir / "a.csv", "wind_speed");
  EXPECT_EQ(s.values, (std::vector<double>{3.1, 3.4}));
  EXPECT_EQ(s.step, 600.0);
  EXPECT_EQ(format_iso8601(s.start_time), "2018-01-01T00:00:00Z");
}

TEST(Csv, NonNumericCellNamesRow) {
  const auto dir = scratch_dir("csv_bad");
  std::string text = "timestamp,wind_speed\n";
  for (int r = 1; r <= 9; ++r) {
    char line[64];
    std::snprintf(line, sizeof line, "2018-01-01T%02d:00:00,%s\n", r, r == 7 ? "calm" : "4.0");
    text += line;
  }
  write_text(dir / "b.csv", text);
  try {
    load_csv(dir / "b.csv");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 7"), std::string::npos) << e.what();
  }
}

TEST(Csv, ErrorContracts) {
  const auto dir = scratch_dir("csv_err");
  EXPECT_THROW(load_csv(dir / "missing.csv"), DataError);

  write_text(dir / "nocol.csv", "timestamp,speed\n2018-01-01T00:00:00,1\n");
  EXPECT_THROW(load_csv(dir / "nocol.csv"), DataError);

  write_text(dir / "irregular.csv",
             "timestamp,wind_speed\n2018-01-01T00:00:00,1\n2018-01-01T00:10:00,1\n"
             "2018-01-01T00:30:00,1\n");
  EXPECT_THROW(load_csv(dir / "irregular.csv"), DataError);

  write_text(dir / "nan.csv",
             "timestamp,wind_speed\n2018-01-01T00:00:00,1\n2018-01-01T00:10:00,nan\n");
  EXPECT_THROW(load_csv(dir / "nan.csv"), DataError);
}

TEST(Csv, FullYearOfTenMinuteData) {
  const auto dir = scratch_dir("csv_year");
  SyntheticSpec spec;
  spec.components = {{2.0, 1.0 / 144.0, 0.0}};
  spec.offset = 7.0;
  spec.length = 52560;
  write_series_csv(dir / "year.csv", generate_synthetic(spec));
  const auto s = load_csv(dir / "year.csv");
  EXPECT_EQ(s.size(), 52560u);
  EXPECT_EQ(s.step, 600.0);
  const auto last = s.start_time + static_cast<std::int64_t>(600 * (s.size() - 1));
  EXPECT_EQ(format_iso8601(last), "2018-12-31T23:50:00Z");
}

TEST(Csv, MetricsRowsUseSixteenDigits) {
  std::ostringstream out;
  ErrorMetrics m;
  m.mae = 1.0 / 3.0;
  write_metrics_csv(out, m);
  EXPECT_NE(out.str().find("MAE,0.3333333333333333\n"), std::string::npos) << out.str();
}
