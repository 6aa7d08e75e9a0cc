#include <gtest/gtest.h>

#include <cmath>

#include "micromotion/eval.hpp"
#include "micromotion/report.hpp"
#include "micromotion/testing/oracles.hpp"

using namespace micromotion;

namespace {

std::vector<float> gaussian(std::size_t n, std::uint64_t seed, std::uint64_t sub = 0) {
  RngSequence rng(seed, Stream::test, sub);
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.normal());
  return v;
}

/// Smoothed noise: correlated pairs score well above chance.
std::vector<float> smooth(std::span<const float> x, std::size_t width) {
  std::vector<float> out(x.size(), 0.0f);
  for (std::size_t t = 0; t < x.size(); ++t)
    for (std::size_t k = 0; k < width && k <= t; ++k) out[t] += x[t - k];
  return out;
}

}  // namespace

TEST(Zscore, HandArithmeticAndIdempotence) {
  const auto z = zscore(Trace(50.0, {0.0f, 2.0f}));
  EXPECT_EQ(z[0], -1.0f);
  EXPECT_EQ(z[1], 1.0f);
  const Trace x(50.0, gaussian(300, 1));
  const auto once = zscore(x), twice = zscore(once);
  for (std::size_t t = 0; t < 300; ++t) EXPECT_NEAR(once[t], twice[t], 1e-6);
  EXPECT_THROW(zscore(Trace(50.0, std::vector<float>(9, 4.0f))), InvalidArgument);
}

TEST(Score, IdenticalTracesScoreExactlyOne) {
  for (const std::size_t n : {2u, 3u, 17u, 512u, 5000u}) {
    const auto x = gaussian(n, n);
    EXPECT_EQ(correlation_score(x, x), 1.0) << n;
  }
}

TEST(Score, MatchesBruteForceOracleOnRandomPairs) {
  RngSequence lengths(2, Stream::test);
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(lengths.uniform() * 511.0);
    auto a = gaussian(n, 3, i), b = gaussian(n, 4, i);
    // Half the pairs share a component so high scores are exercised too.
    if (i % 2 == 0) {
      const auto s = smooth(a, 5);
      for (std::size_t t = 0; t < n; ++t) b[t] += s[t];
    }
    worst = std::max(worst, std::abs(correlation_score(a, b) - oracle::max_lag_correlation(a, b)));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Score, ZeroFilledShiftMatchesOracle) {
  const std::size_t n = 400;
  const auto x = gaussian(n, 5);
  for (const std::size_t s : {1u, 7u, 60u, 399u}) {
    std::vector<float> y(n, 0.0f);
    for (std::size_t t = s; t < n; ++t) y[t] = x[t - s];
    const double got = correlation_score(x, y);
    EXPECT_NEAR(got, oracle::max_lag_correlation(x, y), 1e-6) << s;
    if (s < 200) {
      EXPECT_LT(got, 1.0);
    }
  }
}

TEST(Score, CircularShiftIsNotOne) {
  const std::size_t n = 256;
  const auto x = gaussian(n, 6);
  std::vector<float> y(n);
  for (std::size_t t = 0; t < n; ++t) y[t] = x[(t + n - 30) % n];
  EXPECT_LT(correlation_score(x, y), 0.95);
}

TEST(Score, WhiteNoiseStaysBelowBound) {
  const auto band = white_noise_null_band(5000, 100, 7);
  ASSERT_EQ(band.scores.size(), 100u);
  EXPECT_LT(band.upper(), 0.15);
  EXPECT_GT(band.mean(), 0.0);
}

TEST(Score, ScaleAndShiftInvariance) {
  const auto x = gaussian(300, 8), y = gaussian(300, 9);
  const double base = correlation_score(x, y);
  for (const float a : {0.5f, 3.0f, 1000.0f})
    for (const float b : {0.0f, -7.0f, 12.5f}) {
      std::vector<float> m(300);
      for (std::size_t t = 0; t < 300; ++t) m[t] = a * x[t] + b;
      // Exact in real arithmetic; float inputs leave only rounding.
      EXPECT_NEAR(correlation_score(m, y), base, 1e-6) << a << " " << b;
    }
}

TEST(Score, NegativeScaleIsNegatedCorrelation) {
  const auto x = gaussian(300, 10), y = gaussian(300, 11);
  std::vector<float> m(300);
  for (std::size_t t = 0; t < 300; ++t) m[t] = -2.0f * x[t] + 1.0f;
  EXPECT_NEAR(correlation_score(m, y), oracle::max_lag_correlation(x, y, true), 1e-6);
}

TEST(Score, SymmetricAndBounded) {
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto x = gaussian(128, 12, i), y = gaussian(128, 13, i);
    const double s = correlation_score(x, y);
    EXPECT_NEAR(s, correlation_score(y, x), 1e-9);
    EXPECT_GE(s, -1.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(Score, InvalidInputsRejected) {
  const auto x = gaussian(10, 14);
  EXPECT_THROW(correlation_score(x, std::vector<float>(10, 1.0f)), InvalidArgument);
  EXPECT_THROW(correlation_score(x, gaussian(11, 15)), InvalidArgument);
  EXPECT_THROW(correlation_score(std::vector<float>{}, std::vector<float>{}), InvalidArgument);
}

TEST(Map, ReplicatedTargetGivesAllOnes) {
  const auto tg = gaussian(200, 16);
  std::vector<float> s(200 * 6);
  for (std::size_t t = 0; t < 200; ++t)
    for (std::size_t p = 0; p < 6; ++p) s[t * 6 + p] = tg[t];
  const auto map = correlation_map(VideoTensor(200, 2, 3, 50.0, s), Trace(50.0, tg), "x");
  for (const double v : map.scores) EXPECT_EQ(v, 1.0);
  EXPECT_EQ(map.degenerate_count(), 0u);
}

TEST(Map, ConstantPixelsFlaggedAsZero) {
  const auto tg = gaussian(100, 17);
  const auto map = correlation_map(VideoTensor(100, 2, 2, 50.0, std::vector<float>(400, 3.0f)), Trace(50.0, tg));
  for (const double v : map.scores) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(map.degenerate_count(), 4u);
}

TEST(Map, PixelScoresMatchTraceScores) {
  const auto v = gaussian(150 * 6, 18);
  const auto tg = gaussian(150, 19);
  const VideoTensor video(150, 3, 2, 50.0, v);
  const auto map = correlation_map(video, Trace(50.0, tg));
  for (std::size_t p = 0; p < 6; ++p) EXPECT_EQ(map.scores[p], correlation_score(video.pixel_trace(p), tg));
}

TEST(Map, LengthMismatchRejected) {
  EXPECT_THROW(correlation_map(VideoTensor(10, 1, 1, 50.0, gaussian(10, 20)), Trace(50.0, gaussian(11, 21))),
               InvalidArgument);
}

TEST(Export, GrayLevelConvention) {
  EXPECT_EQ(score_to_gray(1.0), 65535);
  EXPECT_EQ(score_to_gray(-1.0), 0);
  EXPECT_EQ(score_to_gray(0.0), 32767);
  const CorrelationMap ones{1, 2, {1.0, 1.0}, {false, false}, "m", "s"};
  const std::string stem = ::testing::TempDir() + "ones";
  export_map_pgm(ones, stem);
  const auto pgm = detail::read_file(stem + ".pgm");
  const std::string header = "P5\n2 1\n65535\n";
  ASSERT_EQ(pgm.size(), header.size() + 4);
  EXPECT_EQ(pgm.substr(0, header.size()), header);
  for (std::size_t i = header.size(); i < pgm.size(); ++i) EXPECT_EQ(static_cast<unsigned char>(pgm[i]), 0xff);
}

TEST(Export, CsvRoundTrip) {
  const auto v = gaussian(100 * 12, 22);
  std::vector<float> s = v;
  for (std::size_t t = 0; t < 100; ++t) s[t * 12 + 5] = 1.0f;
  const auto map = correlation_map(VideoTensor(100, 3, 4, 50.0, s), Trace(50.0, gaussian(100, 23)), "bandpass", "abc");
  const std::string stem = ::testing::TempDir() + "roundtrip";
  export_map_pgm(map, stem);
  const auto back = read_map_csv(stem + ".csv");
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.width, 4u);
  EXPECT_EQ(back.method, "bandpass");
  EXPECT_EQ(back.source, "abc");
  EXPECT_EQ(back.degenerate, map.degenerate);
  for (std::size_t p = 0; p < 12; ++p)
    EXPECT_NEAR(back.scores[p], map.scores[p], 5e-6 * std::max(1e-3, std::abs(map.scores[p])));
}

TEST(Report, MissingModelNamesTheMethod) {
  const VideoTensor video(200, 4, 4, 50.0, gaussian(200 * 16, 24));
  const Trace tg(50.0, gaussian(200, 25));
  const std::vector<LabeledRoi> rois{{"strong", {0, 0, 2, 2}}};
  for (const Method m : {Method::matched, Method::cnn1d, Method::cnn3d}) {
    const std::vector<Method> ms{m};
    try {
      compare_methods(video, tg, ms, rois, {});
      FAIL() << "expected an error for " << to_string(m);
    } catch (const InvalidArgument& e) {
      EXPECT_NE(std::string(e.what()).find(to_string(m)), std::string::npos) << e.what();
    }
  }
}

TEST(Report, DeterministicAndRanked) {
  const std::size_t t_len = 300;
  const auto tg = gaussian(t_len, 26);
  auto v = gaussian(t_len * 16, 27);
  // Pixels of the left half carry the target; the right half is noise.
  for (std::size_t t = 0; t < t_len; ++t)
    for (std::size_t y = 0; y < 4; ++y)
      for (std::size_t x = 0; x < 2; ++x) v[t * 16 + y * 4 + x] += 3.0f * tg[t];
  const VideoTensor video(t_len, 4, 4, 50.0, v);
  std::vector<float> env(t_len);
  for (std::size_t t = 0; t < t_len; ++t) env[t] = tg[t] * tg[t];
  const std::vector<LabeledRoi> rois{{"active", {0, 0, 2, 4}}, {"idle", {2, 0, 2, 4}}};
  const std::vector<Method> ms{Method::bandpass};
  ReportConfig cfg;
  cfg.null_trials = 10;
  const auto a = compare_methods(video, Trace(50.0, env), ms, rois, {}, cfg);
  const auto b = compare_methods(video, Trace(50.0, env), ms, rois, {}, cfg);
  EXPECT_EQ(encode_scores_csv(a), encode_scores_csv(b));
  EXPECT_EQ(format_ranking(a), format_ranking(b));
  EXPECT_EQ(a.scored_frames, t_len - 2 * cfg.margin);
  EXPECT_GT(a.find(Method::bandpass, "active").score, 0.9);
  EXPECT_LT(a.find(Method::bandpass, "idle").score, a.find(Method::bandpass, "idle").null_upper + 0.1);
  ASSERT_EQ(a.maps.size(), 1u);
  EXPECT_EQ(a.maps[0].height, 4u);
}
