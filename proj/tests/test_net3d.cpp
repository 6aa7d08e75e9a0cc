#include <gtest/gtest.h>

#include <cmath>

#include "micromotion/model_io.hpp"
#include "micromotion/net3d.hpp"
#include "micromotion/testing/oracles.hpp"

using namespace micromotion;

namespace {

VideoTensor noise_video(std::size_t t, std::size_t h, std::size_t w, std::uint64_t seed) {
  RngSequence rng(seed, Stream::test);
  std::vector<float> s(t * h * w);
  for (float& v : s) v = static_cast<float>(rng.normal());
  return VideoTensor(t, h, w, 50.0, std::move(s));
}

/// Glorot weights with small random biases so the output is not tiny.
template <class S>
Network1D<S> random_net(std::uint64_t seed) {
  auto net = Network1D<S>::glorot(seed);
  RngSequence rng(seed, Stream::test, 1);
  for (std::size_t l = 0; l < net.layers.size(); ++l)
    for (S& b : net.bias(l)) b = static_cast<S>(rng.uniform(-0.1, 0.1));
  return net;
}

}  // namespace

TEST(InitFrom1d, EqualsPixelMeanOfPerPixelPredictions) {
  const auto net1d = random_net<float>(1);
  const auto video = noise_video(256, 6, 5, 2);
  const auto net = init_from_1d(net1d, 6, 5);
  const auto out = forward3d<float>(net, video, Mode::eval);
  const auto ref = oracle::pixel_mean(predict_1d(net1d, video));
  double scale = 0.0;
  for (const double v : ref) scale = std::max(scale, std::abs(v));
  for (std::size_t t = 0; t < 256; ++t) EXPECT_NEAR(out[t], ref[t], 1e-4 * scale) << "frame " << t;
}

TEST(InitFrom1d, SinglePixelIsThe1dNetwork) {
  const auto net1d = random_net<float>(3);
  const auto video = noise_video(100, 1, 1, 4);
  const auto out = forward3d<float>(init_from_1d(net1d, 1, 1), video, Mode::eval);
  const auto ref = predict_1d(net1d, video);
  for (std::size_t t = 0; t < 100; ++t) EXPECT_NEAR(out[t], ref.samples()[t], 1e-5);
}

TEST(InitFrom1d, DenseUniformAndBiasCopied) {
  const auto net1d = random_net<float>(5);
  const auto net = init_from_1d(net1d, 4, 3);
  const auto w = net1d.weights(net1d.layers.size() - 1);
  for (std::size_t p = 0; p < 12; ++p)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(net.dense()[p * 3 + c], w[c] / 12.0f);
  EXPECT_EQ(net.bias(), net1d.bias(net1d.layers.size() - 1)[0]);
  EXPECT_EQ(net.stage.size(), 21u);
  EXPECT_EQ(net.dense().size(), 36u);
}

TEST(Forward3d, EvalIsPure) {
  const auto net = init_from_1d(random_net<float>(6), 3, 3);
  const auto video = noise_video(64, 3, 3, 7);
  EXPECT_EQ(forward3d<float>(net, video, Mode::eval), forward3d<float>(net, video, Mode::eval));
}

TEST(Forward3d, TrainWithoutDropoutEqualsEval) {
  auto net = init_from_1d(random_net<float>(8), 3, 2, 0.0);
  const auto video = noise_video(64, 3, 2, 9);
  EXPECT_EQ(forward3d<float>(net, video, Mode::train, {1, 5}), forward3d<float>(net, video, Mode::eval));
}

TEST(Forward3d, ZeroDenseGivesBias) {
  auto net = init_from_1d(random_net<float>(10), 2, 2);
  for (float& w : net.dense()) w = 0.0f;
  net.params[net.bias_index()] = -0.625f;
  for (const float v : forward3d<float>(net, noise_video(40, 2, 2, 11), Mode::train, {1, 3})) EXPECT_EQ(v, -0.625f);
}

TEST(Forward3d, ShapeMismatchRejected) {
  const auto net = init_from_1d(random_net<float>(12), 3, 3);
  EXPECT_THROW(forward3d<float>(net, noise_video(10, 3, 4, 13), Mode::eval), InvalidArgument);
}

TEST(Forward3d, DropoutMasksAreSeededAndVary) {
  const auto net = init_from_1d(random_net<float>(14), 2, 2);
  const auto video = noise_video(64, 2, 2, 15);
  EXPECT_EQ(forward3d<float>(net, video, Mode::train, {1, 0}), forward3d<float>(net, video, Mode::train, {1, 0}));
  EXPECT_NE(forward3d<float>(net, video, Mode::train, {1, 0}), forward3d<float>(net, video, Mode::train, {1, 1}));
  EXPECT_NE(forward3d<float>(net, video, Mode::train, {1, 0}), forward3d<float>(net, video, Mode::train, {2, 0}));
}

TEST(Dropout, ExpectationMatchesEval) {
  // Averaged over 10^4 train-mode passes, the dropped-out input and the
  // masked activation map both recover their eval-mode values.
  const auto net = init_from_1d(random_net<float>(16), 1, 1);
  const auto video = noise_video(16, 1, 1, 17);
  Forward3DCache<float> eval;
  forward3d<float>(net, video, Mode::eval, {}, &eval);
  const auto& x = eval.pixel[0].acts[0];
  const std::size_t passes = 10000;
  std::vector<double> input_mean(x.size(), 0.0), scale_mean(eval.act[0].size(), 0.0);
  Forward3DCache<float> c;
  for (std::size_t k = 0; k < passes; ++k) {
    forward3d<float>(net, video, Mode::train, {7, k}, &c);
    for (std::size_t j = 0; j < x.size(); ++j) input_mean[j] += c.pixel[0].acts[0][j];
    for (std::size_t j = 0; j < scale_mean.size(); ++j) scale_mean[j] += c.act_scale[0][j];
  }
  for (std::size_t j = 0; j < x.size(); ++j)
    EXPECT_NEAR(input_mean[j] / passes, x[j], 0.02 * std::abs(x[j])) << "frame " << j;
  for (std::size_t j = 0; j < scale_mean.size(); ++j) EXPECT_NEAR(scale_mean[j] / passes, 1.0, 0.02) << j;
}

template <class S>
oracle::Probe probe(const Network3D<double>& net, const VideoTensor& video, const DropoutKey& key,
                    std::span<const double> r, std::span<const double> p) {
  Network3D<S> n{net.stage, net.height, net.width, net.dropout_p, std::vector<S>(p.begin(), p.end())};
  Forward3DCache<S> c;
  const auto y = forward3d<S>(n, video, Mode::train, key, &c);
  oracle::Probe out;
  for (std::size_t t = 0; t < y.size(); ++t) out.value += static_cast<long double>(r[t]) * y[t];
  for (const auto& px : c.pixel) oracle::append_relu_signs(n.stage, px, out.pattern);
  return out;
}

TEST(Backward3d, MatchesFiniteDifferences) {
  auto net = init_from_1d(random_net<double>(19), 4, 4);
  RngSequence rng(20, Stream::test);
  for (double& w : net.dense()) w = rng.uniform(-0.5, 0.5);
  const auto video = noise_video(32, 4, 4, 21);
  std::vector<double> r(32);
  for (double& v : r) v = rng.normal();
  const DropoutKey key{3, 1};
  Forward3DCache<double> cache;
  forward3d<double>(net, video, Mode::train, key, &cache);
  const auto g = backward3d<double>(net, cache, r);
  const auto check = oracle::check_gradient(
      g, [&](std::span<const double> p) { return probe<double>(net, video, key, r, p); },
      [&](std::span<const double> p) { return probe<long double>(net, video, key, r, p); }, net.params, 1e-4,
      1e-4);
  EXPECT_LT(check.worst, 1e-4) << "parameter " << check.worst_index;
}

TEST(Train3d, ZeroLearningRateLeavesParameters) {
  const auto net = init_from_1d(random_net<float>(22), 2, 2);
  const auto video = noise_video(512, 2, 2, 23);
  const auto target = noise_video(512, 1, 1, 24);
  const Trace tg(50.0, std::vector<float>(target.samples().begin(), target.samples().end()));
  const auto r = train_3d(video, tg, net, {0.0, 3, 256, 1});
  EXPECT_EQ(r.net, net);
  EXPECT_EQ(r.epoch_loss.size(), 3u);
}

TEST(Train3d, DeterministicAndLossFalls) {
  const auto net = init_from_1d(random_net<float>(25), 2, 2);
  const auto video = noise_video(512, 2, 2, 26);
  // Target is the pixel-mean of the 1D predictions plus a shift: learnable.
  const auto base = oracle::pixel_mean(predict_1d(random_net<float>(25), video));
  std::vector<float> tg(512);
  for (std::size_t t = 0; t < 512; ++t) tg[t] = static_cast<float>(base[t] + (t % 50 < 5 ? 1.0 : 0.0));
  const TrainConfig3D cfg{1e-3, 5, 256, 4};
  const auto a = train_3d(video, Trace(50.0, tg), net, cfg);
  const auto b = train_3d(video, Trace(50.0, tg), net, cfg);
  EXPECT_EQ(a.net, b.net);
  EXPECT_EQ(a.epoch_loss, b.epoch_loss);
  EXPECT_LT(a.epoch_loss.back(), a.epoch_loss.front());
}

TEST(Train3d, ShortVideoRejected) {
  const auto net = init_from_1d(random_net<float>(27), 2, 2);
  EXPECT_THROW(train_3d(noise_video(100, 2, 2, 28), Trace(50.0, std::vector<float>(100, 0.5f)), net, {}),
               InvalidArgument);
}

TEST(DenseMap, ConstantAtInitAndNormalized) {
  const auto net = init_from_1d(random_net<float>(29), 3, 4);
  const auto maps = export_dense_map(net);
  ASSERT_EQ(maps.channels.size(), 3u);
  float mx = 0.0f;
  for (const auto& ch : maps.channels) {
    for (const float v : ch) EXPECT_EQ(v, ch[0]);
    mx = std::max(mx, ch[0]);
  }
  EXPECT_EQ(mx, 1.0f);
}

TEST(DenseMap, TopDecileMassInsideMask) {
  auto net = init_from_1d(random_net<float>(30), 4, 5);
  std::vector<bool> mask(20, false);
  for (float& w : net.dense()) w = 0.01f;
  net.dense()[7 * 3 + 1] = 1.0f;
  mask[7] = true;
  // 60 weights, top decile is 6: one large inside plus five small outside.
  EXPECT_NEAR(top_decile_mass_inside(net, mask), 1.0 / 1.05, 1e-6);
}

TEST(ModelFile, Network3dRoundTrip) {
  const auto net = init_from_1d(random_net<float>(31), 3, 2);
  const auto bytes = encode_network(net);
  EXPECT_EQ(decode_network3d(bytes), net);
  EXPECT_THROW(decode_network1d(bytes), FormatError);
  EXPECT_THROW(decode_network3d(bytes.substr(0, bytes.size() - 3)), TruncatedError);
}
