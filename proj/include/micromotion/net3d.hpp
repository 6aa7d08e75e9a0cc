#pragma once

// Region-specific video network: the first 21 layers of the time-domain
// network run on every pixel, then one dense neuron per timestep reads the
// 3-channel activation of all pixels. Dropout (inverted) is applied to the
// input samples and to that 3-channel activation map while training.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "micromotion/nn1d.hpp"
#include "micromotion/tensor_io.hpp"

namespace micromotion {

template <class S = float>
struct Network3D {
  std::vector<ConvShape> stage;  // per-pixel layers, 1 -> ... -> 3 channels
  std::size_t height = 0;
  std::size_t width = 0;
  double dropout_p = 0.2;
  std::vector<S> params;  // stage | dense (H*W*3, index (y*W + x)*3 + c) | bias

  std::size_t pixels() const noexcept { return height * width; }
  std::size_t channels() const noexcept { return stage.back().out_ch; }
  std::size_t stage_param_count() const { return total_params(stage); }
  std::size_t dense_offset() const { return stage_param_count(); }
  std::size_t bias_index() const { return dense_offset() + pixels() * channels(); }

  std::span<const S> stage_params() const { return std::span<const S>(params).subspan(0, stage_param_count()); }
  std::span<const S> dense() const {
    return std::span<const S>(params).subspan(dense_offset(), pixels() * channels());
  }
  std::span<S> dense() { return std::span<S>(params).subspan(dense_offset(), pixels() * channels()); }
  S bias() const { return params[bias_index()]; }

  template <class U>
  Network3D<U> cast() const {
    return {stage, height, width, dropout_p, std::vector<U>(params.begin(), params.end())};
  }

  void validate() const {
    detail::require(!stage.empty() && stage.front().in_ch == 1, "pixel stage must start from 1 channel");
    for (std::size_t l = 0; l < stage.size(); ++l) {
      stage[l].validate();
      detail::require(l == 0 || stage[l - 1].out_ch == stage[l].in_ch, "channel chaining broken");
    }
    detail::require(height > 0 && width > 0, "region must be non-empty");
    detail::require(dropout_p >= 0.0 && dropout_p < 1.0, "dropout_p must be in [0, 1)");
    detail::require(params.size() == stage_param_count() + pixels() * channels() + 1,
                    "parameter count mismatch");
  }

  friend bool operator==(const Network3D&, const Network3D&) = default;
};

/// Copies layers 1..L-1 of the 1D network; the dense layer starts as the
/// final 1D layer's weights divided by the pixel count, and its bias is the
/// final 1D bias unchanged. At this point the 3D output equals the pixel
/// mean of the per-pixel 1D predictions.
template <class S>
Network3D<S> init_from_1d(const Network1D<S>& net1d, std::size_t height, std::size_t width,
                          double dropout_p = 0.2) {
  net1d.validate();
  const auto& last = net1d.layers.back();
  detail::require(last.kernel == 1 && last.out_ch == 1, "final 1D layer must be a 1x1 projection");
  Network3D<S> net;
  net.stage.assign(net1d.layers.begin(), net1d.layers.end() - 1);
  net.height = height;
  net.width = width;
  net.dropout_p = dropout_p;
  const std::size_t sp = total_params(net.stage);
  net.params.assign(net1d.params.begin(), net1d.params.begin() + static_cast<std::ptrdiff_t>(sp));
  const auto w = net1d.weights(net1d.layers.size() - 1);
  const double inv = 1.0 / static_cast<double>(height * width);
  for (std::size_t p = 0; p < height * width; ++p)
    for (std::size_t c = 0; c < last.in_ch; ++c)
      net.params.push_back(static_cast<S>(static_cast<double>(w[c]) * inv));
  net.params.push_back(net1d.bias(net1d.layers.size() - 1)[0]);
  net.validate();
  return net;
}

enum class Mode { train, eval };

/// Dropout masks are a pure function of (seed, step, pixel, frame, channel).
struct DropoutKey {
  std::uint64_t seed = 1;
  std::uint64_t step = 0;
};

template <class S>
struct Forward3DCache {
  std::vector<StackCache<S>> pixel;      // per-pixel stage activations
  std::vector<std::vector<S>> act_scale;  // T x C dropout scale on the final map
  std::vector<std::vector<S>> act;        // T x C masked activations read by the dense layer
};

namespace detail {

inline bool dropout_keep(const CounterRng& rng, std::uint64_t step, std::size_t pixel,
                         std::size_t frame, std::size_t channel, double p) {
  if (p <= 0.0) return true;
  const std::uint64_t a = (step << 32) ^ static_cast<std::uint64_t>(pixel);
  return rng.uniform(a, static_cast<std::uint32_t>(frame * 4 + channel)) >= p;
}

}  // namespace detail

/// Output trace of length T for a T x H x W segment. Each pixel trace is
/// standardized within the segment before the pixel stage.
template <class S>
std::vector<S> forward3d(const Network3D<S>& net, const VideoTensor& segment, Mode mode,
                         DropoutKey key = {}, Forward3DCache<S>* cache = nullptr) {
  if (segment.height() != net.height || segment.width() != net.width)
    throw InvalidArgument("segment is " + std::to_string(segment.height()) + "x" +
                          std::to_string(segment.width()) + " but the network expects " +
                          std::to_string(net.height) + "x" + std::to_string(net.width));
  const std::size_t n = net.pixels(), t_len = segment.frames(), ch = net.channels();
  const bool train = mode == Mode::train && net.dropout_p > 0.0;
  const S keep_scale = static_cast<S>(1.0 / (1.0 - net.dropout_p));
  const CounterRng in_rng(key.seed, Stream::dropout_input), act_rng(key.seed, Stream::dropout_activation);
  const auto dense = net.dense();
  const auto stage_params = net.stage_params();

  Forward3DCache<S> local;
  Forward3DCache<S>& c = cache ? *cache : local;
  const bool keep_all = cache != nullptr;
  c.pixel.resize(keep_all ? n : worker_slots(n));
  c.act_scale.assign(keep_all ? n : 0, {});
  c.act.assign(keep_all ? n : 0, {});
  std::vector<std::vector<S>> contrib(n, std::vector<S>(t_len));

  parallel_for(n, [&](std::size_t p, std::size_t worker) {
    const auto tr = segment.pixel_trace(p);
    auto x = standardize_or_zero<S>(std::span<const float>(tr));
    if (train)
      for (std::size_t t = 0; t < t_len; ++t)
        x[t] = detail::dropout_keep(in_rng, key.step, p, t, 0, net.dropout_p) ? x[t] * keep_scale : S(0);
    auto& sc = c.pixel[keep_all ? p : worker];
    stack_forward<S>(net.stage, stage_params, x, t_len, sc);
    std::vector<S> scale(t_len * ch, S(1));
    if (train)
      for (std::size_t t = 0; t < t_len; ++t)
        for (std::size_t k = 0; k < ch; ++k)
          scale[t * ch + k] = detail::dropout_keep(act_rng, key.step, p, t, k, net.dropout_p) ? keep_scale : S(0);
    const auto a = sc.output();
    std::vector<S> masked(t_len * ch);
    for (std::size_t j = 0; j < masked.size(); ++j) masked[j] = a[j] * scale[j];
    auto& out = contrib[p];
    for (std::size_t t = 0; t < t_len; ++t) {
      S acc = S(0);
      for (std::size_t k = 0; k < ch; ++k) acc += dense[p * ch + k] * masked[t * ch + k];
      out[t] = acc;
    }
    if (keep_all) {
      c.act_scale[p] = std::move(scale);
      c.act[p] = std::move(masked);
    }
  });

  std::vector<S> out(t_len, net.bias());
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t t = 0; t < t_len; ++t) out[t] += contrib[p][t];
  return out;
}

/// Parameter gradients for the forward pass recorded in `cache`.
template <class S>
std::vector<S> backward3d(const Network3D<S>& net, const Forward3DCache<S>& cache,
                          std::span<const S> upstream) {
  const std::size_t n = net.pixels(), ch = net.channels(), sp = net.stage_param_count();
  detail::require(cache.pixel.size() == n && cache.act.size() == n, "forward cache is incomplete");
  const std::size_t t_len = upstream.size();
  std::vector<S> grad(net.params.size(), S(0));
  for (std::size_t t = 0; t < t_len; ++t) grad[net.bias_index()] += upstream[t];
  const auto dense = net.dense();
  const auto stage_params = net.stage_params();
  std::vector<std::vector<S>> stage_grads(n);

  parallel_for(n, [&](std::size_t p, std::size_t) {
    const auto& a = cache.act[p];
    const auto& scale = cache.act_scale[p];
    std::vector<S> g_act(t_len * ch);
    for (std::size_t k = 0; k < ch; ++k) {
      S acc = S(0);
      for (std::size_t t = 0; t < t_len; ++t) {
        acc += upstream[t] * a[t * ch + k];
        g_act[t * ch + k] = upstream[t] * dense[p * ch + k] * scale[t * ch + k];
      }
      grad[net.dense_offset() + p * ch + k] = acc;
    }
    stage_grads[p].assign(sp, S(0));
    stack_backward<S>(net.stage, stage_params, cache.pixel[p], g_act, stage_grads[p]);
  });
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t j = 0; j < sp; ++j) grad[j] += stage_grads[p][j];
  return grad;
}

struct TrainConfig3D {
  double learning_rate = 8e-7;
  std::size_t epochs = 60;
  std::size_t segment_frames = 256;
  std::uint64_t seed = 1;
};

struct TrainResult3D {
  Network3D<float> net;
  std::vector<double> epoch_loss;
};

/// Adam over consecutive non-overlapping segments; every parameter (pixel
/// stage and dense layer) is trained. Dropout masks are redrawn per segment
/// and epoch.
inline TrainResult3D train_3d(const VideoTensor& filtered, const Trace& target, Network3D<float> net,
                              const TrainConfig3D& cfg) {
  net.validate();
  detail::require(target.size() == filtered.frames(), "target length must equal video length");
  detail::require(cfg.learning_rate >= 0.0 && cfg.segment_frames >= 1, "invalid 3D training configuration");
  const std::size_t segments = filtered.frames() / cfg.segment_frames;
  if (segments == 0)
    throw InvalidArgument("video has fewer than " + std::to_string(cfg.segment_frames) + " frames");
  const auto y = standardize<float>(target.samples());
  std::vector<VideoTensor> parts;
  for (std::size_t s = 0; s < segments; ++s)
    parts.push_back(slice_frames(filtered, {s * cfg.segment_frames, (s + 1) * cfg.segment_frames}));

  TrainResult3D result{std::move(net), {}};
  AdamState adam(result.net.params.size());
  std::vector<double> grad(result.net.params.size());
  Forward3DCache<float> cache;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double sum = 0.0;
    for (std::size_t s = 0; s < segments; ++s) {
      const DropoutKey key{cfg.seed, epoch * segments + s};
      const auto out = forward3d<float>(result.net, parts[s], Mode::train, key, &cache);
      const auto loss = mse_loss(std::span<const float>(out),
                                 std::span<const float>(y).subspan(s * cfg.segment_frames, cfg.segment_frames));
      sum += loss.value;
      const std::vector<float> up(loss.grad.begin(), loss.grad.end());
      const auto g = backward3d<float>(result.net, cache, up);
      std::copy(g.begin(), g.end(), grad.begin());
      adam_step<float>(result.net.params, grad, adam, cfg.learning_rate);
    }
    result.epoch_loss.push_back(sum / static_cast<double>(segments));
  }
  return result;
}

/// Eval-mode prediction over a whole recording of the trained region.
inline Trace predict_3d(const Network3D<float>& net, const VideoTensor& filtered) {
  return Trace(filtered.fps(), forward3d<float>(net, filtered, Mode::eval));
}

/// |dense weight| per channel, scaled so the largest over all channels is 1.
struct DenseMaps {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::vector<float>> channels;  // C maps of H*W
};

template <class S>
DenseMaps export_dense_map(const Network3D<S>& net) {
  const std::size_t n = net.pixels(), ch = net.channels();
  const auto dense = net.dense();
  double mx = 0.0;
  for (const S w : dense) mx = std::max(mx, std::abs(static_cast<double>(w)));
  DenseMaps maps{net.height, net.width, std::vector<std::vector<float>>(ch, std::vector<float>(n, 0.0f))};
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t k = 0; k < ch; ++k)
      maps.channels[k][p] = mx > 0.0 ? static_cast<float>(std::abs(static_cast<double>(dense[p * ch + k])) / mx) : 0.0f;
  return maps;
}

/// Share of the top-decile |dense weight| mass that falls on masked pixels.
template <class S>
double top_decile_mass_inside(const Network3D<S>& net, const std::vector<bool>& mask) {
  detail::require(mask.size() == net.pixels(), "mask must cover the region");
  const std::size_t ch = net.channels();
  const auto dense = net.dense();
  std::vector<std::size_t> idx(dense.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const std::size_t top = (idx.size() + 9) / 10;
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(top), idx.end(),
                    [&](std::size_t a, std::size_t b) { return std::abs(dense[a]) > std::abs(dense[b]); });
  double inside = 0.0, total = 0.0;
  for (std::size_t i = 0; i < top; ++i) {
    const double w = std::abs(static_cast<double>(dense[idx[i]]));
    total += w;
    if (mask[idx[i] / ch]) inside += w;
  }
  return total > 0.0 ? inside / total : 0.0;
}

}  // namespace micromotion
