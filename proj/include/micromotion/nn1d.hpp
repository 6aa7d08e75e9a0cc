#pragma once

// The time-domain network: 16 plain 3-tap convolutions with 8 filters, four
// dilated ones (rates 2, 4, 8, 16), a 1x1 condensation to 3 channels and a
// linear 1x1 output. Same padding keeps every layer at length T.

#include <cstdint>
#include <span>
#include <vector>

#include "micromotion/adam.hpp"
#include "micromotion/conv_stack.hpp"
#include "micromotion/parallel.hpp"
#include "micromotion/stats.hpp"

namespace micromotion {

template <class S = float>
struct Network1D {
  std::vector<ConvShape> layers;
  std::vector<S> params;

  static std::vector<ConvShape> architecture() {
    std::vector<ConvShape> a;
    a.push_back({3, 1, 8, 1, Activation::relu});
    for (int i = 1; i < 16; ++i) a.push_back({3, 8, 8, 1, Activation::relu});
    for (const std::size_t d : {2u, 4u, 8u, 16u}) a.push_back({3, 8, 8, d, Activation::relu});
    a.push_back({1, 8, 3, 1, Activation::relu});
    a.push_back({1, 3, 1, 1, Activation::linear});
    return a;
  }

  static Network1D glorot(std::uint64_t seed) {
    Network1D n{architecture(), {}};
    n.params = glorot_init<S>(n.layers, seed);
    return n;
  }

  std::size_t param_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += layers[l].param_count();
    return off;
  }

  std::span<S> weights(std::size_t layer) {
    return std::span<S>(params).subspan(param_offset(layer), layers[layer].weight_count());
  }
  std::span<S> bias(std::size_t layer) {
    return std::span<S>(params).subspan(param_offset(layer) + layers[layer].weight_count(),
                                        layers[layer].out_ch);
  }
  std::span<const S> weights(std::size_t layer) const {
    return std::span<const S>(params).subspan(param_offset(layer), layers[layer].weight_count());
  }
  std::span<const S> bias(std::size_t layer) const {
    return std::span<const S>(params).subspan(param_offset(layer) + layers[layer].weight_count(),
                                              layers[layer].out_ch);
  }

  template <class U>
  Network1D<U> cast() const {
    return {layers, std::vector<U>(params.begin(), params.end())};
  }

  void validate() const {
    detail::require(!layers.empty() && layers.front().in_ch == 1 && layers.back().out_ch == 1,
                    "network must map 1 channel to 1 channel");
    for (std::size_t l = 0; l < layers.size(); ++l) {
      layers[l].validate();
      detail::require(l == 0 || layers[l - 1].out_ch == layers[l].in_ch, "channel chaining broken");
    }
    detail::require(params.size() == total_params(layers), "parameter count mismatch");
  }

  friend bool operator==(const Network1D&, const Network1D&) = default;
};

/// Runs every layer on one trace, keeping activations for backward().
template <class S>
std::vector<S> forward(const Network1D<S>& net, std::span<const S> x, StackCache<S>& cache) {
  stack_forward<S>(net.layers, net.params, x, x.size(), cache);
  const auto out = cache.output();
  return {out.begin(), out.end()};
}

template <class S>
std::vector<S> forward(const Network1D<S>& net, std::span<const S> x) {
  StackCache<S> cache;
  return forward(net, x, cache);
}

inline Trace forward(const Network1D<float>& net, const Trace& trace) {
  return Trace(trace.fps(), forward<float>(net, trace.samples()));
}

struct Loss {
  double value = 0.0;
  std::vector<double> grad;  // dL/dpred
};

/// L = mean((pred - target)^2); dL/dpred = 2 (pred - target) / T.
template <class A, class B>
Loss mse_loss(std::span<const A> pred, std::span<const B> target) {
  if (pred.size() != target.size() || pred.empty())
    throw InvalidArgument("mse_loss needs equal, non-zero lengths");
  const double n = static_cast<double>(pred.size());
  Loss l;
  l.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    l.value += e * e;
    l.grad[i] = 2.0 * e / n;
  }
  l.value /= n;
  return l;
}

template <class S>
struct Gradients1D {
  std::vector<S> params;
  std::vector<S> input;
};

/// Reverse-mode gradients of the cached forward pass.
template <class S>
Gradients1D<S> backward(const Network1D<S>& net, const StackCache<S>& cache,
                        std::span<const S> upstream) {
  Gradients1D<S> g;
  g.params.assign(net.params.size(), S(0));
  stack_backward<S>(net.layers, net.params, cache, upstream, g.params, &g.input);
  return g;
}

struct TrainConfig1D {
  double learning_rate = 1e-3;
  std::size_t epochs = 3;
  std::size_t batch_pixels = 64;
  std::uint64_t seed = 1;
};

struct TrainResult1D {
  Network1D<float> net;
  std::vector<double> epoch_loss;
};

namespace detail {

/// Per-pixel standardized traces, pixel-major (N x T).
inline std::vector<float> standardized_pixels(const VideoTensor& video) {
  const std::size_t n = video.pixels(), t_len = video.frames();
  std::vector<float> out(n * t_len);
  parallel_for(n, [&](std::size_t p, std::size_t) {
    const auto tr = video.pixel_trace(p);
    const auto z = standardize_or_zero<float>(std::span<const float>(tr));
    std::copy(z.begin(), z.end(), out.begin() + static_cast<std::ptrdiff_t>(p * t_len));
  });
  return out;
}

}  // namespace detail

/// Every pixel's standardized filtered trace is one sample regressed on the
/// standardized global fluorescence. Pixels are reshuffled each epoch and
/// gradients averaged over each mini-batch; per-sample gradients are reduced
/// in batch order so the result does not depend on the worker count.
inline TrainResult1D train_1d(const VideoTensor& filtered, const Trace& target,
                              const TrainConfig1D& cfg, const Network1D<float>* init = nullptr) {
  detail::require(target.size() == filtered.frames(), "target length must equal video length");
  detail::require(cfg.learning_rate > 0.0 && cfg.epochs >= 1 && cfg.batch_pixels >= 1,
                  "invalid 1D training configuration");
  const auto y = standardize<float>(target.samples());
  const auto x = detail::standardized_pixels(filtered);
  const std::size_t n = filtered.pixels(), t_len = filtered.frames();

  TrainResult1D result{init ? *init : Network1D<float>::glorot(cfg.seed), {}};
  result.net.validate();
  auto& net = result.net;
  AdamState adam(net.params.size());
  const std::size_t batch_cap = std::min(cfg.batch_pixels, n);
  std::vector<StackCache<float>> caches(worker_slots(batch_cap));
  std::vector<std::vector<float>> sample_grads(batch_cap, std::vector<float>(net.params.size()));
  std::vector<double> sample_loss(batch_cap), grad(net.params.size());
  std::vector<std::size_t> order(n);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    RngSequence(cfg.seed, Stream::shuffle, epoch).shuffle(std::span<std::size_t>(order));
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_pixels) {
      const std::size_t count = std::min(cfg.batch_pixels, n - start);
      parallel_for(count, [&](std::size_t i, std::size_t worker) {
        const std::span<const float> xi(x.data() + order[start + i] * t_len, t_len);
        auto& cache = caches[worker];
        stack_forward<float>(net.layers, net.params, xi, t_len, cache);
        const auto loss = mse_loss(cache.output(), std::span<const float>(y));
        sample_loss[i] = loss.value;
        const std::vector<float> up(loss.grad.begin(), loss.grad.end());
        auto& g = sample_grads[i];
        std::fill(g.begin(), g.end(), 0.0f);
        stack_backward<float>(net.layers, net.params, cache, up, g);
      });
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t i = 0; i < count; ++i) {
        batch_loss += sample_loss[i];
        for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += sample_grads[i][j];
      }
      for (double& g : grad) g /= static_cast<double>(count);
      epoch_sum += batch_loss;
      adam_step<float>(net.params, grad, adam, cfg.learning_rate);
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(n));
  }
  return result;
}

/// Network output for every standardized pixel trace.
inline VideoTensor predict_1d(const Network1D<float>& net, const VideoTensor& filtered) {
  net.validate();
  const std::size_t n = filtered.pixels(), t_len = filtered.frames();
  const auto x = detail::standardized_pixels(filtered);
  std::vector<float> out(n * t_len);
  std::vector<StackCache<float>> caches(worker_slots(n));
  parallel_for(n, [&](std::size_t p, std::size_t worker) {
    const std::span<const float> xi(x.data() + p * t_len, t_len);
    stack_forward<float>(net.layers, net.params, xi, t_len, caches[worker]);
    const auto o = caches[worker].output();
    for (std::size_t t = 0; t < t_len; ++t) out[t * n + p] = o[t];
  });
  return VideoTensor(t_len, filtered.height(), filtered.width(), filtered.fps(), std::move(out));
}

}  // namespace micromotion
