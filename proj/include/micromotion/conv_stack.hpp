#pragma once

// Same-padded dilated 1D convolutions over [T][C] activations, chained into a
// stack with reverse-mode gradients. Weights are stored [tap][in][out] so the
// innermost loop runs over contiguous output channels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "micromotion/random.hpp"
#include "micromotion/types.hpp"

namespace micromotion {

enum class Activation : std::uint32_t { relu = 0, linear = 1 };

struct ConvShape {
  std::size_t kernel = 1;
  std::size_t in_ch = 1;
  std::size_t out_ch = 1;
  std::size_t dilation = 1;
  Activation act = Activation::relu;

  std::size_t weight_count() const noexcept { return kernel * in_ch * out_ch; }
  std::size_t param_count() const noexcept { return weight_count() + out_ch; }
  /// Frames reached on either side of the output frame.
  std::size_t reach() const noexcept { return dilation * (kernel - 1) / 2; }

  void validate() const {
    detail::require(kernel >= 1 && kernel % 2 == 1, "kernel size must be odd and >= 1");
    detail::require(dilation >= 1, "dilation must be >= 1");
    detail::require(in_ch >= 1 && out_ch >= 1, "channel counts must be >= 1");
  }

  friend bool operator==(const ConvShape&, const ConvShape&) = default;
};

inline std::size_t total_params(std::span<const ConvShape> shapes) {
  std::size_t n = 0;
  for (const auto& s : shapes) n += s.param_count();
  return n;
}

/// Sum of per-layer reach: output frame t depends on inputs within +-R.
inline std::size_t receptive_radius(std::span<const ConvShape> shapes) {
  std::size_t r = 0;
  for (const auto& s : shapes) r += s.reach();
  return r;
}

namespace detail {

// Generic loops for the odd-shaped layers at either end of the stack.
template <class S>
void conv_forward_loop(const ConvShape& shape, std::size_t ci, std::size_t co, const S* weights, const S* bias,
                       const S* in, std::size_t frames, S* out) {
  const std::size_t k = shape.kernel;
  const long half = static_cast<long>(k / 2), d = static_cast<long>(shape.dilation);
  const long t_len = static_cast<long>(frames);
  for (long t = 0; t < t_len; ++t) {
    S* o = out + static_cast<std::size_t>(t) * co;
    for (std::size_t c = 0; c < co; ++c) o[c] = bias[c];
    for (std::size_t l = 0; l < k; ++l) {
      const long src = t + d * (static_cast<long>(l) - half);
      if (src < 0 || src >= t_len) continue;
      const S* x = in + static_cast<std::size_t>(src) * ci;
      const S* wl = weights + l * ci * co;
      for (std::size_t i = 0; i < ci; ++i) {
        const S xi = x[i];
        const S* wr = wl + i * co;
        for (std::size_t c = 0; c < co; ++c) o[c] += xi * wr[c];
      }
    }
    if (shape.act == Activation::relu)
      for (std::size_t c = 0; c < co; ++c) o[c] = o[c] > S(0) ? o[c] : S(0);
  }
}

template <class S>
void conv_backward_loop(const ConvShape& shape, std::size_t ci, std::size_t co, const S* weights, const S* in,
                        const S* grad_out, std::size_t frames, S* grad_in, S* grad_w, S* grad_b) {
  const std::size_t k = shape.kernel;
  const long half = static_cast<long>(k / 2), d = static_cast<long>(shape.dilation);
  const long t_len = static_cast<long>(frames);
  for (long t = 0; t < t_len; ++t) {
    const S* g = grad_out + static_cast<std::size_t>(t) * co;
    for (std::size_t c = 0; c < co; ++c) grad_b[c] += g[c];
    for (std::size_t l = 0; l < k; ++l) {
      const long src = t + d * (static_cast<long>(l) - half);
      if (src < 0 || src >= t_len) continue;
      const S* x = in + static_cast<std::size_t>(src) * ci;
      S* gx = grad_in ? grad_in + static_cast<std::size_t>(src) * ci : nullptr;
      for (std::size_t i = 0; i < ci; ++i) {
        const S* wr = weights + (l * ci + i) * co;
        S* gw = grad_w + (l * ci + i) * co;
        const S xi = x[i];
        S acc = S(0);
        for (std::size_t c = 0; c < co; ++c) {
          acc += wr[c] * g[c];
          gw[c] += xi * g[c];
        }
        if (gx) gx[i] += acc;
      }
    }
  }
}

// Fixed channel counts with register accumulators, so the compiler can run
// the channel loops in SIMD lanes. Every sum keeps the order of the generic
// loops, so results are bit-identical to them.
template <class S, std::size_t CI, std::size_t CO>
void conv_forward_fixed(const ConvShape& shape, const S* __restrict weights, const S* __restrict bias,
                        const S* __restrict in, std::size_t frames, S* __restrict out) {
  const std::size_t k = shape.kernel;
  const long half = static_cast<long>(k / 2), d = static_cast<long>(shape.dilation);
  const long t_len = static_cast<long>(frames);
  const bool relu = shape.act == Activation::relu;
  for (long t = 0; t < t_len; ++t) {
    S acc[CO];
    for (std::size_t c = 0; c < CO; ++c) acc[c] = bias[c];
    for (std::size_t l = 0; l < k; ++l) {
      const long src = t + d * (static_cast<long>(l) - half);
      if (src < 0 || src >= t_len) continue;
      const S* x = in + static_cast<std::size_t>(src) * CI;
      const S* wl = weights + l * CI * CO;
      for (std::size_t i = 0; i < CI; ++i) {
        const S xi = x[i];
        for (std::size_t c = 0; c < CO; ++c) acc[c] += xi * wl[i * CO + c];
      }
    }
    S* o = out + static_cast<std::size_t>(t) * CO;
    for (std::size_t c = 0; c < CO; ++c) o[c] = relu ? (acc[c] > S(0) ? acc[c] : S(0)) : acc[c];
  }
}

template <class S, std::size_t CI, std::size_t CO>
void conv_backward_fixed(const ConvShape& shape, const S* __restrict weights, const S* __restrict in,
                         const S* __restrict grad_out, std::size_t frames, S* __restrict grad_in,
                         S* __restrict grad_w, S* __restrict grad_b) {
  const std::size_t k = shape.kernel;
  const long half = static_cast<long>(k / 2), d = static_cast<long>(shape.dilation);
  const long t_len = static_cast<long>(frames);
  // Transposed taps: the input-gradient sums then run across input lanes.
  std::vector<S> wt(k * CI * CO);
  for (std::size_t l = 0; l < k; ++l)
    for (std::size_t i = 0; i < CI; ++i)
      for (std::size_t c = 0; c < CO; ++c) wt[(l * CO + c) * CI + i] = weights[(l * CI + i) * CO + c];
  for (long t = 0; t < t_len; ++t) {
    S g[CO];
    for (std::size_t c = 0; c < CO; ++c) {
      g[c] = grad_out[static_cast<std::size_t>(t) * CO + c];
      grad_b[c] += g[c];
    }
    for (std::size_t l = 0; l < k; ++l) {
      const long src = t + d * (static_cast<long>(l) - half);
      if (src < 0 || src >= t_len) continue;
      const S* x = in + static_cast<std::size_t>(src) * CI;
      S* gw = grad_w + l * CI * CO;
      for (std::size_t i = 0; i < CI; ++i) {
        const S xi = x[i];
        for (std::size_t c = 0; c < CO; ++c) gw[i * CO + c] += xi * g[c];
      }
      if (grad_in) {
        S acc[CI] = {};
        const S* w = wt.data() + l * CO * CI;
        for (std::size_t c = 0; c < CO; ++c)
          for (std::size_t i = 0; i < CI; ++i) acc[i] += w[c * CI + i] * g[c];
        S* gx = grad_in + static_cast<std::size_t>(src) * CI;
        for (std::size_t i = 0; i < CI; ++i) gx[i] += acc[i];
      }
    }
  }
}

}  // namespace detail

/// out(t,o) = act(b(o) + sum_{l,i} W(l,i,o) in(t + d(l - (k-1)/2), i)).
template <class S>
void conv1d_forward(const ConvShape& shape, std::span<const S> weights, std::span<const S> bias,
                    std::span<const S> in, std::size_t frames, std::span<S> out) {
  const std::size_t ci = shape.in_ch, co = shape.out_ch;
  detail::require(in.size() == frames * ci && out.size() == frames * co,
                  "conv1d activation shape mismatch");
  detail::require(weights.size() == shape.weight_count() && bias.size() == co,
                  "conv1d parameter shape mismatch");
  if (ci == 8 && co == 8)
    detail::conv_forward_fixed<S, 8, 8>(shape, weights.data(), bias.data(), in.data(), frames, out.data());
  else
    detail::conv_forward_loop<S>(shape, ci, co, weights.data(), bias.data(), in.data(), frames, out.data());
}

/// Backpropagates through one layer. `grad_out` holds dL/d(output) and is
/// overwritten with dL/d(pre-activation). Parameter gradients accumulate;
/// `grad_in` is overwritten unless empty.
template <class S>
void conv1d_backward(const ConvShape& shape, std::span<const S> weights, std::span<const S> in,
                     std::span<const S> out, std::span<S> grad_out, std::size_t frames,
                     std::span<S> grad_in, std::span<S> grad_w, std::span<S> grad_b) {
  const std::size_t ci = shape.in_ch, co = shape.out_ch;
  if (shape.act == Activation::relu)
    for (std::size_t j = 0; j < grad_out.size(); ++j)
      if (!(out[j] > S(0))) grad_out[j] = S(0);
  S* gin = grad_in.empty() ? nullptr : grad_in.data();
  if (gin) std::fill(grad_in.begin(), grad_in.end(), S(0));
  if (ci == 8 && co == 8)
    detail::conv_backward_fixed<S, 8, 8>(shape, weights.data(), in.data(), grad_out.data(), frames, gin,
                                         grad_w.data(), grad_b.data());
  else
    detail::conv_backward_loop<S>(shape, ci, co, weights.data(), in.data(), grad_out.data(), frames, gin,
                                  grad_w.data(), grad_b.data());
}

/// Activations of every layer for one trace: acts[0] is the input,
/// acts[l + 1] the output of layer l.
template <class S>
struct StackCache {
  std::size_t frames = 0;
  std::vector<std::vector<S>> acts;

  std::span<const S> output() const { return acts.back(); }
};

template <class S>
void stack_forward(std::span<const ConvShape> shapes, std::span<const S> params,
                   std::span<const S> input, std::size_t frames, StackCache<S>& cache) {
  detail::require(!shapes.empty(), "empty layer stack");
  detail::require(params.size() == total_params(shapes), "parameter count mismatch");
  detail::require(input.size() == frames * shapes.front().in_ch, "input shape mismatch");
  cache.frames = frames;
  cache.acts.resize(shapes.size() + 1);
  cache.acts[0].assign(input.begin(), input.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    cache.acts[l + 1].resize(frames * s.out_ch);
    conv1d_forward<S>(s, params.subspan(off, s.weight_count()),
                      params.subspan(off + s.weight_count(), s.out_ch), cache.acts[l], frames,
                      cache.acts[l + 1]);
    off += s.param_count();
  }
}

/// Accumulates dL/dparams into grad_params; writes dL/dinput when requested.
template <class S>
void stack_backward(std::span<const ConvShape> shapes, std::span<const S> params,
                    const StackCache<S>& cache, std::span<const S> grad_output,
                    std::span<S> grad_params, std::vector<S>* grad_input = nullptr) {
  detail::require(grad_params.size() == params.size(), "gradient buffer size mismatch");
  detail::require(grad_output.size() == cache.acts.back().size(), "upstream gradient shape mismatch");
  std::vector<std::size_t> offsets(shapes.size());
  std::size_t off = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) offsets[l] = off, off += shapes[l].param_count();

  std::vector<S> g(grad_output.begin(), grad_output.end()), g_prev;
  for (std::size_t l = shapes.size(); l-- > 0;) {
    const auto& s = shapes[l];
    const bool need_input = l > 0 || grad_input != nullptr;
    g_prev.assign(need_input ? cache.frames * s.in_ch : 0, S(0));
    conv1d_backward<S>(s, params.subspan(offsets[l], s.weight_count()), cache.acts[l],
                       cache.acts[l + 1], g, cache.frames, g_prev,
                       grad_params.subspan(offsets[l], s.weight_count()),
                       grad_params.subspan(offsets[l] + s.weight_count(), s.out_ch));
    std::swap(g, g_prev);
  }
  if (grad_input) *grad_input = std::move(g);
}

/// Uniform on +-sqrt(6 / (fan_in + fan_out)).
inline std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::size_t count,
                                          RngSequence& rng) {
  detail::require(fan_in > 0 && fan_out > 0, "Glorot fans must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> out(count);
  for (double& v : out) v = rng.uniform(-bound, bound);
  return out;
}

/// Glorot-uniform weights (fan_in = k*c_in, fan_out = k*c_out) and zero biases.
template <class S>
std::vector<S> glorot_init(std::span<const ConvShape> shapes, std::uint64_t seed) {
  RngSequence rng(seed, Stream::glorot);
  std::vector<S> params;
  params.reserve(total_params(shapes));
  for (const auto& s : shapes) {
    s.validate();
    const auto w = glorot_uniform(s.kernel * s.in_ch, s.kernel * s.out_ch, s.weight_count(), rng);
    for (const double v : w) params.push_back(static_cast<S>(v));
    params.insert(params.end(), s.out_ch, S(0));
  }
  return params;
}

}  // namespace micromotion
