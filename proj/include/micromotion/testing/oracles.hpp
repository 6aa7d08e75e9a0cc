#pragma once

// Slow, direct reference implementations used by the test suite and the
// `selftest` subcommand. None of them shares code with the library paths
// they check: no FFT, no cached spectra, long double accumulation.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "micromotion/conv_stack.hpp"
#include "micromotion/types.hpp"

namespace micromotion::oracle {

/// Two-pass population z-score in long double.
inline std::vector<long double> zscore(std::span<const float> x) {
  long double m = 0;
  for (const float v : x) m += v;
  m /= static_cast<long double>(x.size());
  long double var = 0;
  for (const float v : x) var += (v - m) * (v - m);
  const long double sd = std::sqrt(var / static_cast<long double>(x.size()));
  std::vector<long double> z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - m) / sd;
  return z;
}

/// (1/T) sum_t x(t) y(t + lag) over the overlap, for one lag.
inline long double cross_correlation_at(std::span<const long double> x, std::span<const long double> y, long lag) {
  const long n = static_cast<long>(x.size());
  long double s = 0;
  for (long t = 0; t < n; ++t) {
    const long u = t + lag;
    if (u >= 0 && u < n) s += x[static_cast<std::size_t>(t)] * y[static_cast<std::size_t>(u)];
  }
  return s / static_cast<long double>(n);
}

/// O(T^2) max over every lag in (-T, T).
inline double max_lag_correlation(std::span<const float> pred, std::span<const float> target, bool negate = false) {
  const auto x = zscore(pred), y = zscore(target);
  const long n = static_cast<long>(x.size());
  long double best = -1e300L;
  for (long lag = -(n - 1); lag < n; ++lag) {
    const long double c = cross_correlation_at(x, y, lag);
    best = std::max(best, negate ? -c : c);
  }
  return static_cast<double>(best);
}

/// Closed-form Butterworth band magnitude, written out separately.
inline double butterworth_band(double f, double lo, double hi, int order) {
  if (f == 0.0) return 0.0;
  const double hp = std::pow(lo / f, 2.0 * order), lp = std::pow(f / hi, 2.0 * order);
  return std::sqrt(1.0 / ((1.0 + hp) * (1.0 + lp)));
}

/// Least-squares amplitude of a sinusoid at f (cos and sin projections);
/// exact when the trace holds an integer number of periods.
inline double sinusoid_amplitude(std::span<const float> x, double f, double fps) {
  long double c = 0, s = 0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const long double ph = 2.0L * std::numbers::pi_v<long double> * f * static_cast<long double>(t) / fps;
    c += x[t] * std::cos(ph);
    s += x[t] * std::sin(ph);
  }
  return static_cast<double>(2.0L * std::sqrt(c * c + s * s) / static_cast<long double>(x.size()));
}

/// out(t) = sum_l k(l) x(t + l - L/2) with zero fill; one trace, one template.
inline std::vector<double> sliding_correlation(std::span<const float> x, std::span<const float> k) {
  const long n = static_cast<long>(x.size()), len = static_cast<long>(k.size()), half = len / 2;
  std::vector<double> out(x.size(), 0.0);
  for (long t = 0; t < n; ++t) {
    long double acc = 0;
    for (long l = 0; l < len; ++l) {
      const long src = t + l - half;
      if (src >= 0 && src < n) acc += static_cast<long double>(k[static_cast<std::size_t>(l)]) * x[static_cast<std::size_t>(src)];
    }
    out[static_cast<std::size_t>(t)] = static_cast<double>(acc);
  }
  return out;
}

/// One dilated same-padded convolution layer evaluated output by output,
/// indexing weights as [tap][in][out].
inline std::vector<double> conv_layer(const ConvShape& s, std::span<const double> w, std::span<const double> b,
                                      std::span<const double> in, std::size_t frames) {
  std::vector<double> out(frames * s.out_ch);
  const long half = static_cast<long>(s.kernel) / 2;
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t o = 0; o < s.out_ch; ++o) {
      long double acc = b[o];
      for (std::size_t l = 0; l < s.kernel; ++l) {
        const long src = static_cast<long>(t) + static_cast<long>(s.dilation) * (static_cast<long>(l) - half);
        if (src < 0 || src >= static_cast<long>(frames)) continue;
        for (std::size_t i = 0; i < s.in_ch; ++i)
          acc += w[(l * s.in_ch + i) * s.out_ch + o] * in[static_cast<std::size_t>(src) * s.in_ch + i];
      }
      const double v = static_cast<double>(acc);
      out[t * s.out_ch + o] = s.act == Activation::relu ? std::max(v, 0.0) : v;
    }
  return out;
}

inline std::vector<double> conv_stack(std::span<const ConvShape> shapes, std::span<const double> params,
                                      std::span<const double> input, std::size_t frames) {
  std::vector<double> x(input.begin(), input.end());
  std::size_t off = 0;
  for (const auto& s : shapes) {
    x = conv_layer(s, params.subspan(off, s.weight_count()), params.subspan(off + s.weight_count(), s.out_ch), x,
                   frames);
    off += s.param_count();
  }
  return x;
}

/// Which ReLU units are active in a recorded forward pass. Central
/// differences are only a derivative when no unit changes sign inside +-h.
template <class S>
void append_relu_signs(std::span<const ConvShape> shapes, const StackCache<S>& cache, std::vector<bool>& out) {
  for (std::size_t l = 0; l < shapes.size(); ++l)
    if (shapes[l].act == Activation::relu)
      for (const S v : cache.acts[l + 1]) out.push_back(v > S(0));
}

/// Central differences of a scalar function of a parameter vector.
inline std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                             std::vector<double> params, double h) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = f(params);
    params[i] = keep - h;
    const double down = f(params);
    params[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// A loss evaluation together with the ReLU sign pattern it went through.
struct Probe {
  long double value = 0;
  std::vector<bool> pattern;
};

struct CheckedDifference {
  std::vector<double> grad;
  std::vector<double> step;  // h actually used per parameter
};

using ProbeFn = std::function<Probe(std::span<const double>)>;

/// Central differences that respect the ReLU kinks: where a unit changes
/// sign inside +-h, h is divided by 10 (down to h_min) until the bracket is
/// kink-free, since across a kink the quotient is not a derivative. Only the
/// listed parameters are differenced when `only` is non-empty.
inline CheckedDifference finite_difference_kink_aware(const ProbeFn& f, std::vector<double> params, double h,
                                                      std::span<const std::size_t> only = {},
                                                      double h_min = 1e-8) {
  CheckedDifference out{std::vector<double>(params.size()), std::vector<double>(params.size())};
  const auto base = f(params).pattern;
  std::vector<std::size_t> all;
  if (only.empty()) {
    all.resize(params.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    only = all;
  }
  for (const std::size_t i : only) {
    const double keep = params[i];
    double step = h;
    for (;;) {
      params[i] = keep + step;
      const auto up = f(params);
      params[i] = keep - step;
      const auto down = f(params);
      const bool clean = up.pattern == base && down.pattern == base;
      if (clean || step / 10.0 < h_min) {
        out.grad[i] = static_cast<double>((up.value - down.value) / (2.0L * static_cast<long double>(step)));
        out.step[i] = step;
        break;
      }
      step /= 10.0;
    }
    params[i] = keep;
  }
  return out;
}

struct GradientCheck {
  double worst = 0.0;          // max relative error over every parameter
  std::size_t worst_index = 0;
  std::size_t shrunk = 0;      // parameters whose bracket held a kink at h
  std::size_t refined = 0;     // parameters re-differenced in extended precision
};

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-12});
}

/// Compares reverse-mode gradients with kink-aware central differences.
/// `fast` evaluates in double; where a gradient is so small that double
/// roundoff in f (about 1e-16 |f| / h) reaches the tolerance, the difference
/// is redone with `precise` (long double) for that parameter only.
inline GradientCheck check_gradient(std::span<const double> analytic, const ProbeFn& fast, const ProbeFn& precise,
                                    const std::vector<double>& params, double h, double tol) {
  const auto fd = finite_difference_kink_aware(fast, params, h);
  GradientCheck out;
  std::vector<std::size_t> redo;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.shrunk += fd.step[i] < h;
    if (relative_error(analytic[i], fd.grad[i]) >= tol) redo.push_back(i);
  }
  auto grad = fd.grad;
  if (!redo.empty()) {
    const auto fine = finite_difference_kink_aware(precise, params, h, redo);
    for (const std::size_t i : redo) grad[i] = fine.grad[i];
    out.refined = redo.size();
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double e = relative_error(analytic[i], grad[i]);
    if (e > out.worst) out.worst = e, out.worst_index = i;
  }
  return out;
}

/// Renewal process with the generator's rule, simulated from the same
/// uniforms but written independently: next = prev + refractory + Exp.
inline std::vector<std::size_t> renewal_frames(std::span<const double> uniforms, double fps, double refractory_s,
                                               double mean_interval_s, std::size_t frames) {
  std::vector<std::size_t> out;
  const double scale = mean_interval_s - refractory_s;
  double t = 0.0;
  for (const double u : uniforms) {
    t += refractory_s - scale * std::log(1.0 - u);
    const double f = std::floor(t * fps);
    if (f >= static_cast<double>(frames)) break;
    if (out.empty() || static_cast<std::size_t>(f) != out.back()) out.push_back(static_cast<std::size_t>(f));
  }
  return out;
}

/// Mean over pixels of per-pixel traces, frame by frame.
inline std::vector<double> pixel_mean(const VideoTensor& v) {
  std::vector<double> out(v.frames());
  for (std::size_t t = 0; t < v.frames(); ++t) {
    long double s = 0;
    for (std::size_t y = 0; y < v.height(); ++y)
      for (std::size_t x = 0; x < v.width(); ++x) s += v.at(t, y, x);
    out[t] = static_cast<double>(s / static_cast<long double>(v.pixels()));
  }
  return out;
}

}  // namespace micromotion::oracle
