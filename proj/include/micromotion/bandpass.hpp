#pragma once

// Zero-phase temporal bandpass: the Butterworth magnitude response applied
// bin-by-bin to the DFT of each pixel trace. No phase is introduced, so
// filtered motion stays time-aligned with the fluorescence it predicts.

#include <cmath>
#include <string>
#include <vector>

#include "micromotion/fft.hpp"
#include "micromotion/parallel.hpp"
#include "micromotion/types.hpp"

namespace micromotion {

struct BandpassSpec {
  double f_lo = 2.0;
  double f_hi = 15.0;
  int order = 4;
  double fps = 50.0;

  void validate() const {
    detail::require(order >= 1, "bandpass order must be >= 1");
    detail::require(fps > 0.0, "bandpass fps must be positive");
    detail::require(f_lo > 0.0 && f_lo < f_hi && f_hi < fps / 2.0,
                    "bandpass edges must satisfy 0 < f_lo < f_hi < fps/2 (got " +
                        std::to_string(f_lo) + ", " + std::to_string(f_hi) + " at " +
                        std::to_string(fps) + " fps)");
  }
};

/// |H(f)| = [1 + (f_lo/f)^2n]^-1/2 * [1 + (f/f_hi)^2n]^-1/2, with H(0) = 0.
inline double magnitude_response(const BandpassSpec& spec, double f) {
  spec.validate();
  if (!(f >= 0.0 && f <= spec.fps / 2.0))
    throw InvalidArgument("frequency " + std::to_string(f) + " Hz outside [0, fps/2]");
  if (f == 0.0) return 0.0;
  const double n2 = 2.0 * spec.order;
  const double high_pass = 1.0 / std::sqrt(1.0 + std::pow(spec.f_lo / f, n2));
  const double low_pass = 1.0 / std::sqrt(1.0 + std::pow(f / spec.f_hi, n2));
  return high_pass * low_pass;
}

/// Gain for every rfft bin of a length-n transform.
inline std::vector<double> bin_gains(const BandpassSpec& spec, std::size_t n) {
  spec.validate();
  std::vector<double> g(n / 2 + 1);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double f = static_cast<double>(k) * spec.fps / static_cast<double>(n);
    g[k] = magnitude_response(spec, std::min(f, spec.fps / 2.0));
  }
  return g;
}

namespace detail {

inline std::vector<double> apply_gains(std::span<const double> x, std::span<const double> gains) {
  auto spec = fft::forward(x);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] *= gains[k];
  return fft::inverse(std::move(spec), x.size());
}

}  // namespace detail

inline Trace bandpass_trace(const Trace& trace, BandpassSpec spec) {
  detail::require(trace.size() >= 2, "bandpass needs at least 2 samples");
  spec.fps = trace.fps();
  const auto gains = bin_gains(spec, trace.size());
  const std::vector<double> x(trace.samples().begin(), trace.samples().end());
  const auto y = detail::apply_gains(x, gains);
  return Trace(trace.fps(), std::vector<float>(y.begin(), y.end()));
}

/// bandpass_trace on each of the H*W pixel traces independently.
inline VideoTensor bandpass_video(const VideoTensor& video, BandpassSpec spec) {
  detail::require(video.frames() >= 2, "bandpass needs at least 2 frames");
  spec.fps = video.fps();
  const std::size_t t_len = video.frames(), n = video.pixels();
  const auto gains = bin_gains(spec, t_len);
  const auto in = video.samples();
  std::vector<float> out(in.size());
  parallel_for(n, [&](std::size_t p, std::size_t) {
    std::vector<double> x(t_len);
    for (std::size_t t = 0; t < t_len; ++t) x[t] = in[t * n + p];
    const auto y = detail::apply_gains(x, gains);
    for (std::size_t t = 0; t < t_len; ++t) out[t * n + p] = static_cast<float>(y[t]);
  });
  return VideoTensor(t_len, video.height(), video.width(), video.fps(), std::move(out));
}

}  // namespace micromotion
