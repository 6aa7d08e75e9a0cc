#pragma once

// Spike-triggered pixel templates and the per-pixel matched filter.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "micromotion/parallel.hpp"
#include "micromotion/tensor_io.hpp"

namespace micromotion {

struct SpikeDetectConfig {
  double threshold_sigma = 2.5;
  std::size_t refractory_frames = 25;
};

/// Window of L frames per pixel, centred on the spike frame.
struct TemplateTensor {
  VideoTensor samples;  // L x H x W
  std::size_t spike_count = 0;

  std::size_t window() const { return samples.frames(); }
  std::size_t height() const { return samples.height(); }
  std::size_t width() const { return samples.width(); }
};

inline SpikeTrain detect_spikes(const Trace& fluor, const SpikeDetectConfig& cfg = {}) {
  detail::require(fluor.size() >= 3, "spike detection needs at least 3 samples");
  detail::require(cfg.threshold_sigma > 0.0, "threshold_sigma must be positive");
  const auto x = fluor.samples();
  const std::size_t n = x.size();
  double mean = 0.0;
  for (const float v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (const float v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  if (!(sd > 0.0)) throw InvalidArgument("cannot detect spikes in a zero-variance trace");

  std::vector<std::size_t> peaks;
  for (std::size_t t = 0; t < n; ++t) {
    const bool left = t == 0 || x[t] > x[t - 1];
    const bool right = t + 1 == n || x[t] >= x[t + 1];
    if (left && right && (x[t] - mean) / sd > cfg.threshold_sigma) peaks.push_back(t);
  }
  std::stable_sort(peaks.begin(), peaks.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] > x[b]; });
  std::vector<std::size_t> kept;
  for (const std::size_t p : peaks) {
    const bool clash = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return (p > k ? p - k : k - p) <= cfg.refractory_frames;
    });
    if (!clash) kept.push_back(p);
  }
  std::sort(kept.begin(), kept.end());
  return SpikeTrain(std::move(kept), n);
}

/// Per-pixel mean of the L-frame windows centred on each usable spike.
inline TemplateTensor extract_template(const VideoTensor& filtered, const SpikeTrain& spikes,
                                       std::size_t window) {
  detail::require(window % 2 == 1, "template window must be odd");
  detail::require(spikes.total_frames() == filtered.frames(),
                  "spike train does not refer to this video");
  const std::size_t half = window / 2, n = filtered.pixels(), t_len = filtered.frames();
  std::vector<std::size_t> usable;
  for (const std::size_t s : spikes.indices())
    if (s >= half && s + half < t_len) usable.push_back(s);
  if (usable.empty()) throw InvalidArgument("no spike has a full template window inside the recording");

  std::vector<double> acc(window * n, 0.0);
  const auto in = filtered.samples();
  for (const std::size_t s : usable)
    for (std::size_t l = 0; l < window; ++l) {
      const float* src = in.data() + (s - half + l) * n;
      double* dst = acc.data() + l * n;
      for (std::size_t p = 0; p < n; ++p) dst[p] += src[p];
    }
  std::vector<float> out(acc.size());
  const double inv = 1.0 / static_cast<double>(usable.size());
  for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] * inv);
  return {VideoTensor(window, filtered.height(), filtered.width(), filtered.fps(), std::move(out)),
          usable.size()};
}

/// out(t) = sum_l template(l) * signal(t + l - (L-1)/2), zero outside [0, T).
inline VideoTensor matched_filter(const VideoTensor& filtered, const TemplateTensor& tmpl) {
  if (tmpl.height() != filtered.height() || tmpl.width() != filtered.width())
    throw InvalidArgument("template and video differ in frame size");
  const std::size_t window = tmpl.window(), t_len = filtered.frames(), n = filtered.pixels();
  if (window > t_len) throw InvalidArgument("template window longer than the video");
  const long half = static_cast<long>(window / 2);
  const auto in = filtered.samples();
  const auto k = tmpl.samples.samples();
  std::vector<float> out(in.size());
  parallel_for(n, [&](std::size_t p, std::size_t) {
    for (std::size_t t = 0; t < t_len; ++t) {
      double acc = 0.0;
      for (std::size_t l = 0; l < window; ++l) {
        const long src = static_cast<long>(t) + static_cast<long>(l) - half;
        if (src < 0 || src >= static_cast<long>(t_len)) continue;
        acc += static_cast<double>(k[l * n + p]) * in[static_cast<std::size_t>(src) * n + p];
      }
      out[t * n + p] = static_cast<float>(acc);
    }
  });
  return VideoTensor(t_len, filtered.height(), filtered.width(), filtered.fps(), std::move(out));
}

/// Sum over the roi per frame; squared afterwards when `square` is set.
inline Trace prediction_trace(const VideoTensor& pred, const RoiRect& roi, bool square) {
  if (!roi.fits(pred.height(), pred.width())) throw InvalidArgument("roi exceeds the frame");
  std::vector<float> out(pred.frames());
  for (std::size_t t = 0; t < pred.frames(); ++t) {
    double acc = 0.0;
    for (std::size_t y = roi.y0; y < roi.y0 + roi.h; ++y)
      for (std::size_t x = roi.x0; x < roi.x0 + roi.w; ++x) acc += pred.at(t, y, x);
    out[t] = static_cast<float>(square ? acc * acc : acc);
  }
  return Trace(pred.fps(), std::move(out));
}

/// Template metadata sidecar: key=value lines.
inline void write_template(const TemplateTensor& tmpl, const std::string& path,
                           const std::string& source_hash) {
  write_video(tmpl.samples, path);
  detail::write_file(path + ".meta", "window=" + std::to_string(tmpl.window()) +
                                         "\nspike_count=" + std::to_string(tmpl.spike_count) +
                                         "\nsource_hash=" + source_hash + "\n");
}

inline TemplateTensor read_template(const std::string& path) {
  TemplateTensor t{read_video(path), 0};
  const auto lines = detail::split_lines(detail::read_file(path + ".meta"));
  for (std::size_t i = 0; i < lines.size(); ++i)
    if (lines[i].rfind("spike_count=", 0) == 0)
      t.spike_count = detail::parse_index(lines[i].substr(12), i + 1);
  if (t.window() % 2 == 0) throw FormatError(path + ": template window must be odd");
  return t;
}

}  // namespace micromotion
