#pragma once

// Synthetic paired transmission / fluorescence recordings with known spike
// times. Motion is modelled to first order: a sub-pixel membrane shift
// changes intensity in proportion to the local image gradient, so a region
// with amplitude a contributes a * |grad I0|(x) * k(t - s) per spike s.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "micromotion/parallel.hpp"
#include "micromotion/random.hpp"
#include "micromotion/tensor_io.hpp"

namespace micromotion {

enum class RegionLabel { strong, weak, silent };

inline std::string to_string(RegionLabel l) {
  switch (l) {
    case RegionLabel::strong: return "strong";
    case RegionLabel::weak: return "weak";
    case RegionLabel::silent: return "silent";
  }
  return "?";
}

inline RegionLabel parse_region_label(const std::string& s) {
  if (s == "strong") return RegionLabel::strong;
  if (s == "weak") return RegionLabel::weak;
  if (s == "silent") return RegionLabel::silent;
  throw InvalidArgument("unknown region label '" + s + "'");
}

struct RegionSpec {
  RoiRect rect;
  double amplitude = 0.0;
  RegionLabel label = RegionLabel::silent;

  friend bool operator==(const RegionSpec&, const RegionSpec&) = default;
};

/// Motion amplitudes (pixels of membrane shift) used by default_regions().
inline constexpr double kStrongAmplitude = 0.5;
inline constexpr double kWeakAmplitude = 0.05;

/// Strong, weak and silent squares of side min(H,W)/4 at fixed fractions of
/// the frame: strong upper-left, silent upper-right, weak lower-right.
inline std::vector<RegionSpec> default_regions(std::size_t height, std::size_t width) {
  const std::size_t side = std::max<std::size_t>(1, std::min(height, width) / 4);
  const auto at = [&](double fx, double fy) {
    return RoiRect{static_cast<std::size_t>(fx * static_cast<double>(width)),
                   static_cast<std::size_t>(fy * static_cast<double>(height)), side, side};
  };
  return {{at(0.125, 0.125), kStrongAmplitude, RegionLabel::strong},
          {at(0.625, 0.625), kWeakAmplitude, RegionLabel::weak},
          {at(0.625, 0.125), 0.0, RegionLabel::silent}};
}

struct SynthConfig {
  std::size_t frames = 5000;
  std::size_t height = 256;
  std::size_t width = 256;
  double fps = 50.0;
  std::uint64_t seed = 1;
  double mean_spike_interval_s = 3.0;
  double refractory_s = 1.0;
  double full_well = 1e5;
  std::vector<RegionSpec> regions = default_regions(256, 256);

  /// Pulse and calcium-kernel shapes.
  double motion_pulse_s = 0.2;
  double ca_rise_s = 0.05;
  double ca_decay_s = 0.5;
  double fluorescence_noise = 0.01;

  void validate() const {
    detail::require(frames > 0 && height > 0 && width > 0, "dimensions must be positive");
    detail::require(fps > 0.0, "fps must be positive");
    detail::require(full_well > 0.0, "full_well must be positive");
    detail::require(refractory_s >= 0.0 && refractory_s < mean_spike_interval_s,
                    "refractory_s must be < mean_spike_interval_s");
    for (std::size_t i = 0; i < regions.size(); ++i) {
      const auto& r = regions[i];
      detail::require(r.rect.fits(height, width), "region " + std::to_string(i) + " outside frame");
      detail::require(r.amplitude >= 0.0, "region amplitudes must be >= 0");
      detail::require(r.label != RegionLabel::silent || r.amplitude == 0.0,
                      "silent regions must have amplitude 0");
      for (std::size_t j = 0; j < i; ++j)
        detail::require(!regions[j].rect.overlaps(r.rect),
                        "regions " + std::to_string(j) + " and " + std::to_string(i) + " overlap");
    }
  }
};

struct SynthDataset {
  VideoTensor transmission;
  Trace fluorescence_global;
  SpikeTrain spikes;
  std::vector<RegionSpec> regions;
  std::vector<float> background;       // I0, H*W
  std::vector<float> modulation_gain;  // a * |grad I0| inside regions, 0 elsewhere
};

/// Renewal process: gaps are refractory + Exp(mean - refractory), floored to frames.
inline SpikeTrain gen_spike_train(const SynthConfig& cfg) {
  cfg.validate();
  RngSequence rng(cfg.seed, Stream::spikes);
  const double scale = cfg.mean_spike_interval_s - cfg.refractory_s;
  std::vector<std::size_t> out;
  double t = 0.0;
  for (;;) {
    t += cfg.refractory_s - scale * std::log1p(-rng.uniform());
    const double frame = std::floor(t * cfg.fps);
    if (frame >= static_cast<double>(cfg.frames)) break;
    // Without a refractory period two events can share a frame.
    if (out.empty() || out.back() != static_cast<std::size_t>(frame)) out.push_back(static_cast<std::size_t>(frame));
  }
  return SpikeTrain(std::move(out), cfg.frames);
}

/// Raised-cosine motion pulse starting at dt = 0, lasting `duration` seconds.
inline double motion_pulse(double dt, double duration) {
  if (dt < 0.0 || dt >= duration) return 0.0;
  return 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * dt / duration));
}

/// Calcium transient: linear rise to 1 over `rise`, then exponential decay.
inline double calcium_kernel(double dt, double rise, double decay) {
  if (dt < 0.0) return 0.0;
  if (dt < rise) return dt / rise;
  return std::exp(-(dt - rise) / decay);
}

namespace detail {

inline std::vector<double> gaussian_blur(const std::vector<double>& img, std::size_t h,
                                         std::size_t w, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  const auto reflect = [](long i, long n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
    return static_cast<std::size_t>(i);
  };
  std::vector<double> tmp(img.size()), out(img.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * img[y * w + reflect(static_cast<long>(x) + i, static_cast<long>(w))];
      tmp[y * w + x] = acc;
    }
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * tmp[reflect(static_cast<long>(y) + i, static_cast<long>(h)) * w + x];
      out[y * w + x] = acc;
    }
  return out;
}

inline void normalize_range(std::vector<double>& v, double lo, double hi) {
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double a = *mn, span = *mx - *mn;
  for (double& x : v) x = span > 0.0 ? lo + (hi - lo) * (x - a) / span : 0.5 * (lo + hi);
}

}  // namespace detail

/// Static image: blurred noise plus soft-edged elliptical cells, in [0.1, 0.9].
inline std::vector<double> gen_background(const SynthConfig& cfg) {
  const std::size_t h = cfg.height, w = cfg.width;
  CounterRng noise(cfg.seed, Stream::background);
  std::vector<double> field(h * w);
  for (std::size_t p = 0; p < field.size(); ++p) field[p] = noise.normal(p);
  field = detail::gaussian_blur(field, h, w, 4.0);
  detail::normalize_range(field, 0.0, 0.3);

  RngSequence cells(cfg.seed, Stream::cells);
  const std::size_t count = std::max<std::size_t>(1, h * w / 300);
  for (std::size_t c = 0; c < count; ++c) {
    const double cy = cells.uniform(0.0, static_cast<double>(h));
    const double cx = cells.uniform(0.0, static_cast<double>(w));
    const double ry = cells.uniform(4.0, 9.0), rx = cells.uniform(4.0, 9.0);
    const double th = cells.uniform(0.0, std::numbers::pi);
    const double ct = std::cos(th), st = std::sin(th);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
        const double u = (dx * ct + dy * st) / rx, v = (-dx * st + dy * ct) / ry;
        const double r = std::sqrt(u * u + v * v);
        field[y * w + x] += 0.5 / (1.0 + std::exp((r - 1.0) / 0.15));
      }
  }
  detail::normalize_range(field, 0.1, 0.9);
  return field;
}

/// |grad I0| by central differences, one-sided at the border.
inline std::vector<double> gradient_magnitude(const std::vector<double>& img, std::size_t h,
                                              std::size_t w) {
  std::vector<double> g(img.size());
  const auto d = [](const std::vector<double>& f, std::size_t i0, std::size_t i1, double span) {
    return (f[i1] - f[i0]) / span;
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double gx = 0.0, gy = 0.0;
      if (w > 1) {
        const std::size_t xl = x > 0 ? x - 1 : x, xr = x + 1 < w ? x + 1 : x;
        gx = d(img, y * w + xl, y * w + xr, static_cast<double>(xr - xl));
      }
      if (h > 1) {
        const std::size_t yu = y > 0 ? y - 1 : y, yd = y + 1 < h ? y + 1 : y;
        gy = d(img, yu * w + x, yd * w + x, static_cast<double>(yd - yu));
      }
      g[y * w + x] = std::hypot(gx, gy);
    }
  return g;
}

inline SynthDataset gen_dataset(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t t_len = cfg.frames, h = cfg.height, w = cfg.width, n = h * w;
  SpikeTrain spikes = gen_spike_train(cfg);
  const auto bg = gen_background(cfg);
  const auto grad = gradient_magnitude(bg, h, w);

  std::vector<double> gain(n, 0.0);
  for (const auto& r : cfg.regions)
    for (std::size_t y = r.rect.y0; y < r.rect.y0 + r.rect.h; ++y)
      for (std::size_t x = r.rect.x0; x < r.rect.x0 + r.rect.w; ++x)
        gain[y * w + x] = r.amplitude * grad[y * w + x];

  std::vector<double> motion(t_len, 0.0), fluor(t_len, 0.0);
  for (const std::size_t s : spikes.indices()) {
    for (std::size_t t = s; t < t_len; ++t) {
      const double dt = static_cast<double>(t - s) / cfg.fps;
      motion[t] += motion_pulse(dt, cfg.motion_pulse_s);
      fluor[t] += calcium_kernel(dt, cfg.ca_rise_s, cfg.ca_decay_s);
      if (dt > cfg.motion_pulse_s && dt > cfg.ca_rise_s + 40.0 * cfg.ca_decay_s) break;
    }
  }

  const CounterRng shot(cfg.seed, Stream::shot_noise);
  const bool noiseless = std::isinf(cfg.full_well);
  std::vector<float> samples(t_len * n);
  parallel_for(t_len, [&](std::size_t t, std::size_t) {
    for (std::size_t p = 0; p < n; ++p) {
      const double clean = bg[p] + gain[p] * motion[t];
      const double sigma = noiseless ? 0.0 : std::sqrt(std::max(clean, 0.0) / cfg.full_well);
      const double noise = sigma > 0.0 ? sigma * shot.normal(p, static_cast<std::uint32_t>(t)) : 0.0;
      samples[t * n + p] = static_cast<float>(clean + noise);
    }
  });

  const CounterRng fl_noise(cfg.seed, Stream::fluorescence_noise);
  std::vector<float> fl(t_len);
  for (std::size_t t = 0; t < t_len; ++t)
    fl[t] = static_cast<float>(fluor[t] + cfg.fluorescence_noise * fl_noise.normal(t));

  return SynthDataset{VideoTensor(t_len, h, w, cfg.fps, std::move(samples)),
                      Trace(cfg.fps, std::move(fl)),
                      std::move(spikes),
                      cfg.regions,
                      std::vector<float>(bg.begin(), bg.end()),
                      std::vector<float>(gain.begin(), gain.end())};
}

/// Frames from a spike to its fluorescence maximum when spikes sit on frame
/// boundaries (the sampled kernel peaks on the first frame past the rise).
inline std::size_t calcium_peak_latency_frames(const SynthConfig& cfg) {
  std::size_t best = 0;
  double best_v = -1.0;
  for (std::size_t f = 0; f < static_cast<std::size_t>(cfg.fps * 2.0) + 1; ++f) {
    const double v = calcium_kernel(static_cast<double>(f) / cfg.fps, cfg.ca_rise_s, cfg.ca_decay_s);
    if (v > best_v) best_v = v, best = f;
  }
  return best;
}

/// "label,x0,y0,w,h,amplitude" with a header row.
inline void write_regions(const std::vector<RegionSpec>& regions, const std::string& path) {
  std::string out = "label,x0,y0,w,h,amplitude\n";
  for (const auto& r : regions)
    out += to_string(r.label) + "," + std::to_string(r.rect.x0) + "," + std::to_string(r.rect.y0) +
           "," + std::to_string(r.rect.w) + "," + std::to_string(r.rect.h) + "," +
           detail::format_g9(r.amplitude) + "\n";
  detail::write_file(path, out);
}

/// Parses "label:x0,y0,w,h[:amplitude]".
inline RegionSpec parse_region(const std::string& text) {
  const auto c1 = text.find(':');
  if (c1 == std::string::npos) throw InvalidArgument("region '" + text + "' must be label:x0,y0,w,h[:amp]");
  const auto c2 = text.find(':', c1 + 1);
  RegionSpec r;
  r.label = parse_region_label(text.substr(0, c1));
  std::string rect = text.substr(c1 + 1, c2 == std::string::npos ? std::string::npos : c2 - c1 - 1);
  std::replace(rect.begin(), rect.end(), ',', ' ');
  std::istringstream ss(rect);
  if (!(ss >> r.rect.x0 >> r.rect.y0 >> r.rect.w >> r.rect.h))
    throw InvalidArgument("region '" + text + "' has a malformed rectangle");
  if (c2 != std::string::npos) r.amplitude = detail::parse_real(text.substr(c2 + 1), 1);
  else r.amplitude = r.label == RegionLabel::strong ? kStrongAmplitude
                     : r.label == RegionLabel::weak ? kWeakAmplitude : 0.0;
  return r;
}

inline std::vector<RegionSpec> read_regions(const std::string& path) {
  const auto lines = detail::split_lines(detail::read_file(path));
  std::vector<RegionSpec> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::string l = lines[i];
    std::replace(l.begin(), l.end(), ',', ' ');
    std::istringstream ss(l);
    std::string label, amp;
    RegionSpec r;
    if (!(ss >> label >> r.rect.x0 >> r.rect.y0 >> r.rect.w >> r.rect.h >> amp))
      throw ParseError(i + 1, path + ": expected label,x0,y0,w,h,amplitude");
    r.label = parse_region_label(label);
    r.amplitude = detail::parse_real(amp, i + 1);
    out.push_back(r);
  }
  return out;
}

}  // namespace micromotion
