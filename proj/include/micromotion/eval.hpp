#pragma once

// Correlation score: both traces are standardized, cross-correlated over
// every lag in (-T, T) with divisor T, and the maximum is kept. Large lags
// see fewer overlapping samples and are penalized accordingly; identical
// traces score 1 at lag 0.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "micromotion/fft.hpp"
#include "micromotion/parallel.hpp"
#include "micromotion/random.hpp"
#include "micromotion/stats.hpp"
#include "micromotion/tensor_io.hpp"

namespace micromotion {

namespace detail {

/// Spectrum of a standardized trace zero-padded to `padded` samples.
inline fft::Spectrum padded_spectrum(std::span<const double> z, std::size_t padded) {
  std::vector<double> buf(padded, 0.0);
  std::copy(z.begin(), z.end(), buf.begin());
  return fft::forward(buf);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// For standardized inputs sum(x^2) == T, so dividing by sqrt(sum x^2 sum y^2)
/// is the divisor-T convention; it also makes a trace scored against itself
/// come out at exactly 1 (lag 0 is summed directly, not through the DFT).
inline double max_cross_correlation(std::span<const double> x, const fft::Spectrum& x_spec,
                                    std::span<const double> y, const fft::Spectrum& y_spec,
                                    double y_energy, std::size_t padded) {
  const std::size_t t_len = x.size();
  fft::Spectrum prod(x_spec.size());
  for (std::size_t k = 0; k < prod.size(); ++k) prod[k] = std::conj(x_spec[k]) * y_spec[k];
  const auto r = fft::inverse(std::move(prod), padded);
  // r[tau] = sum_t x(t) y(t + tau); negative lags wrap to the end.
  double best = dot(x, y);
  for (std::size_t tau = 1; tau < t_len; ++tau) best = std::max({best, r[tau], r[padded - tau]});
  return std::clamp(best / std::sqrt(dot(x, x) * y_energy), -1.0, 1.0);
}

inline std::size_t correlation_length(std::size_t t_len) { return fft::good_size(2 * t_len - 1); }

}  // namespace detail

inline double correlation_score(std::span<const float> pred, std::span<const float> target) {
  if (pred.size() != target.size() || pred.empty())
    throw InvalidArgument("correlation_score needs equal, non-zero lengths");
  const auto x = standardize<double>(pred);
  const auto y = standardize<double>(target);
  const std::size_t padded = detail::correlation_length(x.size());
  return detail::max_cross_correlation(x, detail::padded_spectrum(x, padded), y,
                                       detail::padded_spectrum(y, padded), detail::dot(y, y), padded);
}

inline double correlation_score(const Trace& pred, const Trace& target) {
  return correlation_score(pred.samples(), target.samples());
}

struct CorrelationMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> scores;    // H*W, row-major
  std::vector<bool> degenerate;  // zero-variance pixels, scored 0
  std::string method;
  std::string source;  // free-form provenance, e.g. dataset hash

  double at(std::size_t y, std::size_t x) const { return scores[y * width + x]; }

  double mean_in(const RoiRect& roi) const {
    double s = 0.0;
    for (std::size_t y = roi.y0; y < roi.y0 + roi.h; ++y)
      for (std::size_t x = roi.x0; x < roi.x0 + roi.w; ++x) s += at(y, x);
    return s / static_cast<double>(roi.area());
  }

  std::size_t degenerate_count() const {
    return static_cast<std::size_t>(std::count(degenerate.begin(), degenerate.end(), true));
  }
};

/// Per-pixel correlation_score against one target trace.
inline CorrelationMap correlation_map(const VideoTensor& pred, const Trace& target,
                                      std::string method = {}, std::string source = {}) {
  if (pred.frames() != target.size())
    throw InvalidArgument("prediction video and target differ in length");
  const std::size_t t_len = pred.frames(), n = pred.pixels();
  CorrelationMap map{pred.height(), pred.width(), std::vector<double>(n, 0.0),
                     std::vector<bool>(n, false), std::move(method), std::move(source)};
  const auto y = standardize<double>(target.samples());
  const std::size_t padded = detail::correlation_length(t_len);
  const auto y_spec = detail::padded_spectrum(y, padded);
  const double y_energy = detail::dot(y, y);
  std::vector<char> flags(n, 0);
  parallel_for(n, [&](std::size_t p, std::size_t) {
    const auto tr = pred.pixel_trace(p);
    if (!(stddev_of(std::span<const float>(tr)) > 0.0)) {
      flags[p] = 1;
      return;
    }
    const auto x = standardize_or_zero<double>(std::span<const float>(tr));
    map.scores[p] = detail::max_cross_correlation(x, detail::padded_spectrum(x, padded), y, y_spec, y_energy, padded);
  });
  for (std::size_t p = 0; p < n; ++p) map.degenerate[p] = flags[p] != 0;
  return map;
}

/// Scores of independent white-noise pairs; the spread of max-over-lags
/// correlation expected from chance alone at this length.
struct NullBand {
  std::vector<double> scores;
  double upper() const { return scores.empty() ? 0.0 : *std::max_element(scores.begin(), scores.end()); }
  double mean() const { return mean_of(std::span<const double>(scores)); }
};

inline NullBand white_noise_null_band(std::size_t length, std::size_t trials, std::uint64_t seed) {
  detail::require(length >= 2 && trials >= 1, "null band needs length >= 2 and trials >= 1");
  const CounterRng rng(seed, Stream::null_band);
  NullBand band;
  band.scores.resize(trials);
  parallel_for(trials, [&](std::size_t i, std::size_t) {
    std::vector<float> a(length), b(length);
    for (std::size_t t = 0; t < length; ++t) {
      a[t] = static_cast<float>(rng.normal(2 * i, static_cast<std::uint32_t>(t)));
      b[t] = static_cast<float>(rng.normal(2 * i + 1, static_cast<std::uint32_t>(t)));
    }
    band.scores[i] = correlation_score(a, b);
  });
  return band;
}

/// Score -1 maps to 0 and +1 to 65535: floor((s + 1) / 2 * 65535).
inline std::uint16_t score_to_gray(double s) {
  const double v = std::floor((std::clamp(s, -1.0, 1.0) + 1.0) / 2.0 * 65535.0);
  return static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
}

/// Binary 16-bit PGM (P5, big-endian samples) from values already in [0, 65535].
inline std::string encode_pgm16(std::size_t height, std::size_t width, std::span<const std::uint16_t> gray) {
  detail::require(gray.size() == height * width, "PGM pixel count mismatch");
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
  for (const std::uint16_t g : gray) {
    out.push_back(static_cast<char>(g >> 8));
    out.push_back(static_cast<char>(g & 0xff));
  }
  return out;
}

inline std::string encode_map_csv(const CorrelationMap& map) {
  std::string out = "# method=" + (map.method.empty() ? std::string("-") : map.method) +
                    " source=" + (map.source.empty() ? std::string("-") : map.source) +
                    " height=" + std::to_string(map.height) + " width=" + std::to_string(map.width) +
                    " degenerate=" + std::to_string(map.degenerate_count()) + "\n";
  out += "y,x,score,degenerate\n";
  for (std::size_t y = 0; y < map.height; ++y)
    for (std::size_t x = 0; x < map.width; ++x) {
      const std::size_t p = y * map.width + x;
      out += std::to_string(y) + "," + std::to_string(x) + "," + detail::format_g9(map.scores[p]) + "," +
             (map.degenerate[p] ? "1" : "0") + "\n";
    }
  return out;
}

/// Writes `<stem>.pgm` and `<stem>.csv`.
inline void export_map_pgm(const CorrelationMap& map, const std::string& stem) {
  std::vector<std::uint16_t> gray(map.scores.size());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = score_to_gray(map.scores[i]);
  detail::write_file(stem + ".pgm", encode_pgm16(map.height, map.width, gray));
  detail::write_file(stem + ".csv", encode_map_csv(map));
}

inline CorrelationMap read_map_csv(const std::string& path) {
  const auto lines = detail::split_lines(detail::read_file(path));
  if (lines.size() < 2) throw FormatError(path + ": map CSV too short");
  CorrelationMap map;
  map.height = detail::parse_index(detail::header_field(lines[0], "height"), 1);
  map.width = detail::parse_index(detail::header_field(lines[0], "width"), 1);
  map.method = detail::header_field(lines[0], "method");
  map.source = detail::header_field(lines[0], "source");
  map.scores.assign(map.height * map.width, 0.0);
  map.degenerate.assign(map.height * map.width, false);
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    std::vector<std::string> f;
    std::size_t pos = 0;
    for (;;) {
      const auto c = lines[i].find(',', pos);
      f.push_back(lines[i].substr(pos, c - pos));
      if (c == std::string::npos) break;
      pos = c + 1;
    }
    if (f.size() != 4) throw ParseError(i + 1, path + ": expected y,x,score,degenerate");
    const std::size_t y = detail::parse_index(f[0], i + 1), x = detail::parse_index(f[1], i + 1);
    if (y >= map.height || x >= map.width) throw ParseError(i + 1, path + ": pixel outside the map");
    map.scores[y * map.width + x] = detail::parse_real(f[2], i + 1);
    map.degenerate[y * map.width + x] = f[3] == "1";
  }
  return map;
}

/// Maps values in [0, 1] linearly onto the 16-bit range.
inline void export_unit_map(std::size_t height, std::size_t width, std::span<const float> values,
                            const std::string& stem) {
  std::vector<std::uint16_t> gray(values.size());
  std::string csv = "# height=" + std::to_string(height) + " width=" + std::to_string(width) + "\ny,x,value\n";
  for (std::size_t i = 0; i < values.size(); ++i) {
    gray[i] = static_cast<std::uint16_t>(std::floor(std::clamp<double>(values[i], 0.0, 1.0) * 65535.0));
    csv += std::to_string(i / width) + "," + std::to_string(i % width) + "," + detail::format_g9(values[i]) + "\n";
  }
  detail::write_file(stem + ".pgm", encode_pgm16(height, width, gray));
  detail::write_file(stem + ".csv", csv);
}

}  // namespace micromotion
