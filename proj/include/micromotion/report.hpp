#pragma once

// Side-by-side comparison of the four predictors on one bandpassed recording.
//
// Each method yields a per-pixel prediction video (except the video network,
// which only predicts region sums). ROI traces are summed per frame, squared
// for the two filter methods, trimmed by `margin` frames at both ends and
// scored against the fluorescence trace. The trim removes the zero-padding
// transients of the convolution stacks, whose reach is 46 frames.
//
// Chance level is estimated per method: white-noise videos of the ROI's shape
// are bandpassed and pushed through the same method, then scored. A plain
// white-pair band at the trimmed length is reported too.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "micromotion/bandpass.hpp"
#include "micromotion/eval.hpp"
#include "micromotion/matched.hpp"
#include "micromotion/net3d.hpp"

namespace micromotion {

enum class Method { bandpass, matched, cnn1d, cnn3d };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::bandpass: return "bandpass";
    case Method::matched: return "matched";
    case Method::cnn1d: return "cnn1d";
    case Method::cnn3d: return "cnn3d";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (const Method m : {Method::bandpass, Method::matched, Method::cnn1d, Method::cnn3d})
    if (to_string(m) == s) return m;
  throw InvalidArgument("unknown method '" + s + "'");
}

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::bandpass, Method::matched, Method::cnn1d, Method::cnn3d};
  return m;
}

struct LabeledRoi {
  std::string label;
  RoiRect rect;
};

struct MethodModels {
  std::optional<TemplateTensor> tmpl;
  std::optional<Network1D<float>> net1d;
  std::map<std::string, Network3D<float>> net3d;  // keyed by ROI label
};

struct ReportConfig {
  std::size_t margin = 46;
  std::size_t null_trials = 100;
  std::uint64_t null_seed = 1;
  BandpassSpec band;
  bool maps = true;
};

struct RoiScore {
  Method method;
  std::string roi;
  double score = 0.0;
  double null_upper = 0.0;  // method-specific chance level
  Trace trace;              // trimmed ROI prediction
};

struct MethodReport {
  std::vector<RoiScore> scores;
  std::vector<CorrelationMap> maps;
  NullBand white_pair;
  std::size_t scored_frames = 0;

  const RoiScore& find(Method m, const std::string& roi) const {
    for (const auto& s : scores)
      if (s.method == m && s.roi == roi) return s;
    throw InvalidArgument("no score for " + to_string(m) + " on " + roi);
  }
};

namespace detail {

inline FrameRange scoring_window(std::size_t frames, std::size_t margin) {
  if (frames <= 2 * margin + 1)
    throw InvalidArgument("recording of " + std::to_string(frames) + " frames is too short for a " +
                          std::to_string(margin) + "-frame margin");
  return {margin, frames - margin};
}

inline Trace trim(const Trace& t, FrameRange w) { return t.slice(w.begin, w.end); }

inline TemplateTensor template_roi(const TemplateTensor& t, const RoiRect& roi) {
  return {slice_roi(t.samples, roi), t.spike_count};
}

inline void require_models(std::span<const Method> methods, std::span<const LabeledRoi> rois,
                           const MethodModels& models) {
  for (const Method m : methods) {
    if (m == Method::matched && !models.tmpl) throw InvalidArgument("method matched: no template supplied");
    if (m == Method::cnn1d && !models.net1d) throw InvalidArgument("method cnn1d: no trained network supplied");
    if (m == Method::cnn3d)
      for (const auto& r : rois) {
        const auto it = models.net3d.find(r.label);
        if (it == models.net3d.end())
          throw InvalidArgument("method cnn3d: no trained network for region " + r.label);
        if (it->second.height != r.rect.h || it->second.width != r.rect.w)
          throw InvalidArgument("method cnn3d: network for region " + r.label + " has the wrong shape");
      }
  }
}

/// ROI trace of one method on an already bandpassed ROI video.
inline Trace roi_prediction(Method m, const VideoTensor& roi_video, const RoiRect& full_roi,
                            const std::string& label, const MethodModels& models) {
  const RoiRect local{0, 0, roi_video.width(), roi_video.height()};
  switch (m) {
    case Method::bandpass: return prediction_trace(roi_video, local, true);
    case Method::matched:
      return prediction_trace(matched_filter(roi_video, template_roi(*models.tmpl, full_roi)), local, true);
    case Method::cnn1d: return prediction_trace(predict_1d(*models.net1d, roi_video), local, false);
    case Method::cnn3d: return predict_3d(models.net3d.at(label), roi_video);
  }
  throw InvalidArgument("unknown method");
}

}  // namespace detail

/// Scores for `noise_trials` white-noise inputs shaped like the ROI.
inline NullBand method_null_band(Method m, const LabeledRoi& roi, const Trace& target, const MethodModels& models,
                                 const ReportConfig& cfg) {
  const auto window = detail::scoring_window(target.size(), cfg.margin);
  const Trace scored = detail::trim(target, window);
  const CounterRng rng(cfg.null_seed, Stream::null_band);
  const std::size_t t_len = target.size(), n = roi.rect.area();
  NullBand band;
  band.scores.resize(cfg.null_trials);
  for (std::size_t trial = 0; trial < cfg.null_trials; ++trial) {
    std::vector<float> noise(t_len * n);
    // Offset keeps these draws apart from white_noise_null_band's pairs.
    const std::uint64_t base = (std::uint64_t{1} << 40) + (static_cast<std::uint64_t>(m) << 32) + trial;
    for (std::size_t i = 0; i < noise.size(); ++i)
      noise[i] = static_cast<float>(rng.normal(base, static_cast<std::uint32_t>(i)));
    const VideoTensor raw(t_len, roi.rect.h, roi.rect.w, target.fps(), std::move(noise));
    const auto pred = detail::roi_prediction(m, bandpass_video(raw, cfg.band), roi.rect, roi.label, models);
    band.scores[trial] = correlation_score(detail::trim(pred, window), scored);
  }
  return band;
}

/// `filtered` is the bandpassed validation recording, `target` its
/// fluorescence trace.
inline MethodReport compare_methods(const VideoTensor& filtered, const Trace& target,
                                    std::span<const Method> methods, std::span<const LabeledRoi> rois,
                                    const MethodModels& models, const ReportConfig& cfg = {}) {
  detail::require(target.size() == filtered.frames(), "target length must equal video length");
  for (const auto& r : rois)
    if (!r.rect.fits(filtered.height(), filtered.width()))
      throw InvalidArgument("region " + r.label + " exceeds the frame");
  detail::require_models(methods, rois, models);
  const auto window = detail::scoring_window(filtered.frames(), cfg.margin);
  const Trace scored = detail::trim(target, window);

  MethodReport report;
  report.scored_frames = scored.size();
  report.white_pair = white_noise_null_band(scored.size(), cfg.null_trials, cfg.null_seed);
  // A band depends on the ROI only through its shape, plus its position
  // (template slice) or label (3D network); equal keys share one band.
  std::map<std::string, double> null_upper;
  const auto band_key = [](Method m, const LabeledRoi& r) {
    std::string key = to_string(m) + ":" + std::to_string(r.rect.h) + "x" + std::to_string(r.rect.w);
    if (m == Method::matched) key += "@" + std::to_string(r.rect.x0) + "," + std::to_string(r.rect.y0);
    if (m == Method::cnn3d) key += "#" + r.label;
    return key;
  };

  for (const Method m : methods) {
    // Full-frame per-pixel predictions where the method has them.
    std::optional<VideoTensor> full;
    if (m == Method::bandpass) full = filtered;
    if (m == Method::matched) full = matched_filter(filtered, *models.tmpl);
    if (m == Method::cnn1d) full = predict_1d(*models.net1d, filtered);
    if (full && cfg.maps)
      report.maps.push_back(correlation_map(slice_frames(*full, window), scored, to_string(m)));

    for (const auto& r : rois) {
      Trace pred = [&] {
        if (m == Method::cnn3d) return predict_3d(models.net3d.at(r.label), slice_roi(filtered, r.rect));
        return prediction_trace(*full, r.rect, m == Method::bandpass || m == Method::matched);
      }();
      RoiScore s{m, r.label, 0.0, 0.0, detail::trim(pred, window)};
      s.score = correlation_score(s.trace, scored);
      const auto key = band_key(m, r);
      if (!null_upper.count(key)) null_upper[key] = method_null_band(m, r, target, models, cfg).upper();
      s.null_upper = null_upper[key];
      report.scores.push_back(std::move(s));
    }
  }
  return report;
}

/// Plain-text table: one block per region, methods ranked by score.
inline std::string format_ranking(const MethodReport& report) {
  std::vector<std::string> regions;
  for (const auto& s : report.scores)
    if (std::find(regions.begin(), regions.end(), s.roi) == regions.end()) regions.push_back(s.roi);
  char line[160];
  std::string out = "scored_frames " + std::to_string(report.scored_frames) + "\n";
  std::snprintf(line, sizeof line, "white_pair_null trials %zu max %.4f mean %.4f\n", report.white_pair.scores.size(),
                report.white_pair.upper(), report.white_pair.mean());
  out += line;
  for (const auto& region : regions) {
    std::vector<const RoiScore*> rows;
    for (const auto& s : report.scores)
      if (s.roi == region) rows.push_back(&s);
    std::stable_sort(rows.begin(), rows.end(), [](const RoiScore* a, const RoiScore* b) { return a->score > b->score; });
    out += "\nregion " + region + "\n";
    std::snprintf(line, sizeof line, "  %-4s %-10s %8s %10s %s\n", "rank", "method", "score", "null_max", "above_null");
    out += line;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::snprintf(line, sizeof line, "  %-4zu %-10s %8.4f %10.4f %s\n", i + 1, to_string(rows[i]->method).c_str(),
                    rows[i]->score, rows[i]->null_upper, rows[i]->score > rows[i]->null_upper ? "yes" : "no");
      out += line;
    }
  }
  return out;
}

inline std::string encode_scores_csv(const MethodReport& report) {
  std::string out = "method,region,score,null_max\n";
  for (const auto& s : report.scores)
    out += to_string(s.method) + "," + s.roi + "," + detail::format_g9(s.score) + "," +
           detail::format_g9(s.null_upper) + "\n";
  return out;
}

/// report.txt, scores.csv, one trace CSV per (method, region) and
/// map_<method>.{pgm,csv}.
inline void write_report(const MethodReport& report, const std::string& dir) {
  detail::write_file(dir + "/report.txt", format_ranking(report));
  detail::write_file(dir + "/scores.csv", encode_scores_csv(report));
  for (const auto& s : report.scores) write_trace(s.trace, dir + "/trace_" + to_string(s.method) + "_" + s.roi + ".csv");
  for (const auto& m : report.maps) export_map_pgm(m, dir + "/map_" + m.method);
}

}  // namespace micromotion
