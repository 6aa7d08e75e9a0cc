#pragma once

// Subcommand front end. Every run that writes artifacts also writes a plain
// key=value manifest next to them: the resolved configuration, an FNV-1a
// hash of every input file, and the tool version. No timestamps, so two
// identical runs leave identical bytes.
//
// Frame ranges on the command line are one-based and inclusive ("1:3072"),
// matching how recordings are usually described; they become zero-based
// half-open ranges internally.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "micromotion/micromotion.hpp"
#include "micromotion/testing/oracles.hpp"

namespace micromotion::cli {

inline constexpr const char* kToolVersion = "1.0.0";

inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

struct Manifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, std::string>> inputs;  // role, path
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, std::string>> results;

  std::string encode() const {
    std::string out = "tool=micromotion\nversion=" + std::string(kToolVersion) + "\ncommand=" + command + "\n";
    for (const auto& [k, v] : config) out += "config." + k + "=" + v + "\n";
    for (const auto& [role, path] : inputs) {
      out += "input." + role + ".path=" + path + "\n";
      out += "input." + role + ".fnv1a64=" + fnv1a_hex(detail::read_file(path)) + "\n";
    }
    for (const auto& o : outputs) out += "output=" + o + "\n";
    for (const auto& [k, v] : results) out += "result." + k + "=" + v + "\n";
    return out;
  }
};

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// key=value lines ('#' comments) appended as "--key value" unless the
/// command line already sets that key: explicit flags win.
inline std::vector<std::string> merge_config_file(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  const auto lines = micromotion::detail::split_lines(micromotion::detail::read_file(path));
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string line = trim(lines[n]);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(n + 1, path + ": expected key=value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty() || key == "config") throw ParseError(n + 1, path + ": invalid key");
    const std::string flag = "--" + key;
    const bool given = std::any_of(args.begin(), args.end(),
                                   [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
    if (!given) {
      args.push_back(flag);
      args.push_back(value);
    }
  }
  return args;
}

inline FrameRange parse_range(const std::string& text, std::size_t frames) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw InvalidArgument("range must look like first:last, got '" + text + "'");
  const auto first = micromotion::detail::parse_index(text.substr(0, colon), 0);
  const auto last = micromotion::detail::parse_index(text.substr(colon + 1), 0);
  const auto r = from_one_based(first, last);
  if (r.end > frames)
    throw InvalidArgument("range " + text + " exceeds the recording's " + std::to_string(frames) + " frames");
  return r;
}

inline RoiRect parse_roi(const std::string& text) {
  std::vector<std::size_t> v;
  std::size_t pos = 0;
  for (;;) {
    const auto c = text.find(',', pos);
    v.push_back(micromotion::detail::parse_index(text.substr(pos, c - pos), 0));
    if (c == std::string::npos) break;
    pos = c + 1;
  }
  if (v.size() != 4 || v[2] == 0 || v[3] == 0) throw InvalidArgument("ROI must be x0,y0,w,h with w,h > 0");
  return {v[0], v[1], v[2], v[3]};
}

inline void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

inline std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

inline std::string format_loss(const std::vector<double>& loss) {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < loss.size(); ++e) out += std::to_string(e + 1) + "," + micromotion::detail::format_g9(loss[e]) + "\n";
  return out;
}

}  // namespace detail

/// Collects the per-run bookkeeping shared by every subcommand.
struct Run {
  Manifest manifest;
  std::ostream& out;

  std::string input(const std::string& role, const std::string& path) {
    manifest.inputs.emplace_back(role, path);
    return path;
  }
  void write(const std::string& path, std::string_view bytes) {
    detail::ensure_parent(path);
    micromotion::detail::write_file(path, bytes);
    manifest.outputs.push_back(path);
  }
  void output(const std::string& path) { manifest.outputs.push_back(path); }
  void result(const std::string& key, const std::string& value) { manifest.results.emplace_back(key, value); }
  void finish(const std::string& manifest_path) {
    detail::ensure_parent(manifest_path);
    micromotion::detail::write_file(manifest_path, manifest.encode());
  }
};

struct Options {
  std::size_t threads = 1;
  std::string config;

  // synth
  std::uint64_t seed = 1;
  std::size_t frames = 5000, height = 64, width = 64;
  double fps = 50.0, full_well = 1e5, mean_interval = 3.0, refractory = 1.0;
  std::vector<std::string> regions;

  // filter
  double f_lo = 2.0, f_hi = 15.0;
  int order = 4;

  // shared paths and ranges
  std::string in, out, video, fluorescence, spikes, tmpl, model, model1d, regions_file, pred, target, roi, range;
  std::vector<std::string> model3d, methods;

  // template
  std::size_t length = 51, refractory_frames = 25;
  double threshold = 2.5;

  // training
  double lr = 0.0;
  std::size_t epochs = 0, batch = 64, segment = 256;
  double dropout = 0.2;

  // scoring
  std::size_t margin = 0, null_trials = 100;
  std::uint64_t null_seed = 1;
  std::string method_label, inside;
  bool no_maps = false;
};

namespace detail {

inline VideoTensor load_video(Run& run, const std::string& role, const std::string& path) {
  return read_video(run.input(role, path));
}

inline Trace load_trace(Run& run, const std::string& role, const std::string& path) {
  return read_trace(run.input(role, path));
}

inline FrameRange range_or(const Options& o, std::size_t frames, FrameRange fallback) {
  return o.range.empty() ? fallback : parse_range(o.range, frames);
}

inline void require_length(const VideoTensor& v, const Trace& t) {
  if (v.frames() != t.size())
    throw InvalidArgument("video has " + std::to_string(v.frames()) + " frames but the trace has " +
                          std::to_string(t.size()));
}

inline std::string fmt(double v) { return micromotion::detail::format_g9(v); }

}  // namespace detail

inline int run_synth(const Options& o, Run& run) {
  SynthConfig c;
  c.seed = o.seed;
  c.frames = o.frames;
  c.height = o.height;
  c.width = o.width;
  c.fps = o.fps;
  c.full_well = o.full_well;
  c.mean_spike_interval_s = o.mean_interval;
  c.refractory_s = o.refractory;
  c.regions.clear();
  for (const auto& r : o.regions) c.regions.push_back(parse_region(r));
  if (o.regions.empty()) c.regions = default_regions(o.height, o.width);
  const auto d = gen_dataset(c);
  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);
  run.write((dir / "transmission.mmv").string(), encode_video(d.transmission));
  run.write((dir / "fluorescence.csv").string(), encode_trace(d.fluorescence_global));
  write_spikes(d.spikes, (dir / "spikes.csv").string());
  run.output((dir / "spikes.csv").string());
  write_regions(d.regions, (dir / "regions.csv").string());
  run.output((dir / "regions.csv").string());
  run.result("spikes", std::to_string(d.spikes.size()));
  run.finish((dir / "manifest.txt").string());
  run.out << "wrote " << d.transmission.frames() << "x" << d.transmission.height() << "x" << d.transmission.width()
          << " video with " << d.spikes.size() << " events to " << o.out << "\n";
  return 0;
}

inline int run_filter(const Options& o, Run& run) {
  const auto v = detail::load_video(run, "video", o.in);
  const auto f = bandpass_video(v, {o.f_lo, o.f_hi, o.order, v.fps()});
  run.write(o.out, encode_video(f));
  run.finish(o.out + ".manifest.txt");
  return 0;
}

inline int run_template(const Options& o, Run& run) {
  const auto v = detail::load_video(run, "video", o.video);
  const auto fl = detail::load_trace(run, "fluorescence", o.fluorescence);
  detail::require_length(v, fl);
  const auto r = detail::range_or(o, v.frames(), default_train_range(v.frames()));
  SpikeTrain spikes;
  if (!o.spikes.empty()) {
    const auto all = read_spikes(run.input("spikes", o.spikes));
    std::vector<std::size_t> inside;
    for (const std::size_t s : all.indices())
      if (s >= r.begin && s < r.end) inside.push_back(s - r.begin);
    spikes = SpikeTrain(std::move(inside), r.size());
  } else {
    spikes = detect_spikes(fl.slice(r.begin, r.end), {o.threshold, o.refractory_frames});
  }
  const auto t = extract_template(slice_frames(v, r), spikes, o.length);
  write_template(t, o.out, fnv1a_hex(micromotion::detail::read_file(o.video)));
  run.output(o.out);
  run.output(o.out + ".meta");
  run.result("spikes_averaged", std::to_string(t.spike_count));
  run.finish(o.out + ".manifest.txt");
  run.out << "template of " << t.window() << " frames from " << t.spike_count << " events\n";
  return 0;
}

inline int run_match(const Options& o, Run& run) {
  const auto v = detail::load_video(run, "video", o.video);
  const auto t = read_template(run.input("template", o.tmpl));
  run.write(o.out, encode_video(matched_filter(v, t)));
  run.finish(o.out + ".manifest.txt");
  return 0;
}

inline int run_train1d(const Options& o, Run& run) {
  const auto v = detail::load_video(run, "video", o.video);
  const auto fl = detail::load_trace(run, "fluorescence", o.fluorescence);
  detail::require_length(v, fl);
  const auto r = detail::range_or(o, v.frames(), default_train_range(v.frames()));
  const TrainConfig1D cfg{o.lr, o.epochs, o.batch, o.seed};
  const auto res = train_1d(slice_frames(v, r), fl.slice(r.begin, r.end), cfg);
  detail::ensure_parent(o.out);
  write_network(res.net, o.out);
  run.output(o.out);
  run.write(o.out + ".loss.csv", detail::format_loss(res.epoch_loss));
  run.result("final_loss", detail::fmt(res.epoch_loss.back()));
  run.finish(o.out + ".manifest.txt");
  run.out << "trained on frames " << r.begin + 1 << ".." << r.end << ", final epoch loss "
          << detail::fmt(res.epoch_loss.back()) << "\n";
  return 0;
}

inline int run_predict1d(const Options& o, Run& run) {
  const auto net = read_network1d(run.input("model", o.model));
  const auto v = detail::load_video(run, "video", o.video);
  const auto r = detail::range_or(o, v.frames(), {0, v.frames()});
  run.write(o.out, encode_video(predict_1d(net, slice_frames(v, r))));
  run.finish(o.out + ".manifest.txt");
  return 0;
}

inline int run_train3d(const Options& o, Run& run) {
  const auto net1d = read_network1d(run.input("model", o.model));
  const auto v = detail::load_video(run, "video", o.video);
  const auto fl = detail::load_trace(run, "fluorescence", o.fluorescence);
  detail::require_length(v, fl);
  const auto roi = detail::parse_roi(o.roi);
  if (!roi.fits(v.height(), v.width())) throw InvalidArgument("ROI " + o.roi + " exceeds the frame");
  const auto r = detail::range_or(o, v.frames(), default_train_range(v.frames()));
  const auto init = init_from_1d(net1d, roi.h, roi.w, o.dropout);
  const TrainConfig3D cfg{o.lr, o.epochs, o.segment, o.seed};
  const auto res = train_3d(slice_roi(slice_frames(v, r), roi), fl.slice(r.begin, r.end), init, cfg);
  detail::ensure_parent(o.out);
  write_network(res.net, o.out);
  run.output(o.out);
  run.write(o.out + ".loss.csv", detail::format_loss(res.epoch_loss));
  run.result("final_loss", detail::fmt(res.epoch_loss.back()));
  run.finish(o.out + ".manifest.txt");
  return 0;
}

inline int run_predict3d(const Options& o, Run& run) {
  const auto net = read_network3d(run.input("model", o.model));
  const auto v = detail::load_video(run, "video", o.video);
  const auto roi = detail::parse_roi(o.roi);
  if (!roi.fits(v.height(), v.width())) throw InvalidArgument("ROI " + o.roi + " exceeds the frame");
  const auto r = detail::range_or(o, v.frames(), {0, v.frames()});
  run.write(o.out, encode_trace(predict_3d(net, slice_roi(slice_frames(v, r), roi))));
  run.finish(o.out + ".manifest.txt");
  return 0;
}

inline int run_densemap(const Options& o, Run& run) {
  const auto net = read_network3d(run.input("model", o.model));
  const auto maps = export_dense_map(net);
  for (std::size_t c = 0; c < maps.channels.size(); ++c) {
    const std::string stem = o.out + "_c" + std::to_string(c);
    detail::ensure_parent(stem);
    export_unit_map(maps.height, maps.width, maps.channels[c], stem);
    run.output(stem + ".pgm");
    run.output(stem + ".csv");
  }
  if (!o.inside.empty()) {
    const auto roi = detail::parse_roi(o.inside);
    if (!roi.fits(net.height, net.width)) throw InvalidArgument("--inside exceeds the network's region");
    std::vector<bool> mask(net.pixels(), false);
    for (std::size_t y = roi.y0; y < roi.y0 + roi.h; ++y)
      for (std::size_t x = roi.x0; x < roi.x0 + roi.w; ++x) mask[y * net.width + x] = true;
    const double share = top_decile_mass_inside(net, mask);
    run.result("top_decile_mass_inside", detail::fmt(share));
    run.out << "top-decile dense-weight mass inside " << o.inside << ": " << detail::fmt(share) << "\n";
  }
  run.finish(o.out + ".manifest.txt");
  return 0;
}

inline int run_score(const Options& o, Run& run) {
  const auto p = detail::load_trace(run, "prediction", o.pred);
  const auto t = detail::load_trace(run, "target", o.target);
  if (p.size() != t.size()) throw InvalidArgument("prediction and target differ in length");
  if (p.size() <= 2 * o.margin) throw InvalidArgument("margin leaves no frames to score");
  const double s = correlation_score(p.slice(o.margin, p.size() - o.margin), t.slice(o.margin, t.size() - o.margin));
  run.out << detail::fmt(s) << "\n";
  if (!o.out.empty()) {
    run.write(o.out, "score=" + detail::fmt(s) + "\n");
    run.finish(o.out + ".manifest.txt");
  }
  return 0;
}

inline int run_map(const Options& o, Run& run) {
  const auto v = detail::load_video(run, "prediction", o.pred);
  const auto t = detail::load_trace(run, "target", o.target);
  detail::require_length(v, t);
  if (v.frames() <= 2 * o.margin) throw InvalidArgument("margin leaves no frames to score");
  const FrameRange w{o.margin, v.frames() - o.margin};
  const auto map = correlation_map(slice_frames(v, w), t.slice(w.begin, w.end), o.method_label,
                                   fnv1a_hex(micromotion::detail::read_file(o.pred)));
  detail::ensure_parent(o.out);
  export_map_pgm(map, o.out);
  run.output(o.out + ".pgm");
  run.output(o.out + ".csv");
  run.result("degenerate_pixels", std::to_string(map.degenerate_count()));
  run.finish(o.out + ".manifest.txt");
  return 0;
}

inline int run_report(const Options& o, Run& run) {
  const auto v = detail::load_video(run, "video", o.video);
  const auto fl = detail::load_trace(run, "fluorescence", o.fluorescence);
  detail::require_length(v, fl);
  const auto regions = read_regions(run.input("regions", o.regions_file));
  std::vector<LabeledRoi> rois;
  std::map<std::string, std::size_t> seen;
  for (const auto& r : regions) {
    std::string label = to_string(r.label);
    if (seen[label]++) label += std::to_string(seen[label]);
    rois.push_back({label, r.rect});
  }
  std::vector<Method> methods;
  for (const auto& m : o.methods) methods.push_back(parse_method(m));
  if (methods.empty()) methods = all_methods();

  MethodModels models;
  if (!o.tmpl.empty()) models.tmpl = read_template(run.input("template", o.tmpl));
  if (!o.model1d.empty()) models.net1d = read_network1d(run.input("model1d", o.model1d));
  for (const auto& spec : o.model3d) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw InvalidArgument("--model3d expects label=path, got '" + spec + "'");
    const std::string label = spec.substr(0, eq);
    models.net3d.emplace(label, read_network3d(run.input("model3d." + label, spec.substr(eq + 1))));
  }

  const auto r = detail::range_or(o, v.frames(), default_validation_range(v.frames()));
  ReportConfig cfg;
  cfg.margin = o.margin;
  cfg.null_trials = o.null_trials;
  cfg.null_seed = o.null_seed;
  cfg.band = {o.f_lo, o.f_hi, o.order, v.fps()};
  cfg.maps = !o.no_maps;
  const auto report = compare_methods(slice_frames(v, r), fl.slice(r.begin, r.end), methods, rois, models, cfg);
  std::filesystem::create_directories(o.out);
  write_report(report, o.out);
  for (const auto& entry : std::filesystem::directory_iterator(o.out)) {
    const auto name = entry.path().filename().string();
    if (name != "manifest.txt") run.output(name);
  }
  std::sort(run.manifest.outputs.begin(), run.manifest.outputs.end());
  for (const auto& s : report.scores) run.result(to_string(s.method) + "." + s.roi, detail::fmt(s.score));
  run.finish((std::filesystem::path(o.out) / "manifest.txt").string());
  run.out << format_ranking(report);
  return 0;
}

/// Oracle-backed spot checks of every module; one line per check.
inline int run_selftest(const Options&, Run& run) {
  std::size_t failed = 0;
  const auto report = [&](const std::string& name, bool ok, const std::string& detail) {
    run.out << (ok ? "ok   " : "FAIL ") << name << ": " << detail << "\n";
    failed += !ok;
  };
  RngSequence rng(2024, Stream::test);
  const auto noise = [&](std::size_t n) {
    std::vector<float> v(n);
    for (float& x : v) x = static_cast<float>(rng.normal());
    return v;
  };

  {
    std::vector<float> s(4000);
    for (std::size_t t = 0; t < s.size(); ++t) s[t] = static_cast<float>(std::sin(2.0 * std::numbers::pi * 8.0 * t / 50.0));
    const auto out = bandpass_trace(Trace(50.0, s), {});
    const double got = oracle::sinusoid_amplitude(out.samples(), 8.0, 50.0);
    const double want = oracle::butterworth_band(8.0, 2.0, 15.0, 4);
    report("bandpass gain at 8 Hz", std::abs(got - want) < 1e-4, detail::fmt(got) + " vs " + detail::fmt(want));
  }
  {
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
      const auto a = noise(200), b = noise(200);
      worst = std::max(worst, std::abs(correlation_score(a, b) - oracle::max_lag_correlation(a, b)));
    }
    report("correlation score vs all-lag sum", worst < 1e-6, "max deviation " + detail::fmt(worst));
  }
  {
    auto net = Network1D<double>::glorot(5);
    for (double& p : net.params) p += 0.01 * rng.normal();
    const auto x = noise(64);
    const std::vector<double> xd(x.begin(), x.end());
    const auto y = forward<double>(net, xd);
    const auto ref = oracle::conv_stack(net.layers, net.params, xd, 64);
    double worst = 0.0;
    for (std::size_t t = 0; t < 64; ++t) worst = std::max(worst, std::abs(y[t] - ref[t]));
    report("conv stack vs direct loops", worst < 1e-10, "max deviation " + detail::fmt(worst));

    StackCache<double> cache;
    forward(net, std::span<const double>(xd), cache);
    std::vector<double> r(64, 0.0);
    for (double& v : r) v = rng.normal();
    const auto g = backward(net, cache, std::span<const double>(r));
    const auto probe = [&]<class S>(std::span<const double> p) {
      Network1D<S> n{net.layers, std::vector<S>(p.begin(), p.end())};
      const std::vector<S> xs(xd.begin(), xd.end());
      StackCache<S> c;
      const auto out = forward(n, std::span<const S>(xs), c);
      oracle::Probe pr;
      for (std::size_t t = 0; t < out.size(); ++t) pr.value += static_cast<long double>(r[t]) * out[t];
      oracle::append_relu_signs(n.layers, c, pr.pattern);
      return pr;
    };
    const auto check = oracle::check_gradient(
        g.params, [&](std::span<const double> p) { return probe.template operator()<double>(p); },
        [&](std::span<const double> p) { return probe.template operator()<long double>(p); }, net.params, 1e-4, 1e-4);
    report("1D gradients vs central differences", check.worst < 1e-4, "max relative error " + detail::fmt(check.worst));
  }
  {
    const auto k = noise(15 * 4), x = noise(120 * 4);
    const TemplateTensor t{VideoTensor(15, 2, 2, 50.0, k), 1};
    const VideoTensor v(120, 2, 2, 50.0, x);
    const auto out = matched_filter(v, t);
    double worst = 0.0;
    for (std::size_t p = 0; p < 4; ++p) {
      const auto ref = oracle::sliding_correlation(v.pixel_trace(p), t.samples.pixel_trace(p));
      const auto got = out.pixel_trace(p);
      for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(got[i] - ref[i]));
    }
    report("matched filter vs sliding sum", worst < 1e-4, "max deviation " + detail::fmt(worst));
  }
  {
    const auto net1d = Network1D<float>::glorot(9);
    const VideoTensor v(128, 4, 4, 50.0, noise(128 * 16));
    const auto out = forward3d<float>(init_from_1d(net1d, 4, 4), v, Mode::eval);
    const auto ref = oracle::pixel_mean(predict_1d(net1d, v));
    double worst = 0.0, scale = 0.0;
    for (std::size_t t = 0; t < ref.size(); ++t) {
      worst = std::max(worst, std::abs(out[t] - ref[t]));
      scale = std::max(scale, std::abs(ref[t]));
    }
    report("3D init equals pixel-mean of 1D", worst <= 1e-4 * scale, "max deviation " + detail::fmt(worst));
  }
  {
    SynthConfig c;
    c.seed = 17;
    RngSequence u(17, Stream::spikes);
    std::vector<double> draws(400);
    for (double& d : draws) d = u.uniform();
    const auto want = oracle::renewal_frames(draws, c.fps, c.refractory_s, c.mean_spike_interval_s, c.frames);
    const auto got = gen_spike_train(c);
    report("spike train vs renewal simulation",
           std::equal(got.indices().begin(), got.indices().end(), want.begin(), want.end()),
           std::to_string(got.size()) + " events");
  }
  run.out << (failed ? std::to_string(failed) + " check(s) failed\n" : "all checks passed\n");
  return failed ? 1 : 0;
}

/// Parses argv, runs one subcommand, returns the exit status. Errors go to
/// `err` as "micromotion: error: ..." with a nonzero status.
inline int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args(argv + 1, argv + argc);
  CLI::App app{"Micromotion analysis of transmission microscopy videos", "micromotion"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", kToolVersion);
  Options o;
  using Handler = std::function<int(const Options&, Run&)>;
  std::map<std::string, Handler> handlers;

  const auto sub = [&](const std::string& name, const std::string& help, Handler h) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("--threads", o.threads, "worker threads; 1 is strict single-threaded mode")
        ->check(CLI::PositiveNumber);
    s->add_option("--config", o.config, "key=value file; explicit flags override it");
    handlers[name] = std::move(h);
    return s;
  };
  const auto band = [&](CLI::App* s) {
    s->add_option("--flo", o.f_lo, "lower passband edge, Hz");
    s->add_option("--fhi", o.f_hi, "upper passband edge, Hz");
    s->add_option("--order", o.order, "Butterworth order");
  };
  const char* range_help = "one-based inclusive frame range first:last";

  auto* synth = sub("synth", "generate a seeded synthetic recording", run_synth);
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--seed", o.seed);
  synth->add_option("--frames", o.frames)->check(CLI::PositiveNumber);
  synth->add_option("--height", o.height)->check(CLI::PositiveNumber);
  synth->add_option("--width", o.width)->check(CLI::PositiveNumber);
  synth->add_option("--fps", o.fps)->check(CLI::PositiveNumber);
  synth->add_option("--full-well", o.full_well, "electrons; sets the shot-noise floor");
  synth->add_option("--mean-interval", o.mean_interval, "mean seconds between events");
  synth->add_option("--refractory", o.refractory, "minimum seconds between events");
  synth->add_option("--region", o.regions, "label:x0,y0,w,h[:amplitude], repeatable");

  auto* filter = sub("filter", "zero-phase temporal bandpass of a video", run_filter);
  filter->add_option("input", o.in, "input MMV1 video")->required();
  filter->add_option("output", o.out, "output MMV1 video")->required();
  band(filter);

  auto* tmpl = sub("template", "average the filtered video around detected events", run_template);
  tmpl->add_option("--video", o.video, "bandpassed video")->required();
  tmpl->add_option("--fluorescence", o.fluorescence, "fluorescence trace CSV")->required();
  tmpl->add_option("--spikes", o.spikes, "event frames CSV; detected from the trace when absent");
  tmpl->add_option("--length", o.length, "template length in frames (odd)");
  tmpl->add_option("--threshold", o.threshold, "detection threshold in standard deviations");
  tmpl->add_option("--refractory-frames", o.refractory_frames);
  tmpl->add_option("--range", o.range, range_help);
  tmpl->add_option("--out", o.out, "template MMV1 path")->required();

  auto* match = sub("match", "matched filter of a video with a template", run_match);
  match->add_option("--video", o.video)->required();
  match->add_option("--template", o.tmpl)->required();
  match->add_option("--out", o.out)->required();

  auto* t1 = sub("train1d", "train the time-domain network on every pixel", run_train1d);
  o.lr = 1e-3;
  o.epochs = 3;
  t1->add_option("--video", o.video, "bandpassed video")->required();
  t1->add_option("--fluorescence", o.fluorescence)->required();
  t1->add_option("--range", o.range, range_help);
  t1->add_option("--lr", o.lr);
  t1->add_option("--epochs", o.epochs);
  t1->add_option("--batch", o.batch, "pixels per mini-batch");
  t1->add_option("--seed", o.seed);
  t1->add_option("--out", o.out, "model path")->required();

  auto* p1 = sub("predict1d", "per-pixel predictions of a time-domain network", run_predict1d);
  p1->add_option("--model", o.model)->required();
  p1->add_option("--video", o.video)->required();
  p1->add_option("--range", o.range, range_help);
  p1->add_option("--out", o.out)->required();

  auto* t3 = sub("train3d", "train a region network initialized from a 1D model", run_train3d);
  t3->add_option("--model", o.model, "trained 1D model")->required();
  t3->add_option("--video", o.video)->required();
  t3->add_option("--fluorescence", o.fluorescence)->required();
  t3->add_option("--roi", o.roi, "x0,y0,w,h")->required();
  t3->add_option("--range", o.range, range_help);
  t3->add_option("--lr", o.lr);
  t3->add_option("--epochs", o.epochs);
  t3->add_option("--segment", o.segment, "frames per training segment");
  t3->add_option("--dropout", o.dropout);
  t3->add_option("--seed", o.seed);
  t3->add_option("--out", o.out)->required();

  auto* p3 = sub("predict3d", "trace predicted by a region network", run_predict3d);
  p3->add_option("--model", o.model)->required();
  p3->add_option("--video", o.video)->required();
  p3->add_option("--roi", o.roi, "x0,y0,w,h")->required();
  p3->add_option("--range", o.range, range_help);
  p3->add_option("--out", o.out, "trace CSV")->required();

  auto* dm = sub("densemap", "export dense-layer weight maps of a region network", run_densemap);
  dm->add_option("--model", o.model)->required();
  dm->add_option("--inside", o.inside, "x0,y0,w,h within the region; reports top-decile mass inside");
  dm->add_option("--out", o.out, "output stem")->required();

  auto* sc = sub("score", "correlation score of two traces", run_score);
  sc->add_option("--pred", o.pred)->required();
  sc->add_option("--target", o.target)->required();
  sc->add_option("--margin", o.margin, "frames dropped at each end before scoring");
  sc->add_option("--out", o.out);

  auto* mp = sub("map", "per-pixel correlation map of a prediction video", run_map);
  mp->add_option("--pred", o.pred)->required();
  mp->add_option("--target", o.target)->required();
  mp->add_option("--margin", o.margin);
  mp->add_option("--method", o.method_label, "label stored with the map");
  mp->add_option("--out", o.out, "output stem")->required();

  auto* rp = sub("report", "compare methods on labeled regions", run_report);
  rp->add_option("--video", o.video, "bandpassed video")->required();
  rp->add_option("--fluorescence", o.fluorescence)->required();
  rp->add_option("--regions", o.regions_file, "regions CSV")->required();
  rp->add_option("--methods", o.methods, "subset of bandpass,matched,cnn1d,cnn3d")->delimiter(',');
  rp->add_option("--template", o.tmpl);
  rp->add_option("--model1d", o.model1d);
  rp->add_option("--model3d", o.model3d, "label=path, one per region");
  rp->add_option("--range", o.range, range_help);
  rp->add_option("--margin", o.margin, "frames dropped at each end before scoring");
  rp->add_option("--null-trials", o.null_trials);
  rp->add_option("--null-seed", o.null_seed);
  rp->add_flag("--no-maps", o.no_maps, "skip per-pixel maps");
  band(rp);
  rp->add_option("--out", o.out, "output directory")->required();

  sub("selftest", "run oracle-backed spot checks", run_selftest);

  // Subcommand-specific defaults that differ from the shared fields.
  const std::map<std::string, std::function<void()>> defaults = {
      {"train3d", [&] { o.lr = 8e-7, o.epochs = 60; }},
      {"report", [&] { o.margin = 46; }},
  };
  if (!args.empty() && args[0].rfind("-", 0) != 0 && !handlers.count(args[0])) {
    err << "micromotion: error: unknown subcommand '" << args[0] << "'\n";
    return 2;
  }
  try {
    args = detail::merge_config_file(std::move(args));
    if (!args.empty() && defaults.count(args[0])) {
      defaults.at(args[0])();
      // Re-capture the defaults just changed so the manifest reports them.
      for (auto* opt : app.get_subcommand(args[0])->get_options()) opt->capture_default_str();
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    err << "micromotion: error: " << e.what() << "\n";
    return 1;
  }

  auto* chosen = app.get_subcommands().front();
  Run run{{chosen->get_name(), {}, {}, {}, {}}, out};
  for (const auto* opt : chosen->get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config") continue;
    std::string value = opt->count() ? detail::join(opt->results()) : opt->get_default_str();
    run.manifest.config[name] = value;
  }
  set_thread_count(o.threads);
  try {
    return handlers.at(chosen->get_name())(o, run);
  } catch (const std::exception& e) {
    err << "micromotion " << chosen->get_name() << ": error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace micromotion::cli
