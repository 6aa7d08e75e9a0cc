#pragma once

// MMV1 video container and the CSV trace / spike formats.
//
// MMV1 layout (all little-endian):
//   bytes 0..3   "MMV1"
//   u32 T, u32 H, u32 W
//   f32 fps
//   T*H*W f32 samples, frame-major then row-major
//
// Trace CSV: a header "# fps=<fps> columns=frame_index,value" followed by one
// "index,value" row per sample, values printed with 9 significant digits so a
// float survives the round trip exactly.

#include <array>
#include <bit>
#include <cerrno>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "micromotion/types.hpp"

namespace micromotion {

inline constexpr std::array<char, 4> kVideoMagic = {'M', 'M', 'V', '1'};
inline constexpr std::size_t kVideoHeaderBytes = 20;

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f32(std::string& buf, float v) { put_u32(buf, std::bit_cast<std::uint32_t>(v)); }

inline void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

inline std::uint64_t get_u64(const unsigned char* p) {
  return static_cast<std::uint64_t>(get_u32(p)) |
         (static_cast<std::uint64_t>(get_u32(p + 4)) << 32);
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoError(path, "write failed");
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError(path, "read failed");
  return std::move(ss).str();
}

inline std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace detail

inline std::string encode_video(const VideoTensor& video) {
  detail::require(!video.empty(), "cannot encode an empty video");
  std::string buf;
  buf.reserve(kVideoHeaderBytes + 4 * video.samples().size());
  buf.append(kVideoMagic.data(), kVideoMagic.size());
  detail::put_u32(buf, static_cast<std::uint32_t>(video.frames()));
  detail::put_u32(buf, static_cast<std::uint32_t>(video.height()));
  detail::put_u32(buf, static_cast<std::uint32_t>(video.width()));
  detail::put_f32(buf, static_cast<float>(video.fps()));
  for (const float s : video.samples()) detail::put_f32(buf, s);
  return buf;
}

inline VideoTensor decode_video(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kVideoMagic.data(), 4) != 0)
    throw BadMagicError("not an MMV1 file (bad magic)");
  if (bytes.size() < kVideoHeaderBytes) throw TruncatedError("MMV1 header truncated");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t t = detail::get_u32(p + 4);
  const std::size_t h = detail::get_u32(p + 8);
  const std::size_t w = detail::get_u32(p + 12);
  const float fps = detail::get_f32(p + 16);
  if (t == 0 || h == 0 || w == 0) throw FormatError("MMV1 dimensions must be positive");
  if (!std::isfinite(fps) || fps <= 0.0f) throw FormatError("MMV1 fps must be positive");
  const std::size_t n = t * h * w;
  if (bytes.size() < kVideoHeaderBytes + 4 * n)
    throw TruncatedError("MMV1 payload truncated: expected " + std::to_string(4 * n) +
                         " bytes, found " + std::to_string(bytes.size() - kVideoHeaderBytes));
  if (bytes.size() > kVideoHeaderBytes + 4 * n) throw FormatError("MMV1 trailing bytes");
  std::vector<float> samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    samples[i] = detail::get_f32(p + kVideoHeaderBytes + 4 * i);
    if (!std::isfinite(samples[i]))
      throw NonFiniteError("MMV1 sample " + std::to_string(i) + " is not finite");
  }
  return VideoTensor(t, h, w, fps, std::move(samples));
}

inline void write_video(const VideoTensor& video, const std::string& path) {
  detail::write_file(path, encode_video(video));
}

inline VideoTensor read_video(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  try {
    return decode_video(bytes);
  } catch (const BadMagicError& e) {
    throw BadMagicError(path + ": " + e.what());
  } catch (const TruncatedError& e) {
    throw TruncatedError(path + ": " + e.what());
  } catch (const NonFiniteError& e) {
    throw NonFiniteError(path + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline std::string encode_trace(const Trace& trace) {
  std::string out = "# fps=" + detail::format_g9(trace.fps()) + " columns=frame_index,value\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    out += std::to_string(i);
    out += ',';
    out += detail::format_g9(trace[i]);
    out += '\n';
  }
  return out;
}

namespace detail {

/// Splits text into lines, dropping a trailing '\r'.
inline std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    pos = nl + 1;
  }
  return lines;
}

inline double parse_real(const std::string& s, std::size_t line) {
  if (s.empty()) throw ParseError(line, "empty number");
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw ParseError(line, "malformed number '" + s + "'");
  if (errno == ERANGE && std::abs(v) > 1.0) throw OverflowError(line, "value overflows: " + s);
  if (!std::isfinite(v)) throw ParseError(line, "value is not finite: " + s);
  return v;
}

inline float parse_float(const std::string& s, std::size_t line) {
  const double v = parse_real(s, line);
  if (std::abs(v) > static_cast<double>(std::numeric_limits<float>::max()))
    throw OverflowError(line, "value overflows single precision: " + s);
  return static_cast<float>(v);
}

inline std::size_t parse_index(const std::string& s, std::size_t line) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw ParseError(line, "malformed index '" + s + "'");
  return static_cast<std::size_t>(std::stoull(s));
}

/// Extracts "key=value" from a header line like "# a=1 b=2".
inline std::string header_field(const std::string& header, const std::string& key) {
  std::istringstream ss(header);
  std::string tok;
  while (ss >> tok) {
    if (tok.rfind(key + "=", 0) == 0) return tok.substr(key.size() + 1);
  }
  return {};
}

}  // namespace detail

inline Trace decode_trace(std::string_view text) {
  const auto lines = detail::split_lines(text);
  if (lines.empty() || lines[0].rfind("#", 0) != 0) throw ParseError(1, "missing '# fps=' header");
  const std::string fps_text = detail::header_field(lines[0], "fps");
  if (fps_text.empty()) throw ParseError(1, "header does not carry fps");
  const double fps = detail::parse_real(fps_text, 1);
  if (fps <= 0.0) throw ParseError(1, "fps must be positive");
  std::vector<float> values;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string& l = lines[i];
    if (l.empty()) continue;
    const std::size_t comma = l.find(',');
    if (comma == std::string::npos || l.find(',', comma + 1) != std::string::npos)
      throw ParseError(i + 1, "expected 'frame_index,value'");
    const std::size_t idx = detail::parse_index(l.substr(0, comma), i + 1);
    if (idx != values.size())
      throw ParseError(i + 1, "frame index " + std::to_string(idx) + " out of sequence");
    values.push_back(detail::parse_float(l.substr(comma + 1), i + 1));
  }
  if (values.empty()) throw FormatError("trace has no samples");
  return Trace(fps, std::move(values));
}

inline void write_trace(const Trace& trace, const std::string& path) {
  detail::write_file(path, encode_trace(trace));
}

inline Trace read_trace(const std::string& path) {
  const std::string text = detail::read_file(path);
  try {
    return decode_trace(text);
  } catch (const OverflowError& e) {
    throw OverflowError(e.line(), path + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path + ": " + e.what());
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

/// "# total_frames=<T>" header then one frame index per line.
inline void write_spikes(const SpikeTrain& spikes, const std::string& path) {
  std::string out = "# total_frames=" + std::to_string(spikes.total_frames()) + " columns=frame_index\n";
  for (const std::size_t i : spikes.indices()) out += std::to_string(i) + "\n";
  detail::write_file(path, out);
}

inline SpikeTrain read_spikes(const std::string& path) {
  const auto lines = detail::split_lines(detail::read_file(path));
  if (lines.empty()) throw ParseError(1, path + ": empty spike file");
  const std::string total = detail::header_field(lines[0], "total_frames");
  if (total.empty()) throw ParseError(1, path + ": header does not carry total_frames");
  const std::size_t t = detail::parse_index(total, 1);
  std::vector<std::size_t> idx;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    idx.push_back(detail::parse_index(lines[i], i + 1));
  }
  return SpikeTrain(std::move(idx), t);
}

/// Copies the rectangle from every frame.
inline VideoTensor slice_roi(const VideoTensor& video, const RoiRect& roi) {
  if (!roi.fits(video.height(), video.width()))
    throw InvalidArgument("roi (" + std::to_string(roi.x0) + "," + std::to_string(roi.y0) + "," +
                          std::to_string(roi.w) + "x" + std::to_string(roi.h) +
                          ") exceeds the frame");
  std::vector<float> out;
  out.reserve(video.frames() * roi.area());
  const auto s = video.samples();
  for (std::size_t t = 0; t < video.frames(); ++t) {
    for (std::size_t y = roi.y0; y < roi.y0 + roi.h; ++y) {
      const std::size_t base = (t * video.height() + y) * video.width() + roi.x0;
      out.insert(out.end(), s.begin() + static_cast<std::ptrdiff_t>(base),
                 s.begin() + static_cast<std::ptrdiff_t>(base + roi.w));
    }
  }
  return VideoTensor(video.frames(), roi.h, roi.w, video.fps(), std::move(out));
}

/// Frames [range.begin, range.end) as a new tensor.
inline VideoTensor slice_frames(const VideoTensor& video, FrameRange range) {
  if (range.begin >= range.end || range.end > video.frames())
    throw InvalidArgument("frame range [" + std::to_string(range.begin) + "," +
                          std::to_string(range.end) + ") outside [0," +
                          std::to_string(video.frames()) + ")");
  const std::size_t n = video.pixels();
  const auto s = video.samples();
  return VideoTensor(range.size(), video.height(), video.width(), video.fps(),
                     std::vector<float>(s.begin() + static_cast<std::ptrdiff_t>(range.begin * n),
                                        s.begin() + static_cast<std::ptrdiff_t>(range.end * n)));
}

/// Appends b's frames after a's.
inline VideoTensor concat_frames(const VideoTensor& a, const VideoTensor& b) {
  if (a.height() != b.height() || a.width() != b.width() || a.fps() != b.fps())
    throw InvalidArgument("cannot concatenate videos of different geometry");
  std::vector<float> s(a.samples().begin(), a.samples().end());
  s.insert(s.end(), b.samples().begin(), b.samples().end());
  return VideoTensor(a.frames() + b.frames(), a.height(), a.width(), a.fps(), std::move(s));
}

struct DatasetSplit {
  VideoTensor train;
  VideoTensor validation;
};

/// Validation prefix length mirroring the reference recording's split
/// (3072 of 10570 frames).
inline std::size_t default_validation_frames(std::size_t total_frames) {
  return static_cast<std::size_t>(
      std::llround(static_cast<double>(total_frames) * 3072.0 / 10570.0));
}

inline FrameRange default_validation_range(std::size_t total_frames) {
  return {0, default_validation_frames(total_frames)};
}

inline FrameRange default_train_range(std::size_t total_frames) {
  return {default_validation_frames(total_frames), total_frames};
}

/// Converts the one-based inclusive frame numbering used in lab notebooks
/// ("frames 1 to 3072") to a zero-based half-open range.
inline FrameRange from_one_based(std::size_t first, std::size_t last) {
  detail::require(first >= 1 && last >= first, "one-based range must satisfy 1 <= first <= last");
  return {first - 1, last};
}

inline DatasetSplit split_dataset(const VideoTensor& video, FrameRange train, FrameRange validation) {
  if (train.begin >= train.end || validation.begin >= validation.end)
    throw InvalidArgument("split ranges must be non-empty");
  if (train.end > video.frames() || validation.end > video.frames())
    throw InvalidArgument("split range exceeds the recording");
  if (train.begin < validation.end && validation.begin < train.end)
    throw InvalidArgument("train and validation ranges overlap");
  return {slice_frames(video, train), slice_frames(video, validation)};
}

}  // namespace micromotion
