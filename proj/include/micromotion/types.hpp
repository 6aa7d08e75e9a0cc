#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "micromotion/error.hpp"

namespace micromotion {

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}

template <class T>
bool all_finite(std::span<const T> v) {
  for (const T x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace detail

/// Axis-aligned pixel rectangle; (x0, y0) is the top-left corner.
struct RoiRect {
  std::size_t x0 = 0;
  std::size_t y0 = 0;
  std::size_t w = 0;
  std::size_t h = 0;

  std::size_t area() const noexcept { return w * h; }

  bool fits(std::size_t height, std::size_t width) const noexcept {
    return w > 0 && h > 0 && x0 + w <= width && y0 + h <= height;
  }

  bool contains(std::size_t y, std::size_t x) const noexcept {
    return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h;
  }

  bool overlaps(const RoiRect& o) const noexcept {
    return x0 < o.x0 + o.w && o.x0 < x0 + w && y0 < o.y0 + o.h && o.y0 < y0 + h;
  }

  friend bool operator==(const RoiRect&, const RoiRect&) = default;
};

/// T x H x W single-precision samples, frame-major then row-major, at a fixed
/// frame rate. Immutable once built; every sample is finite.
class VideoTensor {
 public:
  VideoTensor() = default;

  VideoTensor(std::size_t frames, std::size_t height, std::size_t width,
              double fps, std::vector<float> samples)
      : frames_(frames), height_(height), width_(width), fps_(fps),
        samples_(std::move(samples)) {
    detail::require(frames_ > 0 && height_ > 0 && width_ > 0,
                    "video dimensions must be positive");
    detail::require(std::isfinite(fps_) && fps_ > 0.0, "fps must be positive");
    detail::require(samples_.size() == frames_ * height_ * width_,
                    "sample count must equal T*H*W");
    detail::require(detail::all_finite<float>(samples_),
                    "video samples must be finite");
  }

  /// Zero-filled tensor.
  static VideoTensor zeros(std::size_t frames, std::size_t height,
                           std::size_t width, double fps) {
    return VideoTensor(frames, height, width, fps,
                       std::vector<float>(frames * height * width, 0.0f));
  }

  std::size_t frames() const noexcept { return frames_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t pixels() const noexcept { return height_ * width_; }
  double fps() const noexcept { return fps_; }
  bool empty() const noexcept { return samples_.empty(); }

  std::span<const float> samples() const noexcept { return samples_; }

  float at(std::size_t t, std::size_t y, std::size_t x) const {
    return samples_[(t * height_ + y) * width_ + x];
  }

  std::span<const float> frame(std::size_t t) const {
    return std::span<const float>(samples_).subspan(t * pixels(), pixels());
  }

  /// Strided copy of one pixel's time series.
  std::vector<float> pixel_trace(std::size_t y, std::size_t x) const {
    return pixel_trace(y * width_ + x);
  }

  std::vector<float> pixel_trace(std::size_t pixel) const {
    std::vector<float> out(frames_);
    for (std::size_t t = 0; t < frames_; ++t) out[t] = samples_[t * pixels() + pixel];
    return out;
  }

  friend bool operator==(const VideoTensor&, const VideoTensor&) = default;

 private:
  std::size_t frames_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  double fps_ = 0.0;
  std::vector<float> samples_;
};

/// Builds a video from per-pixel traces stored pixel-major (N x T).
inline VideoTensor video_from_pixel_traces(std::size_t frames, std::size_t height,
                                           std::size_t width, double fps,
                                           std::span<const float> pixel_major) {
  const std::size_t n = height * width;
  detail::require(pixel_major.size() == n * frames, "pixel-major size mismatch");
  std::vector<float> s(n * frames);
  for (std::size_t p = 0; p < n; ++p) {
    for (std::size_t t = 0; t < frames; ++t) s[t * n + p] = pixel_major[p * frames + t];
  }
  return VideoTensor(frames, height, width, fps, std::move(s));
}

/// Length-T univariate time series.
class Trace {
 public:
  Trace() = default;

  Trace(double fps, std::vector<float> samples) : fps_(fps), samples_(std::move(samples)) {
    detail::require(!samples_.empty(), "trace length must be at least 1");
    detail::require(std::isfinite(fps_) && fps_ > 0.0, "fps must be positive");
    detail::require(detail::all_finite<float>(samples_), "trace samples must be finite");
  }

  std::size_t size() const noexcept { return samples_.size(); }
  double fps() const noexcept { return fps_; }
  std::span<const float> samples() const noexcept { return samples_; }
  float operator[](std::size_t i) const { return samples_[i]; }

  Trace slice(std::size_t begin, std::size_t end) const {
    detail::require(begin < end && end <= samples_.size(), "trace slice out of range");
    return Trace(fps_, std::vector<float>(samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                                          samples_.begin() + static_cast<std::ptrdiff_t>(end)));
  }

  friend bool operator==(const Trace&, const Trace&) = default;

 private:
  double fps_ = 0.0;
  std::vector<float> samples_;
};

/// Ascending frame indices of events within a recording of total_frames.
class SpikeTrain {
 public:
  SpikeTrain() = default;

  SpikeTrain(std::vector<std::size_t> indices, std::size_t total_frames)
      : indices_(std::move(indices)), total_frames_(total_frames) {
    for (std::size_t i = 0; i < indices_.size(); ++i) {
      detail::require(indices_[i] < total_frames_, "spike index out of range");
      detail::require(i == 0 || indices_[i - 1] < indices_[i],
                      "spike indices must be strictly increasing");
    }
  }

  std::span<const std::size_t> indices() const noexcept { return indices_; }
  std::size_t size() const noexcept { return indices_.size(); }
  bool empty() const noexcept { return indices_.empty(); }
  std::size_t total_frames() const noexcept { return total_frames_; }
  std::size_t operator[](std::size_t i) const { return indices_[i]; }

  friend bool operator==(const SpikeTrain&, const SpikeTrain&) = default;

 private:
  std::vector<std::size_t> indices_;
  std::size_t total_frames_ = 0;
};

/// Half-open frame range [begin, end).
struct FrameRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end > begin ? end - begin : 0; }
  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

}  // namespace micromotion
