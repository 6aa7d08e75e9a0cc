#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "micromotion/types.hpp"

namespace micromotion {

template <class T>
double mean_of(std::span<const T> x) {
  double s = 0.0;
  for (const T v : x) s += static_cast<double>(v);
  return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

/// Population standard deviation (divisor n).
template <class T>
double stddev_of(std::span<const T> x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (const T v : x) s += (static_cast<double>(v) - m) * (static_cast<double>(v) - m);
  return x.empty() ? 0.0 : std::sqrt(s / static_cast<double>(x.size()));
}

/// Standardized copy; all zeros when the input has no variance.
template <class Out, class In>
std::vector<Out> standardize_or_zero(std::span<const In> x) {
  const double m = mean_of(x), sd = stddev_of(x);
  std::vector<Out> out(x.size(), Out(0));
  if (!(sd > 0.0)) return out;
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = static_cast<Out>((static_cast<double>(x[i]) - m) / sd);
  return out;
}

/// Standardized copy; throws on zero variance.
template <class Out, class In>
std::vector<Out> standardize(std::span<const In> x) {
  if (!(stddev_of(x) > 0.0)) throw InvalidArgument("cannot z-score a zero-variance trace");
  return standardize_or_zero<Out>(x);
}

/// Output has mean 0 and population standard deviation 1.
inline Trace zscore(const Trace& trace) {
  return Trace(trace.fps(), standardize<float>(trace.samples()));
}

}  // namespace micromotion
