#pragma once

// Real-input DFT of arbitrary length, backed by FFTW (double precision).
// Plans are built once per length with FFTW_ESTIMATE, so transforms are
// deterministic, and executed through the new-array interface, which is
// safe to call concurrently.

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "micromotion/error.hpp"

namespace micromotion::fft {

namespace detail {

struct Plans {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
  ~Plans() {
    if (forward) fftw_destroy_plan(forward);
    if (inverse) fftw_destroy_plan(inverse);
  }
};

inline std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

inline const Plans& plans_for(std::size_t n) {
  static std::map<std::size_t, std::unique_ptr<Plans>> cache;
  std::lock_guard lock(planner_mutex());
  auto it = cache.find(n);
  if (it != cache.end()) return *it->second;
  auto p = std::make_unique<Plans>();
  const int len = static_cast<int>(n);
  double* real = fftw_alloc_real(n);
  fftw_complex* spec = fftw_alloc_complex(n / 2 + 1);
  p->forward = fftw_plan_dft_r2c_1d(len, real, spec, FFTW_ESTIMATE | FFTW_UNALIGNED);
  p->inverse = fftw_plan_dft_c2r_1d(len, spec, real,
                                    FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_DESTROY_INPUT);
  fftw_free(real);
  fftw_free(spec);
  if (!p->forward || !p->inverse) throw Error("FFTW could not plan length " + std::to_string(n));
  return *cache.emplace(n, std::move(p)).first->second;
}

}  // namespace detail

using Spectrum = std::vector<std::complex<double>>;

/// Bins 0..n/2 of the unnormalized forward DFT.
inline Spectrum forward(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) throw InvalidArgument("fft of empty input");
  const auto& p = detail::plans_for(n);
  std::vector<double> in(x.begin(), x.end());
  Spectrum out(n / 2 + 1);
  fftw_execute_dft_r2c(p.forward, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

/// Inverse of forward(), normalized so inverse(forward(x), n) == x.
inline std::vector<double> inverse(Spectrum spec, std::size_t n) {
  if (spec.size() != n / 2 + 1) throw InvalidArgument("spectrum length does not match n");
  const auto& p = detail::plans_for(n);
  std::vector<double> out(n);
  fftw_execute_dft_c2r(p.inverse, reinterpret_cast<fftw_complex*>(spec.data()), out.data());
  const double scale = 1.0 / static_cast<double>(n);
  for (double& v : out) v *= scale;
  return out;
}

/// Smallest length >= n whose only prime factors are 2, 3 and 5.
inline std::size_t good_size(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
    std::size_t r = m;
    for (const std::size_t f : {2u, 3u, 5u}) {
      while (r % f == 0) r /= f;
    }
    if (r == 1) return m;
  }
}

}  // namespace micromotion::fft
