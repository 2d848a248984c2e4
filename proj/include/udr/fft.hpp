#pragma once

// Centered, orthonormal 2D DFT on row-major complex grids.
// Power-of-two lengths use an iterative radix-2 transform; other lengths fall
// back to a direct O(N^2) DFT, which is adequate at the sizes used here.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace udr::fft {

using cplx = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

// Unnormalized forward (sign = -1) or inverse (sign = +1) transform in place.
inline void radix2(std::vector<cplx>& a, int sign) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const cplx wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const cplx u = a[i + k];
        const cplx v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        // recompute periodically to keep twiddle drift below 1e-15
        w = (k % 16 == 15) ? std::polar(1.0, ang * static_cast<double>(k + 1)) : w * wl;
      }
    }
  }
}

inline void direct(std::vector<cplx>& a, int sign) {
  const std::size_t n = a.size();
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc(0.0, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += a[j] * cplx(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  a.swap(out);
}

// Centered orthonormal 1D transform: ifftshift -> DFT -> fftshift, scaled 1/sqrt(n).
inline void centered_1d(std::vector<cplx>& line, int sign) {
  const std::size_t n = line.size();
  const std::size_t c = n / 2;
  std::rotate(line.begin(), line.begin() + static_cast<std::ptrdiff_t>(c), line.end());
  if (is_pow2(n))
    radix2(line, sign);
  else
    direct(line, sign);
  std::rotate(line.begin(), line.begin() + static_cast<std::ptrdiff_t>(n - c), line.end());
  const double s = 1.0 / std::sqrt(static_cast<double>(n));
  for (auto& v : line) v *= s;
}

inline void centered_2d(std::span<cplx> grid, std::size_t h, std::size_t w, int sign) {
  std::vector<cplx> line(w);
  for (std::size_t r = 0; r < h; ++r) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(r * w), w, line.begin());
    centered_1d(line, sign);
    std::copy(line.begin(), line.end(), grid.begin() + static_cast<std::ptrdiff_t>(r * w));
  }
  line.resize(h);
  for (std::size_t c = 0; c < w; ++c) {
    for (std::size_t r = 0; r < h; ++r) line[r] = grid[r * w + c];
    centered_1d(line, sign);
    for (std::size_t r = 0; r < h; ++r) grid[r * w + c] = line[r];
  }
}

}  // namespace detail

/// In-place centered orthonormal forward transform of an h x w grid.
inline void forward(std::span<cplx> grid, std::size_t h, std::size_t w) { detail::centered_2d(grid, h, w, -1); }

/// In-place centered orthonormal inverse transform of an h x w grid.
inline void inverse(std::span<cplx> grid, std::size_t h, std::size_t w) { detail::centered_2d(grid, h, w, +1); }

}  // namespace udr::fft
