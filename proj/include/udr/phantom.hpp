#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "udr/complex_image.hpp"
#include "udr/errors.hpp"

namespace udr {

struct Ellipse {
  double intensity, a, b, x0, y0, phi_deg;
};

/// Modified (high-contrast) Shepp-Logan head: ten additive ellipses on [-1, 1]^2.
inline constexpr std::array<Ellipse, 10> kSheppLogan{{
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
    {-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0},
    {-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0},
    {-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0},
    {0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0},
    {0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0},
    {0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0},
    {0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0},
    {0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0},
}};

/// Ellipse table for a contrast variant: variant 0 is the standard table; other
/// variants shuffle the intensities of the eight inner ellipses.
inline std::array<Ellipse, 10> shepp_logan_ellipses(std::uint32_t variant) {
  auto e = kSheppLogan;
  if (variant == 0) return e;
  std::array<double, 8> inner;
  for (std::size_t i = 0; i < 8; ++i) inner[i] = e[i + 2].intensity;
  const auto original = inner;
  std::mt19937 rng(variant);
  std::shuffle(inner.begin(), inner.end(), rng);
  if (inner == original) std::rotate(inner.begin(), inner.begin() + 1, inner.end());
  for (std::size_t i = 0; i < 8; ++i) e[i + 2].intensity = inner[i];
  return e;
}

/// Real-valued phantom scaled so its maximum is 1; negative sums clamp to 0.
/// Pixel (r, c) samples x = -1 + (2c + 1)/w, y = 1 - (2r + 1)/h.
inline ComplexImage shepp_logan(std::size_t h, std::size_t w, std::uint32_t variant = 0) {
  if (h < 16 || w < 16) throw ConfigError("phantom extents must be >= 16");
  const auto ellipses = shepp_logan_ellipses(variant);
  std::vector<double> v(h * w, 0.0);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double x = -1.0 + (2.0 * static_cast<double>(c) + 1.0) / static_cast<double>(w);
      const double y = 1.0 - (2.0 * static_cast<double>(r) + 1.0) / static_cast<double>(h);
      double acc = 0.0;
      for (const auto& e : ellipses) {
        const double phi = e.phi_deg * std::numbers::pi / 180.0;
        const double dx = x - e.x0, dy = y - e.y0;
        const double xr = dx * std::cos(phi) + dy * std::sin(phi);
        const double yr = -dx * std::sin(phi) + dy * std::cos(phi);
        if ((xr * xr) / (e.a * e.a) + (yr * yr) / (e.b * e.b) <= 1.0) acc += e.intensity;
      }
      v[r * w + c] = std::max(acc, 0.0);
    }
  const double peak = *std::max_element(v.begin(), v.end());
  ComplexImage img(h, w);
  for (std::size_t i = 0; i < v.size(); ++i) img[i] = peak > 0.0 ? v[i] / peak : 0.0;
  return img;
}

/// Smooth synthetic receive sensitivities: Gaussian bumps centered on a ring
/// just outside the field of view, each with a gentle linear phase, then
/// normalized to unit root-sum-of-squares. One coil yields C = 1.
inline CoilMaps synth_coils(std::size_t h, std::size_t w, std::size_t n_coils, std::uint64_t seed) {
  if (n_coils < 1) throw ConfigError("need at least one coil");
  if (n_coils == 1) return CoilMaps::unit(h, w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  constexpr double width = 0.9, ring = 1.1;
  CoilMaps out;
  for (std::size_t k = 0; k < n_coils; ++k) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_coils);
    const double cx = ring * std::cos(theta), cy = ring * std::sin(theta);
    const double p0 = phase(rng);
    ComplexImage m(h, w);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const double x = -1.0 + (2.0 * static_cast<double>(c) + 1.0) / static_cast<double>(w);
        const double y = 1.0 - (2.0 * static_cast<double>(r) + 1.0) / static_cast<double>(h);
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double mag = std::exp(-d2 / (2.0 * width * width));
        m(r, c) = std::polar(mag, p0 + 0.5 * (x * std::cos(theta) + y * std::sin(theta)));
      }
    out.maps.push_back(std::move(m));
  }
  for (std::size_t i = 0; i < h * w; ++i) {
    double s = 0.0;
    for (const auto& m : out.maps) s += std::norm(m[i]);
    const double inv = 1.0 / std::sqrt(s);
    for (auto& m : out.maps) m[i] *= inv;
  }
  return out;
}

}  // namespace udr
