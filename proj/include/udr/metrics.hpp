#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "udr/complex_image.hpp"
#include "udr/errors.hpp"

namespace udr {

/// Real h x w image, row-major (typically a magnitude image).
struct RealImage {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> v;

  static RealImage magnitude_of(const ComplexImage& x) { return {x.height(), x.width(), magnitude(x)}; }
};

/// 10 log10(peak^2 / MSE) with peak = max(ref); +inf when the images are equal.
inline double psnr(const RealImage& x, const RealImage& ref) {
  if (x.h != ref.h || x.w != ref.w) throw DimensionError("psnr: shape mismatch");
  const double peak = *std::max_element(ref.v.begin(), ref.v.end());
  if (!(peak > 0.0)) throw ContractError("psnr: reference must have a positive maximum");
  double mse = 0.0;
  for (std::size_t i = 0; i < x.v.size(); ++i) mse += (x.v[i] - ref.v[i]) * (x.v[i] - ref.v[i]);
  mse /= static_cast<double>(x.v.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

inline std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size * size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      total += (g[i * size + j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma)));
    }
  for (auto& v : g) v /= total;
  return g;
}

/// Local SSIM map over every position where the window fits entirely
/// (no padding), dynamic range L = max(ref).
inline RealImage ssim_map(const RealImage& x, const RealImage& ref, const SsimOptions& opt = {}) {
  if (x.h != ref.h || x.w != ref.w) throw DimensionError("ssim: shape mismatch");
  const std::size_t k = opt.window;
  if (x.h < k || x.w < k) throw DimensionError("ssim: image smaller than the " + std::to_string(k) + "x" + std::to_string(k) + " window");
  const double range = *std::max_element(ref.v.begin(), ref.v.end());
  if (!(range > 0.0)) throw ContractError("ssim: reference must have a positive maximum");
  const double c1 = (opt.k1 * range) * (opt.k1 * range);
  const double c2 = (opt.k2 * range) * (opt.k2 * range);
  const auto g = gaussian_window(k, opt.sigma);
  RealImage out{x.h - k + 1, x.w - k + 1, {}};
  out.v.resize(out.h * out.w);
  for (std::size_t r = 0; r < out.h; ++r)
    for (std::size_t c = 0; c < out.w; ++c) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double wt = g[i * k + j];
          const double a = x.v[(r + i) * x.w + c + j], b = ref.v[(r + i) * x.w + c + j];
          mx += wt * a;
          my += wt * b;
          sxx += wt * a * a;
          syy += wt * b * b;
          sxy += wt * a * b;
        }
      const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      out.v[r * out.w + c] =
          ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  return out;
}

/// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03.
inline double ssim(const RealImage& x, const RealImage& ref, const SsimOptions& opt = {}) {
  const auto m = ssim_map(x, ref, opt);
  double s = 0.0;
  for (double v : m.v) s += v;
  return s / static_cast<double>(m.v.size());
}

}  // namespace udr
