#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "udr/errors.hpp"

namespace udr {

enum class MaskKind : std::uint8_t { full, main, loss, conditioning };  // full | M | M_r | M_p

/// Binary k-space sampling pattern, row-major.
struct SamplingMask {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> bits;
  double accel = 1.0;
  std::uint64_t seed = 0;
  MaskKind kind = MaskKind::main;

  SamplingMask() = default;
  SamplingMask(std::size_t h_, std::size_t w_, std::uint8_t fill = 1, MaskKind k = MaskKind::full)
      : h(h_), w(w_), bits(h_ * w_, fill), kind(k) {}

  std::size_t size() const noexcept { return bits.size(); }
  bool operator[](std::size_t i) const { return bits[i] != 0; }
  bool at(std::size_t r, std::size_t c) const { return bits[r * w + c] != 0; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }
  double fraction() const { return static_cast<double>(count()) / static_cast<double>(size()); }

  friend bool operator==(const SamplingMask& a, const SamplingMask& b) { return a.h == b.h && a.w == b.w && a.bits == b.bits; }
};

constexpr std::size_t kCalibrationSide = 4;

/// Rows/cols [h/2 - 2, h/2 + 2) around the centered DC position.
inline bool in_calibration(std::size_t r, std::size_t c, std::size_t h, std::size_t w) {
  const auto r0 = h / 2 - kCalibrationSide / 2, c0 = w / 2 - kCalibrationSide / 2;
  return r >= r0 && r < r0 + kCalibrationSide && c >= c0 && c < c0 + kCalibrationSide;
}

/// Variable-density Cartesian mask drawn from a centered 2D Gaussian density.
///
/// Every position gets a uniform draw u and is accepted when u < p(r), with
/// p(r) = exp(-r^2 / 2 s^2) over normalized frequency radius r. The width s is
/// bisected so the accepted count approaches the target; positions are then
/// rank-ordered by log(u) - log p(r) so exactly round(h*w/R) are kept. The
/// central 4x4 calibration block is always sampled.
inline SamplingMask gen_gaussian_mask(std::size_t h, std::size_t w, double accel, std::uint64_t seed) {
  if (!(accel >= 1.0)) throw ConfigError("acceleration must be >= 1, got " + std::to_string(accel));
  if (h < kCalibrationSide || w < kCalibrationSide) throw ConfigError("mask extent smaller than calibration block");
  const std::size_t n = h * w;
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(n) / accel));
  if (target < kCalibrationSide * kCalibrationSide)
    throw ConfigError("acceleration " + std::to_string(accel) + " keeps " + std::to_string(target) +
                      " samples; the 4x4 calibration block needs 16");

  SamplingMask mask(h, w, 0, MaskKind::main);
  mask.accel = accel;
  mask.seed = seed;
  if (target >= n) {
    std::fill(mask.bits.begin(), mask.bits.end(), 1);
    return mask;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::size_t> free;
  std::vector<double> log_u, r2;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const double u = unif(rng);  // drawn for every position so the stream is layout-stable
      if (in_calibration(r, c, h, w)) {
        mask.bits[r * w + c] = 1;
        continue;
      }
      const double dy = (static_cast<double>(r) - static_cast<double>(h / 2)) / static_cast<double>(h);
      const double dx = (static_cast<double>(c) - static_cast<double>(w / 2)) / static_cast<double>(w);
      free.push_back(r * w + c);
      log_u.push_back(std::log(std::max(u, 1e-300)));
      r2.push_back(dy * dy + dx * dx);
    }

  const std::size_t want = target - kCalibrationSide * kCalibrationSide;
  auto accepted = [&](double s) {
    std::size_t k = 0;
    for (std::size_t i = 0; i < free.size(); ++i) k += log_u[i] < -r2[i] / (2.0 * s * s);
    return k;
  };
  double lo = 1e-4, hi = 10.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = std::sqrt(lo * hi);
    (accepted(mid) < want ? lo : hi) = mid;
  }
  const double s = std::sqrt(lo * hi);

  std::vector<std::size_t> order(free.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto score = [&](std::size_t i) { return log_u[i] + r2[i] / (2.0 * s * s); };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score(a) < score(b); });
  for (std::size_t k = 0; k < want; ++k) mask.bits[free[order[k]]] = 1;
  return mask;
}

struct MaskSplit {
  SamplingMask loss;          // M_r
  SamplingMask conditioning;  // M_p
};

/// Partitions the acquired positions of `m`: round(rho * |M|) of them, chosen
/// uniformly without replacement, go to the loss mask; the rest condition the network.
inline MaskSplit split_mask(const SamplingMask& m, double rho, std::uint64_t seed) {
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("loss-mask fraction must lie in (0, 1)");
  std::vector<std::size_t> on;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i]) on.push_back(i);
  if (on.size() < 20)
    throw ContractError("split_mask needs at least 20 acquired points, mask has " + std::to_string(on.size()));
  const auto k = static_cast<std::size_t>(std::llround(rho * static_cast<double>(on.size())));
  if (k == 0) throw ContractError("split_mask: rho * |M| rounds to zero loss points");

  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, on.size() - 1);
    std::swap(on[i], on[pick(rng)]);
  }
  MaskSplit out{m, m};
  out.loss.kind = MaskKind::loss;
  out.conditioning.kind = MaskKind::conditioning;
  std::fill(out.loss.bits.begin(), out.loss.bits.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    out.loss.bits[on[i]] = 1;
    out.conditioning.bits[on[i]] = 0;
  }
  return out;
}

}  // namespace udr
