#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "udr/complex_image.hpp"
#include "udr/errors.hpp"
#include "udr/physics.hpp"

namespace udr {

/// Per-step tables of a fixed-variance forward process, indexed t = 1..T.
/// alpha_bar(0) is defined as 1.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  explicit NoiseSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
    const std::size_t T = beta_.size();
    alpha_.resize(T);
    alpha_bar_.resize(T);
    sigma_.resize(T);
    double prod = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
      alpha_[i] = 1.0 - beta_[i];
      const double prev = prod;
      prod *= alpha_[i];
      alpha_bar_[i] = prod;
      sigma_[i] = std::sqrt((1.0 - prev) / (1.0 - prod) * beta_[i]);
    }
  }

  int steps() const noexcept { return static_cast<int>(beta_.size()); }
  double beta(int t) const { return beta_.at(index(t)); }
  double alpha(int t) const { return alpha_.at(index(t)); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_.at(index(t)); }
  double sigma(int t) const { return sigma_.at(index(t)); }

 private:
  std::size_t index(int t) const {
    if (t < 1 || t > steps())
      throw ContractError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
    return static_cast<std::size_t>(t - 1);
  }

  std::vector<double> beta_, alpha_, alpha_bar_, sigma_;
};

/// Linear beta schedule including both endpoints.
inline NoiseSchedule build_schedule(int T = 1000, double beta_start = 1e-4, double beta_end = 0.02) {
  if (T < 1) throw ConfigError("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0))
    throw ConfigError("schedule bounds must satisfy 0 < beta_start < beta_end < 1");
  std::vector<double> b(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i)
    b[static_cast<std::size_t>(i)] =
        T == 1 ? beta_start : beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(T - 1);
  return NoiseSchedule(std::move(b));
}

/// Complex noise with independent N(0, variance) real and imaginary parts.
template <typename Rng>
ComplexImage complex_noise(std::size_t h, std::size_t w, double variance, Rng& rng) {
  std::normal_distribution<double> nd(0.0, std::sqrt(variance));
  ComplexImage out(h, w);
  for (auto& v : out.values()) {
    const double re = nd(rng);
    v = cplx(re, nd(rng));
  }
  return out;
}

/// sqrt(a_bar_t) x + sqrt(1 - a_bar_t) eps.
inline ComplexImage forward_noise(const ComplexImage& x, int t, const ComplexImage& eps, const NoiseSchedule& s) {
  require_same_extent(x, eps, "forward_noise");
  const double ab = s.alpha_bar(t);
  if (t == 0) throw ContractError("forward_noise: timestep 0 is not a noising step");
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  ComplexImage out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x[i] + b * eps[i];
  return out;
}

/// Variance of the inference-time conditioning noise.
constexpr double kLowNoiseVariance = 0.1;

/// Per-coil k-space of the lightly noised zero-filled image,
/// F(C (sqrt(a_bar_ts) x_u + sqrt(1 - a_bar_ts) eps_low)). ts = 0 means no noise.
inline CoilStack lownoise_kspace(const ComplexImage& x_u, int ts, const ComplexImage& eps_low, const CoilMaps& c,
                                 const NoiseSchedule& s) {
  require_same_extent(x_u, eps_low, "lownoise_kspace");
  const double ab = s.alpha_bar(ts);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  ComplexImage noised = x_u;
  for (std::size_t i = 0; i < noised.size(); ++i) noised[i] = a * x_u[i] + b * eps_low[i];
  return coil_kspace(noised, c);
}

/// S evenly spaced descending indices starting at T: round(T (S - k) / S), k = 0..S-1.
inline std::vector<int> select_timesteps(int T = 1000, int S = 5) {
  if (S < 1 || T < 1) throw ConfigError("select_timesteps needs S >= 1 and T >= 1");
  if (S > T) throw ConfigError("cannot select " + std::to_string(S) + " reverse steps from " + std::to_string(T));
  std::vector<int> ts;
  ts.reserve(static_cast<std::size_t>(S));
  for (int k = 0; k < S; ++k) {
    const long long num = static_cast<long long>(T) * (S - k);
    ts.push_back(static_cast<int>((2 * num + S) / (2LL * S)));
  }
  return ts;
}

}  // namespace udr
