#pragma once

#include <cstdint>
#include <random>

#include "udr/denoiser.hpp"
#include "udr/diffusion.hpp"
#include "udr/physics.hpp"

namespace udr {

/// Which noise level the low-noise conditioning k-space carries at a reverse step.
enum class ConditioningNoise {
  current_step,  // a_bar of the step being evaluated
  next_step,     // a_bar of the step being produced; the last step conditions on clean data
};

struct SamplerConfig {
  int steps = 5;
  std::uint64_t seed = 0;
  bool inject_noise = true;
  ConditioningNoise conditioning = ConditioningNoise::next_step;
};

struct Reconstruction {
  ComplexImage image;
  CoilStack final_reference;  // k-space the last data-consistency layer enforced
};

/// Few-step conditional sampling starting from the zero-filled image:
///   x <- R(x, y_eps, M, C, ts) + sigma_ts z,   y_eps = F(C (sqrt(a_bar) x_u + sqrt(1 - a_bar) eps_low))
/// with no noise added after the final step.
inline Reconstruction reconstruct(const CoilStack& y, const SamplingMask& mask, const CoilMaps& coils,
                                  const DenoiserParams& params, const NoiseSchedule& sched,
                                  const ConditioningLabel& label, const SamplerConfig& cfg = {}) {
  if (label.contrast.size() != params.config.contrasts)
    throw CheckpointError("label has " + std::to_string(label.contrast.size()) + " contrasts, model expects " +
                          std::to_string(params.config.contrasts));
  const ComplexImage x_u = zero_filled(y, coils, mask);
  const std::vector<int> ts = select_timesteps(sched.steps(), cfg.steps);
  std::mt19937_64 rng(cfg.seed);
  ComplexImage x = x_u;
  Reconstruction out;
  for (std::size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    const int t_cond =
        cfg.conditioning == ConditioningNoise::current_step ? t : (k + 1 < ts.size() ? ts[k + 1] : 0);
    const ComplexImage eps_low = complex_noise(x.height(), x.width(), kLowNoiseVariance, rng);
    DcContext dc{lownoise_kspace(x_u, t_cond, eps_low, coils, sched), mask, coils};
    x = denoise(params, x, dc, t, label);
    if (k + 1 < ts.size() && cfg.inject_noise) {
      const ComplexImage z = complex_noise(x.height(), x.width(), 1.0, rng);
      const double s = sched.sigma(t);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += s * z[i];
    }
    if (k + 1 == ts.size()) out.final_reference = std::move(dc.reference);
  }
  out.image = std::move(x);
  return out;
}

}  // namespace udr
