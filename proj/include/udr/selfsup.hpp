#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "udr/adam.hpp"
#include "udr/denoiser.hpp"
#include "udr/diffusion.hpp"
#include "udr/io.hpp"
#include "udr/mask.hpp"
#include "udr/physics.hpp"

namespace udr {

/// One measured slice: undersampled k-space under M plus what the network is told about it.
struct Acquisition {
  CoilStack y;
  SamplingMask mask;
  CoilMaps coils;
  ConditioningLabel label;
};

/// Self-supervised training instance for one (M_r, M_p) split of an acquisition.
struct TrainSample {
  ComplexImage x_u;   // zero-filled from y under M
  CoilStack y_p;      // y restricted to M_p
  SamplingMask mask;  // M
  SamplingMask loss_mask;  // M_r
  SamplingMask cond_mask;  // M_p
  CoilMaps coils;
  ConditioningLabel label;
  ComplexImage x_up;  // zero-filled from y_p
};

inline TrainSample make_train_sample(const Acquisition& a, const MaskSplit& split) {
  TrainSample s;
  s.x_u = zero_filled(a.y, a.coils, a.mask);
  for (const auto& k : a.y) s.y_p.push_back(apply_mask(k, split.conditioning));
  s.mask = a.mask;
  s.loss_mask = split.loss;
  s.cond_mask = split.conditioning;
  s.coils = a.coils;
  s.label = a.label;
  s.x_up = zero_filled(s.y_p, a.coils, split.conditioning);
  return s;
}

struct TrainConfig {
  DenoiserConfig model;
  long steps = 200;
  AdamConfig adam;
  double rho = 0.05;
  int T = 1000;
  std::uint64_t seed = 0;
  long ckpt_every = 0;                // 0 disables intermediate checkpoints
  std::filesystem::path out_dir;      // empty disables all file output
};

/// Masked k-space L1: sum_c |M_r (F(C_c x0_hat) - F(C_c x_u))|_1 over re and im,
/// divided by |M_r| * n_coils.
inline Var ss_loss(Var x0_hat, const ComplexImage& x_u, const CoilMaps& c, const SamplingMask& loss_mask) {
  Tape& tape = *x0_hat.tape;
  const auto& xv = x0_hat.value();
  if (xv.rank() != 3 || xv.dim(0) != 2 || xv.dim(1) != x_u.height() || xv.dim(2) != x_u.width())
    throw DimensionError("ss_loss: prediction does not match the reference image");
  require_mask_extent(x_u, loss_mask, "ss_loss");
  const std::size_t px = x_u.size();
  Tensor keep({2, x_u.height(), x_u.width()});
  for (std::size_t i = 0; i < px; ++i) keep[i] = keep[px + i] = loss_mask[i] ? 1.0 : 0.0;
  Var keep_v = tape.constant(std::move(keep));
  const CoilStack target = coil_kspace(x_u, c);
  Var total{};
  for (std::size_t k = 0; k < c.n_coils(); ++k) {
    Var pred = ad::mul(ad::fft2c(ad::complex_mul(x0_hat, c.maps[k])), keep_v);
    Var ref = tape.constant(ad::to_tensor(apply_mask(target[k], loss_mask)));
    Var l = ad::sum(ad::abs(ad::sub(pred, ref)));
    total = k == 0 ? l : ad::add(total, l);
  }
  const double norm = static_cast<double>(std::max<std::size_t>(loss_mask.count(), 1) * c.n_coils());
  return ad::scale(total, 1.0 / norm);
}

inline double ss_loss_value(const ComplexImage& x0_hat, const ComplexImage& x_u, const CoilMaps& c,
                            const SamplingMask& loss_mask) {
  Tape tape;
  return ss_loss(tape.constant(ad::to_tensor(x0_hat)), x_u, c, loss_mask).value()[0];
}

/// Randomness consumed by one training step, derived from (seed, step) alone so
/// that resumed runs replay identically.
struct StepDraw {
  int t = 1;
  std::uint64_t split_seed = 0;
  std::mt19937_64 rng;
};

inline StepDraw draw_step(std::uint64_t seed, long step, int T) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(static_cast<std::uint64_t>(step) >> 32),
                    0x5eedu};
  StepDraw d{1, 0, std::mt19937_64(seq)};
  d.t = std::uniform_int_distribution<int>(1, T)(d.rng);
  d.split_seed = d.rng();
  return d;
}

struct StepResult {
  double loss = 0.0;
  ComplexImage prediction;
};

/// Noise x^{u,p} to step t, denoise conditioned on (y_p, M_p), score against x^u
/// on M_r, backpropagate and apply one Adam update.
inline StepResult train_step(const TrainSample& s, int t, const ComplexImage& eps, DenoiserParams& params,
                             AdamState& opt, const NoiseSchedule& sched, const AdamConfig& adam = {}) {
  const ComplexImage x_t = forward_noise(s.x_up, t, eps, sched);
  const DcContext dc{coil_kspace(s.x_up, s.coils), s.cond_mask, s.coils};
  Tape tape;
  const ParamVars vars = register_params(tape, params.tensors);
  Var pred = denoiser_forward(tape, vars, params.config, ad::to_tensor(x_t), dc, t, s.label);
  Var loss = ss_loss(pred, s.x_u, s.coils, s.loss_mask);
  const double value = loss.value()[0];
  if (!std::isfinite(value)) throw NumericalError("non-finite training loss", opt.step);
  tape.backward(loss);
  adam_step(params.tensors, collect_grads(tape, vars), opt, adam);
  return {value, ad::to_complex(pred.value())};
}

struct TrainResult {
  DenoiserParams params;
  AdamState adam;
  long step = 0;
  std::vector<double> trace;  // losses of the steps run by this call
};

inline io::Checkpoint make_checkpoint(const TrainResult& r, const TrainConfig& cfg) {
  io::Checkpoint ck{r.params, r.adam, r.step, {}};
  std::ostringstream lr;
  lr << std::setprecision(17) << cfg.adam.lr;
  ck.meta["seed"] = std::to_string(cfg.seed);
  ck.meta["rho"] = std::to_string(cfg.rho);
  ck.meta["lr"] = lr.str();
  ck.meta["T"] = std::to_string(cfg.T);
  return ck;
}

/// Runs steps [start, cfg.steps). Step k trains on sample k mod |dataset| with a
/// fresh (t, eps, M_r/M_p) draw. Starts from `resume` when given, else from a
/// seeded initialization.
inline TrainResult train_loop(const std::vector<Acquisition>& dataset, const TrainConfig& cfg,
                              const std::optional<io::Checkpoint>& resume = std::nullopt) {
  if (dataset.empty()) throw ConfigError("training dataset is empty");
  if (!(cfg.rho > 0.0 && cfg.rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  if (cfg.steps < 0) throw ConfigError("step count must be non-negative");
  const NoiseSchedule sched = build_schedule(cfg.T);

  TrainResult r;
  if (resume) {
    if (!(resume->params.config == cfg.model)) throw CheckpointError("resume checkpoint was trained with a different model configuration");
    r.params = resume->params;
    r.adam = resume->adam;
    r.step = resume->step;
  } else {
    r.params = init_denoiser(cfg.model, cfg.seed);
    r.adam = AdamState::zeros_like(r.params.tensors);
  }

  std::ofstream trace;
  const bool to_disk = !cfg.out_dir.empty();
  if (to_disk) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = cfg.out_dir / "loss_trace.tsv";
    trace.open(path, resume ? std::ios::app : std::ios::trunc);
    if (!trace) throw std::runtime_error("cannot open loss trace '" + path.string() + "'");
    trace << std::setprecision(17);
  }
  auto write_ckpt = [&](const std::filesystem::path& p) {
    try {
      io::save_checkpoint(p, make_checkpoint(r, cfg));
    } catch (const std::exception& e) {
      throw std::runtime_error("writing checkpoint '" + p.string() + "': " + e.what());
    }
  };

  while (r.step < cfg.steps) {
    const long step = r.step;
    const auto& acq = dataset[static_cast<std::size_t>(step) % dataset.size()];
    StepDraw d = draw_step(cfg.seed, step, cfg.T);
    const MaskSplit split = split_mask(acq.mask, cfg.rho, d.split_seed);
    assert(split.loss.count() + split.conditioning.count() == acq.mask.count());
    const TrainSample s = make_train_sample(acq, split);
    const ComplexImage eps = complex_noise(acq.mask.h, acq.mask.w, 1.0, d.rng);
    double loss = 0.0;
    try {
      loss = train_step(s, d.t, eps, r.params, r.adam, sched, cfg.adam).loss;
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at step " + std::to_string(step), step);
    }
    r.trace.push_back(loss);
    r.step = step + 1;
    if (to_disk) {
      trace << step << '\t' << loss << '\n';
      if (!trace) throw std::runtime_error("writing loss trace in '" + cfg.out_dir.string() + "'");
      if (cfg.ckpt_every > 0 && r.step % cfg.ckpt_every == 0)
        write_ckpt(cfg.out_dir / ("ckpt_" + std::to_string(r.step) + ".udr"));
    }
  }
  if (to_disk) write_ckpt(cfg.out_dir / "checkpoint.udr");
  return r;
}

}  // namespace udr
