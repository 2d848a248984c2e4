#pragma once

// Unrolled conditional denoiser.
//
//   x_t [2 x h x w] --lift--> n channels --J blocks--> out conv --> DC --> x0_hat
//
// Each block runs two cross-attention layers
//   modulated conv (w_g) -> leaky ReLU -> cross-attention over w_l -> alpha(att) * instnorm
// then reduces to 2 channels, enforces data consistency in k-space and expands
// back to n channels. A 12-layer mapper turns (t, label) into w_g and w_l.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "udr/autodiff.hpp"
#include "udr/errors.hpp"
#include "udr/mask.hpp"
#include "udr/params.hpp"
#include "udr/physics.hpp"

namespace udr {

constexpr std::size_t kLatentDim = 32;
constexpr std::size_t kMapperLayers = 12;
constexpr std::size_t kMapperWidth = 32;
constexpr std::size_t kTimeEmbedDim = 32;
constexpr double kLeakySlope = 0.2;

struct DenoiserConfig {
  std::size_t blocks = 4;     // J
  std::size_t channels = 32;  // n
  std::size_t tokens = 16;    // L
  std::size_t contrasts = 1;  // length of the contrast one-hot

  std::size_t mapper_input() const { return kTimeEmbedDim + 1 + contrasts; }
  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

/// Acceleration (scaled by 1/8) and contrast one-hot fed to the mapper.
struct ConditioningLabel {
  double accel = 4.0;
  std::vector<double> contrast{1.0};

  static ConditioningLabel make(double accel, std::size_t contrast_index, std::size_t n_contrasts) {
    if (contrast_index >= n_contrasts) throw ConfigError("contrast index out of range");
    ConditioningLabel l;
    l.accel = accel;
    l.contrast.assign(n_contrasts, 0.0);
    l.contrast[contrast_index] = 1.0;
    return l;
  }

  std::vector<double> features() const {
    std::vector<double> f{accel / 8.0};
    f.insert(f.end(), contrast.begin(), contrast.end());
    return f;
  }
};

/// Everything the data-consistency layers need: per-coil reference k-space
/// (only masked positions are read), the mask, and the coil maps.
struct DcContext {
  CoilStack reference;
  SamplingMask mask;
  CoilMaps coils;
};

struct DenoiserParams {
  DenoiserConfig config;
  ParamSet tensors;
};

inline std::string block_prefix(std::size_t j) { return "block" + std::to_string(j) + "."; }
inline std::string layer_prefix(std::size_t j, std::size_t l) {
  return block_prefix(j) + "layer" + std::to_string(l) + ".";
}

/// Closed-form trainable scalar count.
inline std::size_t expected_param_count(const DenoiserConfig& c) {
  const std::size_t n = c.channels, L = c.tokens, W = kMapperWidth, D = kLatentDim;
  const std::size_t mapper = (c.mapper_input() * W + W) + (kMapperLayers - 1) * (W * W + W) + (W * D + D) +
                             (W * D * L + D * L);
  const std::size_t layer = 11 * n * n + 100 * n;
  const std::size_t block = 2 * layer + D * L + 36 * n;
  return mapper + c.blocks * block + 36 * n;
}

/// Parameter names and shapes for a configuration, in no particular order.
inline std::vector<std::pair<std::string, Shape>> param_layout(const DenoiserConfig& c) {
  const std::size_t n = c.channels, L = c.tokens, W = kMapperWidth, D = kLatentDim;
  std::vector<std::pair<std::string, Shape>> out;
  for (std::size_t i = 0; i < kMapperLayers; ++i) {
    const std::string p = "mapper.fc" + std::to_string(i) + ".";
    out.push_back({p + "w", {i == 0 ? c.mapper_input() : W, W}});
    out.push_back({p + "b", {W}});
  }
  out.push_back({"mapper.wg.w", {W, D}});
  out.push_back({"mapper.wg.b", {D}});
  out.push_back({"mapper.wl.w", {W, D * L}});
  out.push_back({"mapper.wl.b", {D * L}});
  out.push_back({"lift.k", {n, 2, 3, 3}});
  out.push_back({"out.k", {2, n, 3, 3}});
  for (std::size_t j = 0; j < c.blocks; ++j) {
    for (std::size_t l = 0; l < 2; ++l) {
      const std::string p = layer_prefix(j, l);
      out.push_back({p + "affine.w", {D, n}});
      out.push_back({p + "affine.b", {n}});
      out.push_back({p + "conv.k", {n, n, 3, 3}});
      out.push_back({p + "q.w", {n, n}});
      out.push_back({p + "q.b", {n}});
      out.push_back({p + "k.w", {D, n}});
      out.push_back({p + "v.w", {D, n}});
      out.push_back({p + "v.b", {n}});
      out.push_back({p + "alpha.w", {n, n}});
      out.push_back({p + "alpha.b", {n}});
    }
    out.push_back({block_prefix(j) + "latent_pe", {L, D}});
    out.push_back({block_prefix(j) + "reduce.k", {2, n, 3, 3}});
    out.push_back({block_prefix(j) + "expand.k", {n, 2, 3, 3}});
  }
  return out;
}

/// Seeded initialization: He-normal weights for leaky-ReLU fan-in, zero biases,
/// unit biases for the modulation and attention-scale projections.
inline DenoiserParams init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed) {
  if (cfg.blocks < 1 || cfg.channels < 1 || cfg.tokens < 1 || cfg.contrasts < 1)
    throw ConfigError("denoiser needs J, n, L and contrast count >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  DenoiserParams p{cfg, {}};
  const double gain = std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope));
  for (auto& [name, shape] : param_layout(cfg)) {
    Tensor t(shape, 0.0);
    const bool is_bias = name.ends_with(".b");
    if (name.ends_with("affine.b") || name.ends_with("alpha.b")) {
      for (auto& v : t.vec()) v = 1.0;
    } else if (name.ends_with("latent_pe")) {
      for (auto& v : t.vec()) v = 0.1 * nd(rng);
    } else if (!is_bias) {
      const std::size_t fan_in = shape.size() == 4 ? shape[1] * 9 : shape[0];
      const double std = gain / std::sqrt(static_cast<double>(fan_in));
      for (auto& v : t.vec()) v = std * nd(rng);
    }
    p.tensors.emplace(name, std::move(t));
  }
  return p;
}

/// 32-dim sinusoidal embedding of the timestep.
inline std::vector<double> time_embedding(int t) {
  std::vector<double> e(kTimeEmbedDim);
  const std::size_t half = kTimeEmbedDim / 2;
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
    e[i] = std::sin(t * freq);
    e[half + i] = std::cos(t * freq);
  }
  return e;
}

/// Fixed 2D sinusoidal encoding for h*w image tokens: row encoding in the first
/// ceil(n/2) columns, column encoding in the rest.
inline Tensor image_positional_encoding(std::size_t h, std::size_t w, std::size_t n) {
  Tensor pe({h * w, n});
  const std::size_t nr = (n + 1) / 2, nc = n - nr;
  auto enc = [](double pos, std::size_t i, std::size_t d) {
    const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(std::max<std::size_t>(d, 1)));
    return (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
  };
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t tok = r * w + c;
      for (std::size_t i = 0; i < nr; ++i) pe[tok * n + i] = enc(static_cast<double>(r), i, nr);
      for (std::size_t i = 0; i < nc; ++i) pe[tok * n + nr + i] = enc(static_cast<double>(c), i, nc);
    }
  return pe;
}

struct Latents {
  Var global;  // 1 x 32
  Var local;   // L x 32
};

inline const Var& pv(const ParamVars& vars, const std::string& name) {
  auto it = vars.find(name);
  if (it == vars.end()) throw CheckpointError("missing parameter '" + name + "'");
  return it->second;
}

/// Mapper MLP: [time embedding, label] -> 12 x (dense 32 + leaky ReLU) -> (w_g, w_l).
inline Latents mapper_forward(Tape& tape, const ParamVars& vars, const DenoiserConfig& cfg, int t,
                              const ConditioningLabel& label) {
  std::vector<double> in = time_embedding(t);
  const auto f = label.features();
  in.insert(in.end(), f.begin(), f.end());
  if (in.size() != cfg.mapper_input())
    throw DimensionError("mapper input has " + std::to_string(in.size()) + " features, config expects " +
                         std::to_string(cfg.mapper_input()));
  const std::size_t width = in.size();
  Var h = tape.constant(Tensor({1, width}, std::move(in)));
  for (std::size_t i = 0; i < kMapperLayers; ++i) {
    const std::string p = "mapper.fc" + std::to_string(i) + ".";
    h = ad::leaky_relu(ad::linear(h, pv(vars, p + "w"), pv(vars, p + "b")), kLeakySlope);
  }
  Var wg = ad::linear(h, pv(vars, "mapper.wg.w"), pv(vars, "mapper.wg.b"));
  Var wl = ad::reshape(ad::linear(h, pv(vars, "mapper.wl.w"), pv(vars, "mapper.wl.b")), {cfg.tokens, kLatentDim});
  return {wg, wl};
}

/// Style modulation: per-input-channel scales s = affine(w_g) applied to the
/// kernel, optional demodulation, then 3x3 same-size convolution.
inline Var modulated_conv(Var x, Var w_global, Var kernel, Var affine_w, Var affine_b, bool demodulate = true) {
  Var s = ad::linear(w_global, affine_w, affine_b);
  s = ad::reshape(s, {s.value().size()});
  return ad::conv2d(x, ad::modulate_kernel(kernel, s, demodulate));
}

struct AttentionWeights {
  Var q_w, q_b, k_w, v_w, v_b;
  Var latent_pe;
};

/// softmax(Q(x + PE) K(w_l + PE_l)^T / sqrt(n)) V(w_l) over (h*w) x n image tokens.
inline Var cross_attention(Var tokens, Var w_local, const AttentionWeights& a, Var image_pe) {
  const std::size_t n = tokens.value().dim(1);
  Var q = ad::linear(ad::add(tokens, image_pe), a.q_w, a.q_b);
  Var k = ad::matmul(ad::add(w_local, a.latent_pe), a.k_w);
  Var v = ad::linear(w_local, a.v_w, a.v_b);
  Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(n)));
  return ad::matmul(ad::softmax_rows(scores), v);
}

/// alpha(att) * (x - mu) / sigma with per-channel spatial statistics.
/// x is n x h x w; att is (h*w) x d_v.
inline Var attn_instance_norm(Var x, Var att, Var alpha_w, Var alpha_b) {
  const Shape shape = x.value().shape();
  const std::size_t n = shape[0], hw = x.value().size() / n;
  Var scale = ad::transpose(ad::linear(att, alpha_w, alpha_b));  // n x hw
  Var normed = ad::reshape(ad::instance_norm(x), {n, hw});
  return ad::reshape(ad::mul(scale, normed), shape);
}

/// Differentiable data consistency on a real/imag tensor [2 x h x w].
inline Var data_consistency(Var x, const DcContext& dc) {
  Tape& tape = *x.tape;
  const auto& xv = x.value();
  const std::size_t h = xv.dim(1), w = xv.dim(2), px = h * w;
  if (dc.mask.h != h || dc.mask.w != w) throw DimensionError("data consistency: mask extent mismatch");
  if (dc.reference.size() != dc.coils.n_coils()) throw DimensionError("data consistency: reference coil count mismatch");
  Tensor keep({2, h, w});
  for (std::size_t i = 0; i < px; ++i) keep[i] = keep[px + i] = dc.mask[i] ? 0.0 : 1.0;
  Var keep_v = tape.constant(std::move(keep));
  Var acc{};
  bool first = true;
  for (std::size_t c = 0; c < dc.coils.n_coils(); ++c) {
    Tensor ref = ad::to_tensor(apply_mask(dc.reference[c], dc.mask));
    Var k = ad::fft2c(ad::complex_mul(x, dc.coils.maps[c]));
    k = ad::add(ad::mul(k, keep_v), tape.constant(std::move(ref)));
    Var img = ad::complex_mul(ad::ifft2c(k), dc.coils.maps[c], true);
    acc = first ? img : ad::add(acc, img);
    first = false;
  }
  return acc;
}

inline AttentionWeights attention_weights(const ParamVars& vars, std::size_t j, std::size_t l) {
  const std::string p = layer_prefix(j, l);
  return {pv(vars, p + "q.w"), pv(vars, p + "q.b"), pv(vars, p + "k.w"),
          pv(vars, p + "v.w"), pv(vars, p + "v.b"), pv(vars, block_prefix(j) + "latent_pe")};
}

/// One cross-attention transformer layer of block j.
inline Var attention_layer(Var x, const Latents& lat, const ParamVars& vars, std::size_t j, std::size_t l,
                           Var image_pe) {
  const std::string p = layer_prefix(j, l);
  const Shape shape = x.value().shape();
  const std::size_t n = shape[0], hw = x.value().size() / n;
  Var y = modulated_conv(x, lat.global, pv(vars, p + "conv.k"), pv(vars, p + "affine.w"), pv(vars, p + "affine.b"));
  y = ad::leaky_relu(y, kLeakySlope);
  Var tokens = ad::transpose(ad::reshape(y, {n, hw}));
  Var att = cross_attention(tokens, lat.local, attention_weights(vars, j, l), image_pe);
  return attn_instance_norm(y, att, pv(vars, p + "alpha.w"), pv(vars, p + "alpha.b"));
}

/// Two attention layers, reduce to 2 channels, data consistency, expand to n.
inline Var denoising_block(Var x, const Latents& lat, const DcContext& dc, const ParamVars& vars, std::size_t j,
                           Var image_pe) {
  Var y = attention_layer(x, lat, vars, j, 0, image_pe);
  y = attention_layer(y, lat, vars, j, 1, image_pe);
  Var two = ad::conv2d(y, pv(vars, block_prefix(j) + "reduce.k"));
  two = data_consistency(two, dc);
  return ad::conv2d(two, pv(vars, block_prefix(j) + "expand.k"));
}

/// Full network on a tape. `x_t` is a [2 x h x w] real/imag tensor; returns [2 x h x w].
inline Var denoiser_forward(Tape& tape, const ParamVars& vars, const DenoiserConfig& cfg, const Tensor& x_t,
                            const DcContext& dc, int t, const ConditioningLabel& label) {
  if (x_t.rank() != 3 || x_t.dim(0) != 2) throw DimensionError("denoiser input must be 2 x h x w");
  const std::size_t h = x_t.dim(1), w = x_t.dim(2);
  const Latents lat = mapper_forward(tape, vars, cfg, t, label);
  Var image_pe = tape.constant(image_positional_encoding(h, w, cfg.channels));
  Var x = ad::conv2d(tape.constant(x_t), pv(vars, "lift.k"));
  for (std::size_t j = 0; j < cfg.blocks; ++j) x = denoising_block(x, lat, dc, vars, j, image_pe);
  Var out = ad::conv2d(x, pv(vars, "out.k"));
  return data_consistency(out, dc);
}

/// Inference convenience: runs the network without recording gradients.
inline ComplexImage denoise(const DenoiserParams& params, const ComplexImage& x_t, const DcContext& dc, int t,
                            const ConditioningLabel& label) {
  Tape tape;
  const ParamVars vars = register_params(tape, params.tensors, false);
  Var out = denoiser_forward(tape, vars, params.config, ad::to_tensor(x_t), dc, t, label);
  return ad::to_complex(out.value());
}

}  // namespace udr
