#pragma once

#include <cmath>
#include <string>

#include "udr/errors.hpp"
#include "udr/params.hpp"

namespace udr {

struct AdamConfig {
  double lr = 0.002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamSet m;
  ParamSet v;
  long step = 0;

  /// Zero moments shaped like `params`.
  static AdamState zeros_like(const ParamSet& params) {
    AdamState s;
    for (const auto& [name, t] : params) {
      s.m.emplace(name, Tensor(t.shape(), 0.0));
      s.v.emplace(name, Tensor(t.shape(), 0.0));
    }
    return s;
  }
};

/// One bias-corrected Adam update, in place. Parameters without a gradient entry
/// are treated as having zero gradient.
inline void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, const AdamConfig& cfg = {}) {
  if (state.m.empty() && state.v.empty() && !params.empty()) state = AdamState::zeros_like(params);
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw DimensionError("adam_step: gradient for unknown parameter '" + name + "'");
    require_same_shape(it->second, g, "adam_step");
  }
  for (const auto& [name, p] : params) {
    if (!state.m.count(name) || !state.v.count(name))
      throw DimensionError("adam_step: no optimizer state for parameter '" + name + "'");
    require_same_shape(p, state.m.at(name), "adam_step");
    require_same_shape(p, state.v.at(name), "adam_step");
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    auto git = grads.find(name);
    auto& m = state.m.at(name);
    auto& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = git == grads.end() ? 0.0 : git->second[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      p[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
    }
  }
}

}  // namespace udr
