#pragma once

#include <map>
#include <string>

#include "udr/autodiff.hpp"
#include "udr/tensor.hpp"

namespace udr {

/// Named trainable tensors, iterated in name order.
using ParamSet = std::map<std::string, Tensor>;

/// Tape handles for a ParamSet registered as gradient leaves.
using ParamVars = std::map<std::string, Var>;

inline ParamVars register_params(Tape& tape, const ParamSet& params, bool requires_grad = true) {
  ParamVars vars;
  for (const auto& [name, t] : params) vars.emplace(name, tape.leaf(t, requires_grad));
  return vars;
}

inline ParamSet collect_grads(const Tape& tape, const ParamVars& vars) {
  ParamSet g;
  for (const auto& [name, v] : vars) g.emplace(name, tape.grad(v));
  return g;
}

inline std::size_t count_scalars(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

}  // namespace udr
