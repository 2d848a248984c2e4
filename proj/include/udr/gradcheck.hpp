#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "udr/params.hpp"

namespace udr {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_ad = 0.0;
  double worst_fd = 0.0;
  std::size_t coords_checked = 0;
};

/// Compares reverse-mode gradients of a scalar function against central finite
/// differences, coordinate by coordinate.
///
/// `fn(Tape&, const ParamVars&) -> Var` must be deterministic and return a scalar.
/// The relative error per coordinate is |g_ad - g_fd| / max(|g_ad|, |g_fd|, scale, 1e-8), where
/// scale is the largest analytic gradient magnitude in that tensor, so coordinates whose true
/// gradient happens to be near zero are not judged on finite-difference round-off alone.
/// `stride` > 1 checks every stride-th coordinate of each tensor (always including
/// the first), for very large parameter sets.
template <typename Fn>
GradCheckResult finite_diff_check(Fn&& fn, ParamSet params, double eps = 1e-5, std::size_t stride = 1) {
  ParamSet analytic;
  {
    Tape tape;
    auto vars = register_params(tape, params);
    Var loss = fn(tape, vars);
    tape.backward(loss);
    analytic = collect_grads(tape, vars);
  }

  auto eval = [&](const ParamSet& p) {
    Tape tape;
    auto vars = register_params(tape, p, false);
    return fn(tape, vars).value()[0];
  };

  GradCheckResult res;
  for (auto& [name, tensor] : params) {
    double scale = 0.0;
    for (double g : analytic.at(name).vec()) scale = std::max(scale, std::abs(g));
    for (std::size_t i = 0; i < tensor.size(); i += std::max<std::size_t>(stride, 1)) {
      const double orig = tensor[i];
      tensor[i] = orig + eps;
      const double fp = eval(params);
      tensor[i] = orig - eps;
      const double fm = eval(params);
      tensor[i] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double ad = analytic.at(name)[i];
      const double rel = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), scale, 1e-8});
      ++res.coords_checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = name;
        res.worst_index = i;
        res.worst_ad = ad;
        res.worst_fd = fd;
      }
    }
  }
  return res;
}

}  // namespace udr
