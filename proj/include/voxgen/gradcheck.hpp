#pragma once

#include <functional>

#include "voxgen/tensor.hpp"

namespace voxgen {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double fd_at_worst = 0.0;
};

/// Compares the analytic gradient of a scalar-valued function against central
/// finite differences. Error metric per coordinate:
///   |analytic - fd| / max(1, |fd|)
/// The function is evaluated twice on the unperturbed input first; any
/// mismatch means hidden state and the check refuses to proceed.
template <class S>
inline GradCheckResult grad_check(
    const std::function<Tensor<S>(const Tensor<S>&)>& f, const Tensor<S>& x,
    S eps) {
  {
    Tape::Pause pause;
    const S y1 = f(x).item();
    const S y2 = f(x).item();
    if (y1 != y2)
      throw NonDeterministicFunction(
          "two evaluations at the same point disagree");
  }

  Tensor<S> xg = Tensor<S>::from(x.shape(), x.data(), true);
  std::vector<S> analytic;
  {
    Tape tape;
    Tape::Scope scope(tape);
    Tensor<S> y = f(xg);
    backward(y);
    analytic = xg.grad();
  }

  GradCheckResult res;
  Tape::Pause pause;
  Tensor<S> xp = x.detach();
  for (std::size_t i = 0; i < xp.size(); ++i) {
    const S orig = xp[i];
    xp.at(i) = orig + eps;
    const S fp = f(xp).item();
    xp.at(i) = orig - eps;
    const S fm = f(xp).item();
    xp.at(i) = orig;
    const double fd = (static_cast<double>(fp) - static_cast<double>(fm)) /
                      (2.0 * static_cast<double>(eps));
    const double an = static_cast<double>(analytic[i]);
    const double err = std::abs(an - fd) / std::max(1.0, std::abs(fd));
    if (err > res.max_rel_err) {
      res.max_rel_err = err;
      res.worst_index = i;
      res.analytic_at_worst = an;
      res.fd_at_worst = fd;
    }
  }
  return res;
}

}  // namespace voxgen
