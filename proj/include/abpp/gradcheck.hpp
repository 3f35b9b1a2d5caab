#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "abpp/tensor.hpp"

namespace abpp {

// Central-difference gradient oracle. `f` must rebuild its graph on every
// call and return a scalar; `x` is perturbed coordinate by coordinate with
// recording off, so only forward values enter the reference gradient.
// Returns the worst relative error max_i |g_i - fd_i| / max(|g_i|, |fd_i|, 1)
// (infinite if anything is non-finite).
template <typename F>
double finite_diff_check(F&& f, Tensor x, double h = 1e-5) {
  x.zero_grad();
  Tensor loss = f();
  backward(loss);
  const VecX<double> g = x.grad();

  double worst = 0.0;
  NoGradGuard off;
  for (Index i = 0; i < x.numel(); ++i) {
    const double orig = x.value()[i];
    x.value()[i] = orig + h;
    const double fp = f().item();
    x.value()[i] = orig - h;
    const double fm = f().item();
    x.value()[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    if (!std::isfinite(fd) || !std::isfinite(g[i]))
      return std::numeric_limits<double>::infinity();
    const double rel =
        std::abs(g[i] - fd) / std::max({std::abs(g[i]), std::abs(fd), 1.0});
    worst = std::max(worst, rel);
  }
  return worst;
}

// One named check in the oracle suite.
struct GradCheckCase {
  std::string name;
  double max_rel_err = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

// Full oracle suite over every differentiable operation and the composed
// blocks, at miniature configurations. Implemented in gradsuite.cpp.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, int seeds_per_case);

}  // namespace abpp
