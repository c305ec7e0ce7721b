#pragma once

// Shared test helpers: random tensors, tolerance comparison, and the central
// finite-difference oracle used to check every analytic gradient.

#include <cmath>
#include <functional>
#include <vector>

#include "sa2vp/ops.hpp"
#include "sa2vp/tensor.hpp"

namespace sa2vp::testing {

inline double rel_err(double a, double b, double floor = 1e-6) {
  double denom = std::max({std::fabs(a), std::fabs(b), floor});
  return std::fabs(a - b) / denom;
}

template <typename T>
Tensor<T> random_tensor(Rng& rng, Shape shape, T lo = T(-1), T hi = T(1),
                        bool requires_grad = false) {
  auto t = Tensor<T>::zeros(std::move(shape), requires_grad);
  for (T& v : t.values()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::fabs(static_cast<double>(a.values()[i]) - b.values()[i]));
  return m;
}

// Central finite differences of a scalar-valued function with respect to one
// parameter tensor. The loss closure must re-run the full forward pass.
template <typename T>
std::vector<double> fd_gradient(Tensor<T> param, const std::function<double()>& loss,
                                double step = 1e-5) {
  std::vector<double> g(static_cast<size_t>(param.numel()));
  for (int64_t i = 0; i < param.numel(); ++i) {
    T saved = param.values()[i];
    param.values()[i] = saved + static_cast<T>(step);
    double up = loss();
    param.values()[i] = saved - static_cast<T>(step);
    double down = loss();
    param.values()[i] = saved;
    g[static_cast<size_t>(i)] = (up - down) / (2 * step);
  }
  return g;
}

// Largest elementwise relative error between an analytic gradient buffer and
// its finite-difference estimate.
template <typename T>
double max_grad_rel_err(const Tensor<T>& param, const std::vector<double>& fd,
                        double floor = 1e-6) {
  double worst = 0;
  for (int64_t i = 0; i < param.numel(); ++i) {
    double analytic = param.has_grad() ? static_cast<double>(param.grad()[i]) : 0.0;
    worst = std::max(worst, rel_err(analytic, fd[static_cast<size_t>(i)], floor));
  }
  return worst;
}

}  // namespace sa2vp::testing
