#pragma once

// Central finite-difference oracle for tests. Independent of the backward
// closures: it only calls forward code with no active tape.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mscl/ops.hpp"
#include "mscl/tensor.hpp"

namespace mscl::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64 &rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto &x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

// Max relative error between analytic and central-difference gradients of
// f() with respect to every element of every tensor in `params`.
inline double max_gradient_error(const std::function<Tensor()> &f, std::vector<Tensor> params,
                                 double step = 1e-5) {
  for (auto &p : params) {
    p.set_requires_grad(true);
    p.clear_grad();
  }
  {
    Tape tape;
    Tensor loss;
    {
      TapeScope scope(tape);
      loss = f();
    }
    tape.backward(loss);
  }
  double worst = 0.0;
  for (auto &p : params) {
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto data = p.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + step;
      const double up = f().item();
      data[i] = orig - step;
      const double down = f().item();
      data[i] = orig;
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * step)));
    }
  }
  return worst;
}

// Reduces any tensor to a scalar with fixed random weights so that the full
// Jacobian is exercised.
inline Tensor weighted_sum(const Tensor &x, const Tensor &weights) {
  return sum(mul(x, weights));
}

}  // namespace mscl::testing
