#include "mscl/optim.hpp"

#include <cmath>

#include "mscl/error.hpp"

namespace mscl {

void adamw_step(std::vector<Tensor> &params, const AdamWOptions &options, AdamWState &state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].numel(), 0.0);
      state.v[i].assign(params[i].numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw OptimizerError("optimizer state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw OptimizerError("parameter " + std::to_string(i) + " " + shape_str(params[i].shape()) +
                           " has no gradient");
    }
    if (state.m[i].size() != params[i].numel()) {
      throw OptimizerError("optimizer state size mismatch for parameter " + std::to_string(i));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(options.beta1, t);
  const double bc2 = 1.0 - std::pow(options.beta2, t);
  const double decay = 1.0 - options.lr * options.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_data();
    auto g = params[i].grad();
    auto &m = state.m[i];
    auto &v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] *= decay;
      m[j] = options.beta1 * m[j] + (1.0 - options.beta1) * g[j];
      v[j] = options.beta2 * v[j] + (1.0 - options.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= options.lr * mhat / (std::sqrt(vhat) + options.eps);
    }
  }
}

void zero_grad(std::vector<Tensor> &params) {
  for (auto &p : params) p.clear_grad();
}

}  // namespace mscl
