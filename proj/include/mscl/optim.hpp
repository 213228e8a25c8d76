#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mscl/tensor.hpp"

namespace mscl {

struct AdamWOptions {
  double lr = 3e-4;
  double weight_decay = 0.02;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-parameter first/second moment estimates plus the shared step count.
struct AdamWState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// Decoupled weight decay (p <- p - lr*wd*p) followed by the bias-corrected
// Adam update. Every parameter must carry a gradient.
void adamw_step(std::vector<Tensor> &params, const AdamWOptions &options, AdamWState &state);

void zero_grad(std::vector<Tensor> &params);

}  // namespace mscl
