#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "coegan/tensor.hpp"

namespace coegan {

struct AdamConfig {
  double learning_rate = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment accumulators are created lazily on the first step so that one state
// can follow a parameter list whose shapes are only known at build time.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

struct AdamReport {
  std::size_t rejected_groups = 0;  // groups skipped because their gradient was not finite
};

// One bias-corrected Adam update over parallel parameter / gradient lists.
AdamReport adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
                     const AdamConfig& cfg);

}  // namespace coegan
