#include "coegan/adam.hpp"

#include <cmath>

namespace coegan {

AdamReport adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
                     const AdamConfig& cfg) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam: " + std::to_string(params.size()) + " parameter groups but " +
                     std::to_string(grads.size()) + " gradient groups");
  }
  if (!(cfg.learning_rate > 0.0)) throw PreconditionError("adam: learning rate must be positive");

  if (state.m.empty() && state.step == 0) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape);
      state.v.emplace_back(p->shape);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: state was built for a different parameter list");
  for (std::size_t g = 0; g < params.size(); ++g) {
    if (params[g]->shape != grads[g].shape || state.m[g].shape != params[g]->shape) {
      throw ShapeError("adam: group " + std::to_string(g) + " parameter " + shape_string(params[g]->shape) +
                       " vs gradient " + shape_string(grads[g].shape));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);

  AdamReport report;
  for (std::size_t g = 0; g < params.size(); ++g) {
    if (!grads[g].all_finite()) {
      ++report.rejected_groups;
      continue;
    }
    auto& p = params[g]->data;
    auto& m = state.m[g].data;
    auto& v = state.v[g].data;
    const auto& gr = grads[g].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = gr[i];
      const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / c1;
      const double vhat = vi / c2;
      p[i] = static_cast<float>(p[i] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
  }
  return report;
}

}  // namespace coegan
