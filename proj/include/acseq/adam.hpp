#pragma once

#include <cstdint>
#include <vector>

#include "acseq/params.hpp"

namespace acseq::core {

/// Adam moments for one ParamStore. Shapes follow the store at first use.
struct AdamState {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  explicit AdamState(double learning_rate = 5e-5) : lr(learning_rate) {}
};

/// Bias-corrected Adam update of every parameter in the store. Throws
/// TrainingDiverged naming the parameter when a gradient is not finite.
void adam_step(ParamStore& store, AdamState& state);

}  // namespace acseq::core
