#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "acseq/params.hpp"

namespace acseq::core {

/// Evaluates a deterministic scalar loss. When `with_grad` is set the
/// closure must also accumulate the analytic gradient into the store
/// (the checker zeroes gradients first).
using LossFn = std::function<double(ParamStore& store, bool with_grad)>;

struct GradCheckEntry {
  std::string param;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool ok = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;  // name order
  double max_rel_error = 0.0;
  bool ok = true;
};

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckTol = 1e-6;
inline constexpr std::size_t kGradCheckMaxCoords = 5000;
/// Relative error is |a - n| / max(|a|, |n|, floor).
inline constexpr double kGradCheckFloor = 1e-3;

/// Central differences (L(w+h) - L(w-h)) / 2h against the analytic gradient
/// for every coordinate, or a seeded sample of 5,000 when the store is larger.
GradCheckReport check_gradients(const LossFn& loss, ParamStore& store, double h = kGradCheckStep,
                                double tol = kGradCheckTol, std::uint64_t seed = 0);

}  // namespace acseq::core
