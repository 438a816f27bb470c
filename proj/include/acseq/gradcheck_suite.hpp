#pragma once

// Finite-difference checks over one fixture per differentiable op plus
// three-step actor and critic unrolls.

#include <cstdint>
#include <string>
#include <vector>

#include "acseq/gradcheck.hpp"

namespace acseq::verify {

struct SuiteCase {
  std::string name;  // op name, or "actor-unroll" / "critic-unroll"
  core::GradCheckReport report;
};

struct SuiteReport {
  std::vector<SuiteCase> cases;
  double max_rel_error = 0.0;
  bool ok = true;

  /// One line per parameter group with its max error, then a verdict.
  std::string to_text() const;
};

SuiteReport run_gradcheck_suite(std::uint64_t seed = 0);

}  // namespace acseq::verify
