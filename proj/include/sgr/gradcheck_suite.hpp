#pragma once

#include <string>
#include <vector>

#include "sgr/gradcheck.hpp"

namespace sgr {

enum class GradCheckScale { tiny, small, full };

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
};

/// Finite-difference verification of every differentiable primitive, the
/// usual composites, and (beyond tiny) a complete miniature model forward.
/// All arithmetic runs in 64-bit precision with seeded inputs.
std::vector<GradCheckEntry> run_gradcheck_suite(GradCheckScale scale);

double worst_error(const std::vector<GradCheckEntry>& entries);

}  // namespace sgr
