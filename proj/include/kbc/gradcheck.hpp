#pragma once

// Central finite-difference audit of the closed-form training gradients on a
// small random knowledge base.

#include <cstdint>
#include <string>
#include <vector>

#include "kbc/geometry.hpp"
#include "kbc/train.hpp"

namespace kbc {

struct GradcheckOptions {
  int entities = 8;
  int base_relations = 2;
  int facts = 20;
  int dim = 6;
  int batch = 4;
  int negatives = 3;
  double gamma = 6.0;
  double alpha = 0.5;
  double step = 1e-4;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-6;
};

struct GradcheckResult {
  ModelKind kind = ModelKind::TransE;
  Objective objective = Objective::TranslationalMargin;
  std::uint64_t seed = 0;
  double max_rel_error = 0.0;
  double max_abs_gradient = 0.0;
  long checked = 0;
  long skipped = 0;  // coordinates whose perturbation crosses a kink
};

GradcheckResult gradcheck(ModelKind kind, Objective objective, std::uint64_t seed,
                          const GradcheckOptions& opts = {});

std::string gradcheck_table(const std::vector<GradcheckResult>& results);

}  // namespace kbc
