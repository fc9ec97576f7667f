#pragma once

#include <cstdint>
#include <functional>

#include "ihvrnn/params.hpp"
#include "ihvrnn/tape.hpp"

namespace ihvrnn::nn {

// Builds a scalar (1 x 1) on the given tape from bound parameters.
using ScalarFunction = std::function<ad::Var(ad::Tape&, ParamBinding&)>;

struct GradCheckOptions {
  double eps = 1e-6;
  double fraction = 0.05;   // share of coordinates probed
  std::size_t min_coords = 16;
  uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_coord = 0;
};

// Central finite differences on a random coordinate subsample; the error per
// coordinate is |analytic - numeric| / max(1, |numeric|).
GradCheckResult grad_check_detailed(const ScalarFunction& f, const ParamTree& params,
                                    const GradCheckOptions& options = {});

inline double grad_check(const ScalarFunction& f, const ParamTree& params, double eps = 1e-6) {
  GradCheckOptions opt;
  opt.eps = eps;
  return grad_check_detailed(f, params, opt).max_rel_error;
}

}  // namespace ihvrnn::nn
