#include "ihvrnn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ihvrnn/errors.hpp"
#include "ihvrnn/rng.hpp"

namespace ihvrnn::nn {

namespace {

double evaluate(const ScalarFunction& f, const ParamTree& params) {
  ad::Tape tape;
  ParamBinding bind(tape, params);
  const double v = f(tape, bind).scalar();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
  return v;
}

}  // namespace

GradCheckResult grad_check_detailed(const ScalarFunction& f, const ParamTree& params,
                                    const GradCheckOptions& options) {
  if (options.eps < 1e-7 || options.eps > 1e-4) throw ContractViolation("grad_check: eps outside [1e-7, 1e-4]");

  ParamTree analytic;
  {
    ad::Tape tape;
    ParamBinding bind(tape, params);
    ad::Var out = f(tape, bind);
    if (!std::isfinite(out.scalar())) throw NumericError("grad_check: non-finite function value");
    tape.backward(out);
    analytic = bind.gradients();
  }

  const std::size_t total = params.total_size();
  std::vector<std::size_t> coords(total);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  Rng rng(options.seed);
  for (std::size_t i = total; i > 1; --i) {
    std::swap(coords[i - 1], coords[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
  }
  std::size_t count = static_cast<std::size_t>(std::ceil(options.fraction * static_cast<double>(total)));
  count = std::min(total, std::max(count, options.min_coords));
  coords.resize(count);
  std::sort(coords.begin(), coords.end());

  GradCheckResult result;
  result.coords_checked = count;
  ParamTree probe = params;
  for (std::size_t c : coords) {
    const double original = probe.coord(c);
    probe.coord(c) = original + options.eps;
    const double up = evaluate(f, probe);
    probe.coord(c) = original - options.eps;
    const double down = evaluate(f, probe);
    probe.coord(c) = original;
    const double numeric = (up - down) / (2.0 * options.eps);
    const double err = std::abs(analytic.coord(c) - numeric) / std::max(1.0, std::abs(numeric));
    if (err > result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_coord = c;
    }
  }
  return result;
}

}  // namespace ihvrnn::nn
