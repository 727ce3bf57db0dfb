#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "comatch/tensor.hpp"

namespace comatch {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coords_checked = 0;
  // Coordinates sitting on a kink (one-sided slopes disagree); reported,
  // not counted toward max_rel_err.
  std::vector<std::pair<std::string, std::size_t>> excluded;

  bool pass(double tol) const { return max_rel_err < tol; }
};

using NamedParams = std::vector<std::pair<std::string, Tensor*>>;

// Central-difference check of the analytic gradients of a scalar function.
// `f` must rebuild the computation from the leaves it is given (one leaf per
// named parameter, same order) and return the scalar result; it must be
// deterministic. Parameters are perturbed in place and restored.
// Relative error per coordinate: |ga - gn| / max(|ga|, |gn|, 1e-8).
GradCheckReport finite_diff_check(
    const std::function<Tensor(Graph&, const std::vector<Tensor>&)>& f,
    const NamedParams& params, double eps = 1e-5);

}  // namespace comatch
