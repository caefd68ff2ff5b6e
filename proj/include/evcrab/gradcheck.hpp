#pragma once

#include <functional>
#include <string>
#include <vector>

#include "evcrab/tensor.hpp"

namespace evcrab::ad {

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst_input;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  std::size_t checked = 0;
  /// Coordinates whose +h or -h probe moved a spike input onto another piece of the
  /// surrogate primitive. The central difference is not an oracle there, so they are
  /// left out of max_rel_error and only counted.
  std::size_t straddled = 0;
  /// Coordinates with relative error above rel_tol, and the largest max(|a|,|n|) among them.
  std::size_t violations = 0;
  double largest_violating_gradient = 0;
  bool pass = true;
};

struct GradCheckOptions {
  double step = 1e-5;
  double rel_tol = 1e-5;
  double floor = 1e-12;
  /// Check at most this many coordinates per input (evenly strided); 0 = all.
  std::size_t max_per_input = 0;
};

/// Compares backward() of `loss_fn` against central differences for every
/// coordinate of the named leaf inputs. Relative error uses
/// |a - n| / max(|a|, |n|, floor). Throws NumericError on a non-finite loss.
/// pass requires max_rel_error <= rel_tol and no straddled coordinates.
template <class T>
GradCheckResult finite_diff_check(const std::vector<std::pair<std::string, Tensor<T>>>& inputs,
                                  const std::function<Tensor<T>()>& loss_fn,
                                  const GradCheckOptions& options = {});

}  // namespace evcrab::ad
