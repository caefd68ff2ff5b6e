#include "evcrab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "evcrab/errors.hpp"
#include "evcrab/ops.hpp"

namespace evcrab::ad {

namespace {

template <class T>
T checked_loss(const std::function<Tensor<T>()>& loss_fn, bool& straddled) {
  NoGradGuard guard;
  begin_piece_compare();
  const T v = loss_fn().item();
  straddled = end_piece_trace() || straddled;
  if (!std::isfinite(static_cast<double>(v))) throw NumericError("gradient check: non-finite loss");
  return v;
}

}  // namespace

template <class T>
GradCheckResult finite_diff_check(const std::vector<std::pair<std::string, Tensor<T>>>& inputs,
                                  const std::function<Tensor<T>()>& loss_fn,
                                  const GradCheckOptions& options) {
  for (const auto& [name, t] : inputs) {
    auto copy = t;
    copy.zero_grad();
    copy.set_requires_grad(true);
  }
  begin_piece_record();
  auto loss = loss_fn();
  end_piece_trace();
  if (!std::isfinite(static_cast<double>(loss.item()))) {
    throw NumericError("gradient check: non-finite loss");
  }
  backward(loss);

  GradCheckResult result;
  const T h = static_cast<T>(options.step);
  for (const auto& [name, t] : inputs) {
    auto x = t;
    std::vector<T> analytic(x.numel(), T(0));
    if (!x.grad().empty()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
    const std::size_t stride =
        options.max_per_input == 0 ? 1 : std::max<std::size_t>(1, x.numel() / options.max_per_input);
    for (std::size_t i = 0; i < x.numel(); i += stride) {
      auto data = x.mutable_data();
      const T saved = data[i];
      bool straddled = false;
      data[i] = saved + h;
      const T up = checked_loss(loss_fn, straddled);
      data[i] = saved - h;
      const T down = checked_loss(loss_fn, straddled);
      data[i] = saved;
      const double numeric = (static_cast<double>(up) - static_cast<double>(down)) / (2.0 * h);
      const double a = analytic[i];
      if (!std::isfinite(a)) throw NumericError("gradient check: non-finite gradient in " + name);
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.floor});
      ++result.checked;
      if (straddled) {
        ++result.straddled;
        continue;
      }
      if (rel > options.rel_tol) {
        ++result.violations;
        result.largest_violating_gradient =
            std::max({result.largest_violating_gradient, std::abs(a), std::abs(numeric)});
      }
      if (rel >= result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_input = name;
        result.worst_index = i;
        result.analytic = a;
        result.numeric = numeric;
      }
    }
  }
  result.pass = result.max_rel_error <= options.rel_tol && result.straddled == 0;
  return result;
}

template GradCheckResult finite_diff_check<float>(
    const std::vector<std::pair<std::string, Tensor<float>>>&,
    const std::function<Tensor<float>()>&, const GradCheckOptions&);
template GradCheckResult finite_diff_check<double>(
    const std::vector<std::pair<std::string, Tensor<double>>>&,
    const std::function<Tensor<double>()>&, const GradCheckOptions&);

}  // namespace evcrab::ad
