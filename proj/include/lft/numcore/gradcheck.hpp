#pragma once

#include <functional>
#include <span>

namespace lft {

/// Scalar objective that writes its gradient into `grad` (same length as
/// `params`) and returns the value.
using GradientFn = std::function<double(std::span<const double> params, std::span<double> grad)>;

/// Largest |analytic - central difference| / (|central difference| + 1e-8)
/// over all parameters. `eps` must lie in [1e-6, 1e-3]. Throws
/// NonFiniteGradient when an analytic component is not finite.
double check_gradients(const GradientFn& f, std::span<const double> params, double eps = 1e-4);

}  // namespace lft
