#pragma once

// Central finite-difference gradient checker. The checker is the
// independent oracle for the reverse-mode engine: it never touches
// the tape beyond one analytic pass.

#include <functional>

#include "crl/tensor.hpp"

namespace crl {

// f maps a tensor (registered as a tape leaf by the caller-provided tape)
// to a scalar. Returns the max over coordinates of
//   |analytic - central difference| / (|analytic| + 1e-8).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double step);

}  // namespace crl
