#include "crl/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace crl {

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");

  Tape tape;
  Tensor leaf = tape.var(x);
  Tensor out = f(leaf);
  if (out.size() != 1)
    throw std::invalid_argument("finite_diff_check: f must return a scalar");
  if (!std::isfinite(out.value()))
    throw std::domain_error("finite_diff_check: f returned a non-finite value");
  GradientMap grads = tape.backward(out);
  const std::vector<double>& analytic = grads.at(leaf).data();

  auto eval_at = [&](std::int64_t i, double delta) {
    std::vector<double> v = x.data();
    v[static_cast<std::size_t>(i)] += delta;
    const double y = f(Tensor(x.shape(), std::move(v))).value();
    if (!std::isfinite(y))
      throw std::domain_error("finite_diff_check: f returned a non-finite value");
    return y;
  };

  double worst = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double numeric = (eval_at(i, step) - eval_at(i, -step)) / (2.0 * step);
    const double a = analytic[static_cast<std::size_t>(i)];
    const double err = std::abs(a - numeric) / (std::abs(a) + 1e-8);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace crl
