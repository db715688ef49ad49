#pragma once

// Independent gradient oracle: central finite differences (h = 1e-6 on
// 64-bit floats) of a scalar loss with respect to every element of the given
// parameters, compared against the reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "hsrecon/common.hpp"
#include "hsrecon/tensor.hpp"

namespace testutil {

inline double gradcheck(const std::function<hsrecon::Tensor()>& loss_fn,
                        const std::vector<hsrecon::Tensor*>& params, double h = 1e-6) {
  for (auto* p : params) p->zero_grad();
  hsrecon::Tensor loss = loss_fn();
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.emplace_back(p->grad().begin(), p->grad().end());

  double max_err = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k]->data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double keep = data[i];
      data[i] = keep + h;
      const double fp = loss_fn().item();
      data[i] = keep - h;
      const double fm = loss_fn().item();
      data[i] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      const double ad = analytic[k][i];
      const double denom = std::max({std::abs(fd), std::abs(ad), 1e-2});
      max_err = std::max(max_err, std::abs(fd - ad) / denom);
    }
  }
  return max_err;
}

inline hsrecon::Tensor random_tensor(hsrecon::Shape shape, hsrecon::Rng& rng, double lo = -1.0,
                                     double hi = 1.0, bool requires_grad = false) {
  std::vector<double> data(hsrecon::shape_numel(shape));
  for (auto& v : data) v = rng.next_uniform(lo, hi);
  return hsrecon::Tensor::from(std::move(data), std::move(shape), requires_grad);
}

/// Random values bounded away from zero, for kinked ops (relu, l1).
inline hsrecon::Tensor random_tensor_nonzero(hsrecon::Shape shape, hsrecon::Rng& rng,
                                             double margin = 0.05, bool requires_grad = false) {
  std::vector<double> data(hsrecon::shape_numel(shape));
  for (auto& v : data) {
    const double mag = rng.next_uniform(margin, 1.0);
    v = rng.next_unit() < 0.5 ? -mag : mag;
  }
  return hsrecon::Tensor::from(std::move(data), std::move(shape), requires_grad);
}

}  // namespace testutil
