#pragma once

#include <cmath>

#include "core/common.hpp"

namespace naf::ad {

inline double loss_huber(double pred, double target, double delta) {
  require(delta > 0, Errc::invalid_argument, "loss_huber: delta must be positive");
  double r = std::fabs(pred - target);
  return r <= delta ? 0.5 * r * r : delta * (r - 0.5 * delta);
}

inline double loss_bce(double prob, double label, double eps = 1e-7) {
  require(label >= 0 && label <= 1, Errc::invalid_argument,
          "loss_bce: label outside [0,1]");
  double p = std::min(std::max(prob, eps), 1.0 - eps);
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

// 1 - cos(angle between a and b).
template <typename Derived1, typename Derived2>
double loss_cosine(const Eigen::MatrixBase<Derived1>& a,
                   const Eigen::MatrixBase<Derived2>& b) {
  double na = a.template cast<double>().norm();
  double nb = b.template cast<double>().norm();
  require(na > 0 && nb > 0, Errc::invalid_argument,
          "loss_cosine: zero-norm vector");
  return 1.0 - a.template cast<double>().dot(b.template cast<double>()) / (na * nb);
}

}  // namespace naf::ad
