#pragma once

#include "core/common.hpp"

namespace naf::ad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  VecX<T> m, v;
  int64_t t = 0;

  void init(int64_t n) {
    m = VecX<T>::Zero(n);
    v = VecX<T>::Zero(n);
    t = 0;
  }
};

// Bias-corrected Adam update. Rejects non-finite gradients without touching
// the parameters or the moment estimates.
template <typename T>
void adam_step(VecX<T>& params, const VecX<T>& grad, AdamState<T>& state,
               const AdamConfig& cfg) {
  require(params.size() == grad.size(), Errc::invalid_argument,
          "adam_step: gradient size mismatch");
  if (state.t == 0 && state.m.size() == 0) state.init(params.size());
  require(state.m.size() == params.size(), Errc::invalid_argument,
          "adam_step: state size mismatch");
  require(grad.allFinite(), Errc::numeric_error,
          "adam_step: non-finite gradient");
  state.t += 1;
  const T b1 = (T)cfg.beta1, b2 = (T)cfg.beta2;
  state.m = b1 * state.m + (1 - b1) * grad;
  state.v.array() = b2 * state.v.array() + (1 - b2) * grad.array().square();
  const double bc1 = 1.0 - std::pow(cfg.beta1, (double)state.t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, (double)state.t);
  const T step = (T)(cfg.lr / bc1);
  params.array() -=
      step * state.m.array() /
      ((state.v.array() / (T)bc2).sqrt() + (T)cfg.eps);
}

}  // namespace naf::ad
