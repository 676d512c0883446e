#pragma once

#include <functional>
#include <string>

#include "ad/program.hpp"

namespace naf::testing {

using ad::EvalResult;
using ad::ParamNodes;
using ad::ParamVectorT;
using ad::Tape;

template <typename T>
using Program =
    std::function<typename Tape<T>::Id(Tape<T>&, const ParamNodes<T>&)>;

// Central finite differences over every parameter coordinate.
template <typename T>
VecX<T> fd_gradient(ParamVectorT<T> params, const Program<T>& program,
                    double h) {
  auto eval = [&](const VecX<T>& flat) {
    params.unflatten(flat);
    Tape<T> tape;
    ParamNodes<T> nodes(tape, params);
    return tape.scalar(program(tape, nodes));
  };
  VecX<T> flat = params.flatten();
  VecX<T> grad(flat.size());
  for (int64_t i = 0; i < flat.size(); ++i) {
    T x0 = flat(i);
    flat(i) = x0 + (T)h;
    T up = eval(flat);
    flat(i) = x0 - (T)h;
    T dn = eval(flat);
    flat(i) = x0;
    grad(i) = (up - dn) / (T)(2 * h);
  }
  return grad;
}

// Central finite difference of the directional derivative along dir.
template <typename T>
T fd_directional(ParamVectorT<T> params, const Program<T>& program,
                 const VecX<T>& dir, double h) {
  auto eval = [&](const VecX<T>& flat) {
    params.unflatten(flat);
    Tape<T> tape;
    ParamNodes<T> nodes(tape, params);
    return tape.scalar(program(tape, nodes));
  };
  VecX<T> flat = params.flatten();
  T up = eval(flat + (T)h * dir);
  T dn = eval(flat - (T)h * dir);
  return (up - dn) / (T)(2 * h);
}

// Worst per-coordinate relative error, with a floor so that near-zero true
// gradients do not blow the ratio up.
template <typename T>
double max_rel_err(const VecX<T>& analytic, const VecX<T>& fd) {
  double scale = std::max((double)fd.template lpNorm<Eigen::Infinity>(), 1e-12);
  double worst = 0;
  for (int64_t i = 0; i < fd.size(); ++i) {
    double denom = std::max(std::fabs((double)fd(i)), 1e-6 * scale + 1e-12);
    worst = std::max(worst, std::fabs((double)analytic(i) - (double)fd(i)) / denom);
  }
  return worst;
}

template <typename T>
double vec_rel_err(const VecX<T>& analytic, const VecX<T>& fd) {
  double denom = std::max((double)fd.norm(), 1e-12);
  return (analytic - fd).norm() / denom;
}

struct GradcheckReport {
  double value = 0;
  double max_rel = 0;
  double vec_rel = 0;
};

template <typename T>
GradcheckReport gradcheck(const ParamVectorT<T>& params,
                          const Program<T>& program, double h = 1e-5) {
  auto res = ad::evaluate_with_gradients<T>(params, program);
  VecX<T> fd = fd_gradient<T>(params, program, h);
  GradcheckReport rep;
  rep.value = (double)res.value;
  rep.max_rel = max_rel_err<T>(res.grad, fd);
  rep.vec_rel = vec_rel_err<T>(res.grad, fd);
  return rep;
}

}  // namespace naf::testing
