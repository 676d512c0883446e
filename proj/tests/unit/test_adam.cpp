#include <doctest.h>

#include "ad/adam.hpp"

using naf::VecX;
using naf::ad::AdamConfig;
using naf::ad::adam_step;
using naf::ad::AdamState;

TEST_CASE("adam follows the hand-computed two-step trace") {
  AdamConfig cfg;
  cfg.lr = 0.01;
  VecX<double> p(2), g(2);
  p << 1.0, 2.0;
  g << 0.1, -0.2;
  AdamState<double> st;

  // reference trace computed directly from the update formulas
  VecX<double> m = VecX<double>::Zero(2), v = VecX<double>::Zero(2), ref = p;
  for (int t = 1; t <= 2; ++t) {
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v.array() + (1 - cfg.beta2) * g.array().square();
    VecX<double> mhat = m / (1 - std::pow(cfg.beta1, t));
    VecX<double> vhat = v / (1 - std::pow(cfg.beta2, t));
    ref.array() -= cfg.lr * mhat.array() / (vhat.array().sqrt() + cfg.eps);
  }

  adam_step<double>(p, g, st, cfg);
  adam_step<double>(p, g, st, cfg);
  CHECK((p - ref).cwiseAbs().maxCoeff() < 1e-14);

  // same-sign constant gradient moves both coordinates by nearly lr each step
  CHECK(p(0) == doctest::Approx(1.0 - 2 * cfg.lr).epsilon(1e-4));
  CHECK(p(1) == doctest::Approx(2.0 + 2 * cfg.lr).epsilon(1e-4));
}

TEST_CASE("adam rejects non-finite gradients and leaves params unchanged") {
  VecX<float> p(3);
  p << 1.f, 2.f, 3.f;
  VecX<float> g(3);
  g << 0.1f, std::numeric_limits<float>::quiet_NaN(), 0.2f;
  AdamState<float> st;
  st.init(3);
  VecX<float> before = p;
  CHECK_THROWS_AS(adam_step<float>(p, g, st, AdamConfig{}), naf::Error);
  CHECK((p - before).cwiseAbs().maxCoeff() == 0.f);
  CHECK(st.t == 0);
  CHECK(st.m.cwiseAbs().maxCoeff() == 0.f);
}

TEST_CASE("adam is deterministic") {
  for (int rep = 0; rep < 2; ++rep) {
    static VecX<float> first;
    VecX<float> p(4);
    p << 0.5f, -1.f, 2.f, 0.f;
    VecX<float> g(4);
    g << 0.3f, 0.1f, -0.7f, 0.01f;
    AdamState<float> st;
    AdamConfig cfg;
    cfg.lr = 5e-4;
    for (int i = 0; i < 10; ++i) adam_step<float>(p, g, st, cfg);
    if (rep == 0)
      first = p;
    else
      CHECK((p - first).cwiseAbs().maxCoeff() == 0.f);
  }
}

TEST_CASE("adam size mismatch is rejected") {
  VecX<float> p(3), g(2);
  p.setZero();
  g.setZero();
  AdamState<float> st;
  CHECK_THROWS_AS(adam_step<float>(p, g, st, AdamConfig{}), naf::Error);
}
