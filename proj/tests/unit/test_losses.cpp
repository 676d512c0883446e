#include <doctest.h>

#include "ad/losses.hpp"

using naf::ad::loss_bce;
using naf::ad::loss_cosine;
using naf::ad::loss_huber;

TEST_CASE("huber quadratic and linear regions meet continuously") {
  double d = 0.1;
  CHECK(loss_huber(0.05, 0.0, d) == doctest::Approx(0.5 * 0.05 * 0.05));
  CHECK(loss_huber(0.5, 0.0, d) == doctest::Approx(d * (0.5 - 0.5 * d)));
  double below = loss_huber(d - 1e-9, 0.0, d);
  double above = loss_huber(d + 1e-9, 0.0, d);
  CHECK(std::fabs(below - above) < 1e-8);
  CHECK(loss_huber(1.0, 1.3, d) == loss_huber(1.3, 1.0, d));
  CHECK_THROWS_AS(loss_huber(0.0, 0.0, -1.0), naf::Error);
}

TEST_CASE("bce saturates finitely at confident wrong predictions") {
  CHECK(loss_bce(0.5, 1.0) == doctest::Approx(std::log(2.0)));
  CHECK(std::isfinite(loss_bce(0.0, 1.0)));
  CHECK(std::isfinite(loss_bce(1.0, 0.0)));
  CHECK(loss_bce(0.9, 1.0) < loss_bce(0.1, 1.0));
  CHECK_THROWS_AS(loss_bce(0.5, 2.0), naf::Error);
}

TEST_CASE("cosine distance") {
  Eigen::Vector3d a(1, 0, 0), b(0, 1, 0), c(2, 0, 0);
  CHECK(loss_cosine(a, b) == doctest::Approx(1.0));
  CHECK(loss_cosine(a, c) == doctest::Approx(0.0));
  CHECK(loss_cosine(a, -c) == doctest::Approx(2.0));
  CHECK_THROWS_AS(loss_cosine(a, Eigen::Vector3d::Zero().eval()), naf::Error);
}
