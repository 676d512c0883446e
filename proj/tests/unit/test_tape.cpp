#include <doctest.h>

#include "ad/program.hpp"
#include "support/gradcheck.hpp"
#include "support/testutil.hpp"

using naf::MatX;
using naf::Rng;
using naf::ad::HashGridConfig;
using naf::ad::ParamNodes;
using naf::ad::ParamVectorT;
using naf::ad::Tape;
using naf::testing::gradcheck;
using naf::testing::Program;
using naf::testing::randn;
using naf::testing::randu;

namespace {

using Id = Tape<double>::Id;
using PV = ParamVectorT<double>;

// Scalar root with a generic cotangent: sum(x .* W) for a fixed random W.
Id wroot(Tape<double>& t, Id x, unsigned seed) {
  Rng rng(seed);
  return t.sum_all(
      t.cmul(x, t.input(randn(rng, (int)t.rows(x), (int)t.cols(x)))));
}

void check(const PV& pv, const Program<double>& prog, double tol = 1e-4,
           double h = 1e-5) {
  auto rep = gradcheck<double>(pv, prog, h);
  CAPTURE(rep.max_rel);
  CHECK(rep.max_rel < tol);
}

}  // namespace

TEST_CASE("matmul gradients") {
  Rng rng(1);
  PV pv;
  pv.add("A", randn(rng, 4, 5));
  pv.add("B", randn(rng, 5, 3));
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    return wroot(t, t.matmul(p("A"), p("B")), 11);
  });
}

TEST_CASE("transpose gradients") {
  Rng rng(2);
  PV pv;
  pv.add("A", randn(rng, 3, 6));
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    return wroot(t, t.transpose(p("A")), 12);
  });
}

TEST_CASE("add sub cmul cdiv gradients") {
  Rng rng(3);
  PV pv;
  pv.add("A", randn(rng, 4, 4));
  pv.add("B", (randu(rng, 4, 4, 0.5, 2.0)));
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    auto s = t.add(t.sub(t.add(p("A"), p("B")), t.cmul(p("A"), p("B"))),
                   t.cdiv(p("A"), p("B")));
    return wroot(t, s, 13);
  });
}

TEST_CASE("row broadcast and scalar scale gradients") {
  Rng rng(4);
  PV pv;
  pv.add("A", randn(rng, 5, 3));
  pv.add("r", randn(rng, 1, 3));
  pv.add("s", randn(rng, 1, 1));
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    auto x = t.add_rowvec(p("A"), p("r"));
    x = t.scale_by_scalar(x, p("s"));
    x = t.const_add(t.const_scale(x, 1.7), -0.3);
    return wroot(t, x, 14);
  });
}

TEST_CASE("concat slice tile stack gradients") {
  Rng rng(5);
  PV pv;
  pv.add("A", randn(rng, 4, 3));
  pv.add("B", randn(rng, 4, 2));
  pv.add("C", randn(rng, 2, 5));
  pv.add("v", randn(rng, 12, 1));
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    auto cc = t.concat_cols(p("A"), p("B"));       // 4x5
    auto cr = t.concat_rows(cc, p("C"));           // 6x5
    auto s1 = t.slice_cols(cr, 1, 3);              // 6x3
    auto s2 = t.slice_rows(s1, 2, 3);              // 3x3
    auto tl = t.tile_rows(s2, 2);                  // 6x3
    auto st = t.stack_blocks_to_cols(p("v"), 3);   // 4x3
    return t.add(wroot(t, tl, 15), wroot(t, t.concat_rows(st, st), 16));
  });
}

TEST_CASE("reduction gradients") {
  Rng rng(6);
  PV pv;
  pv.add("A", randn(rng, 5, 4));
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    auto a = t.rowwise_sum(p("A"));
    auto b = t.mean_all(p("A"));
    return t.add(t.add(t.sum_all(t.square(a)), b), t.sum_all(p("A")));
  });
}

TEST_CASE("elementwise unary gradients") {
  Rng rng(7);
  PV pv;
  pv.add("A", randn(rng, 4, 4));
  pv.add("P", randu(rng, 4, 4, 0.3, 2.5));
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    auto a = p("A");
    auto mix = t.add(t.sin(a), t.cos(a));
    mix = t.add(mix, t.sigmoid(a));
    mix = t.add(mix, t.exp(t.const_scale(a, 0.3)));
    mix = t.add(mix, t.neg(t.square(a)));
    auto pos = p("P");
    mix = t.add(mix, t.log(pos));
    mix = t.add(mix, t.sqrt(pos));
    return wroot(t, mix, 17);
  });
}

TEST_CASE("softplus gradients at both sharpness scales") {
  Rng rng(8);
  PV pv;
  pv.add("A", randn(rng, 6, 3));
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    return wroot(t, t.add(t.softplus(p("A"), 1.0), t.softplus(p("A"), 100.0)),
                 18);
  });
}

TEST_CASE("softplus value at zero") {
  Tape<double> t;
  auto x = t.input(MatX<double>::Zero(1, 1));
  CHECK(t.scalar(t.softplus(x, 100.0)) == doctest::Approx(std::log(2.0) / 100.0));
  CHECK(t.scalar(t.softplus(x, 1.0)) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("abs clamp huber gradients away from kinks") {
  Rng rng(9);
  PV pv;
  MatX<double> a = randn(rng, 5, 5);
  for (int i = 0; i < a.size(); ++i) {
    double v = a.data()[i];
    if (std::fabs(std::fabs(v) - 1.0) < 0.05) a.data()[i] = v * 1.2;  // huber kink
    if (std::fabs(v) < 0.05) a.data()[i] = v + 0.1;                    // abs kink
    if (std::fabs(std::fabs(v) - 0.8) < 0.05) a.data()[i] = v * 1.3;   // clamp bound
  }
  pv.add("A", a);
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    auto mix = t.abs(p("A"));
    mix = t.add(mix, t.clamp(p("A"), -0.8, 0.8));
    mix = t.add(mix, t.huber(p("A"), 1.0));
    return wroot(t, mix, 19);
  });
}

TEST_CASE("min max gradients and first-argument tie rule") {
  Rng rng(10);
  PV pv;
  pv.add("A", randn(rng, 4, 4));
  pv.add("B", (MatX<double>)(randn(rng, 4, 4).array() + 0.001));
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    return wroot(t, t.add(t.max_elem(p("A"), p("B")), t.min_elem(p("A"), p("B"))),
                 20);
  });

  // ties: gradient routes to the first argument
  PV tie;
  tie.add("A", MatX<double>::Ones(2, 2));
  tie.add("B", MatX<double>::Ones(2, 2));
  auto res = naf::ad::evaluate_with_gradients<double>(
      tie, [](Tape<double>& t, const ParamNodes<double>& p) {
        return t.sum_all(t.max_elem(p("A"), p("B")));
      });
  CHECK(res.grad.head(4).sum() == doctest::Approx(4.0));
  CHECK(res.grad.tail(4).sum() == doctest::Approx(0.0));
  auto res2 = naf::ad::evaluate_with_gradients<double>(
      tie, [](Tape<double>& t, const ParamNodes<double>& p) {
        return t.sum_all(t.min_elem(p("A"), p("B")));
      });
  CHECK(res2.grad.head(4).sum() == doctest::Approx(4.0));
  CHECK(res2.grad.tail(4).sum() == doctest::Approx(0.0));
}

TEST_CASE("bce gradients and clamp saturation") {
  Rng rng(11);
  PV pv;
  pv.add("A", randn(rng, 4, 3));
  MatX<double> labels = (randu(rng, 4, 3, 0.0, 1.0).array() > 0.5).cast<double>();
  check(pv, [labels](Tape<double>& t, const ParamNodes<double>& p) {
    return t.mean_all(t.bce(t.sigmoid(p("A")), labels));
  });

  // fully wrong saturated prediction stays finite
  Tape<double> t;
  MatX<double> p0(1, 1), y1(1, 1);
  p0 << 0.0;
  y1 << 1.0;
  auto loss = t.bce(t.input(p0), y1);
  CHECK(std::isfinite(t.scalar(t.sum_all(loss))));
}

TEST_CASE("cumprod exclusive values and zero robustness") {
  Tape<double> t;
  MatX<double> a(1, 3);
  a << 2.0, 0.0, 3.0;
  auto out = t.cumprod_exclusive_rows(t.input(a));
  CHECK(t.val(out)(0, 0) == 1.0);
  CHECK(t.val(out)(0, 1) == 2.0);
  CHECK(t.val(out)(0, 2) == 0.0);

  Rng rng(12);
  PV pv;
  MatX<double> m = randn(rng, 3, 6);
  m(1, 2) = 0.0;  // zero entry must not poison neighbouring gradients
  m(2, 4) = 0.0;
  pv.add("A", m);
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    return wroot(t, t.cumprod_exclusive_rows(p("A")), 21);
  });
}

TEST_CASE("composite rows gradients") {
  Rng rng(13);
  PV pv;
  pv.add("W", randu(rng, 3, 4, 0.0, 1.0));
  pv.add("V", randn(rng, 12, 5));
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    return wroot(t, t.composite_rows(p("W"), p("V")), 22);
  });
}

TEST_CASE("composite rows uses sample-major value layout") {
  Tape<double> t;
  MatX<double> w(2, 2);  // 2 rays, 2 samples
  w << 1.0, 10.0, 2.0, 20.0;
  MatX<double> v(4, 1);  // row i*R + r
  v << 1.0, 2.0, 3.0, 4.0;  // sample0: rays {1,2}; sample1: rays {3,4}
  auto out = t.composite_rows(t.input(w), t.input(v));
  CHECK(t.val(out)(0, 0) == doctest::Approx(1.0 * 1.0 + 10.0 * 3.0));
  CHECK(t.val(out)(1, 0) == doctest::Approx(2.0 * 2.0 + 20.0 * 4.0));
}

TEST_CASE("positional encoding gradients") {
  Rng rng(14);
  PV pv;
  pv.add("X", randu(rng, 5, 3, -0.9, 0.9));
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    auto both = t.concat_cols(t.pe_encode(p("X"), 4, true),
                              t.pe_encode(p("X"), 2, false));
    return wroot(t, both, 23);
  }, 1e-4, 1e-6);
}

TEST_CASE("pe tangent blocks equal finite-difference Jacobian columns") {
  Rng rng(15);
  MatX<double> x = randu(rng, 4, 3, -0.9, 0.9);
  int bands = 5;
  double h = 1e-6;
  Tape<double> t;
  auto tx = t.input(x);
  auto tangent = t.val(t.pe_tangent(tx, bands, true));
  for (int b = 0; b < 3; ++b) {
    MatX<double> xp = x, xm = x;
    xp.col(b).array() += h;
    xm.col(b).array() -= h;
    Tape<double> t2;
    MatX<double> fd =
        (t2.val(t2.pe_encode(t2.input(xp), bands, true)) -
         t2.val(t2.pe_encode(t2.input(xm), bands, true))) /
        (2 * h);
    CHECK((tangent.middleRows(b * 4, 4) - fd).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("pe tangent gradients") {
  Rng rng(16);
  PV pv;
  pv.add("X", randu(rng, 3, 3, -0.9, 0.9));
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    return wroot(t, t.pe_tangent(p("X"), 3, true), 24);
  }, 1e-4, 1e-6);
}

TEST_CASE("hash grid encoding gradients for tables and positions") {
  HashGridConfig cfg;
  cfg.levels = 3;
  cfg.table_size = 64;
  cfg.features = 2;
  cfg.base_resolution = 4;
  cfg.growth = 1.6;
  Rng rng(17);
  PV pv;
  pv.add("X", randu(rng, 5, 3, -0.85, 0.85));
  for (int l = 0; l < cfg.levels; ++l)
    pv.add("tbl" + std::to_string(l), randn(rng, cfg.table_size, cfg.features, 0.1));
  check(pv, [cfg](Tape<double>& t, const ParamNodes<double>& p) {
    std::vector<Id> tables;
    for (int l = 0; l < cfg.levels; ++l) tables.push_back(p("tbl" + std::to_string(l)));
    return wroot(t, t.hash_encode(p("X"), tables, cfg), 25);
  }, 1e-4, 1e-7);
}

TEST_CASE("hash grid is trilinear between lattice points") {
  HashGridConfig cfg;
  cfg.levels = 1;
  cfg.table_size = 64;
  cfg.features = 2;
  cfg.base_resolution = 4;
  Rng rng(18);
  MatX<double> tbl = randn(rng, 64, 2);
  // midpoint of a cell edge = average of endpoints
  auto eval = [&](double x, double y, double z) {
    Tape<double> t;
    MatX<double> pt(1, 3);
    pt << x, y, z;
    auto id = t.hash_encode(t.input(pt), {t.param(tbl)}, cfg);
    return (MatX<double>)t.val(id);
  };
  auto a = eval(-1.0, -1.0, -1.0);
  auto b = eval(-1.0 + 2.0 / 3.0, -1.0, -1.0);
  auto mid = eval(-1.0 + 1.0 / 3.0, -1.0, -1.0);
  CHECK((0.5 * (a + b) - mid).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rodrigues coefficient gradients incl. small-angle series") {
  PV pv;
  MatX<double> q(1, 4);
  q << 1e-10, 1e-4, 0.5, 4.0;
  pv.add("Q", q);
  check(pv, [](Tape<double>& t, const ParamNodes<double>& p) {
    return wroot(t, t.add(t.sinc_sqrt(p("Q")), t.versine_ratio(p("Q"))), 26);
  }, 1e-4, 1e-7);

  Tape<double> t;
  MatX<double> z(1, 1);
  z << 0.0;
  auto zi = t.input(z);
  CHECK(t.scalar(t.sinc_sqrt(zi)) == doctest::Approx(1.0));
  CHECK(t.scalar(t.versine_ratio(zi)) == doctest::Approx(0.5));
}

TEST_CASE("two-layer perceptron gradient matches finite differences") {
  // 10 parameters: 3x2 weights, 1x2 bias, 2x1 readout
  Rng rng(19);
  PV pv;
  pv.add("W1", randn(rng, 3, 2));
  pv.add("b1", randn(rng, 1, 2));
  pv.add("W2", randn(rng, 2, 1));
  CHECK(pv.total_size() == 10);
  MatX<double> x = randn(rng, 4, 3);
  auto rep = gradcheck<double>(
      pv,
      [x](Tape<double>& t, const ParamNodes<double>& p) {
        auto h = t.softplus(t.add_rowvec(t.matmul(t.input(x), p("W1")), p("b1")), 1.0);
        return t.sum_all(t.square(t.matmul(h, p("W2"))));
      },
      1e-3);
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("non-finite intermediate reports the offending primitive") {
  PV pv;
  pv.add("A", MatX<double>::Ones(2, 2));
  bool threw = false;
  try {
    naf::ad::evaluate_with_gradients<double>(
        pv, [](Tape<double>& t, const ParamNodes<double>& p) {
          auto bad = t.log(t.const_add(p("A"), -5.0));  // log of negative
          return t.sum_all(bad);
        });
  } catch (const naf::Error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("log") != std::string::npos);
    CHECK(e.code() == naf::Errc::numeric_error);
  }
  CHECK(threw);
}

TEST_CASE("backward skips graphs without parameters") {
  Tape<double> t;
  auto x = t.input(MatX<double>::Ones(2, 2));
  auto s = t.sum_all(x);
  CHECK_THROWS_AS(t.backward(s), naf::Error);
}
