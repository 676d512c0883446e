#include "field/model.hpp"

#include <cmath>

#include "ad/program.hpp"
#include "field/graph.hpp"
#include "field/init.hpp"

namespace naf {

namespace {

const ParamVector& empty_pv() {
  static const ParamVector pv;
  return pv;
}

struct QueryCtx {
  ad::Tape<float> tape;
  ad::ParamNodes<float> nodes;
  FieldGraph<float> g;

  QueryCtx(const NafModel& m, bool with_dyn)
      : nodes(tape, empty_pv(), &m.statics, with_dyn ? &m.dynamics : nullptr),
        g(tape, nodes, m.cfg) {}

  void check() const {
    auto bad = tape.first_nonfinite();
    if (bad >= 0)
      raise(Errc::numeric_error,
            std::string("non-finite value produced by primitive '") +
                ad::op_name(tape.node(bad).op) + "'");
  }
};

}  // namespace

NafModel NafModel::init(const NafConfig& cfg) {
  cfg.validate();
  NafModel m;
  m.cfg = cfg;
  m.statics = init_static_params<float>(cfg);
  m.dynamics = init_dynamic_params<float>(cfg);
  m.has_dynamics = false;
  return m;
}

float NafModel::sharpness() const {
  return std::exp(statics.at("sharp")(0, 0));
}

MatX<float> NafModel::query_sdf(const MatX<float>& pts) const {
  require(pts.cols() == 3, Errc::invalid_argument, "points must be N x 3");
  QueryCtx c(*this, false);
  auto s = c.g.sdf(c.tape.input(pts));
  c.check();
  return c.tape.val(s);
}

std::pair<MatX<float>, MatX<float>> NafModel::query_sdf_grad(
    const MatX<float>& pts) const {
  require(pts.cols() == 3, Errc::invalid_argument, "points must be N x 3");
  QueryCtx c(*this, false);
  auto sg = c.g.sdf_with_grad(c.tape.input(pts));
  c.check();
  return {c.tape.val(sg.sdf), c.tape.val(sg.grad)};
}

MatX<float> NafModel::query_latent(const MatX<float>& pts) const {
  require(pts.cols() == 3, Errc::invalid_argument, "points must be N x 3");
  QueryCtx c(*this, false);
  auto z = c.g.encode(c.tape.input(pts));
  c.check();
  return c.tape.val(z);
}

MatX<float> NafModel::query_color(const MatX<float>& pts) const {
  require(pts.cols() == 3, Errc::invalid_argument, "points must be N x 3");
  QueryCtx c(*this, false);
  auto col = c.g.color_from_z(c.g.encode(c.tape.input(pts)));
  c.check();
  return c.tape.val(col);
}

MatX<float> NafModel::query_feature(const MatX<float>& pts) const {
  require(pts.cols() == 3, Errc::invalid_argument, "points must be N x 3");
  QueryCtx c(*this, false);
  auto f = c.g.feature(c.tape.input(pts));
  c.check();
  return c.tape.val(f);
}

MatX<float> NafModel::query_contact(const MatX<float>& pts) const {
  require(pts.cols() == 3, Errc::invalid_argument, "points must be N x 3");
  QueryCtx c(*this, false);
  auto p = c.g.contact_prob(c.tape.input(pts));
  c.check();
  return c.tape.val(p);
}

NafModel::FlowResult NafModel::query_flow(const MatX<float>& pts) const {
  require(pts.cols() == 3, Errc::invalid_argument, "points must be N x 3");
  require(has_dynamics, Errc::invalid_argument,
          "query_flow requires a completed dynamic fit");
  MatX<float> s = query_sdf(pts);
  int worst = -1;
  float worst_abs = 0;
  for (int i = 0; i < (int)s.rows(); ++i)
    if (std::abs(s(i, 0)) > worst_abs) {
      worst_abs = std::abs(s(i, 0));
      worst = i;
    }
  if (worst >= 0 && worst_abs >= (float)cfg.tau_surface)
    raise(Errc::invalid_argument,
          "query_flow requires surface points: |sdf|=" +
              std::to_string(worst_abs) + " at point " + std::to_string(worst) +
              " exceeds tolerance " + std::to_string(cfg.tau_surface));

  QueryCtx c(*this, true);
  auto x = c.tape.input(pts);
  auto out = c.g.action(x);
  c.check();
  const MatX<float>& off = c.tape.val(out.offsets);
  MatX<float> flows(pts.rows(), 3 * cfg.horizon);
  for (int k = 0; k < cfg.horizon; ++k)
    flows.middleCols(3 * k, 3) = pts + off.middleCols(3 * k, 3);
  return {flows, c.tape.val(out.vis)};
}

MatX<float> NafModel::try_project_to_surface(const MatX<float>& pts,
                                             std::vector<char>& ok,
                                             int iters) const {
  require(pts.cols() == 3, Errc::invalid_argument, "points must be N x 3");
  const int n = (int)pts.rows();
  MatX<float> x = pts;
  ok.assign(n, 1);
  {
    MatX<float> s0 = query_sdf(x);
    for (int i = 0; i < n; ++i)
      if (!(std::abs(s0(i, 0)) < 0.5f)) ok[i] = 0;
  }
  for (int it = 0; it < iters; ++it) {
    auto [s, g] = query_sdf_grad(x);
    for (int i = 0; i < n; ++i) {
      if (!ok[i]) continue;
      float gn2 = g.row(i).squaredNorm();
      if (std::sqrt(gn2) < 1e-4f) {
        ok[i] = 0;
        continue;
      }
      x.row(i) -= (s(i, 0) / gn2) * g.row(i);
    }
  }
  MatX<float> sf = query_sdf(x);
  for (int i = 0; i < n; ++i)
    if (ok[i] && !(std::abs(sf(i, 0)) < (float)cfg.tau_surface)) ok[i] = 0;
  return x;
}

MatX<float> NafModel::project_to_surface(const MatX<float>& pts,
                                         int iters) const {
  MatX<float> s0 = query_sdf(pts);
  for (int i = 0; i < (int)pts.rows(); ++i)
    require(std::abs(s0(i, 0)) < 0.5f, Errc::invalid_argument,
            "project_to_surface requires |sdf| < 0.5 at the start; got " +
                std::to_string(std::abs(s0(i, 0))) + " at point " +
                std::to_string(i));
  const int n = (int)pts.rows();
  MatX<float> x = pts;
  for (int it = 0; it < iters; ++it) {
    auto [s, g] = query_sdf_grad(x);
    for (int i = 0; i < n; ++i) {
      float gn2 = g.row(i).squaredNorm();
      require(std::sqrt(gn2) >= 1e-4f, Errc::numeric_error,
              "degenerate sdf gradient (|grad| < 1e-4) during surface "
              "projection at point " +
                  std::to_string(i));
      x.row(i) -= (s(i, 0) / gn2) * g.row(i);
    }
  }
  MatX<float> sf = query_sdf(x);
  for (int i = 0; i < n; ++i)
    require(std::abs(sf(i, 0)) < (float)cfg.tau_surface, Errc::numeric_error,
            "surface projection did not converge: |sdf|=" +
                std::to_string(std::abs(sf(i, 0))) + " at point " +
                std::to_string(i) + " after " + std::to_string(iters) +
                " iterations (tolerance " + std::to_string(cfg.tau_surface) +
                ")");
  return x;
}

MatX<float> NafModel::sample_surface_points(int n, uint64_t seed) const {
  require(n > 0, Errc::invalid_argument, "need n > 0 surface samples");
  Rng rng(static_cast<uint32_t>(seed * 2654435761ull + 5));
  MatX<float> found(n, 3);
  int got = 0;
  for (int round = 0; round < 16 && got < n; ++round) {
    int batch = std::max(64, 4 * (n - got));
    MatX<float> cand(batch, 3);
    for (int i = 0; i < batch; ++i)
      for (int j = 0; j < 3; ++j) cand(i, j) = (float)uniform(rng, -1.0, 1.0);
    std::vector<char> ok;
    MatX<float> proj = try_project_to_surface(cand, ok);
    for (int i = 0; i < batch && got < n; ++i)
      if (ok[i] && proj.row(i).cwiseAbs().maxCoeff() <= 1.0f)
        found.row(got++) = proj.row(i);
  }
  require(got > 0, Errc::numeric_error,
          "no surface samples found: the field has no reachable zero level "
          "set inside the canonical cube");
  return found.topRows(got);
}

VecX<float> NafModel::mean_surface_descriptor(int n, uint64_t seed) const {
  MatX<float> pts = sample_surface_points(n, seed);
  return query_feature(pts).colwise().mean().transpose();
}

}  // namespace naf
