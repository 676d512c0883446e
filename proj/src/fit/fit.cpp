#include "fit/fit.hpp"

#include <cmath>
#include <fstream>

#include "field/init.hpp"

namespace naf {

namespace {

void check_finite_graph(const ad::Tape<float>& tape, const char* phase,
                        int step) {
  auto bad = tape.first_nonfinite();
  if (bad >= 0)
    raise(Errc::fit_divergence,
          std::string(phase) + " fit diverged at step " + std::to_string(step) +
              ": primitive '" + ad::op_name(tape.node(bad).op) +
              "' produced a non-finite value");
}

}  // namespace

StaticBatch make_static_batch(const SceneSupervision& sup, const NafConfig& cfg,
                              Rng& rng) {
  require(!sup.views.empty(), Errc::invalid_argument, "no supervision views");
  const int V = (int)sup.views.size();
  const int N = cfg.rays_per_batch;
  const int S = cfg.n_samples_fit;
  const int d = (int)sup.views[0].desc.cols();

  // Per-view foreground pixel lists for the 50/50 mask-balanced sampling.
  std::vector<std::vector<int>> fg(V);
  for (int v = 0; v < V; ++v)
    for (int i = 0; i < (int)sup.views[v].mask.rows(); ++i)
      if (sup.views[v].mask(i, 0) > 0.5f) fg[v].push_back(i);

  StaticBatch b;
  b.label_color.resize(N, 3);
  b.label_mask.resize(N, 1);
  b.label_fea.resize(N, d);
  b.label_cnt.resize(N, 1);
  b.fg_weight.resize(N, 1);
  b.eik_pts.resize(N + cfg.eikonal_cube_points, 3);

  b.rays.n_rays = N;
  b.rays.n_samples = S;
  b.rays.pixel_ids.resize(N);
  b.rays.points.resize((Eigen::Index)S * N, 3);
  b.rays.t.resize(N, S - 1);
  b.rays.tf.resize(N, 1);

  for (int r = 0; r < N; ++r) {
    int v = uniform_int(rng, 0, V - 1);
    const ObservationMaps& m = sup.views[v];
    int pid;
    if (!fg[v].empty() && uniform(rng, 0.0, 1.0) < 0.5)
      pid = fg[v][uniform_int(rng, 0, (int)fg[v].size() - 1)];
    else
      pid = uniform_int(rng, 0, m.W * m.H - 1);

    const Camera& cam = sup.cameras[v];
    RenderSlab slab = default_slab(cam, cfg.near_offset, cfg.far_offset);
    Vec3<double> o, dir;
    cam.ray(pid % cam.W, pid / cam.W, o, dir);
    const double dt = (slab.t_f - slab.t_n) / S;
    for (int i = 0; i < S; ++i) {
      double t = slab.t_n + (i + uniform(rng, 0.0, 1.0)) * dt;
      b.rays.points.row((Eigen::Index)i * N + r) = (o + t * dir).transpose();
      if (i < S - 1) b.rays.t(r, i) = t;
    }
    b.rays.tf(r, 0) = slab.t_f;
    b.rays.pixel_ids[r] = pid;

    b.label_color.row(r) = m.color.row(pid).cast<double>();
    b.label_mask(r, 0) = m.mask(pid, 0);
    b.label_fea.row(r) = m.desc.row(pid).cast<double>();
    b.label_cnt(r, 0) = m.contact(pid, 0);
    b.fg_weight(r, 0) = m.mask(pid, 0);

    // one eikonal point per ray, at a random sample
    int si = uniform_int(rng, 0, S - 1);
    b.eik_pts.row(r) = b.rays.points.row((Eigen::Index)si * N + r);
  }
  for (int i = 0; i < cfg.eikonal_cube_points; ++i)
    for (int j = 0; j < 3; ++j)
      b.eik_pts(N + i, j) = uniform(rng, -1.0, 1.0);
  return b;
}

StaticLossBreakdown static_loss(const NafModel& model,
                                const StaticBatch& batch) {
  ad::Tape<float> tape;
  ad::ParamNodes<float> nodes(tape, ad::empty_params<float>(), &model.statics);
  FieldGraph<float> g(tape, nodes, model.cfg);
  auto L = static_loss_graph<float>(g, batch.cast<float>(), model.cfg);
  StaticLossBreakdown out;
  out.total = tape.scalar(L.total);
  out.col = tape.scalar(L.col);
  out.reg = tape.scalar(L.reg);
  out.msk = tape.scalar(L.msk);
  out.fea = tape.scalar(L.fea);
  out.cnt = tape.scalar(L.cnt);
  return out;
}

std::vector<FitTraceRow> fit_static(NafModel& model,
                                    const SceneSupervision& sup) {
  require((int)sup.views.size() >= 4, Errc::invalid_argument,
          "static fit needs at least 4 supervision views");
  const NafConfig& cfg = model.cfg;
  Rng rng(static_cast<uint32_t>(cfg.seed));
  ad::AdamState<float> adam;
  ad::AdamConfig acfg;
  acfg.lr = cfg.lr_static;

  std::vector<FitTraceRow> trace;
  trace.reserve(cfg.static_iters);
  for (int step = 0; step < cfg.static_iters; ++step) {
    StaticBatchT<float> batch = make_static_batch(sup, cfg, rng).cast<float>();

    ad::Tape<float> tape;
    ad::ParamNodes<float> nodes(tape, model.statics);
    FieldGraph<float> g(tape, nodes, cfg);
    auto L = static_loss_graph<float>(g, batch, cfg);
    check_finite_graph(tape, "static", step);
    tape.backward(L.total);
    VecX<float> grad = nodes.collect_grad();
    if (!grad.allFinite())
      raise(Errc::fit_divergence, "static fit diverged at step " +
                                      std::to_string(step) +
                                      ": gradient is not finite");

    VecX<float> flat = model.statics.flatten();
    ad::adam_step(flat, grad, adam, acfg);
    model.statics.unflatten(flat);

    trace.push_back({step, (double)tape.scalar(L.total),
                     (double)tape.scalar(L.col), (double)tape.scalar(L.reg),
                     (double)tape.scalar(L.msk), (double)tape.scalar(L.fea),
                     (double)tape.scalar(L.cnt)});
  }
  return trace;
}

DynamicBatch make_dynamic_batch(const PointFlowSet& flows,
                                const std::vector<int>& rows) {
  require(!rows.empty(), Errc::invalid_argument, "empty dynamic batch");
  const int H = flows.horizon;
  DynamicBatch b;
  b.base.resize((int)rows.size(), 3);
  b.label_off.resize((int)rows.size(), 3 * H);
  b.label_vis.resize((int)rows.size(), H);
  for (int i = 0; i < (int)rows.size(); ++i) {
    int r = rows[i];
    require(r >= 0 && r < (int)flows.flows.rows(), Errc::invalid_argument,
            "batch row out of range");
    b.base.row(i) = flows.flows.row(r).segment(0, 3);
    for (int k = 0; k < H; ++k)
      b.label_off.row(i).segment(3 * k, 3) =
          flows.flows.row(r).segment(3 * k, 3) - b.base.row(i);
    b.label_vis.row(i) = flows.vis.row(r);
  }
  return b;
}

double dynamic_loss(const NafModel& model, const PointFlowSet& flows,
                    const std::vector<int>& rows) {
  DynamicBatchT<float> batch = make_dynamic_batch(flows, rows).cast<float>();
  ad::Tape<float> tape;
  ad::ParamNodes<float> nodes(tape, ad::empty_params<float>(), &model.statics,
                              &model.dynamics);
  FieldGraph<float> g(tape, nodes, model.cfg);
  auto root = dynamic_loss_graph<float>(g, batch);
  return tape.scalar(root);
}

namespace {

std::vector<int> all_rows(const PointFlowSet& flows) {
  std::vector<int> rows((size_t)flows.flows.rows());
  for (int i = 0; i < (int)rows.size(); ++i) rows[i] = i;
  return rows;
}

// One optimization run over the dynamics parameters; shared by fit_dynamic
// and fine_tune_action.
std::vector<DynTraceRow> run_dynamic_loop(NafModel& model,
                                          const PointFlowSet& flows, int iters,
                                          uint64_t seed) {
  const NafConfig& cfg = model.cfg;
  Rng rng(static_cast<uint32_t>(seed));
  ad::AdamState<float> adam;
  ad::AdamConfig acfg;
  acfg.lr = cfg.lr_dynamic;
  const int NP = (int)flows.flows.rows();

  std::vector<DynTraceRow> trace;
  trace.reserve(iters);
  for (int step = 0; step < iters; ++step) {
    std::vector<int> rows(std::min(cfg.points_per_step, NP));
    for (auto& r : rows) r = uniform_int(rng, 0, NP - 1);
    DynamicBatchT<float> batch = make_dynamic_batch(flows, rows).cast<float>();

    ad::Tape<float> tape;
    ad::ParamNodes<float> nodes(tape, model.dynamics, &model.statics);
    FieldGraph<float> g(tape, nodes, cfg);
    auto root = dynamic_loss_graph<float>(g, batch);
    check_finite_graph(tape, "dynamic", step);
    tape.backward(root);
    VecX<float> grad = nodes.collect_grad();
    if (!grad.allFinite())
      raise(Errc::fit_divergence, "dynamic fit diverged at step " +
                                      std::to_string(step) +
                                      ": gradient is not finite");

    VecX<float> flat = model.dynamics.flatten();
    ad::adam_step(flat, grad, adam, acfg);
    model.dynamics.unflatten(flat);
    trace.push_back({step, (double)tape.scalar(root)});
  }
  return trace;
}

}  // namespace

std::vector<DynTraceRow> fit_dynamic(NafModel& model,
                                     const PointFlowSet& flows) {
  require(flows.horizon == model.cfg.horizon, Errc::invalid_argument,
          "flow horizon does not match the model horizon");
  auto trace = run_dynamic_loop(model, flows, model.cfg.dynamic_iters,
                                model.cfg.seed + 1);
  model.has_dynamics = true;
  return trace;
}

FineTuneResult fine_tune_action(NafModel& model, const PointFlowSet& flows,
                                ActionInit init) {
  require(flows.horizon == model.cfg.horizon, Errc::invalid_argument,
          "flow horizon does not match the model horizon");
  const NafConfig& cfg = model.cfg;
  const std::vector<int> full = all_rows(flows);

  // Converged-from-scratch floor on the full set.
  NafModel scratch = model;
  scratch.dynamics = init_dynamic_params<float>(cfg);
  run_dynamic_loop(scratch, flows, cfg.dynamic_iters, cfg.seed + 2);
  scratch.has_dynamics = true;
  double floor = dynamic_loss(scratch, flows, full);

  FineTuneResult res;
  res.scratch_floor = floor;
  res.threshold = 1.25 * floor;

  if (init == ActionInit::kScratch)
    model.dynamics = init_dynamic_params<float>(cfg);

  const int budget = 5 * cfg.dynamic_iters;
  Rng rng(static_cast<uint32_t>(cfg.seed + 3));
  ad::AdamState<float> adam;
  ad::AdamConfig acfg;
  acfg.lr = cfg.lr_dynamic;
  const int NP = (int)flows.flows.rows();

  for (int step = 0; step <= budget; ++step) {
    double cur = dynamic_loss(model, flows, full);
    res.trace.push_back({step, cur});
    if (cur <= res.threshold) {
      res.steps_to_threshold = step;
      model.has_dynamics = true;
      return res;
    }
    if (step == budget) break;

    std::vector<int> rows(std::min(cfg.points_per_step, NP));
    for (auto& r : rows) r = uniform_int(rng, 0, NP - 1);
    DynamicBatchT<float> batch = make_dynamic_batch(flows, rows).cast<float>();
    ad::Tape<float> tape;
    ad::ParamNodes<float> nodes(tape, model.dynamics, &model.statics);
    FieldGraph<float> g(tape, nodes, cfg);
    auto root = dynamic_loss_graph<float>(g, batch);
    check_finite_graph(tape, "fine-tune", step);
    tape.backward(root);
    VecX<float> grad = nodes.collect_grad();
    if (!grad.allFinite())
      raise(Errc::fit_divergence, "fine-tune diverged at step " +
                                      std::to_string(step) +
                                      ": gradient is not finite");
    VecX<float> flat = model.dynamics.flatten();
    ad::adam_step(flat, grad, adam, acfg);
    model.dynamics.unflatten(flat);
  }
  raise(Errc::fit_divergence,
        "fine-tune never reached the loss threshold " +
            std::to_string(res.threshold) + " within " +
            std::to_string(budget) + " steps");
}

void write_trace_csv(const std::vector<FitTraceRow>& trace,
                     const std::string& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write trace: " + path);
  out << "step,total,color,eikonal,mask,feature,contact\n";
  for (const auto& r : trace)
    out << r.step << ',' << r.total << ',' << r.col << ',' << r.reg << ','
        << r.msk << ',' << r.fea << ',' << r.cnt << '\n';
}

void write_trace_csv(const std::vector<DynTraceRow>& trace,
                     const std::string& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write trace: " + path);
  out << "step,total\n";
  for (const auto& r : trace) out << r.step << ',' << r.total << '\n';
}

}  // namespace naf
