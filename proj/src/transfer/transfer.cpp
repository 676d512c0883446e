#include "transfer/transfer.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <limits>

#include "ad/adam.hpp"
#include "transfer/align_graph.hpp"

namespace naf {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using TapeF = ad::Tape<float>;
using IdF = TapeF::Id;

std::string sim3_dump(const Sim3d& g) {
  Vec3<double> aa = matrix_to_axis_angle(g.R);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "s=%.6g axis_angle=(%.6g,%.6g,%.6g) t=(%.6g,%.6g,%.6g)", g.s,
                aa.x(), aa.y(), aa.z(), g.t.x(), g.t.y(), g.t.z());
  return buf;
}

// Shared descent loop: evaluates at the current base, tracks the best-so-far
// iterate, retracts the chart after every Adam step (moments persist across
// retractions).
AlignResult optimize_sim3(
    const NafModel& model, const Sim3d& init, int iters, double lr,
    const char* label, const std::function<IdF(AlignCtx<float>&)>& build) {
  ad::ParamVectorT<float> chart = zero_chart<float>();
  Sim3d base = init;
  AlignResult best;
  best.T = init;
  best.energy = kInf;
  ad::AdamState<float> adam;
  ad::AdamConfig acfg;
  acfg.lr = lr;

  for (int it = 0; it <= iters; ++it) {
    TapeF tape;
    ad::ParamNodes<float> nodes(tape, chart, &model.statics);
    FieldGraph<float> graph(tape, nodes, model.cfg);
    ChartWarpT<float> warp = make_chart_warp(tape, nodes);
    AlignCtx<float> ctx{tape, graph, warp, base};
    IdF root = build(ctx);
    double e = tape.scalar(root);
    if (!std::isfinite(e))
      raise(Errc::numeric_error,
            std::string(label) + " alignment energy became non-finite at "
            "iteration " + std::to_string(it) + "; iterate " + sim3_dump(base));
    if (e < best.energy) {
      best.energy = e;
      best.T = base;
    }
    best.trace.push_back(best.energy);
    if (it == iters) break;

    tape.backward(root);
    VecX<float> grad = nodes.collect_grad();
    if (!grad.allFinite())
      raise(Errc::numeric_error,
            std::string(label) + " alignment gradient became non-finite at "
            "iteration " + std::to_string(it) + "; iterate " + sim3_dump(base));
    VecX<float> flat = chart.flatten();
    ad::adam_step(flat, grad, adam, acfg);
    chart.unflatten(flat);
    base = chart_to_sim3(chart).compose(base);
    chart = zero_chart<float>();
  }
  return best;
}

double mean_abs_sdf(const NafModel& model, const MatX<double>& pts) {
  MatX<float> s = model.query_sdf(pts.cast<float>());
  return s.cwiseAbs().mean();
}

// All 24 proper sign/permutation matrices.
std::vector<Mat3<double>> proper_signed_permutations() {
  std::vector<Mat3<double>> out;
  int perm[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                    {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (auto& p : perm)
    for (int s = 0; s < 8; ++s) {
      Mat3<double> m = Mat3<double>::Zero();
      for (int r = 0; r < 3; ++r)
        m(r, p[r]) = (s >> r & 1) ? -1.0 : 1.0;
      if (m.determinant() > 0) out.push_back(m);
    }
  return out;
}

Aabb points_bbox(const MatX<double>& pts) {
  Aabb b;
  b.lo = pts.colwise().minCoeff().transpose();
  b.hi = pts.colwise().maxCoeff().transpose();
  return b;
}

AlignResult coarse_align_impl(const NafModel& model,
                              const TargetObservation& target,
                              const Sim3d& init, int iters) {
  const NafConfig& cfg = model.cfg;
  AlignInputs data = make_align_inputs(model, target);
  auto build = [&](AlignCtx<float>& c) -> IdF {
    return coarse_energy(c, data, cfg);
  };
  return optimize_sim3(model, init, iters, cfg.lr_transfer, "coarse", build);
}

AlignResult fine_align_impl(const NafModel& model,
                            const TargetObservation& target, const Sim3d& init,
                            int iters) {
  const NafConfig& cfg = model.cfg;
  AlignInputs data = make_align_inputs(model, target);
  ContactData region = contact_region(model);
  MatX<double> tqc = contact_candidates(region, target);
  auto build = [&](AlignCtx<float>& c) -> IdF {
    return fine_energy(c, data, region, tqc, cfg);
  };
  return optimize_sim3(model, init, iters, cfg.lr_transfer, "fine", build);
}

}  // namespace

Sim3d canonicalize(const MatX<double>& cloud, const NafModel& model) {
  require(cloud.rows() >= 50, Errc::invalid_argument,
          "canonicalization needs at least 50 points, got " +
              std::to_string(cloud.rows()));
  const NafConfig& cfg = model.cfg;

  Vec3<double> mu = cloud.colwise().mean().transpose();
  MatX<double> centered = cloud.rowwise() - mu.transpose();
  Mat3<double> cov =
      centered.transpose() * centered / (double)cloud.rows();
  Eigen::SelfAdjointEigenSolver<Mat3<double>> es(cov);
  const auto& ev = es.eigenvalues();  // ascending
  if (!(ev(0) > 0) || ev(0) < 1e-10 * ev(2))
    raise(Errc::numeric_error,
          "degenerate point cloud: covariance rank below 3");
  Mat3<double> axes = es.eigenvectors();
  if (axes.determinant() < 0) axes.col(0) *= -1.0;

  MatX<double> surf = model.sample_surface_points(512, cfg.seed).cast<double>();
  Aabb nb = points_bbox(surf);
  Aabb cb = points_bbox(cloud);
  require(cb.diagonal() > 1e-9, Errc::numeric_error,
          "degenerate point cloud: zero bounding box");
  const double s0 = nb.diagonal() / cb.diagonal();
  const Vec3<double> center = nb.center();

  MatX<double> sub = strided_subsample(cloud, 256);
  Sim3d best;
  double best_score = kInf;
  for (const Mat3<double>& p : proper_signed_permutations()) {
    Sim3d cand;
    cand.s = s0;
    cand.R = p * axes.transpose();
    cand.t = center - s0 * (cand.R * mu);
    double score = mean_abs_sdf(model, cand.apply_points(sub));
    if (score < best_score) {
      best_score = score;
      best = cand;
    }
  }

  auto build = [&](AlignCtx<float>& c) -> IdF {
    MatX<float> pbase = c.base.apply_points(sub).cast<float>();
    IdF warped = c.warp.apply(c.tape.input(pbase));
    return c.tape.mean_all(c.tape.abs(c.graph.sdf(warped)));
  };
  return optimize_sim3(model, best, 200, cfg.lr_transfer, "canonicalization",
                       build)
      .T;
}

std::vector<Hypothesis> sample_hypotheses(const NafModel& model, int width,
                                          int height, double fov_deg) {
  const NafConfig& cfg = model.cfg;
  require(cfg.n_ring_views >= 4, Errc::invalid_config,
          "hypothesis ring needs at least 4 views");
  RenderHeads heads;
  heads.fea = true;
  heads.cnt = true;
  std::vector<Hypothesis> out;
  for (int i = 0; i < cfg.n_ring_views; ++i) {
    Hypothesis h;
    h.azimuth_deg = 360.0 * i / cfg.n_ring_views;
    h.camera = make_orbit_camera(width, height, fov_deg,
                                 h.azimuth_deg * M_PI / 180.0,
                                 cfg.ring_elevation_deg * M_PI / 180.0,
                                 cfg.ring_distance);
    h.maps = render_image(model, h.camera,
                          default_slab(h.camera, cfg.near_offset,
                                       cfg.far_offset),
                          cfg.n_samples_transfer, heads);
    out.push_back(std::move(h));
  }
  return out;
}

bool visibility_filter(const Hypothesis& hyp, double tau_vis) {
  require(hyp.maps.contact.size() > 0, Errc::invalid_argument,
          "hypothesis has no rendered contact map");
  return hyp.maps.contact.maxCoeff() >= (float)tau_vis;
}

std::vector<PixelPair> best_buddy_match(const ObservationMaps& map_a,
                                        const ObservationMaps& map_b) {
  require(map_a.desc.cols() == map_b.desc.cols(), Errc::invalid_argument,
          "descriptor dimensions do not match");
  std::vector<int> fa, fb;
  for (int i = 0; i < (int)map_a.mask.rows(); ++i)
    if (map_a.mask(i, 0) > 0.5f) fa.push_back(i);
  for (int i = 0; i < (int)map_b.mask.rows(); ++i)
    if (map_b.mask(i, 0) > 0.5f) fb.push_back(i);
  if (fa.empty() || fb.empty()) return {};

  auto gather_norm = [](const ObservationMaps& m, const std::vector<int>& idx) {
    MatX<float> out((int)idx.size(), (int)m.desc.cols());
    for (int i = 0; i < (int)idx.size(); ++i) {
      VecX<float> row = m.desc.row(idx[i]);
      if (float n = row.norm(); n > 1e-12f) row /= n;
      out.row(i) = row.transpose();
    }
    return out;
  };
  MatX<float> a = gather_norm(map_a, fa);
  MatX<float> b = gather_norm(map_b, fb);
  MatX<float> sim = a * b.transpose();

  std::vector<int> best_b((int)fa.size()), best_a((int)fb.size());
  for (int i = 0; i < (int)fa.size(); ++i)
    sim.row(i).maxCoeff(&best_b[i]);
  for (int j = 0; j < (int)fb.size(); ++j)
    sim.col(j).maxCoeff(&best_a[j]);

  std::vector<PixelPair> pairs;
  for (int i = 0; i < (int)fa.size(); ++i)
    if (best_a[best_b[i]] == i) pairs.push_back({fa[i], fb[best_b[i]]});
  return pairs;
}

std::vector<int> rank_hypotheses(std::vector<Hypothesis>& hyps,
                                 const ObservationMaps& target_maps, int k) {
  std::vector<int> feasible;
  for (int i = 0; i < (int)hyps.size(); ++i)
    if (hyps[i].feasible) feasible.push_back(i);
  require(!feasible.empty(), Errc::transfer_failure,
          "no feasible view hypothesis: the contact region is not visible "
          "from any ring view");

  for (int i : feasible) {
    auto pairs = best_buddy_match(hyps[i].maps, target_maps);
    if ((int)pairs.size() < 10) {
      hyps[i].score = kInf;
      continue;
    }
    const int wa = hyps[i].maps.W, ha = hyps[i].maps.H;
    const int wb = target_maps.W, hb = target_maps.H;
    double acc = 0;
    for (const auto& pr : pairs) {
      double ax = (pr.a % wa) / std::max(1.0, wa - 1.0);
      double ay = (pr.a / wa) / std::max(1.0, ha - 1.0);
      double bx = (pr.b % wb) / std::max(1.0, wb - 1.0);
      double by = (pr.b / wb) / std::max(1.0, hb - 1.0);
      acc += (ax - bx) * (ax - bx) + (ay - by) * (ay - by);
    }
    hyps[i].score = acc / pairs.size();
  }

  std::sort(feasible.begin(), feasible.end(), [&](int a, int b) {
    if (hyps[a].score != hyps[b].score) return hyps[a].score < hyps[b].score;
    return hyps[a].azimuth_deg < hyps[b].azimuth_deg;
  });
  if ((int)feasible.size() > k) feasible.resize(k);
  return feasible;
}

AlignResult coarse_align(const NafModel& model,
                         const TargetObservation& target, const Sim3d& init) {
  return coarse_align_impl(model, target, init, model.cfg.coarse_iters);
}

AlignResult fine_align(const NafModel& model, const TargetObservation& target,
                       const Sim3d& coarse) {
  return fine_align_impl(model, target, coarse, model.cfg.fine_iters);
}

Vec3<double> extract_contact_point(const NafModel& model, const Sim3d& t_ot,
                                   const MatX<double>& cloud) {
  require(cloud.rows() > 0, Errc::invalid_argument, "empty point cloud");
  MatX<float> prob =
      model.query_contact(t_ot.apply_points(cloud).cast<float>());
  int best = 0;
  for (int i = 1; i < (int)prob.rows(); ++i)
    if (prob(i, 0) > prob(best, 0)) best = i;
  return cloud.row(best).transpose();
}

TransferResult transfer_policy(const NafModel& model,
                               const TargetObservation& target,
                               const Posed& gripper_init,
                               const TransferOptions& opts) {
  require(model.has_dynamics, Errc::invalid_argument,
          "transfer needs a completed dynamic fit");
  const NafConfig& cfg = model.cfg;
  TransferResult res;

  Sim3d canon = canonicalize(target.cloud, model);
  res.diag.canon = canon;
  res.diag.canon_mean_abs_sdf =
      mean_abs_sdf(model, canon.apply_points(strided_subsample(
                              target.cloud, cfg.align_points)));

  const double fov_deg =
      2.0 * std::atan(0.5 * target.camera.W / target.camera.fx) * 180.0 / M_PI;
  std::vector<Hypothesis> hyps =
      sample_hypotheses(model, target.camera.W, target.camera.H, fov_deg);
  for (auto& h : hyps)
    h.feasible = opts.use_filter ? visibility_filter(h, cfg.tau_vis) : true;

  std::vector<int> top;
  if (opts.use_rank) {
    top = rank_hypotheses(hyps, target.maps, cfg.top_k);
  } else {
    for (int i = 0; i < (int)hyps.size() && (int)top.size() < cfg.top_k; ++i)
      if (hyps[i].feasible) top.push_back(i);
    require(!top.empty(), Errc::transfer_failure,
            "no feasible view hypothesis: the contact region is not visible "
            "from any ring view");
  }

  Vec3<double> mu = target.cloud.colwise().mean().transpose();
  int chosen = -1;
  double chosen_energy = kInf;
  Sim3d chosen_T;
  for (int idx : top) {
    Sim3d init;
    init.s = canon.s;
    init.R = hyps[idx].camera.pose.R * target.camera.pose.R.transpose();
    init.t = canon.apply(mu) - init.s * (init.R * mu);

    AlignResult coarse =
        coarse_align_impl(model, target, init,
                          opts.use_optimization ? cfg.coarse_iters : 0);
    AlignResult fine = (opts.use_optimization && opts.use_fine)
                           ? fine_align_impl(model, target, coarse.T,
                                             cfg.fine_iters)
                           : coarse;

    CandidateDiag cd;
    cd.azimuth_deg = hyps[idx].azimuth_deg;
    cd.corr_score = hyps[idx].score;
    cd.coarse_energy = coarse.energy;
    cd.fine_energy = fine.energy;
    res.diag.candidates.push_back(cd);
    if (fine.energy < chosen_energy) {
      chosen_energy = fine.energy;
      chosen_T = fine.T;
      chosen = (int)res.diag.candidates.size() - 1;
      res.diag.chosen_azimuth_deg = hyps[idx].azimuth_deg;
    }
  }
  require(chosen >= 0, Errc::transfer_failure, "all alignments failed");
  res.diag.chosen = chosen;
  res.diag.final_transform = chosen_T;
  res.transform = chosen_T;

  res.contact = extract_contact_point(model, chosen_T, target.cloud);

  MatX<float> canon_pts =
      chosen_T.apply_points(target.cloud).cast<float>();
  std::vector<char> ok;
  MatX<float> projected = model.try_project_to_surface(canon_pts, ok);
  std::vector<int> keep;
  for (int i = 0; i < (int)ok.size(); ++i)
    if (ok[i]) keep.push_back(i);
  require((int)keep.size() >= 3, Errc::transfer_failure,
          "fewer than 3 target points project onto the fitted surface");
  MatX<float> on_surf((int)keep.size(), 3);
  for (int i = 0; i < (int)keep.size(); ++i)
    on_surf.row(i) = projected.row(keep[i]);

  NafModel::FlowResult fr = model.query_flow(on_surf);
  Sim3d inv = chosen_T.inverse();
  PointFlowSet pfs;
  pfs.horizon = cfg.horizon;
  pfs.flows.resize((int)keep.size(), 3 * cfg.horizon);
  pfs.vis = fr.vis.cast<double>();
  for (int k = 0; k < cfg.horizon; ++k) {
    MatX<double> step =
        fr.flows.block(0, 3 * k, (int)keep.size(), 3).cast<double>();
    pfs.flows.block(0, 3 * k, (int)keep.size(), 3) = inv.apply_points(step);
  }
  res.diag.n_flow_points = (int)keep.size();

  res.trajectory = flows_to_trajectory(pfs, gripper_init, opts.keyframes);
  return res;
}

void write_diagnostics_json(const TransferDiagnostics& diag,
                            const std::string& path) {
  auto sim3j = [](const Sim3d& g) {
    Vec3<double> aa = matrix_to_axis_angle(g.R);
    return nlohmann::json{{"scale", g.s},
                          {"axis_angle", {aa.x(), aa.y(), aa.z()}},
                          {"translation", {g.t.x(), g.t.y(), g.t.z()}}};
  };
  nlohmann::json j;
  j["canonicalization"] = sim3j(diag.canon);
  j["canonicalization_mean_abs_sdf"] = diag.canon_mean_abs_sdf;
  j["chosen_candidate"] = diag.chosen;
  j["chosen_azimuth_deg"] = diag.chosen_azimuth_deg;
  j["final_transform"] = sim3j(diag.final_transform);
  j["flow_points"] = diag.n_flow_points;
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : diag.candidates)
    j["candidates"].push_back(
        {{"azimuth_deg", c.azimuth_deg},
         {"correspondence_score",
          std::isfinite(c.corr_score) ? c.corr_score : -1.0},
         {"coarse_energy", c.coarse_energy},
         {"fine_energy", c.fine_energy}});
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write diagnostics: " + path);
  out << j.dump(2) << '\n';
}

void write_overlay_ply(const TransferResult& res,
                       const TargetObservation& target,
                       const std::string& path) {
  MatX<double> aligned = res.transform.apply_points(target.cloud);
  const int nc = (int)aligned.rows();
  const int nt = (int)res.trajectory.poses.size();
  Vec3<double> contact = res.transform.apply(res.contact);

  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write overlay: " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << nc + 1 + nt
      << "\nproperty float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "element edge " << std::max(0, nt - 1)
      << "\nproperty int vertex1\nproperty int vertex2\nend_header\n";
  out.precision(7);
  for (int i = 0; i < nc; ++i)
    out << aligned(i, 0) << ' ' << aligned(i, 1) << ' ' << aligned(i, 2)
        << " 180 180 180\n";
  out << contact.x() << ' ' << contact.y() << ' ' << contact.z()
      << " 255 40 40\n";
  for (int i = 0; i < nt; ++i) {
    Vec3<double> p = res.transform.apply(res.trajectory.poses[i].t);
    out << p.x() << ' ' << p.y() << ' ' << p.z() << " 40 200 60\n";
  }
  for (int i = 0; i + 1 < nt; ++i)
    out << nc + 1 + i << ' ' << nc + 2 + i << '\n';
}

}  // namespace naf
