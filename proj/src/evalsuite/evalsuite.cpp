#include "evalsuite/evalsuite.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "policy/policy.hpp"
#include "render/camera.hpp"

namespace naf {

namespace {

uint32_t trial_seed(uint64_t seed, int trial) {
  uint64_t x = seed + 0x9E3779B97F4A7C15ull * (uint64_t)(trial + 1);
  x ^= x >> 33;
  x *= 0xFF51AFD7ED558CCDull;
  x ^= x >> 33;
  return (uint32_t)x;
}

Vec3<double> random_unit(Rng& rng) {
  while (true) {
    Vec3<double> v(normal(rng), normal(rng), normal(rng));
    double n = v.norm();
    if (n > 1e-6) return v / n;
  }
}

Posed map_pose(const Sim3d& g, const Posed& p) {
  Posed out;
  out.R = g.R * p.R;
  out.t = g.apply(p.t);
  return out;
}

MatX<double> apply_pose_rows(const Posed& p, const MatX<double>& pts) {
  MatX<double> out(pts.rows(), 3);
  for (int i = 0; i < (int)pts.rows(); ++i)
    out.row(i) = p.apply(pts.row(i).transpose()).transpose();
  return out;
}

}  // namespace

Sim3d random_perturbation(Rng& rng, const PerturbationBounds& b, double diag) {
  Sim3d g;
  double angle = uniform(rng, 0.0, b.max_rot_deg * M_PI / 180.0);
  g.R = axis_angle_to_matrix<double>(random_unit(rng) * angle);
  g.s = uniform(rng, b.scale_lo, b.scale_hi);
  g.t = random_unit(rng) * uniform(rng, 0.0, b.max_trans_frac * diag);
  return g;
}

TrialResult run_transfer_trial(const NafModel& model, const SceneSpec& scene,
                               int trial, uint64_t seed,
                               const TransferOptions& opts,
                               const PerturbationBounds& bounds) {
  TrialResult r;
  r.trial = trial;
  auto t0 = std::chrono::steady_clock::now();
  try {
    Rng rng(trial_seed(seed, trial));
    const double diag = shape_bbox(scene.shape).diagonal();
    Sim3d g = random_perturbation(rng, bounds, diag);

    Camera cam = make_orbit_camera(
        scene.transfer_resolution, scene.transfer_resolution,
        scene.rig.fov_deg, uniform(rng, 0.0, 2.0 * M_PI), 15.0 * M_PI / 180.0,
        scene.rig.distance, g.t);
    TargetObservation target = make_target_observation(
        scene.shape, scene.contact, g, cam, scene.descriptor_dim, 0.0,
        trial_seed(seed, trial) + 1);

    Posed init_c;
    init_c.R = Mat3<double>::Identity();
    init_c.t = scene.contact.anchor + Vec3<double>(0, 0, 0.4);
    Posed init_t = map_pose(g, init_c);

    TransferResult res = transfer_policy(model, target, init_t, opts);

    Sim3d gt = g.inverse();
    r.rot_err_deg =
        rotation_geodesic(res.transform.R, gt.R) * 180.0 / M_PI;
    r.trans_err_frac = (res.transform.t - gt.t).norm() / diag;
    r.scale_err_frac = std::abs(res.transform.s / gt.s - 1.0);

    // Exact reference: canonical points under the scripted motion, mapped
    // through the perturbation, composed with the same keyframe rule.
    MatX<double> xc = gt.apply_points(target.cloud);
    PointFlowSet ref;
    ref.horizon = scene.motion.horizon;
    ref.flows.resize(xc.rows(), 3 * ref.horizon);
    ref.vis = MatX<double>::Ones(xc.rows(), ref.horizon);
    for (int k = 0; k < ref.horizon; ++k) {
      MatX<double> stepped = apply_pose_rows(scene.motion.pose_at(k), xc);
      ref.flows.block(0, 3 * k, xc.rows(), 3) = g.apply_points(stepped);
    }
    Trajectory want = flows_to_trajectory(ref, init_t, opts.keyframes);
    require(want.poses.size() == res.trajectory.poses.size(),
            Errc::invalid_argument, "trajectory lengths differ");
    const double tdiag = g.s * diag;
    for (size_t i = 0; i < want.poses.size(); ++i) {
      double rot = rotation_geodesic(want.poses[i].R,
                                     res.trajectory.poses[i].R) *
                   180.0 / M_PI;
      double trans =
          (want.poses[i].t - res.trajectory.poses[i].t).norm() / tdiag;
      r.traj_rot_err_deg = std::max(r.traj_rot_err_deg, rot);
      r.traj_trans_err_frac = std::max(r.traj_trans_err_frac, trans);
    }
    r.completed = true;
  } catch (const Error& e) {
    r.error = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                            t0)
                  .count();
  return r;
}

std::vector<TrialResult> run_sweep(const NafModel& model,
                                   const SceneSpec& scene, int n_trials,
                                   uint64_t seed, const TransferOptions& opts,
                                   const PerturbationBounds& bounds) {
  std::vector<TrialResult> out;
  for (int i = 0; i < n_trials; ++i)
    out.push_back(run_transfer_trial(model, scene, i, seed, opts, bounds));
  return out;
}

SweepSummary summarize(const std::vector<TrialResult>& trials,
                       const SweepThresholds& thr) {
  SweepSummary s;
  s.n = (int)trials.size();
  for (const auto& t : trials) {
    s.seconds += t.seconds;
    if (!t.completed) continue;
    ++s.completed;
    s.mean_rot_err_deg += t.rot_err_deg;
    s.mean_trans_err_frac += t.trans_err_frac;
    s.mean_scale_err_frac += t.scale_err_frac;
    if (t.rot_err_deg <= thr.rot_deg && t.trans_err_frac <= thr.trans_frac &&
        t.scale_err_frac <= thr.scale_frac)
      ++s.align_success;
    if (t.traj_rot_err_deg <= thr.traj_rot_deg &&
        t.traj_trans_err_frac <= thr.traj_trans_frac)
      ++s.traj_success;
  }
  if (s.completed > 0) {
    s.mean_rot_err_deg /= s.completed;
    s.mean_trans_err_frac /= s.completed;
    s.mean_scale_err_frac /= s.completed;
  }
  if (s.n > 0) {
    s.align_rate = (double)s.align_success / s.n;
    s.traj_rate = (double)s.traj_success / s.n;
  }
  return s;
}

void write_trials_csv(const std::vector<TrialResult>& trials,
                      const std::string& scene_name, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write trials: " + path);
  out << "scene,trial,completed,rot_err_deg,trans_err_frac,scale_err_frac,"
         "traj_rot_err_deg,traj_trans_err_frac,seconds,error\n";
  for (const auto& t : trials) {
    std::string err = t.error;
    for (auto& c : err)
      if (c == ',' || c == '\n') c = ';';
    out << scene_name << ',' << t.trial << ',' << (t.completed ? 1 : 0) << ','
        << t.rot_err_deg << ',' << t.trans_err_frac << ','
        << t.scale_err_frac << ',' << t.traj_rot_err_deg << ','
        << t.traj_trans_err_frac << ',' << t.seconds << ',' << err << '\n';
  }
}

}  // namespace naf
