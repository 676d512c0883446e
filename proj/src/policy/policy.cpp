#include "policy/policy.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>

namespace naf {

std::vector<int> downsample_flows(int horizon, int h_prime) {
  require(h_prime >= 1, Errc::invalid_argument, "need at least one keyframe step");
  require(h_prime <= horizon, Errc::invalid_argument,
          "keyframe count exceeds the flow horizon");
  std::vector<int> idx;
  for (int i = 0; i <= h_prime; ++i) {
    int k = (int)std::lround((double)i * (horizon - 1) / h_prime);
    if (idx.empty() || k != idx.back()) idx.push_back(k);
  }
  return idx;
}

Posed rigid_from_weighted_pairs(const MatX<double>& p_t,
                                const MatX<double>& p_next,
                                const VecX<double>& w) {
  const int n = (int)p_t.rows();
  require(n >= 3, Errc::invalid_argument,
          "rigid fit needs at least 3 points, got " + std::to_string(n));
  require(p_next.rows() == n && p_t.cols() == 3 && p_next.cols() == 3,
          Errc::invalid_argument, "rigid fit point sets do not match");
  require(w.size() == n && w.minCoeff() > 0.0, Errc::invalid_argument,
          "rigid fit weights must be positive, one per point");
  const double wsum = w.sum();

  Vec3<double> mu_t = (p_t.transpose() * w) / wsum;
  Vec3<double> mu_n = (p_next.transpose() * w) / wsum;

  Mat3<double> cov = Mat3<double>::Zero();
  for (int i = 0; i < n; ++i)
    cov += w(i) * (p_next.row(i).transpose() - mu_n) *
           (p_t.row(i).transpose() - mu_t).transpose();

  Eigen::JacobiSVD<Mat3<double>> svd(cov,
                                     Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (sv(1) < 1e-12 + 1e-9 * sv(0))
    raise(Errc::numeric_error,
          "rigid fit is rank deficient (collinear or coincident points)");

  Mat3<double> d = Mat3<double>::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0)
    d(2, 2) = -1.0;
  Posed out;
  out.R = svd.matrixU() * d * svd.matrixV().transpose();
  out.t = mu_n - out.R * mu_t;
  return out;
}

Posed weighted_rigid_transform(const MatX<double>& p_t,
                               const MatX<double>& p_next,
                               const Vec3<double>& gripper_pos, double beta) {
  require(p_t.rows() > 0 && p_t.cols() == 3, Errc::invalid_argument,
          "rigid fit point sets do not match");
  VecX<double> w(p_t.rows());
  for (int i = 0; i < p_t.rows(); ++i)
    w(i) = 1.0 / ((p_t.row(i).transpose() - gripper_pos).norm() + beta);
  return rigid_from_weighted_pairs(p_t, p_next, w);
}

Trajectory flows_to_trajectory(const PointFlowSet& flows,
                               const Posed& gripper_init, int h_prime,
                               double beta) {
  const std::vector<int> keys = downsample_flows(flows.horizon, h_prime);
  const int n = (int)flows.flows.rows();

  Trajectory traj;
  traj.poses.push_back(gripper_init);
  for (int j = 1; j < (int)keys.size(); ++j) {
    const int a = keys[j - 1], b = keys[j];
    std::vector<int> rows;
    for (int r = 0; r < n; ++r)
      if (flows.vis(r, a) > 0.5 && flows.vis(r, b) > 0.5) rows.push_back(r);
    if ((int)rows.size() < 3)
      raise(Errc::invalid_argument,
            "fewer than 3 visible points between flow steps " +
                std::to_string(a) + " and " + std::to_string(b));

    MatX<double> pa((int)rows.size(), 3), pb((int)rows.size(), 3);
    for (int i = 0; i < (int)rows.size(); ++i) {
      pa.row(i) = flows.flows.row(rows[i]).segment(3 * a, 3);
      pb.row(i) = flows.flows.row(rows[i]).segment(3 * b, 3);
    }
    Posed rel = weighted_rigid_transform(pa, pb, traj.poses.back().t, beta);
    traj.poses.push_back(rel.compose(traj.poses.back()));
  }
  return traj;
}

void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write trajectory: " + path);
  out << "step,qw,qx,qy,qz,tx,ty,tz\n";
  out.precision(12);
  for (int i = 0; i < (int)traj.poses.size(); ++i) {
    Eigen::Quaterniond q(traj.poses[i].R);
    out << i << ',' << q.w() << ',' << q.x() << ',' << q.y() << ',' << q.z()
        << ',' << traj.poses[i].t.x() << ',' << traj.poses[i].t.y() << ','
        << traj.poses[i].t.z() << '\n';
  }
}

void write_trajectory_ply(const Trajectory& traj, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), Errc::io_error, "cannot write trajectory: " + path);
  const int n = (int)traj.poses.size();
  out << "ply\nformat ascii 1.0\nelement vertex " << n
      << "\nproperty float x\nproperty float y\nproperty float z\n"
      << "element edge " << std::max(0, n - 1)
      << "\nproperty int vertex1\nproperty int vertex2\nend_header\n";
  out.precision(9);
  for (const auto& p : traj.poses)
    out << p.t.x() << ' ' << p.t.y() << ' ' << p.t.z() << '\n';
  for (int i = 0; i + 1 < n; ++i) out << i << ' ' << i + 1 << '\n';
}

}  // namespace naf
