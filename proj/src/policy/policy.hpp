#pragma once

#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/geometry.hpp"
#include "scene/scene.hpp"

namespace naf {

// Sequence of world-frame gripper poses; poses[0] is the initial pose.
struct Trajectory {
  std::vector<Posed> poses;
};

// Keyframe indices round(i*(H-1)/H'), i = 0..H', deduplicated.
std::vector<int> downsample_flows(int horizon, int h_prime);

// Weighted Kabsch: minimizes sum w_i |p_next_i - T p_t_i|^2.
Posed rigid_from_weighted_pairs(const MatX<double>& p_t,
                                const MatX<double>& p_next,
                                const VecX<double>& w);

// Same fit with w_i = 1/(d_i + beta), d_i the distance of p_t_i to
// gripper_pos.
Posed weighted_rigid_transform(const MatX<double>& p_t,
                               const MatX<double>& p_next,
                               const Vec3<double>& gripper_pos,
                               double beta = 0.1);

// Per-keyframe rigid fits left-composed in the world frame:
// G_j = T*_j o G_{j-1}.  Points enter a step only if visible (> 0.5) at both
// of its endpoints.
Trajectory flows_to_trajectory(const PointFlowSet& flows,
                               const Posed& gripper_init, int h_prime,
                               double beta = 0.1);

void write_trajectory_csv(const Trajectory& traj, const std::string& path);
void write_trajectory_ply(const Trajectory& traj, const std::string& path);

}  // namespace naf
