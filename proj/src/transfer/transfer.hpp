#pragma once

#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/geometry.hpp"
#include "field/model.hpp"
#include "policy/policy.hpp"
#include "render/render.hpp"
#include "scene/scene.hpp"

namespace naf {

// One ring-view pose candidate with its rendered descriptor/contact maps.
struct Hypothesis {
  Camera camera;
  double azimuth_deg = 0;
  ObservationMaps maps;
  double score = 0;
  bool feasible = false;
};

// Ablation switches for the transfer pipeline; all on by default.
struct TransferOptions {
  bool use_filter = true;
  bool use_rank = true;
  bool use_optimization = true;
  bool use_fine = true;
  int keyframes = 4;  // H' handed to the policy stage
};

struct AlignResult {
  Sim3d T;
  double energy = 0;
  std::vector<double> trace;  // best-so-far energy per iteration
};

struct CandidateDiag {
  double azimuth_deg = 0;
  double corr_score = 0;
  double coarse_energy = 0;
  double fine_energy = 0;
};

struct TransferDiagnostics {
  Sim3d canon;
  double canon_mean_abs_sdf = 0;
  std::vector<CandidateDiag> candidates;
  int chosen = -1;
  double chosen_azimuth_deg = 0;
  Sim3d final_transform;
  int n_flow_points = 0;
};

struct TransferResult {
  Trajectory trajectory;
  Vec3<double> contact = Vec3<double>::Zero();
  Sim3d transform;  // target frame -> canonical frame
  TransferDiagnostics diag;
};

// Observation-to-canonical similarity: scale from bounding-box diagonals,
// rotation from cloud principal axes over 24 proper sign/permutation
// variants scored by mean |sdf|, then 200 Adam steps on all 7 parameters.
Sim3d canonicalize(const MatX<double>& cloud, const NafModel& model);

// Ring of evenly spaced azimuths at fixed elevation/distance, each rendered
// for descriptors and contact.
std::vector<Hypothesis> sample_hypotheses(const NafModel& model, int width,
                                          int height, double fov_deg);

// Feasible iff any rendered contact probability reaches tau_vis.
bool visibility_filter(const Hypothesis& hyp, double tau_vis);

struct PixelPair {
  int a = 0;
  int b = 0;
};

// Mutual-argmax cosine matches between foreground descriptors of two maps.
std::vector<PixelPair> best_buddy_match(const ObservationMaps& map_a,
                                        const ObservationMaps& map_b);

// Fills scores (mean squared normalized-pixel distance of buddy pairs; +inf
// below 10 pairs) and returns indices of the k best feasible hypotheses,
// ties broken by azimuth.
std::vector<int> rank_hypotheses(std::vector<Hypothesis>& hyps,
                                 const ObservationMaps& target_maps, int k);

// Descriptor + surface + depth alignment from a ranked initialization.
AlignResult coarse_align(const NafModel& model,
                         const TargetObservation& target, const Sim3d& init);

// Adds the one-sided contact chamfer; drops the depth term.
AlignResult fine_align(const NafModel& model, const TargetObservation& target,
                       const Sim3d& coarse);

// Argmax of the contact head over the transformed cloud, target frame.
Vec3<double> extract_contact_point(const NafModel& model, const Sim3d& t_ot,
                                   const MatX<double>& cloud);

// Full pipeline: canonicalize, rank ring hypotheses, coarse-to-fine align
// each of the top k, pick the lowest energy, extract contact and flows,
// compose the trajectory in the target frame.
TransferResult transfer_policy(const NafModel& model,
                               const TargetObservation& target,
                               const Posed& gripper_init,
                               const TransferOptions& opts = {});

void write_diagnostics_json(const TransferDiagnostics& diag,
                            const std::string& path);
void write_overlay_ply(const TransferResult& res,
                       const TargetObservation& target,
                       const std::string& path);

}  // namespace naf
