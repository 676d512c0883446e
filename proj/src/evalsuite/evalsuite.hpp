#pragma once

#include <string>
#include <vector>

#include "field/model.hpp"
#include "scene/scene.hpp"
#include "transfer/transfer.hpp"

namespace naf {

struct TrialResult {
  int trial = 0;
  bool completed = false;
  std::string error;
  double rot_err_deg = 0;     // alignment vs ground truth
  double trans_err_frac = 0;  // translation error / canonical diagonal
  double scale_err_frac = 0;
  double traj_rot_err_deg = 0;     // max per-pose
  double traj_trans_err_frac = 0;  // max per-pose / target-frame diagonal
  double seconds = 0;
};

struct SweepThresholds {
  double rot_deg = 5.0;
  double trans_frac = 0.02;
  double scale_frac = 0.02;
  double traj_rot_deg = 5.0;
  double traj_trans_frac = 0.03;
};

struct SweepSummary {
  int n = 0;
  int completed = 0;
  int align_success = 0;
  int traj_success = 0;
  double align_rate = 0;
  double traj_rate = 0;
  double mean_rot_err_deg = 0;
  double mean_trans_err_frac = 0;
  double mean_scale_err_frac = 0;
  double seconds = 0;
};

struct PerturbationBounds {
  double max_rot_deg = 30.0;
  double scale_lo = 0.8;
  double scale_hi = 1.25;
  double max_trans_frac = 0.2;  // of the shape diagonal
};

Sim3d random_perturbation(Rng& rng, const PerturbationBounds& b, double diag);

// One randomized similarity-perturbed observation, transferred and scored
// against the exact conjugated motion.  Errors inside the pipeline are
// captured in the result, not thrown.
TrialResult run_transfer_trial(const NafModel& model, const SceneSpec& scene,
                               int trial, uint64_t seed,
                               const TransferOptions& opts,
                               const PerturbationBounds& bounds = {});

std::vector<TrialResult> run_sweep(const NafModel& model,
                                   const SceneSpec& scene, int n_trials,
                                   uint64_t seed, const TransferOptions& opts,
                                   const PerturbationBounds& bounds = {});

SweepSummary summarize(const std::vector<TrialResult>& trials,
                       const SweepThresholds& thr = {});

void write_trials_csv(const std::vector<TrialResult>& trials,
                      const std::string& scene_name, const std::string& path);

}  // namespace naf
