#pragma once

#include <utility>

#include "ad/param_vector.hpp"
#include "core/common.hpp"
#include "field/config.hpp"

namespace naf {

using ad::ParamVector;
using ad::ParamVectorT;

// One fitted object: config plus the two parameter sets.  Geometry and
// appearance live in `statics`; the motion heads live in `dynamics` and are
// only meaningful once a dynamic fit has run.
struct NafModel {
  NafConfig cfg;
  ParamVector statics;
  ParamVector dynamics;
  bool has_dynamics = false;

  static NafModel init(const NafConfig& cfg);

  float sharpness() const;

  MatX<float> query_sdf(const MatX<float>& pts) const;  // N x 1
  // sdf (N x 1) and spatial gradient (N x 3)
  std::pair<MatX<float>, MatX<float>> query_sdf_grad(
      const MatX<float>& pts) const;
  MatX<float> query_latent(const MatX<float>& pts) const;
  MatX<float> query_color(const MatX<float>& pts) const;
  MatX<float> query_feature(const MatX<float>& pts) const;
  MatX<float> query_contact(const MatX<float>& pts) const;  // probabilities

  struct FlowResult {
    MatX<float> flows;  // N x 3H absolute positions; step 0 is the base
    MatX<float> vis;    // N x H
  };
  // Requires every point near the surface (|sdf| < tau_surface) and a
  // completed dynamic fit.
  FlowResult query_flow(const MatX<float>& pts) const;

  // Newton projection onto the zero level set.  The throwing variant enforces
  // the |sdf| < 0.5 precondition and convergence to tau_surface; the other
  // marks failures per point instead.
  MatX<float> project_to_surface(const MatX<float>& pts, int iters = 10) const;
  MatX<float> try_project_to_surface(const MatX<float>& pts,
                                     std::vector<char>& ok,
                                     int iters = 10) const;

  // Up to n surface samples found by projecting uniform cube points.
  MatX<float> sample_surface_points(int n, uint64_t seed) const;
  // Mean descriptor over surface samples; used for retrieval.
  VecX<float> mean_surface_descriptor(int n, uint64_t seed) const;
};

}  // namespace naf
