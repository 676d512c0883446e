#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "core/geometry.hpp"
#include "render/camera.hpp"
#include "scene/motion.hpp"
#include "scene/shape.hpp"

namespace naf {

struct ContactSpec {
  Vec3<double> anchor = {0, 0, 0.8};
  double radius = 0.15;
};

struct CameraRig {
  double fov_deg = 50.0;
  double distance = 3.0;
  std::vector<double> elevations_deg = {15, -15, 40, 15, -15, 40};
};

struct SceneSpec {
  std::string name = "scene";
  std::string narration;
  AnalyticShape shape;
  ContactSpec contact;
  MotionScript motion;
  CameraRig rig;
  int supervision_resolution = 64;
  int transfer_resolution = 48;
  int descriptor_dim = 16;

  void validate() const;
};

SceneSpec scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const SceneSpec& s);
SceneSpec load_scene(const std::string& path);

// Row-major pixel maps (row index y*W + x).  Contact is all-zero for maps
// where it is unobservable (targets).
struct ObservationMaps {
  int W = 0, H = 0;
  MatX<float> color;    // N x 3
  MatX<float> depth;    // N x 1, 0 where miss
  MatX<float> mask;     // N x 1, {0,1} for oracles
  MatX<float> desc;     // N x d
  MatX<float> contact;  // N x 1
};

struct PointFlowSet {
  MatX<double> flows;  // N x 3H absolute positions; step 0 = base points
  MatX<double> vis;    // N x H
  int horizon = 0;
};

struct SceneSupervision {
  std::vector<Camera> cameras;
  std::vector<ObservationMaps> views;
  PointFlowSet flows;
};

struct TargetObservation {
  Camera camera;
  ObservationMaps maps;
  MatX<double> cloud;             // foreground back-projection, world frame
  std::vector<int> cloud_pixels;  // pixel index per cloud row
  Sim3d gt;                // perturbation, kept for evaluation only
};

MatX<double> sample_shape_surface(const AnalyticShape& shape, int n,
                                  uint64_t seed);

ObservationMaps oracle_render(const AnalyticShape& shape,
                              const ContactSpec& contact, const Camera& camera,
                              int resolution, int descriptor_dim = 16);

PointFlowSet script_flows(const AnalyticShape& shape, const MotionScript& motion,
                          int n_points, uint64_t seed);

SceneSupervision make_supervision(const SceneSpec& scene, uint64_t seed);

TargetObservation make_target_observation(const AnalyticShape& shape,
                                          const ContactSpec& contact,
                                          const Sim3d& perturbation,
                                          const Camera& camera,
                                          int descriptor_dim = 16,
                                          double depth_noise = 0.0,
                                          uint64_t seed = 0);

AnalyticShape make_variant(const AnalyticShape& shape, uint64_t seed,
                           double amount = 0.2);

}  // namespace naf
