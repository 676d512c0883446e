#include "scene/scene.hpp"

#include <cmath>
#include <fstream>
#include <functional>

namespace naf {

namespace {

// Newton projection onto the zero level set of an exact distance field.
Vec3<double> project_to_shape(const AnalyticShape& shape, Vec3<double> x,
                              int iters = 8) {
  for (int i = 0; i < iters; ++i) {
    double s = shape_sdf(shape, x);
    if (std::abs(s) < 1e-12) break;
    Vec3<double> g = shape_grad(shape, x);
    double n2 = g.squaredNorm();
    if (n2 < 1e-12) break;
    x -= (s / n2) * g;
  }
  return x;
}

struct TraceResult {
  bool hit = false;
  double t = 0;
  Vec3<double> point = Vec3<double>::Zero();
};

TraceResult sphere_trace(const std::function<double(const Vec3<double>&)>& sdf,
                         const Vec3<double>& o, const Vec3<double>& d,
                         double t0, double t1) {
  TraceResult r;
  double t = t0;
  for (int i = 0; i < 512 && t < t1; ++i) {
    Vec3<double> p = o + t * d;
    double s = sdf(p);
    if (s < 1e-7) {
      r.hit = true;
      r.t = t;
      r.point = p;
      return r;
    }
    t += s;
  }
  return r;
}

Vec3<double> shade(const Vec3<double>& n) {
  static const Vec3<double> light = Vec3<double>(1, 1, 1).normalized();
  double diffuse = 0.35 + 0.65 * std::max(0.0, n.dot(light));
  return (0.5 * n + Vec3<double>::Constant(0.5)) * diffuse;
}

}  // namespace

void SceneSpec::validate() const {
  Aabb bb = shape_bbox(shape);
  require((bb.lo.array() >= -0.8 - 1e-9).all() &&
              (bb.hi.array() <= 0.8 + 1e-9).all(),
          Errc::invalid_config,
          "object must fit in the canonical cube with margin 0.2 (scene '" +
              name + "')");
  require(std::abs(shape_sdf(shape, contact.anchor)) < 1e-3,
          Errc::invalid_config,
          "contact anchor must lie on the surface (|sdf| < 1e-3)");
  require(contact.radius > 0, Errc::invalid_config,
          "contact radius must be positive");
  require(rig.elevations_deg.size() == 6, Errc::invalid_config,
          "camera rig needs exactly 6 elevations");
  require(rig.distance > 1.0, Errc::invalid_config,
          "camera distance must exceed 1");
  require(supervision_resolution >= 8 && transfer_resolution >= 8,
          Errc::invalid_config, "resolutions must be at least 8");
  require(descriptor_dim > 0, Errc::invalid_config,
          "descriptor dimension must be positive");
  motion.validate();
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.name = j.value("name", "scene");
  s.narration = j.value("narration", "");
  if (j.contains("shape")) s.shape = j.at("shape").get<AnalyticShape>();
  if (j.contains("contact")) {
    const auto& c = j.at("contact");
    if (c.contains("anchor")) {
      auto a = c.at("anchor");
      require(a.is_array() && a.size() == 3, Errc::invalid_config,
              "contact anchor must be a 3-array");
      s.contact.anchor = Vec3<double>(a[0].get<double>(), a[1].get<double>(),
                                      a[2].get<double>());
    }
    s.contact.radius = c.value("radius", 0.15);
  }
  if (j.contains("motion")) s.motion = j.at("motion").get<MotionScript>();
  if (j.contains("cameras")) {
    const auto& c = j.at("cameras");
    s.rig.fov_deg = c.value("fov_deg", 50.0);
    s.rig.distance = c.value("distance", 3.0);
    if (c.contains("elevations_deg"))
      s.rig.elevations_deg =
          c.at("elevations_deg").get<std::vector<double>>();
  }
  s.supervision_resolution = j.value("supervision_resolution", 64);
  s.transfer_resolution = j.value("transfer_resolution", 48);
  s.descriptor_dim = j.value("descriptor_dim", 16);
  // Snap the anchor exactly onto the surface before validating.
  s.contact.anchor = project_to_shape(s.shape, s.contact.anchor);
  s.validate();
  return s;
}

nlohmann::json scene_to_json(const SceneSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["narration"] = s.narration;
  j["shape"] = s.shape;
  j["contact"] = {{"anchor", {s.contact.anchor.x(), s.contact.anchor.y(),
                              s.contact.anchor.z()}},
                  {"radius", s.contact.radius}};
  j["motion"] = s.motion;
  j["cameras"] = {{"fov_deg", s.rig.fov_deg},
                  {"distance", s.rig.distance},
                  {"elevations_deg", s.rig.elevations_deg}};
  j["supervision_resolution"] = s.supervision_resolution;
  j["transfer_resolution"] = s.transfer_resolution;
  j["descriptor_dim"] = s.descriptor_dim;
  return j;
}

SceneSpec load_scene(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io_error, "cannot open scene file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    raise(Errc::invalid_config,
          "scene file is not valid JSON: " + std::string(e.what()));
  }
  return scene_from_json(j);
}

MatX<double> sample_shape_surface(const AnalyticShape& shape, int n,
                                  uint64_t seed) {
  require(n > 0, Errc::invalid_argument, "need a positive sample count");
  Rng rng(static_cast<uint32_t>(seed * 2654435761ull + 101));
  Aabb bb = shape_bbox(shape);
  Vec3<double> c = bb.center();
  Vec3<double> he = bb.half_extents() * 1.2 + Vec3<double>::Constant(0.05);
  MatX<double> out(n, 3);
  int got = 0;
  while (got < n) {
    Vec3<double> x = c + Vec3<double>(uniform(rng, -he.x(), he.x()),
                                      uniform(rng, -he.y(), he.y()),
                                      uniform(rng, -he.z(), he.z()));
    Vec3<double> p = project_to_shape(shape, x);
    if (std::abs(shape_sdf(shape, p)) < 1e-9) out.row(got++) = p.transpose();
  }
  return out;
}

ObservationMaps oracle_render(const AnalyticShape& shape,
                              const ContactSpec& contact, const Camera& camera,
                              int resolution, int descriptor_dim) {
  Camera cam = camera;
  if (resolution > 0 && (cam.W != resolution || cam.H != resolution)) {
    double fov = 2.0 * std::atan(0.5 * cam.W / cam.fx) * 180.0 / M_PI;
    cam = make_camera(resolution, resolution, fov, cam.pose);
  }
  const int N = cam.pixels();
  ObservationMaps m;
  m.W = cam.W;
  m.H = cam.H;
  m.color = MatX<float>::Zero(N, 3);
  m.depth = MatX<float>::Zero(N, 1);
  m.mask = MatX<float>::Zero(N, 1);
  m.desc = MatX<float>::Zero(N, descriptor_dim);
  m.contact = MatX<float>::Zero(N, 1);

  double dist = cam.pose.t.norm();
  auto sdf = [&](const Vec3<double>& p) { return shape_sdf(shape, p); };
  for (int y = 0; y < cam.H; ++y)
    for (int x = 0; x < cam.W; ++x) {
      int idx = y * cam.W + x;
      Vec3<double> o, d;
      cam.ray(x, y, o, d);
      TraceResult tr = sphere_trace(sdf, o, d, 0.5, dist + 3.0);
      if (!tr.hit) continue;
      m.mask(idx, 0) = 1.0f;
      m.depth(idx, 0) = (float)tr.t;
      Vec3<double> n = shape_normal(shape, tr.point);
      m.color.row(idx) = shade(n).cast<float>().transpose();
      m.desc.row(idx) =
          procedural_descriptor(shape, tr.point, descriptor_dim)
              .cast<float>()
              .transpose();
      if ((tr.point - contact.anchor).norm() <= contact.radius)
        m.contact(idx, 0) = 1.0f;
    }
  return m;
}

PointFlowSet script_flows(const AnalyticShape& shape,
                          const MotionScript& motion, int n_points,
                          uint64_t seed) {
  require(n_points >= 8, Errc::invalid_argument,
          "script_flows needs at least 8 points");
  motion.validate();
  const int H = motion.horizon;
  MatX<double> base = sample_shape_surface(shape, n_points, seed);
  PointFlowSet fs;
  fs.horizon = H;
  fs.flows.resize(n_points, 3 * H);
  fs.vis = MatX<double>::Ones(n_points, H);
  for (int k = 0; k < H; ++k) {
    Posed T = motion.pose_at(k);
    for (int i = 0; i < n_points; ++i)
      fs.flows.row(i).segment(3 * k, 3) =
          T.apply(base.row(i).transpose()).transpose();
  }
  return fs;
}

SceneSupervision make_supervision(const SceneSpec& scene, uint64_t seed) {
  scene.validate();
  SceneSupervision sup;
  for (int i = 0; i < 6; ++i) {
    double az = 2.0 * M_PI * i / 6.0;
    double el = scene.rig.elevations_deg[i] * M_PI / 180.0;
    Camera cam =
        make_orbit_camera(scene.supervision_resolution,
                          scene.supervision_resolution, scene.rig.fov_deg, az,
                          el, scene.rig.distance);
    sup.cameras.push_back(cam);
    sup.views.push_back(oracle_render(scene.shape, scene.contact, cam,
                                      scene.supervision_resolution,
                                      scene.descriptor_dim));
  }
  sup.flows = script_flows(scene.shape, scene.motion, 512, seed);
  return sup;
}

TargetObservation make_target_observation(const AnalyticShape& shape,
                                          const ContactSpec& contact,
                                          const Sim3d& perturbation,
                                          const Camera& camera,
                                          int descriptor_dim,
                                          double depth_noise, uint64_t seed) {
  require(perturbation.s >= 0.5 && perturbation.s <= 2.0, Errc::invalid_argument,
          "perturbation scale must lie in [0.5, 2]");
  (void)contact;
  const Sim3d& G = perturbation;
  Sim3d Ginv = G.inverse();

  const Camera& cam = camera;
  const int N = cam.pixels();
  TargetObservation obs;
  obs.camera = cam;
  obs.gt = G;
  ObservationMaps& m = obs.maps;
  m.W = cam.W;
  m.H = cam.H;
  m.color = MatX<float>::Zero(N, 3);
  m.depth = MatX<float>::Zero(N, 1);
  m.mask = MatX<float>::Zero(N, 1);
  m.desc = MatX<float>::Zero(N, descriptor_dim);
  m.contact = MatX<float>::Zero(N, 1);

  Rng rng(static_cast<uint32_t>(seed * 2654435761ull + 331));
  auto sdf = [&](const Vec3<double>& p) {
    return G.s * shape_sdf(shape, Ginv.apply(p));
  };
  double dist = cam.pose.t.norm();
  std::vector<Vec3<double>> cloud;
  std::vector<int> pixels;
  for (int y = 0; y < cam.H; ++y)
    for (int x = 0; x < cam.W; ++x) {
      int idx = y * cam.W + x;
      Vec3<double> o, d;
      cam.ray(x, y, o, d);
      TraceResult tr = sphere_trace(sdf, o, d, 0.2, dist + 3.0);
      if (!tr.hit) continue;
      Vec3<double> pc = Ginv.apply(tr.point);  // canonical-frame hit
      Vec3<double> n = (G.R * shape_normal(shape, pc)).normalized();
      m.mask(idx, 0) = 1.0f;
      double depth = tr.t + (depth_noise > 0 ? depth_noise * normal(rng) : 0.0);
      m.depth(idx, 0) = (float)depth;
      m.color.row(idx) = shade(n).cast<float>().transpose();
      m.desc.row(idx) = procedural_descriptor(shape, pc, descriptor_dim)
                            .cast<float>()
                            .transpose();
      cloud.push_back(o + depth * d);
      pixels.push_back(idx);
    }
  obs.cloud.resize((int)cloud.size(), 3);
  for (int i = 0; i < (int)cloud.size(); ++i)
    obs.cloud.row(i) = cloud[i].transpose();
  obs.cloud_pixels = std::move(pixels);
  return obs;
}

AnalyticShape make_variant(const AnalyticShape& shape, uint64_t seed,
                           double amount) {
  Rng rng(static_cast<uint32_t>(seed * 2654435761ull + 777));
  std::function<void(AnalyticShape&)> jitter = [&](AnalyticShape& s) {
    auto f = [&]() { return uniform(rng, 1.0 - amount, 1.0 + amount); };
    s.radius *= f();
    s.half_height *= f();
    s.round *= f();
    for (int i = 0; i < 3; ++i) s.half_extents(i) *= f();
    s.offset *= f();
    for (auto& c : s.children) jitter(c);
  };
  AnalyticShape out = shape;
  jitter(out);
  return out;
}

}  // namespace naf
