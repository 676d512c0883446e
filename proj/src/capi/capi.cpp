#include "naf/naf.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "bank/bank.hpp"
#include "evalsuite/evalsuite.hpp"
#include "field/init.hpp"
#include "field/model.hpp"
#include "fit/fit.hpp"
#include "mesh/mesh.hpp"
#include "policy/policy.hpp"
#include "render/render.hpp"
#include "scene/scene.hpp"
#include "transfer/transfer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

struct naf_model {
  naf::NafModel m;
};

struct naf_scene {
  naf::SceneSpec s;
};

namespace {

thread_local std::string g_error;

static_assert((int)naf::Errc::ok == NAF_OK);
static_assert((int)naf::Errc::invalid_config == NAF_ERR_CONFIG);
static_assert((int)naf::Errc::fit_divergence == NAF_ERR_FIT_DIVERGENCE);
static_assert((int)naf::Errc::transfer_failure == NAF_ERR_TRANSFER_FAILURE);
static_assert((int)naf::Errc::io_error == NAF_ERR_IO);
static_assert((int)naf::Errc::invalid_argument == NAF_ERR_INVALID_ARGUMENT);
static_assert((int)naf::Errc::numeric_error == NAF_ERR_NUMERIC);
static_assert((int)naf::Errc::not_found == NAF_ERR_NOT_FOUND);

template <class F>
naf_status guard(F&& f) {
  try {
    f();
    return NAF_OK;
  } catch (const naf::Error& e) {
    g_error = e.what();
    return (naf_status)(int)e.code();
  } catch (const json::exception& e) {
    g_error = e.what();
    return NAF_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_error = e.what();
    return NAF_ERR_INTERNAL;
  }
}

char* dup_string(const std::string& s) {
  char* out = (char*)std::malloc(s.size() + 1);
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void check(bool cond, const char* msg) {
  naf::require(cond, naf::Errc::invalid_argument, msg);
}

std::string resolve_near(const std::string& anchor_file,
                         const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(anchor_file).parent_path() / p).string();
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  naf::require(in.good(), naf::Errc::io_error, "cannot open: " + path);
  return json::parse(in);
}

naf::Vec3<double> vec3_from(const json& j, const naf::Vec3<double>& fallback) {
  if (j.is_null()) return fallback;
  check(j.is_array() && j.size() == 3, "expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

naf::Sim3d perturbation_from(const json& j) {
  naf::Sim3d g;
  if (j.is_null()) return g;
  naf::Vec3<double> axis = vec3_from(j.value("rot_axis", json()), {0, 0, 1});
  double deg = j.value("rot_deg", 0.0);
  naf::require(axis.norm() > 1e-9, naf::Errc::invalid_config,
               "perturbation rotation axis is zero");
  g.R = naf::axis_angle_to_matrix<double>(axis.normalized() * deg * M_PI /
                                          180.0);
  g.s = j.value("scale", 1.0);
  g.t = vec3_from(j.value("translation", json()), {0, 0, 0});
  return g;
}

naf::SceneSpec scene_from_ref(const json& j, const std::string& anchor) {
  if (j.is_string())
    return naf::load_scene(resolve_near(anchor, j.get<std::string>()));
  check(j.is_object(), "scene must be a path or an inline object");
  return naf::scene_from_json(j);
}

naf::Posed pose_from_quat7(const double* q) {
  Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
  naf::require(quat.norm() > 1e-9, naf::Errc::invalid_argument,
               "gripper quaternion is zero");
  naf::Posed p;
  p.R = quat.normalized().toRotationMatrix();
  p.t = {q[4], q[5], q[6]};
  return p;
}

json sim3_to_json(const naf::Sim3d& g) {
  Eigen::Quaterniond q(g.R);
  return json{{"scale", g.s},
              {"quat_wxyz", {q.w(), q.x(), q.y(), q.z()}},
              {"translation", {g.t.x(), g.t.y(), g.t.z()}}};
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  naf::require(!ec, naf::Errc::io_error, "cannot create directory: " + dir);
}

}  // namespace

extern "C" {

const char* naf_version(void) { return "1.0.0"; }

const char* naf_last_error(void) { return g_error.c_str(); }

void naf_string_free(char* s) { std::free(s); }

naf_status naf_scene_load(const char* path, naf_scene** out) {
  return guard([&] {
    check(path && out, "null argument");
    auto* s = new naf_scene{naf::load_scene(path)};
    *out = s;
  });
}

naf_status naf_scene_from_json(const char* json_text, naf_scene** out) {
  return guard([&] {
    check(json_text && out, "null argument");
    auto* s = new naf_scene{naf::scene_from_json(json::parse(json_text))};
    *out = s;
  });
}

void naf_scene_free(naf_scene* s) { delete s; }

naf_status naf_scene_to_json(const naf_scene* s, char** out_json) {
  return guard([&] {
    check(s && out_json, "null argument");
    *out_json = dup_string(naf::scene_to_json(s->s).dump(2));
  });
}

naf_status naf_scene_name(const naf_scene* s, char** out_name) {
  return guard([&] {
    check(s && out_name, "null argument");
    *out_name = dup_string(s->s.name);
  });
}

naf_status naf_model_create(const char* config_json, naf_model** out) {
  return guard([&] {
    check(out, "null argument");
    naf::NafConfig cfg;
    if (config_json) cfg = json::parse(config_json).get<naf::NafConfig>();
    cfg.validate();
    auto* m = new naf_model;
    m->m.cfg = cfg;
    m->m.statics = naf::init_static_params<float>(cfg);
    m->m.dynamics = naf::init_dynamic_params<float>(cfg);
    *out = m;
  });
}

void naf_model_free(naf_model* m) { delete m; }

naf_status naf_model_config_json(const naf_model* m, char** out_json) {
  return guard([&] {
    check(m && out_json, "null argument");
    *out_json = dup_string(json(m->m.cfg).dump(2));
  });
}

int naf_model_has_dynamics(const naf_model* m) {
  return m && m->m.has_dynamics ? 1 : 0;
}

naf_status naf_fit_static(naf_model* m, const naf_scene* s,
                          const char* trace_csv) {
  return guard([&] {
    check(m && s, "null argument");
    naf::SceneSupervision sup = naf::make_supervision(s->s, m->m.cfg.seed);
    auto trace = naf::fit_static(m->m, sup);
    if (trace_csv) naf::write_trace_csv(trace, trace_csv);
  });
}

naf_status naf_fit_dynamic(naf_model* m, const naf_scene* s,
                           const char* trace_csv) {
  return guard([&] {
    check(m && s, "null argument");
    naf::PointFlowSet flows =
        naf::script_flows(s->s.shape, s->s.motion, 512, m->m.cfg.seed);
    auto trace = naf::fit_dynamic(m->m, flows);
    if (trace_csv) naf::write_trace_csv(trace, trace_csv);
  });
}

naf_status naf_query_sdf(const naf_model* m, const double* pts, int n,
                         double* out) {
  return guard([&] {
    check(m && pts && out && n > 0, "null argument");
    naf::MatX<float> p(n, 3);
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) p(i, c) = (float)pts[3 * i + c];
    naf::MatX<float> sdf = m->m.query_sdf(p);
    for (int i = 0; i < n; ++i) out[i] = sdf(i, 0);
  });
}

naf_status naf_render_view(const naf_model* m, int resolution,
                           double azimuth_deg, double elevation_deg,
                           double distance, double fov_deg,
                           const char* ppm_path) {
  return guard([&] {
    check(m && ppm_path, "null argument");
    check(resolution >= 2 && distance > 0 && fov_deg > 0, "bad view geometry");
    naf::Camera cam = naf::make_orbit_camera(
        resolution, resolution, fov_deg, azimuth_deg * M_PI / 180.0,
        elevation_deg * M_PI / 180.0, distance);
    naf::RenderSlab slab{std::max(0.1, distance - m->m.cfg.near_offset),
                         distance + m->m.cfg.far_offset};
    naf::RenderHeads heads;
    heads.color = true;
    naf::ObservationMaps maps = naf::render_image(
        m->m, cam, slab, m->m.cfg.n_samples_transfer, heads);
    naf::write_ppm(maps, ppm_path);
  });
}

naf_status naf_export_mesh(const naf_model* m, int resolution,
                           const char* ply_path) {
  return guard([&] {
    check(m && ply_path, "null argument");
    naf::MatX<float> pts =
        m->m.sample_surface_points(512, m->m.cfg.seed + 11);
    naf::Aabb box;
    box.lo = pts.colwise().minCoeff().transpose().cast<double>();
    box.hi = pts.colwise().maxCoeff().transpose().cast<double>();
    naf::Vec3<double> pad =
        naf::Vec3<double>::Constant(std::max(0.15 * box.diagonal(), 0.05));
    box.lo -= pad;
    box.hi += pad;
    auto sdf = [&](const naf::MatX<double>& q) {
      naf::MatX<float> v = m->m.query_sdf(q.cast<float>());
      return (naf::VecX<double>)v.col(0).cast<double>();
    };
    naf::TriMesh mesh = naf::marching_cubes(sdf, box, resolution);
    naf::write_mesh_ply(mesh, ply_path);
  });
}

naf_status naf_bank_save(const naf_model* m, const char* bank_dir,
                         const char* id, const char* narration) {
  return guard([&] {
    check(m && bank_dir && id, "null argument");
    naf::save_naf(m->m, narration ? narration : "", bank_dir, id);
  });
}

naf_status naf_bank_load(const char* bank_dir, const char* id,
                         naf_model** out) {
  return guard([&] {
    check(bank_dir && id && out, "null argument");
    auto* m = new naf_model{naf::load_naf(bank_dir, id)};
    *out = m;
  });
}

naf_status naf_bank_list(const char* bank_dir, char** out_json) {
  return guard([&] {
    check(bank_dir && out_json, "null argument");
    json arr = json::array();
    for (const auto& e : naf::list_bank(bank_dir))
      arr.push_back(json{{"id", e.id},
                         {"narration", e.narration},
                         {"file", e.file},
                         {"created", e.created},
                         {"has_dynamics", e.has_dynamics}});
    *out_json = dup_string(arr.dump(2));
  });
}

naf_status naf_bank_retrieve(const char* bank_dir, const char* narration,
                             const float* desc, int n, char** out_id) {
  return guard([&] {
    check(bank_dir && out_id, "null argument");
    check(n >= 0 && (n == 0 || desc), "bad descriptor");
    naf::VecX<float> d(n);
    for (int i = 0; i < n; ++i) d(i) = desc[i];
    naf::BankEntry e =
        naf::retrieve(bank_dir, narration ? narration : "", d);
    *out_id = dup_string(e.id);
  });
}

naf_status naf_transfer_run(const naf_model* m, const char* target_json,
                            const double* gripper_pose, const int* options,
                            int keyframes, const char* out_dir,
                            char** out_summary_json) {
  return guard([&] {
    check(m && target_json, "null argument");
    json spec = load_json_file(target_json);
    naf::SceneSpec sc =
        scene_from_ref(spec.at("scene"), target_json);
    naf::Sim3d g = perturbation_from(spec.value("perturbation", json()));

    json jc = spec.value("camera", json::object());
    int res = spec.value("resolution", sc.transfer_resolution);
    naf::Vec3<double> look = vec3_from(jc.value("target", json()), g.t);
    naf::Camera cam = naf::make_orbit_camera(
        res, res, jc.value("fov_deg", sc.rig.fov_deg),
        jc.value("azimuth_deg", 0.0) * M_PI / 180.0,
        jc.value("elevation_deg", 15.0) * M_PI / 180.0,
        jc.value("distance", sc.rig.distance), look);

    naf::TargetObservation target = naf::make_target_observation(
        sc.shape, sc.contact, g, cam, sc.descriptor_dim,
        spec.value("depth_noise", 0.0), spec.value("seed", (uint64_t)0));

    naf::Posed grip;
    if (gripper_pose) {
      grip = pose_from_quat7(gripper_pose);
    } else if (spec.contains("gripper_pose")) {
      const auto& q = spec.at("gripper_pose");
      check(q.is_array() && q.size() == 7, "gripper_pose needs 7 numbers");
      double buf[7];
      for (int i = 0; i < 7; ++i) buf[i] = q[i].get<double>();
      grip = pose_from_quat7(buf);
    } else {
      naf::Vec3<double> centroid = target.cloud.colwise().mean().transpose();
      double diag = (target.cloud.colwise().maxCoeff() -
                     target.cloud.colwise().minCoeff())
                        .norm();
      grip.t = centroid + naf::Vec3<double>(0, 0, 0.4 * diag);
    }

    naf::TransferOptions opts;
    if (options) {
      opts.use_filter = options[0] != 0;
      opts.use_rank = options[1] != 0;
      opts.use_optimization = options[2] != 0;
      opts.use_fine = options[3] != 0;
    }
    if (keyframes > 0) opts.keyframes = keyframes;

    naf::TransferResult res_t = naf::transfer_policy(m->m, target, grip, opts);

    if (out_dir) {
      ensure_dir(out_dir);
      fs::path d(out_dir);
      naf::write_trajectory_csv(res_t.trajectory,
                                (d / "trajectory.csv").string());
      naf::write_trajectory_ply(res_t.trajectory,
                                (d / "trajectory.ply").string());
      naf::write_overlay_ply(res_t, target, (d / "overlay.ply").string());
      naf::write_diagnostics_json(res_t.diag,
                                  (d / "diagnostics.json").string());
    }

    naf::Sim3d gt = target.gt.inverse();
    json summary{
        {"scene", sc.name},
        {"chosen_azimuth_deg", res_t.diag.chosen_azimuth_deg},
        {"transform", sim3_to_json(res_t.transform)},
        {"contact",
         {res_t.contact.x(), res_t.contact.y(), res_t.contact.z()}},
        {"poses", res_t.trajectory.poses.size()},
        {"gt_rot_err_deg", naf::rotation_geodesic(res_t.transform.R, gt.R) *
                               180.0 / M_PI},
        {"gt_trans_err", (res_t.transform.t - gt.t).norm()},
        {"gt_scale_err", std::abs(res_t.transform.s / gt.s - 1.0)}};
    if (out_summary_json) *out_summary_json = dup_string(summary.dump(2));
  });
}

naf_status naf_eval_run(const char* suite_json, const char* trials_csv,
                        const char* summary_csv, char** out_summary_json) {
  return guard([&] {
    check(suite_json, "null argument");
    json suite = load_json_file(suite_json);
    const int n_trials = suite.value("trials", 20);
    const uint64_t seed = suite.value("seed", (uint64_t)0);
    check(n_trials >= 0, "trial count must be non-negative");

    naf::TransferOptions opts;
    if (suite.contains("options")) {
      const auto& o = suite.at("options");
      opts.use_filter = o.value("filter", true);
      opts.use_rank = o.value("rank", true);
      opts.use_optimization = o.value("optimization", true);
      opts.use_fine = o.value("fine", true);
      opts.keyframes = o.value("keyframes", opts.keyframes);
    }
    naf::PerturbationBounds bounds;
    if (suite.contains("perturbation")) {
      const auto& p = suite.at("perturbation");
      bounds.max_rot_deg = p.value("max_rot_deg", bounds.max_rot_deg);
      bounds.scale_lo = p.value("scale_lo", bounds.scale_lo);
      bounds.scale_hi = p.value("scale_hi", bounds.scale_hi);
      bounds.max_trans_frac = p.value("max_trans_frac", bounds.max_trans_frac);
    }
    naf::SweepThresholds thr;

    std::ofstream trials_out;
    if (trials_csv) {
      trials_out.open(trials_csv);
      naf::require(trials_out.good(), naf::Errc::io_error,
                   std::string("cannot write: ") + trials_csv);
      trials_out << "scene,trial,completed,rot_err_deg,trans_err_frac,"
                    "scale_err_frac,traj_rot_err_deg,traj_trans_err_frac,"
                    "seconds,error\n";
    }
    std::ofstream summary_out;
    if (summary_csv) {
      summary_out.open(summary_csv);
      naf::require(summary_out.good(), naf::Errc::io_error,
                   std::string("cannot write: ") + summary_csv);
      summary_out << "scene,n,completed,align_success,traj_success,align_rate,"
                     "traj_rate,mean_rot_err_deg,mean_trans_err_frac,"
                     "mean_scale_err_frac,seconds\n";
    }

    json scenes = json::array();
    double total_seconds = 0;
    if (n_trials > 0) {
      const std::string bank =
          resolve_near(suite_json, suite.at("bank").get<std::string>());
      for (const auto& entry : suite.value("entries", json::array())) {
        naf::SceneSpec sc = scene_from_ref(entry.at("scene"), suite_json);
        naf::NafModel model =
            naf::load_naf(bank, entry.at("id").get<std::string>());
        auto trials =
            naf::run_sweep(model, sc, n_trials, seed, opts, bounds);
        naf::SweepSummary s = naf::summarize(trials, thr);
        total_seconds += s.seconds;
        if (trials_out.is_open()) {
          for (const auto& t : trials) {
            std::string err = t.error;
            for (auto& c : err)
              if (c == ',' || c == '\n') c = ';';
            trials_out << sc.name << ',' << t.trial << ','
                       << (t.completed ? 1 : 0) << ',' << t.rot_err_deg << ','
                       << t.trans_err_frac << ',' << t.scale_err_frac << ','
                       << t.traj_rot_err_deg << ',' << t.traj_trans_err_frac
                       << ',' << t.seconds << ',' << err << '\n';
          }
        }
        if (summary_out.is_open())
          summary_out << sc.name << ',' << s.n << ',' << s.completed << ','
                      << s.align_success << ',' << s.traj_success << ','
                      << s.align_rate << ',' << s.traj_rate << ','
                      << s.mean_rot_err_deg << ',' << s.mean_trans_err_frac
                      << ',' << s.mean_scale_err_frac << ',' << s.seconds
                      << '\n';
        scenes.push_back(json{{"name", sc.name},
                              {"n", s.n},
                              {"completed", s.completed},
                              {"align_rate", s.align_rate},
                              {"traj_rate", s.traj_rate},
                              {"seconds", s.seconds}});
      }
    }
    json summary{{"scenes", scenes}, {"total_seconds", total_seconds}};
    if (out_summary_json) *out_summary_json = dup_string(summary.dump(2));
  });
}

}  // extern "C"
