#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "naf/naf.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Stage { kStageConfig, kStageFit, kStageTransfer, kStageIo };

int exit_code(naf_status st, Stage stage) {
  switch (st) {
    case NAF_OK:
      return 0;
    case NAF_ERR_CONFIG:
    case NAF_ERR_INVALID_ARGUMENT:
      return 2;
    case NAF_ERR_FIT_DIVERGENCE:
      return 3;
    case NAF_ERR_TRANSFER_FAILURE:
      return 4;
    case NAF_ERR_IO:
    case NAF_ERR_NOT_FOUND:
      return 5;
    default:
      break;
  }
  switch (stage) {
    case kStageFit:
      return 3;
    case kStageTransfer:
      return 4;
    case kStageIo:
      return 5;
    default:
      return 2;
  }
}

struct CliError {
  int code;
};

void expect(naf_status st, Stage stage, const std::string& label) {
  if (st == NAF_OK) return;
  std::cerr << "[" << label << "] " << naf_last_error() << "\n";
  throw CliError{exit_code(st, stage)};
}

std::string take_string(char* s) {
  std::string out = s ? s : "";
  naf_string_free(s);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out.good()) {
    std::cerr << "[io] cannot write " << path << "\n";
    throw CliError{5};
  }
  out << text;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    std::cerr << "[io] cannot create directory " << dir << "\n";
    throw CliError{5};
  }
}

struct ModelHandle {
  naf_model* p = nullptr;
  ~ModelHandle() { naf_model_free(p); }
};

struct SceneHandle {
  naf_scene* p = nullptr;
  ~SceneHandle() { naf_scene_free(p); }
};

bool parse_pose7(const std::string& text, double out[7]) {
  if (text.empty()) return false;
  std::string s = text;
  for (auto& c : s)
    if (c == ',') c = ' ';
  std::istringstream in(s);
  for (int i = 0; i < 7; ++i)
    if (!(in >> out[i])) {
      std::cerr << "[config] --gripper-pose needs 7 numbers "
                   "(qw qx qy qz tx ty tz)\n";
      throw CliError{2};
    }
  double tail;
  if (in >> tail) {
    std::cerr << "[config] --gripper-pose needs exactly 7 numbers\n";
    throw CliError{2};
  }
  return true;
}

json overrides_to_json(const std::vector<std::string>& kvs) {
  json j = json::object();
  for (const auto& kv : kvs) {
    auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "[config] override must look like key=value: " << kv
                << "\n";
      throw CliError{2};
    }
    std::string key = kv.substr(0, eq);
    std::string val = kv.substr(eq + 1);
    try {
      j[key] = json::parse(val);
    } catch (const json::exception&) {
      j[key] = val;
    }
  }
  return j;
}

int cmd_fit(const std::string& scene_path, const std::string& bank,
            const std::string& id_flag, uint64_t seed, std::string out_dir,
            long iters, long static_iters, long dynamic_iters,
            const std::vector<std::string>& overrides, bool dry_run) {
  SceneHandle scene;
  expect(naf_scene_load(scene_path.c_str(), &scene.p), kStageConfig, "scene");
  json scene_json = json::parse(take_string([&] {
    char* s = nullptr;
    expect(naf_scene_to_json(scene.p, &s), kStageConfig, "scene");
    return s;
  }()));

  std::string id = id_flag.empty()
                       ? scene_json.value("name", std::string("model"))
                       : id_flag;
  if (out_dir.empty()) out_dir = bank + "/runs/" + id;

  json cfg = json::object();
  cfg["seed"] = seed;
  cfg["horizon"] = scene_json["motion"].value("horizon", 16);
  for (auto& [k, v] : overrides_to_json(overrides).items()) cfg[k] = v;

  long run_static = static_iters >= 0 ? static_iters : iters;
  long run_dynamic = dynamic_iters >= 0 ? dynamic_iters : iters;
  if (run_static > 0) cfg["static_iters"] = run_static;
  if (run_dynamic > 0) cfg["dynamic_iters"] = run_dynamic;

  json plan{{"command", "fit"},
            {"scene", scene_path},
            {"bank", bank},
            {"id", id},
            {"seed", seed},
            {"out", out_dir},
            {"config", cfg},
            {"run_static", run_static != 0},
            {"run_dynamic", run_dynamic != 0}};
  if (dry_run) {
    std::cout << plan.dump(2) << "\n";
    return 0;
  }

  ModelHandle model;
  expect(naf_model_create(cfg.dump().c_str(), &model.p), kStageConfig,
         "config");
  ensure_dir(out_dir);

  if (run_static != 0)
    expect(naf_fit_static(model.p, scene.p,
                          (out_dir + "/static_trace.csv").c_str()),
           kStageFit, "fit-static");
  if (run_dynamic != 0)
    expect(naf_fit_dynamic(model.p, scene.p,
                           (out_dir + "/dynamic_trace.csv").c_str()),
           kStageFit, "fit-dynamic");

  json rig = scene_json.value("cameras", json::object());
  double fov = rig.value("fov_deg", 50.0);
  double dist = rig.value("distance", 3.0);
  expect(naf_render_view(model.p, 64, 30.0, 20.0, dist, fov,
                         (out_dir + "/view.ppm").c_str()),
         kStageIo, "render");

  std::string narration = scene_json.value("narration", std::string());
  expect(naf_bank_save(model.p, bank.c_str(), id.c_str(), narration.c_str()),
         kStageIo, "bank-save");

  plan["resolved_config"] = json::parse(take_string([&] {
    char* s = nullptr;
    expect(naf_model_config_json(model.p, &s), kStageConfig, "config");
    return s;
  }()));
  write_text(out_dir + "/run_config.json", plan.dump(2) + "\n");
  std::cout << "saved '" << id << "' to " << bank << "\n";
  return 0;
}

int cmd_transfer(const std::string& bank, const std::string& target_path,
                 const std::string& out_dir, const std::string& id_flag,
                 const std::string& query, const std::string& pose_text,
                 int keyframes, bool no_filter, bool no_rank, bool no_opt,
                 bool no_fine, bool dry_run) {
  double pose[7];
  bool has_pose = parse_pose7(pose_text, pose);
  int options[4] = {!no_filter, !no_rank, !no_opt, !no_fine};

  json plan{{"command", "transfer"}, {"bank", bank},
            {"target", target_path}, {"out", out_dir},
            {"query", query},        {"keyframes", keyframes},
            {"filter", !no_filter},  {"rank", !no_rank},
            {"optimization", !no_opt}, {"fine", !no_fine}};
  if (!id_flag.empty()) plan["id"] = id_flag;
  if (has_pose) plan["gripper_pose"] = std::vector<double>(pose, pose + 7);
  if (dry_run) {
    std::cout << plan.dump(2) << "\n";
    return 0;
  }

  std::string id = id_flag;
  if (id.empty()) {
    char* found = nullptr;
    expect(naf_bank_retrieve(bank.c_str(), query.c_str(), nullptr, 0, &found),
           kStageIo, "retrieve");
    id = take_string(found);
  }
  plan["id"] = id;

  ModelHandle model;
  expect(naf_bank_load(bank.c_str(), id.c_str(), &model.p), kStageIo,
         "bank-load");

  ensure_dir(out_dir);
  char* summary = nullptr;
  expect(naf_transfer_run(model.p, target_path.c_str(),
                          has_pose ? pose : nullptr, options, keyframes,
                          out_dir.c_str(), &summary),
         kStageTransfer, "transfer");
  std::string summary_text = take_string(summary);

  plan["resolved_config"] = json::parse(take_string([&] {
    char* s = nullptr;
    expect(naf_model_config_json(model.p, &s), kStageConfig, "config");
    return s;
  }()));
  write_text(out_dir + "/run_config.json", plan.dump(2) + "\n");
  std::cout << summary_text << "\n";
  return 0;
}

int cmd_eval(const std::string& suite_path, const std::string& out_dir,
             bool dry_run) {
  json plan{{"command", "eval"},
            {"suite", suite_path},
            {"out", out_dir},
            {"trials_csv", out_dir + "/trials.csv"},
            {"summary_csv", out_dir + "/summary.csv"}};
  if (dry_run) {
    std::cout << plan.dump(2) << "\n";
    return 0;
  }
  ensure_dir(out_dir);
  char* summary = nullptr;
  expect(naf_eval_run(suite_path.c_str(),
                      (out_dir + "/trials.csv").c_str(),
                      (out_dir + "/summary.csv").c_str(), &summary),
         kStageTransfer, "eval");
  std::string summary_text = take_string(summary);
  std::ifstream suite_in(suite_path);
  json suite_echo;
  try {
    suite_echo = json::parse(suite_in);
  } catch (const json::exception&) {
    suite_echo = nullptr;
  }
  plan["suite_config"] = suite_echo;
  write_text(out_dir + "/run_config.json", plan.dump(2) + "\n");
  std::cout << summary_text << "\n";
  return 0;
}

int cmd_export_mesh(const std::string& bank, const std::string& id,
                    int resolution, const std::string& out_dir,
                    bool dry_run) {
  json plan{{"command", "export-mesh"},
            {"bank", bank},
            {"id", id},
            {"resolution", resolution},
            {"out", out_dir},
            {"mesh", out_dir + "/mesh.ply"}};
  if (dry_run) {
    std::cout << plan.dump(2) << "\n";
    return 0;
  }
  ModelHandle model;
  expect(naf_bank_load(bank.c_str(), id.c_str(), &model.p), kStageIo,
         "bank-load");
  ensure_dir(out_dir);
  expect(naf_export_mesh(model.p, resolution, (out_dir + "/mesh.ply").c_str()),
         kStageIo, "mesh");
  plan["resolved_config"] = json::parse(take_string([&] {
    char* s = nullptr;
    expect(naf_model_config_json(model.p, &s), kStageConfig, "config");
    return s;
  }()));
  write_text(out_dir + "/run_config.json", plan.dump(2) + "\n");
  std::cout << "wrote " << out_dir << "/mesh.ply\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural affordance fields: fit, bank, transfer, evaluate"};
  app.require_subcommand(1);
  bool dry_run = false;
  app.add_flag("--dry-run", dry_run,
               "print the resolved plan and write nothing");

  auto* fit = app.add_subcommand("fit", "fit a field to a scene");
  std::string fit_scene, fit_bank, fit_id, fit_out;
  uint64_t fit_seed = 0;
  long fit_iters = -1, fit_static_iters = -1, fit_dynamic_iters = -1;
  std::vector<std::string> fit_overrides;
  fit->add_option("scene", fit_scene, "scene JSON path")->required();
  fit->add_option("bank", fit_bank, "bank directory")->required();
  fit->add_option("--id", fit_id, "bank entry id (default: scene name)");
  fit->add_option("--seed", fit_seed, "fit seed");
  fit->add_option("--out", fit_out, "artifact directory");
  fit->add_option("--iters", fit_iters,
                  "override both loop lengths; 0 skips fitting");
  fit->add_option("--static-iters", fit_static_iters, "static loop length");
  fit->add_option("--dynamic-iters", fit_dynamic_iters, "dynamic loop length");
  fit->add_option("--config", fit_overrides,
                  "config override key=value (repeatable)");

  auto* tr = app.add_subcommand("transfer", "transfer a policy to a target");
  std::string tr_bank, tr_target, tr_out = "transfer_out", tr_id, tr_query,
                                  tr_pose;
  int tr_keyframes = 4;
  bool tr_no_filter = false, tr_no_rank = false, tr_no_opt = false,
       tr_no_fine = false;
  tr->add_option("bank", tr_bank, "bank directory")->required();
  tr->add_option("target", tr_target, "target JSON path")->required();
  tr->add_option("out", tr_out, "output directory");
  tr->add_option("--id", tr_id, "bank entry id (skips retrieval)");
  tr->add_option("--query", tr_query, "retrieval narration query");
  tr->add_option("--gripper-pose", tr_pose,
                 "initial pose: qw,qx,qy,qz,tx,ty,tz");
  tr->add_option("--keyframes", tr_keyframes, "trajectory keyframes");
  tr->add_flag("--no-filter", tr_no_filter, "disable visibility filtering");
  tr->add_flag("--no-rank", tr_no_rank, "disable correspondence ranking");
  tr->add_flag("--no-optimization", tr_no_opt, "disable pose optimization");
  tr->add_flag("--no-fine", tr_no_fine, "disable the fine stage");

  auto* ev = app.add_subcommand("eval", "run perturbation sweeps");
  std::string ev_suite, ev_out = "eval_out";
  ev->add_option("suite", ev_suite, "suite JSON path")->required();
  ev->add_option("--out", ev_out, "output directory");

  auto* em = app.add_subcommand("export-mesh",
                                "triangulate the zero level set");
  std::string em_bank, em_id, em_out = "mesh_out";
  int em_res = 64;
  em->add_option("bank", em_bank, "bank directory")->required();
  em->add_option("id", em_id, "bank entry id")->required();
  em->add_option("--resolution", em_res, "samples per axis");
  em->add_option("--out", em_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (fit->parsed())
      return cmd_fit(fit_scene, fit_bank, fit_id, fit_seed, fit_out,
                     fit_iters, fit_static_iters, fit_dynamic_iters,
                     fit_overrides, dry_run);
    if (tr->parsed())
      return cmd_transfer(tr_bank, tr_target, tr_out, tr_id, tr_query,
                          tr_pose, tr_keyframes, tr_no_filter, tr_no_rank,
                          tr_no_opt, tr_no_fine, dry_run);
    if (ev->parsed()) return cmd_eval(ev_suite, ev_out, dry_run);
    if (em->parsed())
      return cmd_export_mesh(em_bank, em_id, em_res, em_out, dry_run);
  } catch (const CliError& e) {
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "[internal] " << e.what() << "\n";
    return 2;
  }
  return 2;
}
