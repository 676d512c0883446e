// Acceptance gate: one line per criterion, exit 0 only if all pass.

#include <Eigen/Geometry>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bank/bank.hpp"
#include "evalsuite/evalsuite.hpp"
#include "field/init.hpp"
#include "fit/fit.hpp"
#include "policy/policy.hpp"
#include "render/render.hpp"
#include "scene/scene.hpp"
#include "support/gradcheck.hpp"
#include "support/testutil.hpp"
#include "transfer/align_graph.hpp"
#include "transfer/transfer.hpp"

namespace fs = std::filesystem;
using namespace naf;
using naf::testing::fd_directional;
using naf::testing::gradcheck;
using naf::testing::Program;
using naf::testing::randn;
using naf::testing::randu;

namespace {

using PV = ad::ParamVectorT<double>;
using Idd = ad::Tape<double>::Id;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double now_s() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared fixtures: scenes and fitted models (seed 0, default config).

struct Fixtures {
  std::string scene_dir;
  std::string work_dir;
  int c5_trials = 20;
  int c6_trials = 20;
  int c7_seeds = 10;

  std::map<std::string, SceneSpec> scenes;
  std::map<std::string, NafModel> models;
  double fit_seconds_total = 0;

  // C5 cache so C6 can reuse the baseline when trial counts match.
  std::vector<TrialResult> c5_pool;

  const SceneSpec& scene(const std::string& name) {
    auto it = scenes.find(name);
    if (it == scenes.end()) {
      SceneSpec s = load_scene(scene_dir + "/" + name + ".json");
      it = scenes.emplace(name, std::move(s)).first;
    }
    return it->second;
  }

  const NafModel& model(const std::string& name) {
    auto it = models.find(name);
    if (it == models.end()) {
      const SceneSpec& s = scene(name);
      NafConfig cfg;
      cfg.seed = 0;
      cfg.horizon = s.motion.horizon;
      cfg.validate();
      NafModel m = NafModel::init(cfg);
      double t0 = now_s();
      SceneSupervision sup = make_supervision(s, cfg.seed);
      fit_static(m, sup);
      fit_dynamic(m, sup.flows);
      fit_seconds_total += now_s() - t0;
      it = models.emplace(name, std::move(m)).first;
    }
    return it->second;
  }
};

const std::vector<std::string> kShapes = {"sphere", "box", "union"};

// ---------------------------------------------------------------------------
// C1: gradient integrity.

struct PrimResult {
  std::string name;
  double worst = 0;
};

double prim_check(const PV& pv, const Program<double>& prog, double h = 1e-5) {
  return gradcheck<double>(pv, prog, h).max_rel;
}

// Scalar root with a generic cotangent.
Idd wroot(ad::Tape<double>& t, Idd x, unsigned seed) {
  Rng rng(seed);
  return t.sum_all(
      t.cmul(x, t.input(randn(rng, (int)t.rows(x), (int)t.cols(x)))));
}

// randn values kept at least `margin` away from every value in `kinks`
// (elementwise), so finite differences never straddle a non-smooth point.
MatX<double> randn_away(Rng& rng, int r, int c,
                        const std::vector<double>& kinks, double margin,
                        double scale = 1.0) {
  MatX<double> m(r, c);
  std::normal_distribution<double> d(0.0, scale);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) {
      double v;
      bool ok;
      do {
        v = d(rng);
        ok = true;
        for (double k : kinks)
          if (std::abs(v - k) < margin) ok = false;
      } while (!ok);
      m(i, j) = v;
    }
  return m;
}

std::vector<PrimResult> run_primitive_sweep(int n_points) {
  std::vector<PrimResult> out;
  auto add = [&](const std::string& name,
                 const std::function<double(unsigned)>& one) {
    PrimResult r{name, 0};
    for (int s = 0; s < n_points; ++s) r.worst = std::max(r.worst, one(s));
    out.push_back(r);
  };

  add("matmul", [](unsigned s) {
    Rng rng(100 + s);
    PV pv;
    pv.add("A", randn(rng, 4, 5));
    pv.add("B", randn(rng, 5, 3));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.matmul(p("A"), p("B")), 11);
    });
  });
  add("transpose", [](unsigned s) {
    Rng rng(200 + s);
    PV pv;
    pv.add("A", randn(rng, 3, 6));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.transpose(p("A")), 12);
    });
  });
  add("add", [](unsigned s) {
    Rng rng(300 + s);
    PV pv;
    pv.add("A", randn(rng, 4, 4));
    pv.add("B", randn(rng, 4, 4));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.add(p("A"), p("B")), 13);
    });
  });
  add("sub", [](unsigned s) {
    Rng rng(400 + s);
    PV pv;
    pv.add("A", randn(rng, 4, 4));
    pv.add("B", randn(rng, 4, 4));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.sub(p("A"), p("B")), 14);
    });
  });
  add("cmul", [](unsigned s) {
    Rng rng(500 + s);
    PV pv;
    pv.add("A", randn(rng, 4, 4));
    pv.add("B", randn(rng, 4, 4));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.cmul(p("A"), p("B")), 15);
    });
  });
  add("cdiv", [](unsigned s) {
    Rng rng(600 + s);
    PV pv;
    pv.add("A", randn(rng, 4, 4));
    pv.add("B", randu(rng, 4, 4, 0.6, 2.0));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.cdiv(p("A"), p("B")), 16);
    });
  });
  add("add_rowvec", [](unsigned s) {
    Rng rng(700 + s);
    PV pv;
    pv.add("A", randn(rng, 5, 3));
    pv.add("r", randn(rng, 1, 3));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.add_rowvec(p("A"), p("r")), 17);
    });
  });
  add("scale_by_scalar", [](unsigned s) {
    Rng rng(800 + s);
    PV pv;
    pv.add("A", randn(rng, 5, 3));
    pv.add("s", randn(rng, 1, 1));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.scale_by_scalar(p("A"), p("s")), 18);
    });
  });
  add("const_scale_add", [](unsigned s) {
    Rng rng(900 + s);
    PV pv;
    pv.add("A", randn(rng, 4, 3));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.const_add(t.const_scale(p("A"), 1.7), -0.4), 19);
    });
  });
  add("concat_cols", [](unsigned s) {
    Rng rng(1000 + s);
    PV pv;
    pv.add("A", randn(rng, 4, 2));
    pv.add("B", randn(rng, 4, 3));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.concat_cols(p("A"), p("B")), 20);
    });
  });
  add("concat_rows", [](unsigned s) {
    Rng rng(1100 + s);
    PV pv;
    pv.add("A", randn(rng, 2, 4));
    pv.add("B", randn(rng, 3, 4));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.concat_rows(p("A"), p("B")), 21);
    });
  });
  add("slice_cols", [](unsigned s) {
    Rng rng(1200 + s);
    PV pv;
    pv.add("A", randn(rng, 4, 6));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.slice_cols(p("A"), 1, 3), 22);
    });
  });
  add("slice_rows", [](unsigned s) {
    Rng rng(1300 + s);
    PV pv;
    pv.add("A", randn(rng, 6, 3));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.slice_rows(p("A"), 2, 3), 23);
    });
  });
  add("tile_rows", [](unsigned s) {
    Rng rng(1400 + s);
    PV pv;
    pv.add("A", randn(rng, 3, 4));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.tile_rows(p("A"), 3), 24);
    });
  });
  add("stack_blocks_to_cols", [](unsigned s) {
    Rng rng(1500 + s);
    PV pv;
    pv.add("A", randn(rng, 12, 1));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.stack_blocks_to_cols(p("A"), 3), 25);
    });
  });
  add("rowwise_sum", [](unsigned s) {
    Rng rng(1600 + s);
    PV pv;
    pv.add("A", randn(rng, 5, 4));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.rowwise_sum(p("A")), 26);
    });
  });
  add("sum_mean_all", [](unsigned s) {
    Rng rng(1700 + s);
    PV pv;
    pv.add("A", randn(rng, 5, 4));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return t.add(t.sum_all(t.square(p("A"))), t.mean_all(p("A")));
    });
  });
  add("softplus", [](unsigned s) {
    Rng rng(1800 + s);
    PV pv;
    pv.add("A", randn(rng, 5, 4));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.add(t.softplus(p("A"), 100.0), t.softplus(p("A"), 2.0)),
                   27);
    });
  });
  add("sigmoid", [](unsigned s) {
    Rng rng(1900 + s);
    PV pv;
    pv.add("A", randn(rng, 5, 4));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.sigmoid(p("A")), 28);
    });
  });
  add("exp_log", [](unsigned s) {
    Rng rng(2000 + s);
    PV pv;
    pv.add("A", randn(rng, 4, 3));
    pv.add("B", randu(rng, 4, 3, 0.5, 2.5));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.add(t.exp(p("A")), t.log(p("B"))), 29);
    });
  });
  add("sin_cos", [](unsigned s) {
    Rng rng(2100 + s);
    PV pv;
    pv.add("A", randn(rng, 4, 3));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.add(t.sin(p("A")), t.cos(p("A"))), 30);
    });
  });
  add("sqrt", [](unsigned s) {
    Rng rng(2200 + s);
    PV pv;
    pv.add("A", randu(rng, 4, 3, 0.4, 2.0));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.sqrt(p("A")), 31);
    });
  });
  add("abs", [](unsigned s) {
    Rng rng(2300 + s);
    PV pv;
    pv.add("A", randn_away(rng, 4, 3, {0.0}, 0.05));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.abs(p("A")), 32);
    });
  });
  add("square_neg", [](unsigned s) {
    Rng rng(2400 + s);
    PV pv;
    pv.add("A", randn(rng, 4, 3));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.add(t.square(p("A")), t.neg(p("A"))), 33);
    });
  });
  add("clamp", [](unsigned s) {
    Rng rng(2500 + s);
    PV pv;
    pv.add("A", randn_away(rng, 4, 3, {-0.8, 0.8}, 0.05));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.clamp(p("A"), -0.8, 0.8), 34);
    });
  });
  add("max_min_elem", [](unsigned s) {
    Rng rng(2600 + s);
    PV pv;
    MatX<double> a = randn(rng, 4, 3);
    MatX<double> b = randn(rng, 4, 3);
    for (int i = 0; i < a.size(); ++i)  // keep the argmax well separated
      if (std::abs(a(i) - b(i)) < 0.1) b(i) += (b(i) > a(i) ? 0.2 : -0.2);
    pv.add("A", a);
    pv.add("B", b);
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.add(t.max_elem(p("A"), p("B")),
                            t.min_elem(p("A"), p("B"))), 35);
    });
  });
  add("huber", [](unsigned s) {
    Rng rng(2700 + s);
    PV pv;
    pv.add("A", randn_away(rng, 4, 3, {-1.0, 1.0}, 0.05));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.huber(p("A"), 1.0), 36);
    });
  });
  add("bce", [](unsigned s) {
    Rng rng(2800 + s);
    PV pv;
    pv.add("P", randu(rng, 4, 2, 0.1, 0.9));
    MatX<double> labels = randu(rng, 4, 2, 0.0, 1.0);
    return prim_check(pv, [labels](ad::Tape<double>& t,
                                   const ad::ParamNodes<double>& p) {
      return wroot(t, t.bce(p("P"), labels), 37);
    });
  });
  add("cumprod_exclusive_rows", [](unsigned s) {
    Rng rng(2900 + s);
    PV pv;
    pv.add("A", randu(rng, 4, 5, 0.3, 0.95));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.cumprod_exclusive_rows(p("A")), 38);
    });
  });
  add("composite_rows", [](unsigned s) {
    Rng rng(3000 + s);
    PV pv;
    pv.add("W", randu(rng, 4, 3, 0.05, 0.5));
    pv.add("V", randn(rng, 12, 2));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.composite_rows(p("W"), p("V")), 39);
    });
  });
  add("pe_encode", [](unsigned s) {
    Rng rng(3100 + s);
    PV pv;
    pv.add("X", randn(rng, 5, 3));
    bool inc = (s % 2) == 0;
    return prim_check(pv, [inc](ad::Tape<double>& t,
                                const ad::ParamNodes<double>& p) {
      return wroot(t, t.pe_encode(p("X"), 3, inc), 40);
    });
  });
  add("pe_tangent", [](unsigned s) {
    Rng rng(3200 + s);
    PV pv;
    pv.add("X", randn(rng, 4, 3));
    bool inc = (s % 2) == 0;
    return prim_check(pv, [inc](ad::Tape<double>& t,
                                const ad::ParamNodes<double>& p) {
      return wroot(t, t.pe_tangent(p("X"), 2, inc), 41);
    });
  });
  add("hash_encode", [](unsigned s) {
    Rng rng(3300 + s);
    ad::HashGridConfig hc;
    hc.levels = 2;
    hc.table_size = 64;
    hc.features = 2;
    hc.base_resolution = 3;
    hc.growth = 2.0;
    PV pv;
    pv.add("X", randu(rng, 6, 3, -0.9, 0.9));
    for (int l = 0; l < hc.levels; ++l)
      pv.add("T" + std::to_string(l),
             MatX<double>(randn(rng, hc.table_size, hc.features) * 0.1));
    return prim_check(pv, [hc](ad::Tape<double>& t,
                               const ad::ParamNodes<double>& p) {
      std::vector<Idd> tables;
      for (int l = 0; l < hc.levels; ++l) tables.push_back(p("T" + std::to_string(l)));
      return wroot(t, t.hash_encode(p("X"), tables, hc), 42);
    });
  });
  add("sinc_sqrt", [](unsigned s) {
    Rng rng(3400 + s);
    PV pv;
    pv.add("q", randu(rng, 1, 1, 0.01, 2.5));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.sinc_sqrt(p("q")), 43);
    });
  });
  add("versine_ratio", [](unsigned s) {
    Rng rng(3500 + s);
    PV pv;
    pv.add("q", randu(rng, 1, 1, 0.01, 2.5));
    return prim_check(pv, [](ad::Tape<double>& t, const ad::ParamNodes<double>& p) {
      return wroot(t, t.versine_ratio(p("q")), 44);
    });
  });
  return out;
}

NafConfig tiny_config() {
  NafConfig c;
  c.z_dim = 16;
  c.hidden = 16;
  c.enc_layers = 2;
  c.pe_bands = 2;
  c.act_bands = 2;
  c.fea_dim = 4;
  c.z_compress = 8;
  c.horizon = 3;
  c.hash.levels = 2;
  c.hash.table_size = 64;
  c.hash.features = 2;
  c.hash.base_resolution = 3;
  c.hash.growth = 2.0;
  c.eikonal_cube_points = 4;
  c.n_samples_fit = 4;
  c.n_samples_transfer = 5;
  c.validate();
  return c;
}

PV perturbed(PV pv, Rng& rng, double sigma) {
  VecX<double> flat = pv.flatten();
  std::normal_distribution<double> d(0.0, sigma);
  for (int64_t i = 0; i < flat.size(); ++i) flat(i) += d(rng);
  pv.unflatten(flat);
  return pv;
}

// |g.d - fd| relative to the directional derivative scale.
double directional_rel(const PV& pv, const Program<double>& prog, Rng& rng) {
  auto res = ad::evaluate_with_gradients<double>(pv, prog);
  VecX<double> dir = randn(rng, (int)res.grad.size(), 1);
  dir.normalize();
  double fd = fd_directional<double>(pv, prog, dir, 1e-5);
  double an = res.grad.dot(dir);
  double denom = std::max(std::abs(fd), 1e-8 * std::max(1.0, res.grad.norm()));
  return std::abs(an - fd) / denom;
}

StaticBatchT<double> random_static_batch(const NafConfig& cfg, Rng& rng) {
  const int N = 6, S = 4;
  StaticBatchT<double> b;
  b.rays.n_rays = N;
  b.rays.n_samples = S;
  b.rays.points = randn(rng, S * N, 3) * 0.5;
  b.rays.t.resize(N, S - 1);
  for (int r = 0; r < N; ++r)
    for (int i = 0; i < S - 1; ++i) b.rays.t(r, i) = 1.5 + 0.3 * i + 0.01 * r;
  b.rays.tf = MatX<double>::Constant(N, 1, 2.6);
  b.label_color = randu(rng, N, 3, 0.0, 1.0);
  b.label_mask = randu(rng, N, 1, 0.1, 0.9);
  b.label_fea = randn(rng, N, cfg.fea_dim) * 0.3;
  b.label_cnt = randu(rng, N, 1, 0.1, 0.9);
  b.fg_weight = MatX<double>::Zero(N, 1);
  for (int i = 0; i < N; ++i) b.fg_weight(i, 0) = (i % 2 == 0) ? 1.0 : 0.0;
  b.eik_pts = randn(rng, N + 4, 3) * 0.6;
  return b;
}

DynamicBatchT<double> random_dynamic_batch(const NafConfig& cfg, Rng& rng) {
  const int N = 8;
  DynamicBatchT<double> b;
  b.base = randn(rng, N, 3) * 0.5;
  b.label_off = randn(rng, N, 3 * cfg.horizon) * 0.1;
  b.label_off.leftCols(3).setZero();
  b.label_vis = randu(rng, N, cfg.horizon, 0.0, 1.0);
  return b;
}

struct EnergyFixture {
  AlignInputs data;
  ContactData region;
  MatX<double> tqc;
  Sim3d base;
};

EnergyFixture random_energy_fixture(const NafConfig& cfg, Rng& rng) {
  EnergyFixture f;
  Camera cam = make_orbit_camera(6, 6, 50.0, 0.7, 0.3, 2.8);
  std::vector<int> ids(36);
  for (int i = 0; i < 36; ++i) ids[i] = i;
  f.data.rays =
      make_ray_batch(cam, ids, RenderSlab{1.8, 3.8}, cfg.n_samples_transfer);
  MatX<double> desc = randn(rng, 36, cfg.fea_dim);
  f.data.desc_n.resize(36, cfg.fea_dim);
  for (int i = 0; i < 36; ++i)
    f.data.desc_n.row(i) = (desc.row(i) / desc.row(i).norm()).cast<float>();
  f.data.depth = randu(rng, 36, 1, 2.0, 3.4).cast<float>();
  f.data.cloud_sub = randn(rng, 16, 3) * 0.4;

  f.region.points = randn(rng, 12, 3) * 0.4;
  MatX<double> rdesc = randn(rng, 12, cfg.fea_dim);
  f.region.desc_n.resize(12, cfg.fea_dim);
  for (int i = 0; i < 12; ++i)
    f.region.desc_n.row(i) = (rdesc.row(i) / rdesc.row(i).norm()).cast<float>();
  f.tqc = randn(rng, 6, 3) * 0.4;

  std::normal_distribution<double> nd(0.0, 1.0);
  Vec3<double> w(nd(rng), nd(rng), nd(rng));
  f.base.R = axis_angle_to_matrix<double>(w * 0.25);
  f.base.t = Vec3<double>(nd(rng), nd(rng), nd(rng)) * 0.2;
  f.base.s = std::exp(0.1 * nd(rng));
  return f;
}

// Full 7-coordinate central FD of a chart-parameterized energy with frozen
// statics, mirroring the production optimizer's parameterization.
double chart_fd_rel(const PV& chart, const PV& statics, const NafConfig& cfg,
                    const EnergyFixture& fx, bool fine) {
  auto eval = [&](const PV& ch, VecX<double>* grad) {
    ad::Tape<double> tape;
    ad::ParamNodes<double> nodes(tape, ch, &statics);
    FieldGraph<double> graph(tape, nodes, cfg);
    ChartWarpT<double> warp = make_chart_warp<double>(tape, nodes);
    AlignCtx<double> ctx{tape, graph, warp, fx.base};
    Idd root = fine ? fine_energy(ctx, fx.data, fx.region, fx.tqc, cfg)
                    : coarse_energy(ctx, fx.data, cfg);
    double v = tape.scalar(root);
    if (grad) {
      tape.backward(root);
      *grad = nodes.collect_grad().cast<double>();
    }
    return v;
  };

  VecX<double> grad;
  eval(chart, &grad);

  VecX<double> flat = chart.flatten();
  double worst = 0;
  const double h = 1e-5;
  double scale = std::max(grad.lpNorm<Eigen::Infinity>(), 1e-12);
  for (int64_t i = 0; i < flat.size(); ++i) {
    PV up = chart, dn = chart;
    VecX<double> fu = flat, fd = flat;
    fu(i) += h;
    fd(i) -= h;
    up.unflatten(fu);
    dn.unflatten(fd);
    double g = (eval(up, nullptr) - eval(dn, nullptr)) / (2 * h);
    double denom = std::max(std::abs(g), 1e-6 * scale + 1e-12);
    worst = std::max(worst, std::abs(grad(i) - g) / denom);
  }
  return worst;
}

Outcome criterion_1(Fixtures&) {
  double t0 = now_s();
  const int kPoints = 20;

  auto prims = run_primitive_sweep(kPoints);
  double prim_worst = 0;
  std::string prim_worst_name;
  for (const auto& p : prims)
    if (p.worst > prim_worst) {
      prim_worst = p.worst;
      prim_worst_name = p.name;
    }
  bool prim_ok = prim_worst < 1e-4;

  NafConfig cfg = tiny_config();
  PV statics0 = init_static_params_d(cfg);
  PV dynamics0 = init_dynamic_params_d(cfg);

  double en_worst = 0;
  std::string en_worst_name;
  auto track = [&](const char* name, double v) {
    if (v > en_worst) {
      en_worst = v;
      en_worst_name = name;
    }
  };

  for (int s = 0; s < kPoints; ++s) {
    Rng rng(9000 + s);
    PV st = perturbed(statics0, rng, 0.05);
    StaticBatchT<double> sb = random_static_batch(cfg, rng);
    Program<double> sprog = [&](ad::Tape<double>& t,
                                const ad::ParamNodes<double>& p) {
      FieldGraph<double> g(t, p, cfg);
      return static_loss_graph<double>(g, sb, cfg).total;
    };
    track("static", directional_rel(st, sprog, rng));

    PV all = st;
    PV dyn = perturbed(dynamics0, rng, 0.05);
    for (const auto& seg : dyn.segments) all.add(seg.name, seg.value);
    DynamicBatchT<double> db = random_dynamic_batch(cfg, rng);
    Program<double> dprog = [&](ad::Tape<double>& t,
                                const ad::ParamNodes<double>& p) {
      FieldGraph<double> g(t, p, cfg);
      return dynamic_loss_graph<double>(g, db);
    };
    track("dynamic", directional_rel(all, dprog, rng));

    EnergyFixture fx = random_energy_fixture(cfg, rng);
    PV chart = perturbed(zero_chart<double>(), rng, 0.08);
    track("coarse", chart_fd_rel(chart, st, cfg, fx, false));
    track("fine", chart_fd_rel(chart, st, cfg, fx, true));
  }
  bool en_ok = en_worst < 1e-2;

  double secs = now_s() - t0;
  bool in_budget = secs < 120.0;
  Outcome o;
  o.pass = prim_ok && en_ok && in_budget;
  o.detail = fmt(
      "primitives worst %.2e (%s, tol 1e-4, %zu ops x %d pts); energies worst "
      "%.2e (%s, tol 1e-2, %d pts); %.1fs (budget 120s)",
      prim_worst, prim_worst_name.c_str(), prims.size(), kPoints, en_worst,
      en_worst_name.c_str(), kPoints, secs);
  return o;
}

// ---------------------------------------------------------------------------
// C2: fitting fidelity.

Outcome criterion_2(Fixtures& fx) {
  double t0 = now_s();
  bool ok = true;
  std::string detail;

  for (const auto& name : kShapes) {
    const SceneSpec& scene = fx.scene(name);
    const NafModel& model = fx.model(name);
    const NafConfig& cfg = model.cfg;
    double diag = shape_bbox(scene.shape).diagonal();

    MatX<double> surf = sample_shape_surface(scene.shape, 1000, 42);
    MatX<float> sdf = model.query_sdf(surf.cast<float>());
    double mean_abs = (double)sdf.array().abs().mean();
    bool sdf_ok = mean_abs < 0.02 * diag;

    int64_t inter = 0, uni = 0;
    RenderHeads heads;
    heads.cnt = true;
    for (size_t v = 0; v < 6; ++v) {
      Camera cam = make_orbit_camera(
          scene.supervision_resolution, scene.supervision_resolution,
          scene.rig.fov_deg, 2.0 * M_PI * v / 6.0,
          scene.rig.elevations_deg[v] * M_PI / 180.0, scene.rig.distance);
      ObservationMaps oracle = oracle_render(scene.shape, scene.contact, cam,
                                             scene.supervision_resolution,
                                             scene.descriptor_dim);
      ObservationMaps pred = render_image(
          model, cam, default_slab(cam, cfg.near_offset, cfg.far_offset),
          cfg.n_samples_fit, heads);
      for (int i = 0; i < oracle.contact.rows(); ++i) {
        bool a = pred.contact(i, 0) > 0.5f;
        bool b = oracle.contact(i, 0) > 0.5f;
        inter += (a && b);
        uni += (a || b);
      }
    }
    double iou = uni > 0 ? (double)inter / (double)uni : 0.0;
    bool iou_ok = iou > 0.5;

    MatX<float> base = model.project_to_surface(
        sample_shape_surface(scene.shape, 256, 43).cast<float>());
    auto fl = model.query_flow(base);
    const int H = cfg.horizon;
    double step_err = 0;
    int64_t cnt = 0;
    for (int k = 1; k < H; ++k) {
      Posed Ta = scene.motion.pose_at(k - 1);
      Posed Tb = scene.motion.pose_at(k);
      for (int i = 0; i < base.rows(); ++i) {
        Vec3<double> p = base.row(i).transpose().cast<double>();
        Vec3<double> gt_step = Tb.apply(p) - Ta.apply(p);
        Vec3<double> pr_step =
            (fl.flows.row(i).segment(3 * k, 3) -
             fl.flows.row(i).segment(3 * (k - 1), 3)).transpose().cast<double>();
        step_err += (pr_step - gt_step).norm();
        ++cnt;
      }
    }
    step_err /= (double)cnt;
    bool flow_ok = step_err < 0.01;

    ok = ok && sdf_ok && iou_ok && flow_ok;
    detail += fmt("%s[sdf %.4f/%.4f iou %.2f step %.4f] ", name.c_str(),
                  mean_abs, 0.02 * diag, iou, step_err);
  }

  double secs = now_s() - t0;
  bool in_budget = secs < 900.0;
  ok = ok && in_budget;
  detail += fmt("%.0fs (budget 900s)", secs);
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// C3: rigid-fit oracle equivalence.

Outcome criterion_3(Fixtures&) {
  double worst_rot = 0, worst_t = 0;
  Rng rng(77);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int inst = 0; inst < 100; ++inst) {
    const bool reflective = inst >= 90;
    const int n = 20;
    MatX<double> src = randn(rng, n, 3);
    Vec3<double> w(nd(rng), nd(rng), nd(rng));
    Mat3<double> R = axis_angle_to_matrix<double>(w);
    Vec3<double> t(nd(rng), nd(rng), nd(rng));
    MatX<double> dst(n, 3);
    if (reflective) {
      // Mirror the cloud so the covariance SVD needs the det(UV^T) fix.
      Mat3<double> M = Mat3<double>::Identity();
      M(2, 2) = -1.0;
      dst = src * M.transpose();
      dst += randn(rng, n, 3) * 0.01;
    } else {
      dst = src * R.transpose();
      dst.rowwise() += t.transpose();
      dst += randn(rng, n, 3) * 0.02;
    }

    Posed ours =
        rigid_from_weighted_pairs(src, dst, VecX<double>::Ones(n));

    MatX<double> srcT = src.transpose();
    MatX<double> dstT = dst.transpose();
    Eigen::Matrix4d M = Eigen::umeyama(srcT, dstT, false);
    Mat3<double> Ru = M.topLeftCorner<3, 3>();
    Vec3<double> tu = M.topRightCorner<3, 1>();

    worst_rot = std::max(worst_rot, (double)rotation_geodesic(ours.R, Ru));
    worst_t = std::max(worst_t, (ours.t - tu).norm());
  }
  bool ok = worst_rot < 1e-6 && worst_t < 1e-6;
  return {ok, fmt("100 instances (10 reflective): rot %.2e rad, trans %.2e "
                  "(tol 1e-6)",
                  worst_rot, worst_t)};
}

// ---------------------------------------------------------------------------
// C4: trajectory extraction from scripted flows.

Outcome criterion_4(Fixtures& fx) {
  const SceneSpec& sphere = fx.scene("sphere");

  MotionScript rev;
  rev.kind = MotionScript::Kind::kRevolute;
  rev.axis = {0, 0, 1};
  rev.pivot = {0, 0, 0};
  rev.theta_step = 10.0 * M_PI / 180.0;
  rev.horizon = 16;
  PointFlowSet flows = script_flows(sphere.shape, rev, 512, 5);

  Posed init;
  init.t = {0.9, 0, 0};
  Trajectory traj = flows_to_trajectory(flows, init, 4);
  std::vector<int> keys = downsample_flows(16, 4);

  double worst_ang = 0, worst_axis = 0;
  for (size_t j = 1; j < traj.poses.size(); ++j) {
    Mat3<double> rel = traj.poses[j].R * traj.poses[j - 1].R.transpose();
    Eigen::AngleAxisd aa(rel);
    double expect = (keys[j] - keys[j - 1]) * 10.0;
    worst_ang = std::max(worst_ang,
                         std::abs(aa.angle() * 180.0 / M_PI - expect));
    Vec3<double> axis = aa.axis();
    if (axis.z() < 0) axis = -axis;
    double axis_deg =
        std::acos(std::clamp(axis.dot(Vec3<double>(0, 0, 1)), -1.0, 1.0)) *
        180.0 / M_PI;
    worst_axis = std::max(worst_axis, axis_deg);
  }
  bool rev_ok = worst_ang < 0.5 && worst_axis < 1.0;

  MotionScript pri;
  pri.kind = MotionScript::Kind::kPrismatic;
  pri.direction = {0, 0, 1};
  pri.d_step = 0.02;
  pri.horizon = 16;
  PointFlowSet pflows = script_flows(sphere.shape, pri, 512, 6);
  Trajectory ptraj = flows_to_trajectory(pflows, init, 4);
  Vec3<double> moved = ptraj.poses.back().t - ptraj.poses.front().t;
  Vec3<double> expect = pri.direction * (0.02 * keys.back());
  double trans_err = (moved - expect).norm();
  bool pri_ok = trans_err < 1e-3;

  return {rev_ok && pri_ok,
          fmt("revolute angle err %.3f deg (tol 0.5), axis err %.3f deg (tol "
              "1); prismatic trans err %.2e (tol 1e-3)",
              worst_ang, worst_axis, trans_err)};
}

// ---------------------------------------------------------------------------
// C5: transfer recovery sweep.

Outcome criterion_5(Fixtures& fx) {
  double t0 = now_s();
  TransferOptions opts;
  fx.c5_pool.clear();
  std::string per_shape;
  for (const auto& name : kShapes) {
    auto trials =
        run_sweep(fx.model(name), fx.scene(name), fx.c5_trials, 100, opts);
    SweepSummary s = summarize(trials);
    per_shape += fmt("%s %.0f/%.0f%% ", name.c_str(), 100 * s.align_rate,
                     100 * s.traj_rate);
    fx.c5_pool.insert(fx.c5_pool.end(), trials.begin(), trials.end());
  }
  SweepSummary pooled = summarize(fx.c5_pool);
  double secs = now_s() - t0;
  bool ok = pooled.align_rate >= 0.80 && pooled.traj_rate >= 0.75 &&
            secs < 1800.0;
  return {ok, fmt("pooled align %.1f%% (need 80), traj %.1f%% (need 75) over "
                  "%d trials; %s%.0fs (budget 1800s)",
                  100 * pooled.align_rate, 100 * pooled.traj_rate, pooled.n,
                  per_shape.c_str(), secs)};
}

// ---------------------------------------------------------------------------
// C6: ablation direction checks.

Outcome criterion_6(Fixtures& fx) {
  double t0 = now_s();

  double base_rate;
  if (!fx.c5_pool.empty() && fx.c6_trials == fx.c5_trials) {
    base_rate = summarize(fx.c5_pool).align_rate;
  } else {
    std::vector<TrialResult> pool;
    TransferOptions opts;
    for (const auto& name : kShapes) {
      auto t = run_sweep(fx.model(name), fx.scene(name), fx.c6_trials, 100, opts);
      pool.insert(pool.end(), t.begin(), t.end());
    }
    base_rate = summarize(pool).align_rate;
  }

  struct Abl {
    const char* name;
    void (*apply)(TransferOptions&);
  };
  const Abl abls[] = {
      {"filter", [](TransferOptions& o) { o.use_filter = false; }},
      {"rank", [](TransferOptions& o) { o.use_rank = false; }},
      {"optimization", [](TransferOptions& o) { o.use_optimization = false; }},
      {"fine", [](TransferOptions& o) { o.use_fine = false; }},
  };

  bool ok = true;
  std::string detail = fmt("baseline %.1f%%; ", 100 * base_rate);
  for (const auto& a : abls) {
    TransferOptions opts;
    a.apply(opts);
    std::vector<TrialResult> pool;
    for (const auto& name : kShapes) {
      auto t = run_sweep(fx.model(name), fx.scene(name), fx.c6_trials, 100, opts);
      pool.insert(pool.end(), t.begin(), t.end());
    }
    double rate = summarize(pool).align_rate;
    double drop = base_rate - rate;
    bool this_ok = drop >= 0.10;
    ok = ok && this_ok;
    detail += fmt("no-%s %.1f%% (drop %.1fpp%s) ", a.name, 100 * rate,
                  100 * drop, this_ok ? "" : " < 10");
  }
  detail += fmt("; %.0fs", now_s() - t0);
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// C7: fine-tuning speedup on a perturbed motion.

Outcome criterion_7(Fixtures& fx) {
  double t0 = now_s();
  const SceneSpec& scene = fx.scene("sphere");
  const NafModel& fitted = fx.model("sphere");

  MotionScript pert = scene.motion;
  if (pert.kind == MotionScript::Kind::kRevolute)
    pert.theta_step *= 1.2;
  else
    pert.d_step *= 1.2;
  PointFlowSet flows = script_flows(scene.shape, pert, 512, 123);

  int wins = 0;
  std::string detail;
  for (int s = 0; s < fx.c7_seeds; ++s) {
    int sp = -1, ss = -1;
    try {
      NafModel a = fitted;
      a.cfg.seed = 1000 + s;
      sp = fine_tune_action(a, flows, ActionInit::kPretrained)
               .steps_to_threshold;
      NafModel b = fitted;
      b.cfg.seed = 1000 + s;
      ss = fine_tune_action(b, flows, ActionInit::kScratch).steps_to_threshold;
    } catch (const Error&) {
    }
    bool win = sp >= 0 && ss >= 0 && 2 * sp <= ss;
    wins += win;
    detail += fmt("%d/%d%s ", sp, ss, win ? "" : "!");
  }
  bool ok = wins >= 8;
  return {ok, fmt("%d/%d seeds with pretrained <= 0.5x scratch "
                  "(pretrained/scratch steps: %s); %.0fs",
                  wins, fx.c7_seeds, detail.c_str(), now_s() - t0)};
}

// ---------------------------------------------------------------------------
// C8: bank persistence.

Outcome criterion_8(Fixtures& fx) {
  fs::path dir = fs::path(fx.work_dir) / "bank_c8";
  fs::remove_all(dir);
  fs::create_directories(dir);

  NafConfig cfg = tiny_config();
  NafModel m = NafModel::init(cfg);
  m.has_dynamics = true;
  save_naf(m, "turn the test knob", dir.string(), "rt");
  NafModel back = load_naf(dir.string(), "rt");
  VecX<float> a0 = m.statics.flatten(), a1 = back.statics.flatten();
  VecX<float> d0 = m.dynamics.flatten(), d1 = back.dynamics.flatten();
  bool round_ok = a0.size() == a1.size() && d0.size() == d1.size() &&
                  std::memcmp(a0.data(), a1.data(), a0.size() * 4) == 0 &&
                  std::memcmp(d0.data(), d1.data(), d0.size() * 4) == 0 &&
                  back.has_dynamics == m.has_dynamics;

  save_naf(m, "slide the test tray", dir.string(), "victim");
  {
    fs::path blob = dir / "victim.naf";
    std::fstream f(blob, std::ios::in | std::ios::out | std::ios::binary);
    f.seekg(0, std::ios::end);
    auto size = (int64_t)f.tellg();
    f.seekp(size / 2);
    char c;
    f.seekg(size / 2);
    f.get(c);
    c ^= 0x5a;
    f.seekp(size / 2);
    f.put(c);
  }
  bool corrupt_ok = false;
  std::string corrupt_msg;
  try {
    load_naf(dir.string(), "victim");
  } catch (const Error& e) {
    corrupt_ok = e.code() == Errc::io_error;
    corrupt_msg = e.what();
  }

  // Simulated interruption: a later save crashed after writing its blob but
  // before the manifest rename.  The stray blob and temp manifest must leave
  // the bank untouched.
  std::error_code ec;
  fs::copy_file(dir / "rt.naf", dir / "orphan.naf", ec);
  std::ofstream(dir / "manifest.json.tmp") << "{ \"torn\": tru";
  bool atomic_ok = false;
  try {
    auto entries = list_bank(dir.string());
    atomic_ok = entries.size() == 2;
    for (const auto& e : entries)
      if (e.id == "orphan") atomic_ok = false;
    NafModel again = load_naf(dir.string(), "rt");
    atomic_ok = atomic_ok && again.statics.flatten().size() == a0.size();
  } catch (const Error&) {
    atomic_ok = false;
  }

  // A failed save (unwritable blob path) must leave the manifest unchanged.
  bool failed_save_ok = false;
  try {
    save_naf(m, "x", dir.string(), "no/such/dir/entry");
  } catch (const Error&) {
    failed_save_ok = list_bank(dir.string()).size() == 2;
  }

  bool ok = round_ok && corrupt_ok && atomic_ok && failed_save_ok;
  return {ok, fmt("round-trip %s; corruption detected %s (%s); interruption "
                  "tolerated %s; failed save isolated %s",
                  round_ok ? "bit-exact" : "FAILED",
                  corrupt_ok ? "yes" : "NO",
                  corrupt_msg.substr(0, 48).c_str(),
                  atomic_ok ? "yes" : "NO", failed_save_ok ? "yes" : "NO")};
}

}  // namespace

int main(int argc, char** argv) {
  Fixtures fx;
  fx.scene_dir = "scenes";
  fx.work_dir = "acceptance_work";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    auto next = [&]() -> std::string {
      if (i + 1 >= argc) {
        fprintf(stderr, "missing value for %s\n", a.c_str());
        exit(2);
      }
      return argv[++i];
    };
    if (a == "--scene-dir") {
      fx.scene_dir = next();
    } else if (a == "--work-dir") {
      fx.work_dir = next();
    } else if (a == "--trials") {
      fx.c5_trials = fx.c6_trials = std::stoi(next());
    } else if (a == "--c6-trials") {
      fx.c6_trials = std::stoi(next());
    } else if (a == "--c7-seeds") {
      fx.c7_seeds = std::stoi(next());
    } else if (a == "--only") {
      std::stringstream ss(next());
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      fprintf(stderr,
              "usage: %s [--scene-dir D] [--work-dir D] [--only 1,2,...] "
              "[--trials N] [--c6-trials N] [--c7-seeds N]\n",
              argv[0]);
      return 2;
    }
  }
  fs::create_directories(fx.work_dir);

  struct Criterion {
    int num;
    const char* name;
    Outcome (*run)(Fixtures&);
  };
  const Criterion criteria[] = {
      {1, "gradient integrity", criterion_1},
      {2, "fitting fidelity", criterion_2},
      {3, "rigid-fit oracle equivalence", criterion_3},
      {4, "trajectory extraction", criterion_4},
      {5, "transfer recovery sweep", criterion_5},
      {6, "ablation direction checks", criterion_6},
      {7, "fine-tuning speedup", criterion_7},
      {8, "bank persistence", criterion_8},
  };

  double t0 = now_s();
  int passed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.num)) continue;
    ++ran;
    Outcome o;
    try {
      o = c.run(fx);
    } catch (const Error& e) {
      o = {false, std::string("unhandled error: ") + e.what()};
    } catch (const std::exception& e) {
      o = {false, std::string("unhandled exception: ") + e.what()};
    }
    passed += o.pass;
    printf("C%d %-28s %s  %s\n", c.num, c.name, o.pass ? "PASS" : "FAIL",
           o.detail.c_str());
    fflush(stdout);
  }
  printf("RESULT: %d/%d criteria passed (%.0fs total)\n", passed, ran,
         now_s() - t0);
  return passed == ran ? 0 : 1;
}
