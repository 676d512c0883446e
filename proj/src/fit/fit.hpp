#pragma once

#include <string>
#include <vector>

#include "ad/adam.hpp"
#include "ad/program.hpp"
#include "field/model.hpp"
#include "render/render.hpp"
#include "scene/scene.hpp"

namespace naf {

// One supervision batch for the static phase: rays pooled across views plus
// the eikonal sample points.
template <typename T>
struct StaticBatchT {
  RayBatchT<T> rays;
  MatX<T> label_color;  // N x 3
  MatX<T> label_mask;   // N x 1
  MatX<T> label_fea;    // N x d
  MatX<T> label_cnt;    // N x 1
  MatX<T> fg_weight;    // N x 1 (oracle mask; weights the fea/cnt terms)
  MatX<T> eik_pts;      // (N + n_cube) x 3

  template <typename U>
  StaticBatchT<U> cast() const {
    StaticBatchT<U> o;
    o.rays = rays.template cast<U>();
    o.label_color = label_color.template cast<U>();
    o.label_mask = label_mask.template cast<U>();
    o.label_fea = label_fea.template cast<U>();
    o.label_cnt = label_cnt.template cast<U>();
    o.fg_weight = fg_weight.template cast<U>();
    o.eik_pts = eik_pts.template cast<U>();
    return o;
  }
};

using StaticBatch = StaticBatchT<double>;

StaticBatch make_static_batch(const SceneSupervision& sup, const NafConfig& cfg,
                              Rng& rng);

template <typename T>
struct StaticLossNodes {
  using Id = typename ad::Tape<T>::Id;
  Id total, col, reg, msk, fea, cnt;
};

// Builds Eq.-6 style static loss on the tape.  Labels enter as inputs; the
// feature/contact terms are foreground-weighted means.
template <typename T>
StaticLossNodes<T> static_loss_graph(const FieldGraph<T>& g,
                                     const StaticBatchT<T>& batch,
                                     const NafConfig& cfg) {
  auto& tp = g.tape();
  using Id = typename ad::Tape<T>::Id;
  const int N = batch.rays.n_rays;
  const int S = batch.rays.n_samples;
  const int d = (int)batch.label_fea.cols();

  Id pts = tp.input(batch.rays.points);
  Id t = tp.input(batch.rays.t);
  Id tf = tp.input(batch.rays.tf);
  RenderHeads heads;
  heads.color = true;
  heads.fea = true;
  heads.cnt = true;
  auto rn = render_graph<T>(g, pts, N, S, t, tf, heads);

  StaticLossNodes<T> L;
  L.col = tp.mean_all(tp.square(tp.sub(rn.color, tp.input(batch.label_color))));
  L.msk = tp.mean_all(tp.bce(rn.mask, batch.label_mask));
  L.reg = g.eikonal(tp.input(batch.eik_pts));

  T wsum = std::max((T)1, (T)batch.fg_weight.sum());
  Id wfg = tp.input(batch.fg_weight);
  Id fea_err = tp.const_scale(
      tp.rowwise_sum(tp.square(tp.sub(rn.fea, tp.input(batch.label_fea)))),
      1.0 / d);
  L.fea = tp.const_scale(tp.sum_all(tp.cmul(fea_err, wfg)), 1.0 / (double)wsum);
  Id cnt_err = tp.bce(rn.cnt, batch.label_cnt);
  L.cnt = tp.const_scale(tp.sum_all(tp.cmul(cnt_err, wfg)), 1.0 / (double)wsum);

  L.total = tp.add(
      L.col,
      tp.add(tp.const_scale(L.reg, cfg.w_reg),
             tp.add(tp.const_scale(L.msk, cfg.w_msk),
                    tp.add(tp.const_scale(L.fea, cfg.w_fea),
                           tp.const_scale(L.cnt, cfg.w_cnt)))));
  return L;
}

struct StaticLossBreakdown {
  double total = 0, col = 0, reg = 0, msk = 0, fea = 0, cnt = 0;
};

StaticLossBreakdown static_loss(const NafModel& model,
                                const StaticBatch& batch);

struct FitTraceRow {
  int step = 0;
  double total = 0, col = 0, reg = 0, msk = 0, fea = 0, cnt = 0;
};

void write_trace_csv(const std::vector<FitTraceRow>& trace,
                     const std::string& path);

// Static phase: optimizes model.statics in place, returns the loss trace.
std::vector<FitTraceRow> fit_static(NafModel& model,
                                    const SceneSupervision& sup);

// Dynamic phase ----------------------------------------------------------

template <typename T>
struct DynamicBatchT {
  MatX<T> base;        // N x 3 surface points
  MatX<T> label_off;   // N x 3H offsets from base, step 0 = zero
  MatX<T> label_vis;   // N x H

  template <typename U>
  DynamicBatchT<U> cast() const {
    DynamicBatchT<U> o;
    o.base = base.template cast<U>();
    o.label_off = label_off.template cast<U>();
    o.label_vis = label_vis.template cast<U>();
    return o;
  }
};

using DynamicBatch = DynamicBatchT<double>;

DynamicBatch make_dynamic_batch(const PointFlowSet& flows,
                                const std::vector<int>& rows);

// Sum of squared flow and visibility errors (Eq. 9).
template <typename T>
typename ad::Tape<T>::Id dynamic_loss_graph(const FieldGraph<T>& g,
                                            const DynamicBatchT<T>& batch) {
  auto& tp = g.tape();
  auto x = tp.input(batch.base);
  auto act = g.action(x);
  auto loss_p = tp.sum_all(
      tp.square(tp.sub(act.offsets, tp.input(batch.label_off))));
  auto loss_v =
      tp.sum_all(tp.square(tp.sub(act.vis, tp.input(batch.label_vis))));
  return tp.add(loss_p, loss_v);
}

double dynamic_loss(const NafModel& model, const PointFlowSet& flows,
                    const std::vector<int>& rows);

struct DynTraceRow {
  int step = 0;
  double total = 0;
};

void write_trace_csv(const std::vector<DynTraceRow>& trace,
                     const std::string& path);

// Dynamic phase: optimizes model.dynamics in place; statics stay bit-exact.
std::vector<DynTraceRow> fit_dynamic(NafModel& model, const PointFlowSet& flows);

enum class ActionInit { kPretrained, kScratch };

struct FineTuneResult {
  int steps_to_threshold = -1;
  double threshold = 0;
  double scratch_floor = 0;
  std::vector<DynTraceRow> trace;
};

// Refits the action heads on new flows and reports the first step whose
// full-set loss crosses 1.25x the converged-from-scratch floor.
FineTuneResult fine_tune_action(NafModel& model, const PointFlowSet& flows,
                                ActionInit init);

}  // namespace naf
