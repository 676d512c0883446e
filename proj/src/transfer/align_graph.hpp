#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "ad/program.hpp"
#include "field/model.hpp"
#include "render/render.hpp"
#include "scene/scene.hpp"

// Alignment energy graphs, templated on the tape scalar so the production
// path runs in float while integrity checks can rebuild the exact same
// energies in double for finite differencing.

namespace naf {

// so(3) + translation + log-scale chart evaluated on one tape.  At the zero
// chart the warp is the identity; the descent loop folds each step into the
// base transform and re-zeroes the chart.
template <typename T>
struct ChartWarpT {
  ad::Tape<T>* tp = nullptr;
  typename ad::Tape<T>::Id rot = -1;    // 3x3
  typename ad::Tape<T>::Id scale = -1;  // 1x1, exp(logs)
  typename ad::Tape<T>::Id trow = -1;   // 1x3

  typename ad::Tape<T>::Id apply(typename ad::Tape<T>::Id pts) const {
    return tp->add_rowvec(
        tp->scale_by_scalar(tp->matmul(pts, tp->transpose(rot)), scale), trow);
  }
};

template <typename T>
ChartWarpT<T> make_chart_warp(ad::Tape<T>& tp, const ad::ParamNodes<T>& nodes) {
  using Id = typename ad::Tape<T>::Id;
  Id w = nodes("chart_w");
  Id q = tp.sum_all(tp.square(w));
  MatX<T> g1(3, 3), g2(3, 3), g3(3, 3), eye(3, 3);
  g1 << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  g2 << 0, 0, 1, 0, 0, 0, -1, 0, 0;
  g3 << 0, -1, 0, 1, 0, 0, 0, 0, 0;
  eye.setIdentity();
  Id k = tp.add(
      tp.add(tp.scale_by_scalar(tp.input(g1), tp.slice_rows(w, 0, 1)),
             tp.scale_by_scalar(tp.input(g2), tp.slice_rows(w, 1, 1))),
      tp.scale_by_scalar(tp.input(g3), tp.slice_rows(w, 2, 1)));
  ChartWarpT<T> cw;
  cw.tp = &tp;
  cw.rot = tp.add(tp.input(eye),
                  tp.add(tp.scale_by_scalar(k, tp.sinc_sqrt(q)),
                         tp.scale_by_scalar(tp.matmul(k, k),
                                            tp.versine_ratio(q))));
  cw.scale = tp.exp(nodes("chart_logs"));
  cw.trow = tp.transpose(nodes("chart_t"));
  return cw;
}

template <typename T>
ad::ParamVectorT<T> zero_chart() {
  ad::ParamVectorT<T> pv;
  pv.add("chart_w", MatX<T>::Zero(3, 1));
  pv.add("chart_t", MatX<T>::Zero(3, 1));
  pv.add("chart_logs", MatX<T>::Zero(1, 1));
  return pv;
}

template <typename T>
Sim3d chart_to_sim3(const ad::ParamVectorT<T>& chart) {
  Vec3<double> w = chart.at("chart_w").template cast<double>().col(0);
  Sim3d d;
  d.s = std::exp((double)chart.at("chart_logs")(0, 0));
  d.R = axis_angle_to_matrix<double>(w);
  d.t = chart.at("chart_t").template cast<double>().col(0);
  return d;
}

// Fixed per-stage render/surface batches for the alignment energies.
struct AlignInputs {
  RayBatch rays;
  MatX<float> desc_n;      // normalized target descriptors at the rays
  MatX<float> depth;       // observed depths at the rays
  MatX<double> cloud_sub;  // surface-term subsample of the cloud
};

inline MatX<double> strided_subsample(const MatX<double>& pts, int cap) {
  const int n = (int)pts.rows();
  if (n <= cap) return pts;
  MatX<double> out(cap, 3);
  for (int i = 0; i < cap; ++i)
    out.row(i) = pts.row((int)((int64_t)i * n / cap));
  return out;
}

inline AlignInputs make_align_inputs(const NafModel& model,
                                     const TargetObservation& target) {
  const NafConfig& cfg = model.cfg;
  const ObservationMaps& m = target.maps;
  std::vector<int> fg;
  for (int i = 0; i < (int)m.mask.rows(); ++i)
    if (m.mask(i, 0) > 0.5f) fg.push_back(i);
  require(!fg.empty(), Errc::transfer_failure,
          "target observation has no foreground pixels");
  Rng rng(static_cast<uint32_t>(cfg.seed + 17));
  std::shuffle(fg.begin(), fg.end(), rng);
  if ((int)fg.size() > cfg.align_pixels) fg.resize(cfg.align_pixels);

  AlignInputs d;
  d.rays = make_ray_batch(target.camera, fg, slab_from_depth(m),
                          cfg.n_samples_transfer, nullptr);
  d.desc_n.resize((int)fg.size(), (int)m.desc.cols());
  d.depth.resize((int)fg.size(), 1);
  for (int i = 0; i < (int)fg.size(); ++i) {
    VecX<float> row = m.desc.row(fg[i]);
    if (float n = row.norm(); n > 1e-12f) row /= n;
    d.desc_n.row(i) = row.transpose();
    d.depth(i, 0) = m.depth(fg[i], 0);
  }
  d.cloud_sub = strided_subsample(target.cloud, cfg.align_points);
  return d;
}

template <typename T>
struct AlignCtx {
  ad::Tape<T>& tape;
  FieldGraph<T>& graph;
  const ChartWarpT<T>& warp;
  Sim3d base;
};

// Rendered-descriptor cosine term, shared by both stages.
template <typename T>
typename ad::Tape<T>::Id feature_term(AlignCtx<T>& c, const AlignInputs& d,
                                      RenderNodes<T>& rn_out) {
  using Id = typename ad::Tape<T>::Id;
  ad::Tape<T>& tp = c.tape;
  MatX<T> pbase = c.base.apply_points(d.rays.points).template cast<T>();
  Id pts = c.warp.apply(tp.input(pbase));
  RenderHeads heads;
  heads.fea = true;
  rn_out = render_graph<T>(c.graph, pts, d.rays.n_rays, d.rays.n_samples,
                           tp.input(d.rays.t.template cast<T>()),
                           tp.input(d.rays.tf.template cast<T>()), heads);
  Id dots = tp.rowwise_sum(
      tp.cmul(rn_out.fea, tp.input(d.desc_n.template cast<T>())));
  Id norm =
      tp.sqrt(tp.const_add(tp.rowwise_sum(tp.square(rn_out.fea)), 1e-12));
  return tp.mean_all(tp.const_add(tp.neg(tp.cdiv(dots, norm)), 1.0));
}

template <typename T>
typename ad::Tape<T>::Id surface_term(AlignCtx<T>& c, const AlignInputs& d) {
  MatX<T> cbase = c.base.apply_points(d.cloud_sub).template cast<T>();
  auto cw = c.warp.apply(c.tape.input(cbase));
  return c.tape.mean_all(c.tape.huber(c.graph.sdf(cw), 0.1));
}

template <typename T>
typename ad::Tape<T>::Id coarse_energy(AlignCtx<T>& c, const AlignInputs& d,
                                       const NafConfig& cfg) {
  using Id = typename ad::Tape<T>::Id;
  ad::Tape<T>& tp = c.tape;
  RenderNodes<T> rn;
  Id lfea = feature_term(c, d, rn);
  Id lsurf = surface_term(c, d);
  Id ldep = tp.mean_all(
      tp.huber(tp.sub(rn.depth, tp.input(d.depth.template cast<T>())), 0.1));
  return tp.add(lfea, tp.add(tp.const_scale(lsurf, cfg.w_surf_coarse),
                             tp.const_scale(ldep, cfg.w_depth_coarse)));
}

// Canonical contact region and its descriptors.
struct ContactData {
  MatX<double> points;  // K x 3 canonical
  MatX<float> desc_n;   // K x d normalized
};

inline ContactData contact_region(const NafModel& model) {
  const NafConfig& cfg = model.cfg;
  MatX<float> surf =
      model.sample_surface_points(4 * cfg.max_contact_points, cfg.seed + 5);
  MatX<float> prob = model.query_contact(surf);
  std::vector<int> keep;
  for (int i = 0; i < (int)surf.rows(); ++i)
    if (prob(i, 0) > 0.5f) keep.push_back(i);
  require(!keep.empty(), Errc::transfer_failure,
          "the fitted field has no contact region above probability 0.5");
  if ((int)keep.size() > cfg.max_contact_points)
    keep.resize(cfg.max_contact_points);
  MatX<float> pts((int)keep.size(), 3);
  for (int i = 0; i < (int)keep.size(); ++i) pts.row(i) = surf.row(keep[i]);
  ContactData out;
  out.points = pts.cast<double>();
  MatX<float> feat = model.query_feature(pts);
  out.desc_n = feat;
  for (int i = 0; i < (int)feat.rows(); ++i) {
    float n = feat.row(i).norm();
    if (n > 1e-12f) out.desc_n.row(i) /= n;
  }
  return out;
}

// Target points most similar to the contact region: top decile by best
// cosine against any contact descriptor.
inline MatX<double> contact_candidates(const ContactData& region,
                                       const TargetObservation& target) {
  const int n = (int)target.cloud.rows();
  MatX<float> tdesc(n, (int)target.maps.desc.cols());
  for (int i = 0; i < n; ++i) {
    VecX<float> row = target.maps.desc.row(target.cloud_pixels[i]);
    if (float n2 = row.norm(); n2 > 1e-12f) row /= n2;
    tdesc.row(i) = row.transpose();
  }
  VecX<float> score = (tdesc * region.desc_n.transpose()).rowwise().maxCoeff();
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return score(a) > score(b); });
  int count = std::max(1, n / 10);
  MatX<double> out(count, 3);
  for (int i = 0; i < count; ++i) out.row(i) = target.cloud.row(order[i]);
  return out;
}

// One-sided chamfer onto the contact region.  The nearest sample is fixed at
// the current base; the distance to it stays differentiable through the warp.
template <typename T>
typename ad::Tape<T>::Id contact_term(AlignCtx<T>& c,
                                      const ContactData& region,
                                      const MatX<double>& tqc) {
  using Id = typename ad::Tape<T>::Id;
  ad::Tape<T>& tp = c.tape;
  MatX<double> cur = c.base.apply_points(tqc);
  MatX<T> qnn((int)tqc.rows(), 3);
  for (int i = 0; i < (int)tqc.rows(); ++i) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (int j = 0; j < (int)region.points.rows(); ++j) {
      double dd = (cur.row(i) - region.points.row(j)).squaredNorm();
      if (dd < bd) {
        bd = dd;
        best = j;
      }
    }
    qnn.row(i) = region.points.row(best).template cast<T>();
  }
  Id tw = c.warp.apply(tp.input(MatX<T>(cur.template cast<T>())));
  Id diff = tp.sub(tw, tp.input(qnn));
  return tp.mean_all(
      tp.sqrt(tp.const_add(tp.rowwise_sum(tp.square(diff)), 1e-12)));
}

template <typename T>
typename ad::Tape<T>::Id fine_energy(AlignCtx<T>& c, const AlignInputs& d,
                                     const ContactData& region,
                                     const MatX<double>& tqc,
                                     const NafConfig& cfg) {
  using Id = typename ad::Tape<T>::Id;
  ad::Tape<T>& tp = c.tape;
  RenderNodes<T> rn;
  Id lfea = feature_term(c, d, rn);
  Id lsurf = surface_term(c, d);
  Id lcnt = contact_term(c, region, tqc);
  return tp.add(lfea, tp.add(tp.const_scale(lcnt, cfg.w_cnt_fine),
                             tp.const_scale(lsurf, cfg.w_surf_fine)));
}

}  // namespace naf
