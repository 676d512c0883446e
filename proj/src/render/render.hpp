#pragma once

#include <vector>

#include "core/common.hpp"
#include "field/graph.hpp"
#include "render/camera.hpp"
#include "scene/scene.hpp"

namespace naf {

struct RenderSlab {
  double t_n = 1.5;
  double t_f = 4.5;
};

inline RenderSlab default_slab(const Camera& cam, double near_offset,
                               double far_offset) {
  double dist = cam.pose.t.norm();
  RenderSlab s{dist - near_offset, dist + far_offset};
  require(s.t_n > 0 && s.t_f > s.t_n, Errc::invalid_argument,
          "degenerate render slab");
  return s;
}

// Slab derived from an observed depth map (valid pixels), so perturbed
// targets stay inside the sampled range.
RenderSlab slab_from_depth(const ObservationMaps& maps, double margin = 0.3);

// Sample-major ray batch: point row i*N + r is sample i of ray r, matching
// the tape's stack_blocks_to_cols / composite_rows layout.
template <typename T>
struct RayBatchT {
  int n_rays = 0;
  int n_samples = 0;
  std::vector<int> pixel_ids;
  MatX<T> points;  // (S*N) x 3
  MatX<T> t;       // N x (S-1), depths of the composited samples
  MatX<T> tf;      // N x 1, far plane

  template <typename U>
  RayBatchT<U> cast() const {
    RayBatchT<U> o;
    o.n_rays = n_rays;
    o.n_samples = n_samples;
    o.pixel_ids = pixel_ids;
    o.points = points.template cast<U>();
    o.t = t.template cast<U>();
    o.tf = tf.template cast<U>();
    return o;
  }
};

using RayBatch = RayBatchT<double>;

// Stratified when rng given (one uniform draw per sample), midpoint otherwise.
RayBatch make_ray_batch(const Camera& cam, const std::vector<int>& pixel_ids,
                        const RenderSlab& slab, int n_samples,
                        Rng* rng = nullptr);

// Opacity weights for one ray from its sdf samples; the last weight is zero.
VecX<float> neus_weights(const VecX<float>& sdf, float sharpness);

struct RenderHeads {
  bool color = false;
  bool fea = false;
  bool cnt = false;
};

template <typename T>
struct RenderNodes {
  using Id = typename ad::Tape<T>::Id;
  Id mask = -1;
  Id depth = -1;
  Id color = -1;
  Id fea = -1;
  Id cnt = -1;
};

// Differentiable volume rendering over a prebuilt point node (which may be a
// warped function of pose parameters).  t/tf are the fixed per-ray sample
// depths of the batch.
template <typename T>
RenderNodes<T> render_graph(const FieldGraph<T>& g,
                            typename ad::Tape<T>::Id pts, int N, int S,
                            typename ad::Tape<T>::Id t,
                            typename ad::Tape<T>::Id tf,
                            const RenderHeads& heads) {
  auto& tp = g.tape();
  using Id = typename ad::Tape<T>::Id;
  RenderNodes<T> out;

  Id z = g.encode(pts);
  Id s = g.sdf_from_z(z);
  Id sM = tp.stack_blocks_to_cols(s, S);  // N x S
  Id phi = tp.sigmoid(tp.scale_by_scalar(sM, g.sharpness()));
  Id a = tp.slice_cols(phi, 0, S - 1);
  Id b = tp.slice_cols(phi, 1, S - 1);
  Id alpha = tp.clamp(tp.cdiv(tp.sub(a, b), tp.const_add(a, 1e-5)), 0.0, 1.0);
  Id trans = tp.cumprod_exclusive_rows(tp.const_add(tp.neg(alpha), 1.0));
  Id w = tp.cmul(alpha, trans);  // N x (S-1)

  out.mask = tp.rowwise_sum(w);
  out.depth = tp.add(tp.rowwise_sum(tp.cmul(w, t)),
                     tp.cmul(tp.const_add(tp.neg(out.mask), 1.0), tf));
  const int M = N * (S - 1);
  if (heads.color)
    out.color =
        tp.composite_rows(w, g.color_from_z(tp.slice_rows(z, 0, M)));
  if (heads.fea || heads.cnt) {
    Id hi = g.head_input(tp.slice_rows(pts, 0, M));
    if (heads.fea)
      out.fea = tp.composite_rows(w, g.feature_from_head_input(hi));
    if (heads.cnt)
      out.cnt = tp.composite_rows(
          w, tp.sigmoid(g.contact_logit_from_head_input(hi)));
  }
  return out;
}

struct NafModel;

// Forward-only full-image render.  Background pixels (accumulated weight
// < 0.5) get depth t_f and zero feature/contact; mask keeps the raw sum.
ObservationMaps render_image(const NafModel& model, const Camera& cam,
                             const RenderSlab& slab, int n_samples,
                             const RenderHeads& heads, int chunk_rays = 512);

// Binary P6 PPM of the color map; falls back to a grayscale depth image when
// no color channel is present.
void write_ppm(const ObservationMaps& maps, const std::string& path);

}  // namespace naf
