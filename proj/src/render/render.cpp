#include "render/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ad/program.hpp"
#include "field/model.hpp"

namespace naf {

RenderSlab slab_from_depth(const ObservationMaps& maps, double margin) {
  double lo = 1e30, hi = -1e30;
  for (int i = 0; i < (int)maps.depth.rows(); ++i)
    if (maps.mask(i, 0) > 0.5f) {
      lo = std::min(lo, (double)maps.depth(i, 0));
      hi = std::max(hi, (double)maps.depth(i, 0));
    }
  require(hi > 0, Errc::invalid_argument,
          "cannot derive a render slab from an empty depth map");
  RenderSlab s{std::max(0.1, lo - margin), hi + margin};
  return s;
}

RayBatch make_ray_batch(const Camera& cam, const std::vector<int>& pixel_ids,
                        const RenderSlab& slab, int n_samples, Rng* rng) {
  const int N = (int)pixel_ids.size();
  const int S = n_samples;
  require(N > 0, Errc::invalid_argument, "empty ray batch");
  require(S >= 2, Errc::invalid_argument, "need at least 2 samples per ray");
  RayBatch b;
  b.n_rays = N;
  b.n_samples = S;
  b.pixel_ids = pixel_ids;
  b.points.resize((Eigen::Index)S * N, 3);
  b.t.resize(N, S - 1);
  b.tf = MatX<double>::Constant(N, 1, slab.t_f);
  const double dt = (slab.t_f - slab.t_n) / S;
  for (int r = 0; r < N; ++r) {
    int pid = pixel_ids[r];
    int px = pid % cam.W, py = pid / cam.W;
    require(py >= 0 && py < cam.H, Errc::invalid_argument,
            "pixel id out of range");
    Vec3<double> o, d;
    cam.ray(px, py, o, d);
    for (int i = 0; i < S; ++i) {
      double u = rng ? uniform(*rng, 0.0, 1.0) : 0.5;
      double t = slab.t_n + (i + u) * dt;
      b.points.row((Eigen::Index)i * N + r) = (o + t * d).transpose();
      if (i < S - 1) b.t(r, i) = t;
    }
  }
  return b;
}

VecX<float> neus_weights(const VecX<float>& sdf, float sharpness) {
  const int S = (int)sdf.size();
  require(S >= 2, Errc::invalid_argument, "need at least 2 samples");
  VecX<float> w = VecX<float>::Zero(S);
  float trans = 1.0f;
  for (int i = 0; i < S - 1; ++i) {
    float pa = 1.0f / (1.0f + std::exp(-sharpness * sdf(i)));
    float pb = 1.0f / (1.0f + std::exp(-sharpness * sdf(i + 1)));
    float alpha = std::clamp((pa - pb) / (pa + 1e-5f), 0.0f, 1.0f);
    w(i) = alpha * trans;
    trans *= 1.0f - alpha;
  }
  return w;
}

ObservationMaps render_image(const NafModel& model, const Camera& cam,
                             const RenderSlab& slab, int n_samples,
                             const RenderHeads& heads, int chunk_rays) {
  const int N = cam.pixels();
  ObservationMaps m;
  m.W = cam.W;
  m.H = cam.H;
  m.color = MatX<float>::Zero(N, 3);
  m.depth = MatX<float>::Constant(N, 1, (float)slab.t_f);
  m.mask = MatX<float>::Zero(N, 1);
  m.desc = MatX<float>::Zero(N, heads.fea ? model.cfg.fea_dim : 0);
  m.contact = MatX<float>::Zero(N, 1);

  for (int start = 0; start < N; start += chunk_rays) {
    int count = std::min(chunk_rays, N - start);
    std::vector<int> ids(count);
    for (int i = 0; i < count; ++i) ids[i] = start + i;
    RayBatchT<float> batch =
        make_ray_batch(cam, ids, slab, n_samples).cast<float>();

    ad::Tape<float> tape;
    ad::ParamNodes<float> nodes(tape, ad::empty_params<float>(),
                                &model.statics);
    FieldGraph<float> g(tape, nodes, model.cfg);
    auto pts = tape.input(batch.points);
    auto t = tape.input(batch.t);
    auto tf = tape.input(batch.tf);
    auto rn = render_graph<float>(g, pts, count, n_samples, t, tf, heads);

    const MatX<float>& mask = tape.val(rn.mask);
    const MatX<float>& depth = tape.val(rn.depth);
    for (int i = 0; i < count; ++i) {
      int pid = ids[i];
      float wsum = mask(i, 0);
      m.mask(pid, 0) = wsum;
      bool fg = wsum >= 0.5f;
      m.depth(pid, 0) = fg ? depth(i, 0) : (float)slab.t_f;
      if (heads.color) m.color.row(pid) = tape.val(rn.color).row(i);
      if (heads.fea && fg) m.desc.row(pid) = tape.val(rn.fea).row(i);
      if (heads.cnt && fg) m.contact(pid, 0) = tape.val(rn.cnt)(i, 0);
    }
  }
  return m;
}

void write_ppm(const ObservationMaps& maps, const std::string& path) {
  require(maps.W > 0 && maps.H > 0, Errc::invalid_argument, "empty image");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), Errc::io_error, "cannot write image: " + path);
  out << "P6\n" << maps.W << ' ' << maps.H << "\n255\n";
  auto byte = [](float v) {
    return (unsigned char)std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f);
  };
  const bool has_color = maps.color.rows() == (long)maps.W * maps.H;
  float dmax = 1.0f;
  if (!has_color && maps.depth.size() > 0)
    dmax = std::max(1e-6f, maps.depth.maxCoeff());
  for (int p = 0; p < maps.W * maps.H; ++p) {
    unsigned char rgb[3];
    if (has_color) {
      for (int c = 0; c < 3; ++c) rgb[c] = byte(maps.color(p, c));
    } else {
      unsigned char g = byte(1.0f - maps.depth(p, 0) / dmax);
      rgb[0] = rgb[1] = rgb[2] = g;
    }
    out.write((const char*)rgb, 3);
  }
  require(out.good(), Errc::io_error, "short write: " + path);
}

}  // namespace naf
