#pragma once

#include <cmath>
#include <string>

#include "ad/param_vector.hpp"
#include "core/common.hpp"
#include "field/config.hpp"

namespace naf {

using ad::ParamVectorT;

namespace detail {

inline MatX<double> gauss(Rng& rng, int r, int c, double mean, double std) {
  MatX<double> m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = mean + std * normal(rng);
  return m;
}

inline MatX<double> unif(Rng& rng, int r, int c, double lo, double hi) {
  MatX<double> m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = uniform(rng, lo, hi);
  return m;
}

}  // namespace detail

// Static (geometry/appearance) parameters.  The SDF branch uses a geometric
// initialization: the raw-coordinate rows of the first layer carry the signal,
// positional-encoding rows start at zero, and the readout is biased so the
// initial field approximates a sphere of radius 0.5.  That gives the renderer
// a well-formed surface from step one.
inline ParamVectorT<double> init_static_params_d(const NafConfig& cfg) {
  Rng rng(static_cast<uint32_t>(cfg.seed * 2654435761ull + 17));
  ParamVectorT<double> pv;
  const int h = cfg.hidden;
  const int din = cfg.enc_in();

  MatX<double> l0 = MatX<double>::Zero(din, h);
  l0.topRows(3) = detail::gauss(rng, 3, h, 0.0, std::sqrt(2.0 / 3.0));
  pv.add("enc.l0.w", l0);
  pv.add("enc.l0.b", MatX<double>::Zero(1, h));
  for (int l = 1; l < cfg.enc_layers; ++l) {
    pv.add("enc.l" + std::to_string(l) + ".w",
           detail::gauss(rng, h, h, 0.0, std::sqrt(2.0 / h)));
    pv.add("enc.l" + std::to_string(l) + ".b", MatX<double>::Zero(1, h));
  }
  pv.add("enc.z.w",
         detail::gauss(rng, h, cfg.z_dim, std::sqrt(M_PI) / std::sqrt((double)h),
                       1e-4));
  pv.add("enc.z.b", MatX<double>::Zero(1, cfg.z_dim));

  pv.add("geo.w", detail::gauss(rng, cfg.z_dim, 1, 1.0 / cfg.z_dim,
                                1e-4 / cfg.z_dim));
  pv.add("geo.b", MatX<double>::Constant(1, 1, -0.5));
  pv.add("sharp", MatX<double>::Constant(1, 1, std::log(cfg.sharpness_init)));

  pv.add("col.l0.w", detail::gauss(rng, cfg.z_dim, h, 0.0,
                                   std::sqrt(2.0 / cfg.z_dim)));
  pv.add("col.l0.b", MatX<double>::Zero(1, h));
  pv.add("col.l1.w", detail::gauss(rng, h, 3, 0.0, std::sqrt(2.0 / h)));
  pv.add("col.l1.b", MatX<double>::Zero(1, 3));

  for (int l = 0; l < cfg.hash.levels; ++l)
    pv.add("fea.hash" + std::to_string(l),
           detail::unif(rng, cfg.hash.table_size, cfg.hash.features, -1e-4,
                        1e-4));
  const int hin = cfg.head_in();
  pv.add("fea.l0.w", detail::gauss(rng, hin, h, 0.0, std::sqrt(2.0 / hin)));
  pv.add("fea.l0.b", MatX<double>::Zero(1, h));
  pv.add("fea.l1.w", detail::gauss(rng, h, cfg.fea_dim, 0.0, std::sqrt(2.0 / h)));
  pv.add("fea.l1.b", MatX<double>::Zero(1, cfg.fea_dim));

  pv.add("cnt.l0.w", detail::gauss(rng, hin, h, 0.0, std::sqrt(2.0 / hin)));
  pv.add("cnt.l0.b", MatX<double>::Zero(1, h));
  pv.add("cnt.l1.w", detail::gauss(rng, h, h, 0.0, std::sqrt(2.0 / h)));
  pv.add("cnt.l1.b", MatX<double>::Zero(1, h));
  pv.add("cnt.l2.w", detail::gauss(rng, h, 1, 0.0, std::sqrt(2.0 / h)));
  pv.add("cnt.l2.b", MatX<double>::Constant(1, 1, -2.0));
  return pv;
}

// Dynamic (motion) parameters: latent compressor plus action head.  The final
// layer starts near zero so predicted flows begin as the identity motion.
inline ParamVectorT<double> init_dynamic_params_d(const NafConfig& cfg) {
  Rng rng(static_cast<uint32_t>(cfg.seed * 2654435761ull + 91));
  ParamVectorT<double> pv;
  const int h = cfg.hidden;
  pv.add("zc.l0.w",
         detail::gauss(rng, cfg.z_dim, h, 0.0, std::sqrt(2.0 / cfg.z_dim)));
  pv.add("zc.l0.b", MatX<double>::Zero(1, h));
  pv.add("zc.l1.w",
         detail::gauss(rng, h, cfg.z_compress, 0.0, std::sqrt(2.0 / h)));
  pv.add("zc.l1.b", MatX<double>::Zero(1, cfg.z_compress));

  const int ain = cfg.act_in();
  pv.add("act.l0.w", detail::gauss(rng, ain, h, 0.0, std::sqrt(2.0 / ain)));
  pv.add("act.l0.b", MatX<double>::Zero(1, h));
  pv.add("act.l1.w", detail::gauss(rng, h, h, 0.0, std::sqrt(2.0 / h)));
  pv.add("act.l1.b", MatX<double>::Zero(1, h));
  pv.add("act.l2.w", detail::gauss(rng, h, cfg.act_out(), 0.0, 1e-3));
  pv.add("act.l2.b", MatX<double>::Zero(1, cfg.act_out()));
  return pv;
}

template <typename T>
ParamVectorT<T> init_static_params(const NafConfig& cfg) {
  return init_static_params_d(cfg).template cast<T>();
}

template <typename T>
ParamVectorT<T> init_dynamic_params(const NafConfig& cfg) {
  return init_dynamic_params_d(cfg).template cast<T>();
}

}  // namespace naf
