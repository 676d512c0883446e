#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "ad/tape.hpp"
#include "core/common.hpp"

namespace naf {

// Architecture and optimization settings for one implicit object model.
// Every dimension is configurable so the same graph builders run both at
// production size and at tiny sizes for finite-difference checks.
struct NafConfig {
  // field; sized for a single desktop CPU core, widen for GPU-class budgets
  int z_dim = 96;
  int hidden = 64;
  int enc_layers = 3;
  int pe_bands = 6;        // encoder + feature/contact position encoding
  int act_bands = 6;       // action head position encoding
  int fea_dim = 16;        // descriptor dimensionality d
  int z_compress = 48;     // compressed latent fed to the action head
  int horizon = 16;        // H, flow steps per query
  double softplus_beta = 100.0;
  double sharpness_init = 20.0;
  ad::HashGridConfig hash{6, 1 << 12, 2, 4, 1.6};

  // rendering
  int n_samples_fit = 24;
  int n_samples_transfer = 16;
  double near_offset = 1.5;  // t_n = dist - near_offset
  double far_offset = 1.5;   // t_f = dist + far_offset

  // static fit
  int static_iters = 700;
  int rays_per_batch = 192;
  double lr_static = 1.5e-3;
  double w_reg = 0.1;
  double w_msk = 1.0;
  double w_fea = 0.1;
  double w_cnt = 0.5;
  int eikonal_cube_points = 16;

  // dynamic fit
  int dynamic_iters = 400;
  int points_per_step = 64;
  double lr_dynamic = 2e-3;

  // transfer
  int coarse_iters = 60;
  int fine_iters = 30;
  double lr_transfer = 1e-2;
  int n_ring_views = 12;
  double ring_elevation_deg = 20.0;
  double ring_distance = 3.0;
  double tau_vis = 0.3;
  int top_k = 3;
  double w_surf_coarse = 1000.0;
  double w_depth_coarse = 100.0;
  double w_cnt_fine = 100.0;
  double w_surf_fine = 1000.0;
  int align_pixels = 160;   // fixed pixel batch per alignment stage
  int align_points = 160;   // cloud subsample for the surface term

  // queries
  double tau_surface = 0.02;  // |sdf| bound for surface queries
  int max_contact_points = 256;

  uint64_t seed = 7;

  int pe_dim(int bands) const { return 3 + 6 * bands; }
  int enc_in() const { return pe_dim(pe_bands); }
  int head_in() const { return hash.output_dim() + pe_dim(pe_bands); }
  int act_in() const { return pe_dim(act_bands) + z_compress + fea_dim; }
  int act_out() const { return 4 * horizon; }

  void validate() const {
    require(z_dim > 0 && hidden > 0 && enc_layers >= 1, Errc::invalid_config,
            "field dimensions must be positive");
    require(pe_bands >= 1 && act_bands >= 1, Errc::invalid_config,
            "positional encoding bands must be positive");
    require(fea_dim > 0 && z_compress > 0 && horizon > 0, Errc::invalid_config,
            "head dimensions must be positive");
    require(softplus_beta > 0 && sharpness_init > 0, Errc::invalid_config,
            "softplus beta and sharpness must be positive");
    require(n_samples_fit >= 2 && n_samples_transfer >= 2, Errc::invalid_config,
            "need at least 2 samples per ray");
    require(static_iters > 0 && dynamic_iters > 0, Errc::invalid_config,
            "iteration counts must be positive");
    require(rays_per_batch > 0 && points_per_step > 0, Errc::invalid_config,
            "batch sizes must be positive");
    require(lr_static > 0 && lr_dynamic > 0 && lr_transfer > 0,
            Errc::invalid_config, "learning rates must be positive");
    require(n_ring_views > 0 && ring_distance > 0, Errc::invalid_config,
            "view ring must be non-empty");
    require(tau_vis > 0 && tau_vis < 1, Errc::invalid_config,
            "visibility threshold must lie in (0,1)");
    require(top_k > 0 && top_k <= n_ring_views, Errc::invalid_config,
            "top_k must lie in [1, n_ring_views]");
    require(tau_surface > 0, Errc::invalid_config,
            "surface tolerance must be positive");
    require(hash.levels > 0 && hash.features > 0 && hash.table_size > 0,
            Errc::invalid_config, "hash grid dimensions must be positive");
  }
};

inline void to_json(nlohmann::json& j, const NafConfig& c) {
  j = nlohmann::json{
      {"z_dim", c.z_dim},
      {"hidden", c.hidden},
      {"enc_layers", c.enc_layers},
      {"pe_bands", c.pe_bands},
      {"act_bands", c.act_bands},
      {"fea_dim", c.fea_dim},
      {"z_compress", c.z_compress},
      {"horizon", c.horizon},
      {"softplus_beta", c.softplus_beta},
      {"sharpness_init", c.sharpness_init},
      {"hash",
       {{"levels", c.hash.levels},
        {"table_size", c.hash.table_size},
        {"features", c.hash.features},
        {"base_resolution", c.hash.base_resolution},
        {"growth", c.hash.growth}}},
      {"n_samples_fit", c.n_samples_fit},
      {"n_samples_transfer", c.n_samples_transfer},
      {"near_offset", c.near_offset},
      {"far_offset", c.far_offset},
      {"static_iters", c.static_iters},
      {"rays_per_batch", c.rays_per_batch},
      {"lr_static", c.lr_static},
      {"w_reg", c.w_reg},
      {"w_msk", c.w_msk},
      {"w_fea", c.w_fea},
      {"w_cnt", c.w_cnt},
      {"eikonal_cube_points", c.eikonal_cube_points},
      {"dynamic_iters", c.dynamic_iters},
      {"points_per_step", c.points_per_step},
      {"lr_dynamic", c.lr_dynamic},
      {"coarse_iters", c.coarse_iters},
      {"fine_iters", c.fine_iters},
      {"lr_transfer", c.lr_transfer},
      {"n_ring_views", c.n_ring_views},
      {"ring_elevation_deg", c.ring_elevation_deg},
      {"ring_distance", c.ring_distance},
      {"tau_vis", c.tau_vis},
      {"top_k", c.top_k},
      {"w_surf_coarse", c.w_surf_coarse},
      {"w_depth_coarse", c.w_depth_coarse},
      {"w_cnt_fine", c.w_cnt_fine},
      {"w_surf_fine", c.w_surf_fine},
      {"align_pixels", c.align_pixels},
      {"align_points", c.align_points},
      {"tau_surface", c.tau_surface},
      {"max_contact_points", c.max_contact_points},
      {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, NafConfig& c) {
  NafConfig d;
  auto get = [&](const char* key, auto& field, auto fallback) {
    field = j.value(key, fallback);
  };
  get("z_dim", c.z_dim, d.z_dim);
  get("hidden", c.hidden, d.hidden);
  get("enc_layers", c.enc_layers, d.enc_layers);
  get("pe_bands", c.pe_bands, d.pe_bands);
  get("act_bands", c.act_bands, d.act_bands);
  get("fea_dim", c.fea_dim, d.fea_dim);
  get("z_compress", c.z_compress, d.z_compress);
  get("horizon", c.horizon, d.horizon);
  get("softplus_beta", c.softplus_beta, d.softplus_beta);
  get("sharpness_init", c.sharpness_init, d.sharpness_init);
  if (j.contains("hash")) {
    const auto& h = j.at("hash");
    c.hash.levels = h.value("levels", d.hash.levels);
    c.hash.table_size = h.value("table_size", d.hash.table_size);
    c.hash.features = h.value("features", d.hash.features);
    c.hash.base_resolution = h.value("base_resolution", d.hash.base_resolution);
    c.hash.growth = h.value("growth", d.hash.growth);
  }
  get("n_samples_fit", c.n_samples_fit, d.n_samples_fit);
  get("n_samples_transfer", c.n_samples_transfer, d.n_samples_transfer);
  get("near_offset", c.near_offset, d.near_offset);
  get("far_offset", c.far_offset, d.far_offset);
  get("static_iters", c.static_iters, d.static_iters);
  get("rays_per_batch", c.rays_per_batch, d.rays_per_batch);
  get("lr_static", c.lr_static, d.lr_static);
  get("w_reg", c.w_reg, d.w_reg);
  get("w_msk", c.w_msk, d.w_msk);
  get("w_fea", c.w_fea, d.w_fea);
  get("w_cnt", c.w_cnt, d.w_cnt);
  get("eikonal_cube_points", c.eikonal_cube_points, d.eikonal_cube_points);
  get("dynamic_iters", c.dynamic_iters, d.dynamic_iters);
  get("points_per_step", c.points_per_step, d.points_per_step);
  get("lr_dynamic", c.lr_dynamic, d.lr_dynamic);
  get("coarse_iters", c.coarse_iters, d.coarse_iters);
  get("fine_iters", c.fine_iters, d.fine_iters);
  get("lr_transfer", c.lr_transfer, d.lr_transfer);
  get("n_ring_views", c.n_ring_views, d.n_ring_views);
  get("ring_elevation_deg", c.ring_elevation_deg, d.ring_elevation_deg);
  get("ring_distance", c.ring_distance, d.ring_distance);
  get("tau_vis", c.tau_vis, d.tau_vis);
  get("top_k", c.top_k, d.top_k);
  get("w_surf_coarse", c.w_surf_coarse, d.w_surf_coarse);
  get("w_depth_coarse", c.w_depth_coarse, d.w_depth_coarse);
  get("w_cnt_fine", c.w_cnt_fine, d.w_cnt_fine);
  get("w_surf_fine", c.w_surf_fine, d.w_surf_fine);
  get("align_pixels", c.align_pixels, d.align_pixels);
  get("align_points", c.align_points, d.align_points);
  get("tau_surface", c.tau_surface, d.tau_surface);
  get("max_contact_points", c.max_contact_points, d.max_contact_points);
  get("seed", c.seed, d.seed);
  c.validate();
}

}  // namespace naf
