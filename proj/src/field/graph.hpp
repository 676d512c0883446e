#pragma once

#include <string>
#include <vector>

#include "ad/program.hpp"
#include "ad/tape.hpp"
#include "field/config.hpp"

namespace naf {

// Builds the multi-head implicit field on a tape.  All shapes come from the
// config so the same code runs at production size (float) and at tiny sizes
// for finite-difference verification (double).
template <typename T>
class FieldGraph {
 public:
  using Id = typename ad::Tape<T>::Id;

  FieldGraph(ad::Tape<T>& tape, const ad::ParamNodes<T>& names,
             const NafConfig& cfg)
      : t_(&tape), p_(&names), cfg_(&cfg) {}

  ad::Tape<T>& tape() const { return *t_; }

  Id fc(Id x, const std::string& prefix) const {
    return t_->add_rowvec(t_->matmul(x, (*p_)(prefix + ".w")),
                          (*p_)(prefix + ".b"));
  }

  Id act(Id x) const { return t_->softplus(x, cfg_->softplus_beta); }

  Id pe(Id xyz, int bands) const { return t_->pe_encode(xyz, bands, true); }

  // points (N x 3) -> latent z (N x z_dim)
  Id encode(Id xyz) const {
    Id h = act(fc(pe(xyz, cfg_->pe_bands), "enc.l0"));
    for (int l = 1; l < cfg_->enc_layers; ++l)
      h = act(fc(h, "enc.l" + std::to_string(l)));
    return fc(h, "enc.z");
  }

  Id sdf_from_z(Id z) const { return fc(z, "geo"); }
  Id sdf(Id xyz) const { return sdf_from_z(encode(xyz)); }

  Id sharpness() const { return t_->exp((*p_)("sharp")); }

  Id color_from_z(Id z) const {
    return t_->sigmoid(fc(act(fc(z, "col.l0")), "col.l1"));
  }

  // hash features ⊕ positional encoding (N x head_in)
  Id head_input(Id xyz) const {
    std::vector<Id> tables;
    tables.reserve(cfg_->hash.levels);
    for (int l = 0; l < cfg_->hash.levels; ++l)
      tables.push_back((*p_)("fea.hash" + std::to_string(l)));
    return t_->concat_cols(t_->hash_encode(xyz, tables, cfg_->hash),
                           pe(xyz, cfg_->pe_bands));
  }

  Id feature_from_head_input(Id hi) const {
    return fc(act(fc(hi, "fea.l0")), "fea.l1");
  }
  Id feature(Id xyz) const { return feature_from_head_input(head_input(xyz)); }

  Id contact_logit_from_head_input(Id hi) const {
    return fc(act(fc(act(fc(hi, "cnt.l0")), "cnt.l1")), "cnt.l2");
  }
  Id contact_logit(Id xyz) const {
    return contact_logit_from_head_input(head_input(xyz));
  }
  Id contact_prob(Id xyz) const { return t_->sigmoid(contact_logit(xyz)); }

  struct SdfGrad {
    Id sdf;   // N x 1
    Id grad;  // N x 3, spatial gradient of the sdf
    Id z;     // N x z_dim
  };

  // Forward-propagates exact coordinate tangents through the encoder so the
  // spatial gradient is itself a differentiable node.
  SdfGrad sdf_with_grad(Id xyz) const {
    int n = (int)t_->rows(xyz);
    Id h = pe(xyz, cfg_->pe_bands);
    Id ht = t_->pe_tangent(xyz, cfg_->pe_bands, true);
    for (int l = 0; l < cfg_->enc_layers; ++l) {
      std::string name = "enc.l" + std::to_string(l);
      Id pre = fc(h, name);
      Id pret = t_->matmul(ht, (*p_)(name + ".w"));
      h = act(pre);
      Id dact = t_->sigmoid(t_->const_scale(pre, cfg_->softplus_beta));
      ht = t_->cmul(t_->tile_rows(dact, 3), pret);
    }
    Id z = fc(h, "enc.z");
    Id zt = t_->matmul(ht, (*p_)("enc.z.w"));
    Id s = sdf_from_z(z);
    Id st = t_->matmul(zt, (*p_)("geo.w"));  // (3n) x 1
    Id g = t_->stack_blocks_to_cols(st, 3);  // n x 3
    (void)n;
    return {s, g, z};
  }

  // mean (|∇s| - 1)^2 over the given points
  Id eikonal(Id xyz) const {
    auto sg = sdf_with_grad(xyz);
    Id nrm = t_->sqrt(
        t_->const_add(t_->rowwise_sum(t_->square(sg.grad)), 1e-12));
    return t_->mean_all(t_->square(t_->const_add(nrm, -1.0)));
  }

  struct ActionOut {
    Id offsets;  // N x 3H, flow position k = x + offsets[:, 3k:3k+3]
    Id vis;      // N x H, per-step visibility in (0,1)
  };

  // z: latent at the query points (N x z_dim); g: descriptors (N x fea_dim).
  ActionOut action_from(Id xyz, Id z, Id g) const {
    Id zc = fc(act(fc(z, "zc.l0")), "zc.l1");
    Id a = t_->concat_cols(t_->concat_cols(pe(xyz, cfg_->act_bands), zc), g);
    Id h = act(fc(a, "act.l0"));
    h = act(fc(h, "act.l1"));
    Id out = fc(h, "act.l2");
    int H = cfg_->horizon;
    return {t_->slice_cols(out, 0, 3 * H),
            t_->sigmoid(t_->slice_cols(out, 3 * H, H))};
  }

  ActionOut action(Id xyz) const {
    return action_from(xyz, encode(xyz), feature(xyz));
  }

 private:
  ad::Tape<T>* t_;
  const ad::ParamNodes<T>* p_;
  const NafConfig* cfg_;
};

}  // namespace naf
