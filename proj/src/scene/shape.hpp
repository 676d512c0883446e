#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <json.hpp>

#include "core/common.hpp"

namespace naf {

struct Aabb {
  Vec3<double> lo = Vec3<double>::Zero();
  Vec3<double> hi = Vec3<double>::Zero();
  Vec3<double> center() const { return 0.5 * (lo + hi); }
  Vec3<double> half_extents() const { return 0.5 * (hi - lo); }
  double diagonal() const { return (hi - lo).norm(); }
};

// Closed-form signed-distance shapes.  `offset` translates the shape; union
// nodes combine exactly two children via min.
struct AnalyticShape {
  enum class Kind { kSphere, kBox, kRoundedBox, kCylinder, kUnion };

  Kind kind = Kind::kSphere;
  double radius = 0.8;            // sphere, cylinder
  Vec3<double> half_extents = Vec3<double>::Constant(0.5);  // box
  double round = 0.0;             // rounded box
  double half_height = 0.5;       // cylinder (z axis)
  Vec3<double> offset = Vec3<double>::Zero();
  std::vector<AnalyticShape> children;  // union only, exactly 2
};

inline double shape_sdf(const AnalyticShape& s, const Vec3<double>& x);

namespace detail {

inline double sdf_box(const Vec3<double>& p, const Vec3<double>& b) {
  Vec3<double> q = p.cwiseAbs() - b;
  double outside = q.cwiseMax(0.0).norm();
  double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

inline double sdf_cylinder(const Vec3<double>& p, double r, double h) {
  double dx = std::hypot(p.x(), p.y()) - r;
  double dy = std::abs(p.z()) - h;
  double outside = std::hypot(std::max(dx, 0.0), std::max(dy, 0.0));
  double inside = std::min(std::max(dx, dy), 0.0);
  return outside + inside;
}

}  // namespace detail

inline double shape_sdf(const AnalyticShape& s, const Vec3<double>& x) {
  Vec3<double> p = x - s.offset;
  switch (s.kind) {
    case AnalyticShape::Kind::kSphere:
      return p.norm() - s.radius;
    case AnalyticShape::Kind::kBox:
      return detail::sdf_box(p, s.half_extents);
    case AnalyticShape::Kind::kRoundedBox:
      return detail::sdf_box(p, s.half_extents) - s.round;
    case AnalyticShape::Kind::kCylinder:
      return detail::sdf_cylinder(p, s.radius, s.half_height);
    case AnalyticShape::Kind::kUnion: {
      double best = shape_sdf(s.children[0], p);
      for (size_t i = 1; i < s.children.size(); ++i)
        best = std::min(best, shape_sdf(s.children[i], p));
      return best;
    }
  }
  return 0;
}

// Central differences; exact for the piecewise-smooth regions sphere tracing
// lands in, and always consistent with shape_sdf.
inline Vec3<double> shape_grad(const AnalyticShape& s, const Vec3<double>& x,
                               double h = 1e-6) {
  Vec3<double> g;
  for (int i = 0; i < 3; ++i) {
    Vec3<double> e = Vec3<double>::Zero();
    e(i) = h;
    g(i) = (shape_sdf(s, x + e) - shape_sdf(s, x - e)) / (2 * h);
  }
  return g;
}

inline Vec3<double> shape_normal(const AnalyticShape& s, const Vec3<double>& x) {
  Vec3<double> g = shape_grad(s, x);
  double n = g.norm();
  if (n < 1e-12) return {0, 0, 1};
  return g / n;
}

inline Aabb shape_bbox(const AnalyticShape& s) {
  Aabb b;
  switch (s.kind) {
    case AnalyticShape::Kind::kSphere:
      b.lo = Vec3<double>::Constant(-s.radius);
      b.hi = Vec3<double>::Constant(s.radius);
      break;
    case AnalyticShape::Kind::kBox:
      b.lo = -s.half_extents;
      b.hi = s.half_extents;
      break;
    case AnalyticShape::Kind::kRoundedBox:
      b.lo = -(s.half_extents + Vec3<double>::Constant(s.round));
      b.hi = s.half_extents + Vec3<double>::Constant(s.round);
      break;
    case AnalyticShape::Kind::kCylinder:
      b.lo = {-s.radius, -s.radius, -s.half_height};
      b.hi = {s.radius, s.radius, s.half_height};
      break;
    case AnalyticShape::Kind::kUnion: {
      b = shape_bbox(s.children[0]);
      for (size_t i = 1; i < s.children.size(); ++i) {
        Aabb c = shape_bbox(s.children[i]);
        b.lo = b.lo.cwiseMin(c.lo);
        b.hi = b.hi.cwiseMax(c.hi);
      }
      break;
    }
  }
  b.lo += s.offset;
  b.hi += s.offset;
  return b;
}

inline int shape_kind_id(const AnalyticShape& s) {
  switch (s.kind) {
    case AnalyticShape::Kind::kSphere: return 1;
    case AnalyticShape::Kind::kBox: return 2;
    case AnalyticShape::Kind::kRoundedBox: return 3;
    case AnalyticShape::Kind::kCylinder: return 4;
    case AnalyticShape::Kind::kUnion: return 5;
  }
  return 0;
}

// Smooth deterministic descriptor field: random Fourier features of the
// position and surface normal expressed in the shape's normalized frame, so
// axis-scaled instances of a kind agree at corresponding points.
inline VecX<double> procedural_descriptor(const AnalyticShape& s,
                                          const Vec3<double>& x, int d = 16) {
  require(d > 0, Errc::invalid_argument, "descriptor dimension must be positive");
  Aabb bb = shape_bbox(s);
  Vec3<double> he = bb.half_extents().cwiseMax(1e-9);
  Vec3<double> xn = (x - bb.center()).cwiseQuotient(he);
  Vec3<double> n = shape_normal(s, x);
  Vec3<double> nn = n.cwiseProduct(he);
  double nnn = nn.norm();
  if (nnn > 1e-12) nn /= nnn;

  Rng rng(static_cast<uint32_t>(0x5EEDu + 977u * shape_kind_id(s)));
  VecX<double> v(6);
  v << xn, nn;
  VecX<double> out(d);
  const double sigma = 1.5;
  for (int i = 0; i < d; ++i) {
    double acc = 0;
    for (int j = 0; j < 6; ++j) acc += sigma * normal(rng) * v(j);
    acc += uniform(rng, 0.0, 2.0 * M_PI);
    out(i) = std::cos(acc);
  }
  double nrm = out.norm();
  if (nrm > 1e-12) out /= nrm;
  return out;
}

inline void from_json(const nlohmann::json& j, AnalyticShape& s) {
  std::string kind = j.value("kind", "sphere");
  auto vec3 = [&](const char* key, Vec3<double> dflt) {
    if (!j.contains(key)) return dflt;
    auto a = j.at(key);
    require(a.is_array() && a.size() == 3, Errc::invalid_config,
            std::string(key) + " must be a 3-array");
    return Vec3<double>(a[0].get<double>(), a[1].get<double>(),
                        a[2].get<double>());
  };
  if (kind == "sphere") {
    s.kind = AnalyticShape::Kind::kSphere;
    s.radius = j.value("radius", 0.8);
  } else if (kind == "box") {
    s.kind = AnalyticShape::Kind::kBox;
    s.half_extents = vec3("half_extents", Vec3<double>::Constant(0.5));
  } else if (kind == "rounded_box") {
    s.kind = AnalyticShape::Kind::kRoundedBox;
    s.half_extents = vec3("half_extents", Vec3<double>::Constant(0.5));
    s.round = j.value("round", 0.1);
  } else if (kind == "cylinder") {
    s.kind = AnalyticShape::Kind::kCylinder;
    s.radius = j.value("radius", 0.4);
    s.half_height = j.value("half_height", 0.5);
  } else if (kind == "union") {
    s.kind = AnalyticShape::Kind::kUnion;
    require(j.contains("children") && j.at("children").is_array() &&
                j.at("children").size() == 2,
            Errc::invalid_config, "union shape needs exactly 2 children");
    s.children.clear();
    for (const auto& cj : j.at("children"))
      s.children.push_back(cj.get<AnalyticShape>());
  } else {
    raise(Errc::invalid_config, "unknown shape kind: " + kind);
  }
  s.offset = vec3("offset", Vec3<double>::Zero());
  require(s.radius > 0 && s.half_height > 0 && s.round >= 0 &&
              (s.half_extents.array() > 0).all(),
          Errc::invalid_config, "shape dimensions must be positive");
}

inline void to_json(nlohmann::json& j, const AnalyticShape& s) {
  switch (s.kind) {
    case AnalyticShape::Kind::kSphere:
      j = {{"kind", "sphere"}, {"radius", s.radius}};
      break;
    case AnalyticShape::Kind::kBox:
      j = {{"kind", "box"},
           {"half_extents", {s.half_extents.x(), s.half_extents.y(),
                             s.half_extents.z()}}};
      break;
    case AnalyticShape::Kind::kRoundedBox:
      j = {{"kind", "rounded_box"},
           {"half_extents", {s.half_extents.x(), s.half_extents.y(),
                             s.half_extents.z()}},
           {"round", s.round}};
      break;
    case AnalyticShape::Kind::kCylinder:
      j = {{"kind", "cylinder"}, {"radius", s.radius},
           {"half_height", s.half_height}};
      break;
    case AnalyticShape::Kind::kUnion: {
      nlohmann::json kids = nlohmann::json::array();
      for (const auto& c : s.children) kids.push_back(c);
      j = {{"kind", "union"}, {"children", kids}};
      break;
    }
  }
  j["offset"] = {s.offset.x(), s.offset.y(), s.offset.z()};
}

}  // namespace naf
