#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "core/common.hpp"
#include "core/geometry.hpp"

namespace naf {

// Scripted rigid motion over a fixed horizon.  pose_at(k) is the cumulative
// world-frame transform taking base points to their step-k position, with
// pose_at(0) = identity.
struct MotionScript {
  enum class Kind { kRevolute, kPrismatic, kRigidSequence };

  Kind kind = Kind::kPrismatic;
  Vec3<double> axis = {0, 0, 1};       // revolute
  Vec3<double> pivot = {0, 0, 0};      // revolute
  double theta_step = 0.1;             // radians per step
  Vec3<double> direction = {0, 0, 1};  // prismatic
  double d_step = 0.05;
  std::vector<Posed> steps;  // rigid-sequence: per-step transforms
  int horizon = 16;

  void validate() const {
    require(horizon >= 2, Errc::invalid_config, "motion horizon must be >= 2");
    switch (kind) {
      case Kind::kRevolute:
        require(axis.norm() > 1e-9, Errc::invalid_config,
                "revolute axis must be nonzero");
        require(theta_step > 0 && theta_step <= M_PI / 4 + 1e-12,
                Errc::invalid_config,
                "revolute step angle must lie in (0, pi/4]");
        break;
      case Kind::kPrismatic:
        require(direction.norm() > 1e-9, Errc::invalid_config,
                "prismatic direction must be nonzero");
        break;
      case Kind::kRigidSequence:
        require((int)steps.size() >= horizon - 1, Errc::invalid_config,
                "rigid sequence needs horizon-1 step transforms");
        break;
    }
  }

  Posed step_transform(int k) const {  // transform applied between k-1 and k
    switch (kind) {
      case Kind::kRevolute: {
        Mat3<double> R = axis_angle_to_matrix<double>(axis.normalized() * theta_step);
        return {R, pivot - R * pivot};
      }
      case Kind::kPrismatic:
        return {Mat3<double>::Identity(), direction.normalized() * d_step};
      case Kind::kRigidSequence:
        return steps[k - 1];
    }
    return {};
  }

  Posed pose_at(int k) const {
    require(k >= 0 && k < horizon, Errc::invalid_argument,
            "motion step out of range");
    Posed acc;
    for (int i = 1; i <= k; ++i) acc = step_transform(i).compose(acc);
    return acc;
  }
};

inline void from_json(const nlohmann::json& j, MotionScript& m) {
  auto vec3 = [&](const char* key, Vec3<double> dflt) {
    if (!j.contains(key)) return dflt;
    auto a = j.at(key);
    require(a.is_array() && a.size() == 3, Errc::invalid_config,
            std::string(key) + " must be a 3-array");
    return Vec3<double>(a[0].get<double>(), a[1].get<double>(),
                        a[2].get<double>());
  };
  std::string kind = j.value("kind", "prismatic");
  if (kind == "revolute") {
    m.kind = MotionScript::Kind::kRevolute;
    m.axis = vec3("axis", {0, 0, 1});
    m.pivot = vec3("pivot", {0, 0, 0});
    if (j.contains("theta_step_deg"))
      m.theta_step = j.at("theta_step_deg").get<double>() * M_PI / 180.0;
    else
      m.theta_step = j.value("theta_step", 0.1745329251994            /* 10 deg */);
  } else if (kind == "prismatic") {
    m.kind = MotionScript::Kind::kPrismatic;
    m.direction = vec3("direction", {0, 0, 1});
    m.d_step = j.value("d_step", 0.05);
  } else if (kind == "rigid_sequence") {
    m.kind = MotionScript::Kind::kRigidSequence;
    m.steps.clear();
    require(j.contains("steps") && j.at("steps").is_array(),
            Errc::invalid_config, "rigid_sequence needs a steps array");
    for (const auto& sj : j.at("steps")) {
      Vec3<double> aa(0, 0, 0), tr(0, 0, 0);
      if (sj.contains("axis_angle")) {
        auto a = sj.at("axis_angle");
        aa = Vec3<double>(a[0].get<double>(), a[1].get<double>(),
                          a[2].get<double>());
      }
      if (sj.contains("translation")) {
        auto a = sj.at("translation");
        tr = Vec3<double>(a[0].get<double>(), a[1].get<double>(),
                          a[2].get<double>());
      }
      m.steps.push_back({axis_angle_to_matrix<double>(aa), tr});
    }
  } else {
    raise(Errc::invalid_config, "unknown motion kind: " + kind);
  }
  m.horizon = j.value("horizon", 16);
  m.validate();
}

inline void to_json(nlohmann::json& j, const MotionScript& m) {
  switch (m.kind) {
    case MotionScript::Kind::kRevolute:
      j = {{"kind", "revolute"},
           {"axis", {m.axis.x(), m.axis.y(), m.axis.z()}},
           {"pivot", {m.pivot.x(), m.pivot.y(), m.pivot.z()}},
           {"theta_step", m.theta_step}};
      break;
    case MotionScript::Kind::kPrismatic:
      j = {{"kind", "prismatic"},
           {"direction", {m.direction.x(), m.direction.y(), m.direction.z()}},
           {"d_step", m.d_step}};
      break;
    case MotionScript::Kind::kRigidSequence: {
      nlohmann::json steps = nlohmann::json::array();
      for (const auto& s : m.steps) {
        Vec3<double> aa = matrix_to_axis_angle<double>(s.R);
        steps.push_back({{"axis_angle", {aa.x(), aa.y(), aa.z()}},
                         {"translation", {s.t.x(), s.t.y(), s.t.z()}}});
      }
      j = {{"kind", "rigid_sequence"}, {"steps", steps}};
      break;
    }
  }
  j["horizon"] = m.horizon;
}

}  // namespace naf
