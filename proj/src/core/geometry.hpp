#pragma once

#include <cmath>

#include "core/common.hpp"

namespace naf {

// Rigid transform: x -> R x + t.
template <typename T>
struct PoseT {
  Mat3<T> R = Mat3<T>::Identity();
  Vec3<T> t = Vec3<T>::Zero();

  Vec3<T> apply(const Vec3<T>& x) const { return R * x + t; }

  PoseT compose(const PoseT& other) const {  // this ∘ other
    return {R * other.R, R * other.t + t};
  }

  PoseT inverse() const {
    Mat3<T> Rt = R.transpose();
    return {Rt, -(Rt * t)};
  }

  template <typename U>
  PoseT<U> cast() const {
    return {R.template cast<U>(), t.template cast<U>()};
  }
};

// Similarity transform: x -> s R x + t.
template <typename T>
struct Sim3T {
  T s = (T)1;
  Mat3<T> R = Mat3<T>::Identity();
  Vec3<T> t = Vec3<T>::Zero();

  Vec3<T> apply(const Vec3<T>& x) const { return s * (R * x) + t; }

  MatX<T> apply_points(const MatX<T>& pts) const {  // N x 3 rows
    MatX<T> out = pts * R.transpose() * s;
    out.rowwise() += t.transpose();
    return out;
  }

  Sim3T compose(const Sim3T& other) const {
    return {s * other.s, (Mat3<T>)(R * other.R), s * (R * other.t) + t};
  }

  Sim3T inverse() const {
    Mat3<T> Rt = R.transpose();
    return {(T)1 / s, Rt, (Vec3<T>)(-(Rt * t) / s)};
  }

  PoseT<T> rigid() const { return {R, t}; }

  template <typename U>
  Sim3T<U> cast() const {
    return {(U)s, R.template cast<U>(), t.template cast<U>()};
  }
};

using Posef = PoseT<float>;
using Posed = PoseT<double>;
using Sim3f = Sim3T<float>;
using Sim3d = Sim3T<double>;

template <typename T>
Mat3<T> axis_angle_to_matrix(const Vec3<T>& w) {
  T angle = w.norm();
  if (angle < (T)1e-12) return Mat3<T>::Identity();
  return Eigen::AngleAxis<T>(angle, w / angle).toRotationMatrix();
}

template <typename T>
Vec3<T> matrix_to_axis_angle(const Mat3<T>& R) {
  Eigen::AngleAxis<T> aa(R);
  return aa.axis() * aa.angle();
}

template <typename T>
T rotation_geodesic(const Mat3<T>& A, const Mat3<T>& B) {
  T c = ((A.transpose() * B).trace() - (T)1) / (T)2;
  c = std::min(std::max(c, (T)-1), (T)1);
  return std::acos(c);
}

// Camera-to-world pose looking from eye toward target, OpenCV axes
// (x right, y down, z forward).
template <typename T>
PoseT<T> look_at(const Vec3<T>& eye, const Vec3<T>& target, const Vec3<T>& up) {
  Vec3<T> f = (target - eye).normalized();
  Vec3<T> r = f.cross(up).normalized();
  require(r.allFinite() && r.norm() > (T)0.5, Errc::invalid_argument,
          "look_at: view direction parallel to up vector");
  Vec3<T> d = f.cross(r);
  Mat3<T> R;
  R.col(0) = r;
  R.col(1) = d;
  R.col(2) = f;
  return {R, eye};
}

}  // namespace naf
