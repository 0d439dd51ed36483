// Copyright 2026 The scenesearch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace scenesearch {

inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;
using Mat3 = Eigen::Matrix3d;

/// Rigid transform: rotation (unit quaternion) followed by translation,
/// applied as x -> R*x + t. Translations are in meters.
struct Pose {
  Quat rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 translation{0.0, 0.0, 0.0};

  static Pose identity() { return Pose{}; }

  Pose() = default;
  Pose(const Quat& q, const Vec3& t) : rotation(q.normalized()), translation(t) {}

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
};

inline Pose pose_compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = (a.rotation * b.rotation).normalized();
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

inline Pose pose_invert(const Pose& p) {
  Pose out;
  out.rotation = p.rotation.conjugate();
  out.translation = -(out.rotation * p.translation);
  return out;
}

/// Geodesic angle between two unit quaternions, in radians (0..pi).
inline double quat_angle(const Quat& a, const Quat& b) {
  double d = std::abs(a.dot(b));
  if (d > 1.0) d = 1.0;
  return 2.0 * std::acos(d);
}

inline Quat axis_angle_quat(const Vec3& axis, double angle_rad) {
  return Quat(Eigen::AngleAxisd(angle_rad, axis.normalized()));
}

enum class Frame { world, camera };

/// Unordered set of 3D points, meters, in a stated frame.
struct PointCloud {
  std::vector<Vec3> points;
  Frame frame = Frame::world;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  Vec3 centroid() const {
    Vec3 c = Vec3::Zero();
    for (const Vec3& p : points) c += p;
    return points.empty() ? c : Vec3(c / static_cast<double>(points.size()));
  }

  double diameter() const {
    // Axis-aligned bound diagonal; cheap stand-in for the true diameter.
    if (points.empty()) return 0.0;
    Vec3 lo = points.front(), hi = points.front();
    for (const Vec3& p : points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    return (hi - lo).norm();
  }
};

inline PointCloud transform_points(const Pose& p, const PointCloud& c) {
  PointCloud out;
  out.frame = c.frame;
  out.points.reserve(c.points.size());
  for (const Vec3& x : c.points) out.points.push_back(p.apply(x));
  return out;
}

/// Finite group of proper rotations under which an object model is invariant.
/// Always contains the identity (kept at index 0).
struct SymmetryGroup {
  std::vector<Quat> rotations{Quat(1.0, 0.0, 0.0, 0.0)};

  static SymmetryGroup trivial() { return SymmetryGroup{}; }

  /// n-fold rotational symmetry about an axis.
  static SymmetryGroup cyclic(const Vec3& axis, int n) {
    SymmetryGroup g;
    g.rotations.clear();
    for (int k = 0; k < n; ++k)
      g.rotations.push_back(axis_angle_quat(axis, 2.0 * kPi * k / n));
    return g;
  }

  /// Cyclic group about `axis` plus the half-turns obtained by composing with a
  /// 180-degree rotation about `flip_axis` (flip_axis must be orthogonal to
  /// axis). This is the rotation group of an n-gon prism.
  static SymmetryGroup dihedral(const Vec3& axis, int n, const Vec3& flip_axis) {
    SymmetryGroup g = cyclic(axis, n);
    Quat flip = axis_angle_quat(flip_axis, kPi);
    for (int k = 0; k < n; ++k)
      g.rotations.push_back((g.rotations[k] * flip).normalized());
    return g;
  }

  /// 180-degree rotations about the three coordinate axes (rectangular box
  /// with three distinct edge lengths).
  static SymmetryGroup box_180() {
    SymmetryGroup g;
    g.rotations.push_back(axis_angle_quat(Vec3::UnitX(), kPi));
    g.rotations.push_back(axis_angle_quat(Vec3::UnitY(), kPi));
    g.rotations.push_back(axis_angle_quat(Vec3::UnitZ(), kPi));
    return g;
  }

  /// The 24 proper rotations of a cube, built by closing the generator set.
  static SymmetryGroup cube_rotations() {
    SymmetryGroup g;
    std::vector<Quat> elems{Quat(1.0, 0.0, 0.0, 0.0)};
    std::vector<Quat> gens{axis_angle_quat(Vec3::UnitZ(), kPi / 2),
                           axis_angle_quat(Vec3::UnitX(), kPi / 2)};
    bool grew = true;
    while (grew) {
      grew = false;
      for (std::size_t i = 0; i < elems.size(); ++i) {
        for (const Quat& q : gens) {
          Quat cand = (elems[i] * q).normalized();
          bool found = false;
          for (const Quat& e : elems)
            if (quat_angle(e, cand) < 1e-9) { found = true; break; }
          if (!found) {
            elems.push_back(cand);
            grew = true;
          }
        }
      }
    }
    g.rotations = std::move(elems);
    return g;
  }

  std::size_t size() const { return rotations.size(); }

  /// Checks the group axioms this type promises: identity present and closure
  /// under composition, both within `tol` (geodesic radians).
  bool is_closed(double tol = 1e-6) const {
    bool has_identity = false;
    for (const Quat& q : rotations)
      if (quat_angle(q, Quat(1.0, 0.0, 0.0, 0.0)) < tol) has_identity = true;
    if (!has_identity) return false;
    for (const Quat& a : rotations) {
      for (const Quat& b : rotations) {
        Quat ab = (a * b).normalized();
        double best = kPi;
        for (const Quat& e : rotations) best = std::min(best, quat_angle(e, ab));
        if (best > tol) return false;
      }
    }
    return true;
  }
};

/// Symmetry-aware geodesic distance in SO(3): the minimum angle between q1 and
/// q2 composed with any symmetry element. Radians in [0, pi].
inline double rotation_distance(const Quat& q1, const Quat& q2,
                                const SymmetryGroup& sym) {
  double best = kPi;
  for (const Quat& s : sym.rotations)
    best = std::min(best, quat_angle(q1, (q2 * s).normalized()));
  return best;
}

/// Intrinsic Z-Y-X Euler extraction: R = Rz(yaw) * Ry(pitch) * Rx(roll).
/// Returns (roll, pitch, yaw) in radians. Near gimbal lock (|pitch| = pi/2)
/// the roll is pinned to zero and yaw absorbs the remaining angle.
inline Vec3 euler_zyx(const Mat3& r) {
  double pitch;
  double sp = -r(2, 0);
  if (sp > 1.0) sp = 1.0;
  if (sp < -1.0) sp = -1.0;
  pitch = std::asin(sp);
  double roll, yaw;
  if (std::abs(sp) > 1.0 - 1e-10) {
    roll = 0.0;
    yaw = std::atan2(-r(0, 1), r(1, 1));
  } else {
    roll = std::atan2(r(2, 1), r(2, 2));
    yaw = std::atan2(r(1, 0), r(0, 0));
  }
  return Vec3(roll, pitch, yaw);
}

/// Mean of the absolute roll/pitch/yaw of the relative rotation between a
/// measured and a ground-truth pose, minimized over the object's symmetry
/// group. Degrees, in [0, 180].
inline double rotation_error(const Pose& measured, const Pose& truth,
                             const SymmetryGroup& sym) {
  double best = 180.0;
  for (const Quat& s : sym.rotations) {
    Quat rel = ((truth.rotation * s).conjugate() * measured.rotation).normalized();
    Vec3 rpy = euler_zyx(rel.toRotationMatrix());
    double err = rad_to_deg((std::abs(rpy.x()) + std::abs(rpy.y()) + std::abs(rpy.z())) / 3.0);
    best = std::min(best, err);
  }
  return best;
}

/// Euclidean distance between pose translations, in centimeters.
inline double translation_error(const Pose& measured, const Pose& truth) {
  return 100.0 * (measured.translation - truth.translation).norm();
}

}  // namespace scenesearch
