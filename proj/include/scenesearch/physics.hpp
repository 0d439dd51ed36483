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

#include "scenesearch/geometry.hpp"
#include "scenesearch/mesh.hpp"
#include "scenesearch/render.hpp"
#include "scenesearch/spatial.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <vector>

namespace scenesearch {

struct SettleConfig {
  int max_steps = 100;
  double penetration_tolerance = 0.001;  // meters
  double contact_tolerance = 0.002;      // meters
  double step_translation_cap = 0.05;    // meters per projection step
  bool rotation_enabled = false;
};

/// Convex collision proxy: the posed vertex set of a mesh (our primitives are
/// convex, so the vertex support function is exact).
struct ConvexHullShape {
  std::vector<Vec3> points;

  ConvexHullShape() = default;
  ConvexHullShape(const TriMesh& mesh, const Pose& pose) {
    points.reserve(mesh.vertices.size());
    for (const Vec3& v : mesh.vertices) points.push_back(pose.apply(v));
  }

  Vec3 support(const Vec3& dir) const {
    double best = -std::numeric_limits<double>::infinity();
    const Vec3* pick = &points.front();
    for (const Vec3& p : points) {
      double d = p.dot(dir);
      if (d > best) {
        best = d;
        pick = &p;
      }
    }
    return *pick;
  }

  double min_z() const {
    double z = std::numeric_limits<double>::infinity();
    for (const Vec3& p : points) z = std::min(z, p.z());
    return z;
  }

  void translate(const Vec3& t) {
    for (Vec3& p : points) p += t;
  }
};

namespace detail {

inline Vec3 minkowski_support(const ConvexHullShape& a, const ConvexHullShape& b,
                              const Vec3& dir) {
  return a.support(dir) - b.support(-dir);
}

inline Vec3 closest_on_segment_to_origin(const Vec3& a, const Vec3& b) {
  Vec3 ab = b - a;
  double t = ab.squaredNorm() < 1e-30 ? 0.0 : -a.dot(ab) / ab.squaredNorm();
  t = std::clamp(t, 0.0, 1.0);
  return a + t * ab;
}

inline bool origin_in_tetra(const std::array<Vec3, 4>& v) {
  auto same_side = [&](int i0, int i1, int i2, int i3) {
    Vec3 n = (v[i1] - v[i0]).cross(v[i2] - v[i0]);
    double d_ref = n.dot(v[i3] - v[i0]);
    double d_org = n.dot(-v[i0]);
    return d_ref * d_org >= 0.0;
  };
  return same_side(0, 1, 2, 3) && same_side(1, 2, 3, 0) && same_side(2, 3, 0, 1) &&
         same_side(3, 0, 1, 2);
}

struct GjkResult {
  bool intersecting = false;
  double distance = 0.0;
  std::vector<Vec3> simplex;  // terminal simplex vertices
};

/// GJK over the Minkowski difference a - b. The closest-point-on-simplex step
/// enumerates sub-simplices, which is cheap at simplex size <= 4 and robust.
inline GjkResult gjk(const ConvexHullShape& a, const ConvexHullShape& b) {
  GjkResult res;
  std::vector<Vec3> s;
  s.push_back(minkowski_support(a, b, Vec3(1.0, 0.0, 0.0)));
  Vec3 v = s[0];

  for (int iter = 0; iter < 128; ++iter) {
    if (v.norm() < 1e-10) {
      res.intersecting = true;
      res.simplex = s;
      return res;
    }
    Vec3 w = minkowski_support(a, b, -v);
    if (v.squaredNorm() - v.dot(w) < 1e-12 * std::max(1.0, v.squaredNorm())) {
      res.distance = v.norm();
      res.simplex = s;
      return res;
    }
    s.push_back(w);

    if (s.size() == 4) {
      std::array<Vec3, 4> t{s[0], s[1], s[2], s[3]};
      if (origin_in_tetra(t)) {
        res.intersecting = true;
        res.simplex = s;
        return res;
      }
    }

    // Closest point to the origin over every sub-simplex of size <= 3.
    double best = std::numeric_limits<double>::infinity();
    Vec3 best_v = v;
    std::vector<Vec3> best_s;
    const int n = static_cast<int>(s.size());
    for (int i = 0; i < n; ++i) {
      double d = s[i].squaredNorm();
      if (d < best) {
        best = d;
        best_v = s[i];
        best_s = {s[i]};
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        Vec3 p = closest_on_segment_to_origin(s[i], s[j]);
        double d = p.squaredNorm();
        if (d < best - 1e-18) {
          best = d;
          best_v = p;
          best_s = {s[i], s[j]};
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        for (int k = j + 1; k < n; ++k) {
          Vec3 p = closest_point_on_triangle(Vec3::Zero(), s[i], s[j], s[k]);
          double d = p.squaredNorm();
          if (d < best - 1e-18) {
            best = d;
            best_v = p;
            best_s = {s[i], s[j], s[k]};
          }
        }
      }
    }
    s = best_s;
    v = best_v;
  }
  res.distance = v.norm();
  res.simplex = s;
  return res;
}

struct PenetrationResult {
  double depth = 0.0;
  Vec3 direction = Vec3::UnitZ();  // translate the first shape by depth*direction
};

/// Expanding polytope algorithm on the Minkowski difference; requires an
/// intersecting configuration. Returns the minimum translation that separates
/// shape a from shape b.
inline PenetrationResult epa(const ConvexHullShape& a, const ConvexHullShape& b,
                             std::vector<Vec3> simplex) {
  PenetrationResult out;

  // Blow the terminal simplex up to a tetrahedron when needed.
  auto push_unique = [&](const Vec3& p) {
    for (const Vec3& q : simplex)
      if ((q - p).norm() < 1e-12) return;
    simplex.push_back(p);
  };
  const Vec3 probes[6] = {Vec3::UnitX(),  -Vec3::UnitX(), Vec3::UnitY(),
                          -Vec3::UnitY(), Vec3::UnitZ(),  -Vec3::UnitZ()};
  for (const Vec3& d : probes) {
    if (simplex.size() >= 4) break;
    push_unique(minkowski_support(a, b, d));
  }
  if (simplex.size() < 4) return out;  // flat difference: touching contact

  // Make the first four vertices span a proper tetrahedron.
  std::array<Vec3, 4> tet{simplex[0], simplex[1], simplex[2], simplex[3]};
  double vol = std::abs((tet[1] - tet[0]).cross(tet[2] - tet[0]).dot(tet[3] - tet[0]));
  if (vol < 1e-18) {
    for (const Vec3& d : probes) {
      Vec3 w = minkowski_support(a, b, d);
      for (int r = 0; r < 4; ++r) {
        std::array<Vec3, 4> trial = tet;
        trial[r] = w;
        double v2 = std::abs((trial[1] - trial[0]).cross(trial[2] - trial[0])
                                 .dot(trial[3] - trial[0]));
        if (v2 > vol) {
          vol = v2;
          tet = trial;
        }
      }
    }
    if (vol < 1e-18) return out;
  }

  std::vector<Vec3> verts(tet.begin(), tet.end());
  Vec3 inner = 0.25 * (tet[0] + tet[1] + tet[2] + tet[3]);

  struct Face {
    int a, b, c;
    Vec3 n;       // outward unit normal
    double dist;  // distance of the face plane from the origin along n
    bool alive = true;
  };
  std::vector<Face> faces;
  auto add_face = [&](int i, int j, int k) {
    Face f{i, j, k, Vec3::Zero(), 0.0, true};
    Vec3 n = (verts[j] - verts[i]).cross(verts[k] - verts[i]);
    if (n.norm() < 1e-18) return;
    n.normalize();
    if (n.dot(verts[i] - inner) < 0.0) {
      std::swap(f.b, f.c);
      n = -n;
    }
    f.n = n;
    f.dist = n.dot(verts[f.a]);
    faces.push_back(f);
  };
  add_face(0, 1, 2);
  add_face(0, 1, 3);
  add_face(0, 2, 3);
  add_face(1, 2, 3);

  for (int iter = 0; iter < 128; ++iter) {
    int closest = -1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < faces.size(); ++i) {
      if (!faces[i].alive) continue;
      if (faces[i].dist < best) {
        best = faces[i].dist;
        closest = static_cast<int>(i);
      }
    }
    if (closest < 0) break;
    const Face f = faces[closest];
    Vec3 w = minkowski_support(a, b, f.n);
    double support_dist = f.n.dot(w);
    if (support_dist - f.dist < 1e-7) {
      out.depth = std::max(0.0, f.dist);
      out.direction = -f.n;
      return out;
    }
    // Remove faces visible from w and stitch the horizon.
    int wi = static_cast<int>(verts.size());
    verts.push_back(w);
    std::vector<std::pair<int, int>> horizon;
    auto add_edge = [&](int p, int q) {
      for (auto it = horizon.begin(); it != horizon.end(); ++it) {
        if (it->first == q && it->second == p) {
          horizon.erase(it);
          return;
        }
      }
      horizon.emplace_back(p, q);
    };
    for (Face& g : faces) {
      if (!g.alive) continue;
      if (g.n.dot(w - verts[g.a]) > 1e-12) {
        g.alive = false;
        add_edge(g.a, g.b);
        add_edge(g.b, g.c);
        add_edge(g.c, g.a);
      }
    }
    for (const auto& [p, q] : horizon) add_face(p, q, wi);
  }

  // Iteration cap: report the closest face found so far.
  double best = std::numeric_limits<double>::infinity();
  for (const Face& f : faces) {
    if (!f.alive || f.dist >= best) continue;
    best = f.dist;
    out.depth = f.dist;
    out.direction = -f.n;
  }
  return out;
}

}  // namespace detail

/// Minimum translation distance separating the convex hulls of two posed
/// meshes; 0 when separated or touching.
inline double penetration_depth(const TriMesh& mesh_a, const Pose& pose_a,
                                const TriMesh& mesh_b, const Pose& pose_b) {
  ConvexHullShape a(mesh_a, pose_a), b(mesh_b, pose_b);
  detail::GjkResult g = detail::gjk(a, b);
  if (!g.intersecting) return 0.0;
  return detail::epa(a, b, g.simplex).depth;
}

struct SettleResult {
  Pose pose;
  bool violation = false;  // contract could not be met within max_steps
  int steps = 0;
};

namespace detail {

struct PenetrationProbe {
  double depth = 0.0;
  Vec3 direction = Vec3::UnitZ();
};

inline PenetrationProbe worst_penetration(const ConvexHullShape& moving,
                                          const std::vector<ConvexHullShape>& placed,
                                          double table_z) {
  PenetrationProbe worst;
  double table_pen = table_z - moving.min_z();
  if (table_pen > worst.depth) {
    worst.depth = table_pen;
    worst.direction = Vec3::UnitZ();
  }
  for (const ConvexHullShape& obs : placed) {
    GjkResult g = gjk(moving, obs);
    if (!g.intersecting) continue;
    PenetrationResult p = epa(moving, obs, g.simplex);
    if (p.depth > worst.depth) {
      worst.depth = p.depth;
      worst.direction = p.direction;
    }
  }
  return worst;
}

/// Distance the shape can fall along -z before first contact with the table
/// or a placed shape (conservative advancement on the GJK distance).
inline double free_drop(const ConvexHullShape& moving,
                        const std::vector<ConvexHullShape>& placed, double table_z,
                        double precision = 1e-5) {
  double limit = std::max(0.0, moving.min_z() - table_z);
  double t = 0.0;
  ConvexHullShape probe = moving;
  for (int iter = 0; iter < 4000; ++iter) {
    double gap = limit - t;
    for (const ConvexHullShape& obs : placed) {
      GjkResult g = gjk(probe, obs);
      double d = g.intersecting ? 0.0 : g.distance;
      gap = std::min(gap, d);
    }
    if (gap <= precision) return t;
    // A fall of `gap` cannot close more than `gap` of separation.
    probe.translate(Vec3(0.0, 0.0, -gap));
    t += gap;
  }
  return t;
}

}  // namespace detail

/// Re-check helpers for the settle contract.
inline double max_penetration(const TriMesh& mesh, const Pose& pose,
                              const std::vector<PosedMesh>& placed, double table_z) {
  ConvexHullShape moving(mesh, pose);
  std::vector<ConvexHullShape> obs;
  for (const PosedMesh& pm : placed) obs.emplace_back(*pm.mesh, pm.pose);
  return detail::worst_penetration(moving, obs, table_z).depth;
}

inline double support_gap(const TriMesh& mesh, const Pose& pose,
                          const std::vector<PosedMesh>& placed, double table_z) {
  ConvexHullShape moving(mesh, pose);
  std::vector<ConvexHullShape> obs;
  for (const PosedMesh& pm : placed) obs.emplace_back(*pm.mesh, pm.pose);
  return detail::free_drop(moving, obs, table_z);
}

/// Count of settle() returns that claimed success but failed the re-checked
/// contract; exposed so long suites can assert it stayed zero.
inline std::atomic<long>& settle_contract_breaches() {
  static std::atomic<long> count{0};
  return count;
}

/// Quasi-static projection of a pose onto the physically consistent
/// neighborhood: resolve the worst penetration by its minimum translation
/// (capped per step), then fall along -z to first contact; repeat. Placed
/// objects never move. With rotation_enabled, small tilts (<= 2 degrees per
/// step) that strictly lower the centroid are applied after contact.
inline SettleResult settle(const Pose& pose, const TriMesh& model,
                           const std::vector<PosedMesh>& placed, double table_z,
                           const SettleConfig& cfg) {
  SettleResult res;
  res.pose = pose;
  std::vector<ConvexHullShape> obstacles;
  obstacles.reserve(placed.size());
  for (const PosedMesh& pm : placed) obstacles.emplace_back(*pm.mesh, pm.pose);

  const double act_tol = std::min(cfg.penetration_tolerance, cfg.contact_tolerance) / 4.0;
  Vec3 centroid_model = Vec3::Zero();
  for (const Vec3& v : model.vertices) centroid_model += v;
  if (!model.vertices.empty()) centroid_model /= static_cast<double>(model.vertices.size());

  bool settled = false;
  for (int step = 0; step < cfg.max_steps; ++step) {
    res.steps = step + 1;
    ConvexHullShape moving(model, res.pose);
    detail::PenetrationProbe pen = detail::worst_penetration(moving, obstacles, table_z);
    if (pen.depth > act_tol) {
      double push = std::min(pen.depth, cfg.step_translation_cap);
      res.pose.translation += push * pen.direction;
      continue;
    }
    double gap = detail::free_drop(moving, obstacles, table_z);
    if (gap > cfg.contact_tolerance) {
      res.pose.translation.z() -= std::min(gap, cfg.step_translation_cap);
      continue;
    }
    if (cfg.rotation_enabled) {
      // Greedy tilt relaxation: accept the first small rotation about a
      // horizontal axis through the centroid that ends up strictly lower.
      Vec3 pivot = res.pose.apply(centroid_model);
      bool improved = false;
      const double tilt = deg_to_rad(2.0);
      for (const Vec3& axis : {Vec3::UnitX(), Vec3::UnitY()}) {
        for (double sign : {1.0, -1.0}) {
          Quat dq = axis_angle_quat(axis, sign * tilt);
          Pose cand;
          cand.rotation = (dq * res.pose.rotation).normalized();
          cand.translation = pivot + dq * (res.pose.translation - pivot);
          ConvexHullShape cand_shape(model, cand);
          if (detail::worst_penetration(cand_shape, obstacles, table_z).depth > act_tol)
            continue;
          double drop = detail::free_drop(cand_shape, obstacles, table_z);
          cand.translation.z() -= drop;
          ConvexHullShape dropped(model, cand);
          if (dropped.min_z() < moving.min_z() - 1e-5 &&
              detail::worst_penetration(dropped, obstacles, table_z).depth <= act_tol) {
            res.pose = cand;
            improved = true;
            break;
          }
        }
        if (improved) break;
      }
      if (improved) continue;
    }
    settled = true;
    break;
  }

  // Contract verification on exit.
  ConvexHullShape final_shape(model, res.pose);
  double pen = detail::worst_penetration(final_shape, obstacles, table_z).depth;
  double gap = detail::free_drop(final_shape, obstacles, table_z);
  bool ok = pen <= cfg.penetration_tolerance && gap <= cfg.contact_tolerance;
  res.violation = !ok;
  if (settled && !ok) settle_contract_breaches().fetch_add(1);
  return res;
}

}  // namespace scenesearch
