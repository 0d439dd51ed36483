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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

namespace scenesearch {

// ---------------------------------------------------------------------------
// Uniform 3D grid hash over a point set. Nearest-neighbor queries expand cell
// rings outward and terminate once the ring lower bound exceeds the best hit;
// a search cap keeps hopeless far-field queries cheap.
// ---------------------------------------------------------------------------
class GridHash {
 public:
  GridHash() = default;

  GridHash(const std::vector<Vec3>& points, double cell_size,
           double max_search_radius = 0.5)
      : points_(&points), cell_(cell_size), max_radius_(max_search_radius) {
    cells_.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i)
      cells_[key(cell_of(points[i]))].push_back(static_cast<int>(i));
  }

  std::size_t size() const { return points_ ? points_->size() : 0; }

  /// Any point strictly within `radius` of q?
  bool any_within(const Vec3& q, double radius) const {
    return nearest_within(q, radius).first >= 0;
  }

  /// Visits the index of every point within `radius` of q.
  template <typename F>
  void for_each_within(const Vec3& q, double radius, F&& f) const {
    if (!points_ || points_->empty()) return;
    Eigen::Vector3i lo = cell_of(q - Vec3::Constant(radius));
    Eigen::Vector3i hi = cell_of(q + Vec3::Constant(radius));
    const double r2 = radius * radius;
    for (int x = lo.x(); x <= hi.x(); ++x) {
      for (int y = lo.y(); y <= hi.y(); ++y) {
        for (int z = lo.z(); z <= hi.z(); ++z) {
          auto it = cells_.find(key(Eigen::Vector3i(x, y, z)));
          if (it == cells_.end()) continue;
          for (int i : it->second)
            if (((*points_)[i] - q).squaredNorm() <= r2) f(i);
        }
      }
    }
  }

  /// Index and distance of the nearest point, or {-1, inf} when nothing lies
  /// within min(radius, max_search_radius).
  std::pair<int, double> nearest_within(const Vec3& q, double radius) const {
    int best = -1;
    double best_d = std::min(radius, max_radius_);
    if (!points_ || points_->empty()) return {best, std::numeric_limits<double>::infinity()};
    Eigen::Vector3i c0 = cell_of(q);
    int max_ring = static_cast<int>(std::ceil(best_d / cell_)) + 1;
    for (int ring = 0; ring <= max_ring; ++ring) {
      // Once a hit exists, stop when the closest possible point of the next
      // ring cannot beat it.
      if (best >= 0 && (ring - 1) * cell_ > best_d) break;
      bool ring_visited = false;
      for (int dx = -ring; dx <= ring; ++dx) {
        for (int dy = -ring; dy <= ring; ++dy) {
          for (int dz = -ring; dz <= ring; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            auto it = cells_.find(key(c0 + Eigen::Vector3i(dx, dy, dz)));
            if (it == cells_.end()) continue;
            ring_visited = true;
            for (int i : it->second) {
              double d = ((*points_)[i] - q).norm();
              if (d < best_d) {
                best_d = d;
                best = i;
              }
            }
          }
        }
      }
      (void)ring_visited;
    }
    if (best < 0) return {-1, std::numeric_limits<double>::infinity()};
    return {best, best_d};
  }

 private:
  Eigen::Vector3i cell_of(const Vec3& p) const {
    return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / cell_)),
                           static_cast<int>(std::floor(p.y() / cell_)),
                           static_cast<int>(std::floor(p.z() / cell_)));
  }

  static std::int64_t key(const Eigen::Vector3i& c) {
    // 21 bits per axis, offset to keep coordinates positive.
    const std::int64_t off = 1 << 20;
    return ((c.x() + off) << 42) | ((c.y() + off) << 21) | (c.z() + off);
  }

  const std::vector<Vec3>* points_ = nullptr;
  double cell_ = 0.01;
  double max_radius_ = 0.5;
  std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

/// Closest point on triangle (a,b,c) to p. Ericson, Real-Time Collision
/// Detection, 5.1.5.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a,
                                      const Vec3& b, const Vec3& c) {
  Vec3 ab = b - a, ac = c - a, ap = p - a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  Vec3 bp = p - b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  Vec3 cp = p - c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

// ---------------------------------------------------------------------------
// Median-split AABB tree over mesh triangles for exact point-to-surface
// distance queries.
// ---------------------------------------------------------------------------
class AabbTree {
 public:
  AabbTree() = default;

  explicit AabbTree(const TriMesh& mesh) {
    tris_.reserve(mesh.triangles.size());
    for (const auto& t : mesh.triangles)
      tris_.push_back({mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]});
    std::vector<int> idx(tris_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    if (!idx.empty()) root_ = build(idx);
  }

  /// Construct the tree over a posed copy of the mesh.
  AabbTree(const TriMesh& mesh, const Pose& pose) : AabbTree(transform_mesh(pose, mesh)) {}

  bool empty() const { return nodes_.empty(); }

  /// Unsigned distance from p to the mesh surface.
  double distance(const Vec3& p) const {
    double best = std::numeric_limits<double>::infinity();
    if (!nodes_.empty()) query(root_, p, best);
    return std::sqrt(best);
  }

 private:
  struct Tri {
    Vec3 a, b, c;
  };
  struct Node {
    Vec3 lo, hi;
    int left = -1, right = -1;  // children, or
    int tri = -1;               // leaf triangle
  };

  int build(std::vector<int>& idx) {
    Node node;
    node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (int i : idx) {
      const Tri& t = tris_[i];
      node.lo = node.lo.cwiseMin(t.a).cwiseMin(t.b).cwiseMin(t.c);
      node.hi = node.hi.cwiseMax(t.a).cwiseMax(t.b).cwiseMax(t.c);
    }
    int me = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (idx.size() == 1) {
      nodes_[me].tri = idx[0];
      return me;
    }
    Vec3 ext = node.hi - node.lo;
    int axis = 0;
    if (ext.y() > ext.x()) axis = 1;
    if (ext.z() > ext[axis]) axis = 2;
    auto center = [&](int i) {
      const Tri& t = tris_[i];
      return (t.a[axis] + t.b[axis] + t.c[axis]) / 3.0;
    };
    std::nth_element(idx.begin(), idx.begin() + idx.size() / 2, idx.end(),
                     [&](int a, int b) { return center(a) < center(b); });
    std::vector<int> left(idx.begin(), idx.begin() + idx.size() / 2);
    std::vector<int> right(idx.begin() + idx.size() / 2, idx.end());
    int l = build(left);
    int r = build(right);
    nodes_[me].left = l;
    nodes_[me].right = r;
    return me;
  }

  static double box_dist_sq(const Node& n, const Vec3& p) {
    Vec3 d = (n.lo - p).cwiseMax(Vec3::Zero()).cwiseMax(p - n.hi);
    return d.squaredNorm();
  }

  void query(int ni, const Vec3& p, double& best_sq) const {
    const Node& n = nodes_[ni];
    if (box_dist_sq(n, p) >= best_sq) return;
    if (n.tri >= 0) {
      const Tri& t = tris_[n.tri];
      double d = (closest_point_on_triangle(p, t.a, t.b, t.c) - p).squaredNorm();
      best_sq = std::min(best_sq, d);
      return;
    }
    double dl = box_dist_sq(nodes_[n.left], p);
    double dr = box_dist_sq(nodes_[n.right], p);
    if (dl < dr) {
      query(n.left, p, best_sq);
      query(n.right, p, best_sq);
    } else {
      query(n.right, p, best_sq);
      query(n.left, p, best_sq);
    }
  }

  std::vector<Tri> tris_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// ---------------------------------------------------------------------------
// 2D convex hulls and convex polygon intersection tests (used for the x-y
// projection overlap rule of the dependency graph).
// ---------------------------------------------------------------------------

using Vec2 = Eigen::Vector2d;

/// Andrew's monotone chain; returns CCW hull without the repeated endpoint.
inline std::vector<Vec2> convex_hull_2d(std::vector<Vec2> pts) {
  if (pts.size() < 3) return pts;
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  auto cross = [](const Vec2& o, const Vec2& a, const Vec2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Vec2> h(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
    h[k++] = pts[i];
  }
  h.resize(k - 1);
  return h;
}

/// Separating-axis test for two convex polygons (degenerate inputs — points
/// and segments — are handled by the same projections).
inline bool convex_polygons_intersect(const std::vector<Vec2>& a,
                                      const std::vector<Vec2>& b) {
  if (a.empty() || b.empty()) return false;
  auto axes_of = [](const std::vector<Vec2>& poly, std::vector<Vec2>& axes) {
    std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      Vec2 e = poly[(i + 1) % n] - poly[i];
      if (e.squaredNorm() < 1e-24) continue;
      axes.push_back(Vec2(-e.y(), e.x()).normalized());
    }
    if (axes.empty()) axes.push_back(Vec2(1.0, 0.0));  // point-like polygon
  };
  std::vector<Vec2> axes;
  axes_of(a, axes);
  axes_of(b, axes);
  if (a.size() == 1 && b.size() == 1) return (a[0] - b[0]).norm() < 1e-12;
  for (const Vec2& ax : axes) {
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    double bmin = amin, bmax = -amin;
    for (const Vec2& p : a) {
      double d = ax.dot(p);
      amin = std::min(amin, d);
      amax = std::max(amax, d);
    }
    for (const Vec2& p : b) {
      double d = ax.dot(p);
      bmin = std::min(bmin, d);
      bmax = std::max(bmax, d);
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

}  // namespace scenesearch
