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

#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace scenesearch {

/// Indexed triangle mesh, vertices in meters, model frame.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  double triangle_area(std::size_t i) const {
    const auto& t = triangles[i];
    return 0.5 * (vertices[t[1]] - vertices[t[0]])
                     .cross(vertices[t[2]] - vertices[t[0]])
                     .norm();
  }

  double surface_area() const {
    double a = 0.0;
    for (std::size_t i = 0; i < triangles.size(); ++i) a += triangle_area(i);
    return a;
  }

  /// Throws std::invalid_argument on out-of-range indices, non-finite
  /// coordinates or zero-area triangles.
  void validate() const {
    const int n = static_cast<int>(vertices.size());
    for (const Vec3& v : vertices)
      if (!v.allFinite()) throw std::invalid_argument("mesh: non-finite vertex");
    for (std::size_t i = 0; i < triangles.size(); ++i) {
      for (int k : triangles[i])
        if (k < 0 || k >= n) throw std::invalid_argument("mesh: index out of range");
      if (triangle_area(i) < 1e-12)
        throw std::invalid_argument("mesh: degenerate triangle");
    }
  }
};

inline TriMesh transform_mesh(const Pose& p, const TriMesh& m) {
  TriMesh out;
  out.triangles = m.triangles;
  out.vertices.reserve(m.vertices.size());
  for (const Vec3& v : m.vertices) out.vertices.push_back(p.apply(v));
  return out;
}

// ---------------------------------------------------------------------------
// Parametric convex primitives. All are centered at the model-frame origin
// with z as the natural "up" axis, so a pose with identity rotation and
// translation z = h/2 rests the solid on the z=0 plane.
// ---------------------------------------------------------------------------

inline TriMesh make_box(double sx, double sy, double sz) {
  if (sx <= 0 || sy <= 0 || sz <= 0)
    throw std::invalid_argument("make_box: non-positive extent");
  TriMesh m;
  const double x = sx / 2, y = sy / 2, z = sz / 2;
  m.vertices = {{-x, -y, -z}, {x, -y, -z}, {x, y, -z}, {-x, y, -z},
                {-x, -y, z},  {x, -y, z},  {x, y, z},  {-x, y, z}};
  m.triangles = {{0, 2, 1}, {0, 3, 2},   // bottom
                 {4, 5, 6}, {4, 6, 7},   // top
                 {0, 1, 5}, {0, 5, 4},   // -y
                 {2, 3, 7}, {2, 7, 6},   // +y
                 {1, 2, 6}, {1, 6, 5},   // +x
                 {3, 0, 4}, {3, 4, 7}};  // -x
  return m;
}

/// Regular n-gon prism about z: radius is the circumradius of the cross
/// section, height the z extent.
inline TriMesh make_prism(double radius, double height, int sides) {
  if (radius <= 0 || height <= 0 || sides < 3)
    throw std::invalid_argument("make_prism: bad parameters");
  TriMesh m;
  const double z = height / 2;
  for (int ring = 0; ring < 2; ++ring) {
    double zz = ring == 0 ? -z : z;
    for (int i = 0; i < sides; ++i) {
      double a = 2.0 * kPi * i / sides;
      m.vertices.push_back(Vec3(radius * std::cos(a), radius * std::sin(a), zz));
    }
  }
  int top = sides;
  for (int i = 2; i < sides; ++i) {
    m.triangles.push_back({0, i, i - 1});                    // bottom cap
    m.triangles.push_back({top, top + i - 1, top + i});      // top cap
  }
  for (int i = 0; i < sides; ++i) {
    int j = (i + 1) % sides;
    m.triangles.push_back({i, j, top + j});
    m.triangles.push_back({i, top + j, top + i});
  }
  return m;
}

inline TriMesh make_cylinder(double radius, double height, int segments = 24) {
  return make_prism(radius, height, segments);
}

// ---------------------------------------------------------------------------
// Minimal OBJ subset: `v x y z` and triangular `f a b c` lines (slash-suffixed
// face tokens are accepted, only the vertex index is used).
// ---------------------------------------------------------------------------

inline TriMesh load_obj(std::istream& in) {
  TriMesh m;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z()))
        throw std::runtime_error("obj: malformed vertex line: " + line);
      m.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        std::size_t slash = tok.find('/');
        int i = std::stoi(slash == std::string::npos ? tok : tok.substr(0, slash));
        if (i <= 0) throw std::runtime_error("obj: unsupported face index: " + tok);
        idx.push_back(i - 1);
      }
      if (idx.size() != 3)
        throw std::runtime_error("obj: only triangular faces supported");
      m.triangles.push_back({idx[0], idx[1], idx[2]});
    }
    // Other tags (vn, vt, comments, groups) are ignored.
  }
  m.validate();
  return m;
}

inline TriMesh load_obj_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("obj: cannot open " + path);
  return load_obj(in);
}

inline void save_obj(std::ostream& out, const TriMesh& m) {
  out.precision(12);
  for (const Vec3& v : m.vertices)
    out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : m.triangles)
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

inline void save_obj_file(const std::string& path, const TriMesh& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("obj: cannot write " + path);
  save_obj(out, m);
}

/// A recognizable object: mesh geometry plus its discrete symmetry group.
struct ObjectModel {
  std::string name;
  TriMesh mesh;
  SymmetryGroup symmetry;
};

}  // namespace scenesearch
