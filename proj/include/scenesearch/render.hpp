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

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace scenesearch {

/// Pinhole camera. Pixel (u,v) samples the ray through continuous image
/// coordinates (u,v); u grows rightward, v downward, camera looks along +z.
struct CameraModel {
  int width = 160;
  int height = 120;
  double fx = 140.0, fy = 140.0;
  double cx = 80.0, cy = 60.0;
  Pose cam_pose;  // camera frame -> world frame

  void validate() const {
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera: bad size");
    if (fx <= 0 || fy <= 0) throw std::invalid_argument("camera: bad focal length");
    if (cx < 0 || cx >= width || cy < 0 || cy >= height)
      throw std::invalid_argument("camera: principal point outside image");
  }

  Vec3 world_to_camera(const Vec3& w) const {
    return pose_invert(cam_pose).apply(w);
  }

  /// World point for pixel (u,v) at camera-frame depth d (meters).
  Vec3 back_project(double u, double v, double d) const {
    Vec3 pc((u - cx) / fx * d, (v - cy) / fy * d, d);
    return cam_pose.apply(pc);
  }

  /// Camera pose looking from `eye` toward `target`, image "up" aligned with
  /// world +z (v grows toward the table).
  static Pose look_at(const Vec3& eye, const Vec3& target) {
    Vec3 fwd = (target - eye).normalized();
    Vec3 up(0.0, 0.0, 1.0);
    Vec3 right = up.cross(fwd);
    if (right.norm() < 1e-9) right = Vec3(1.0, 0.0, 0.0);  // looking straight down
    right.normalize();
    Vec3 down = fwd.cross(right);
    Mat3 r;
    r.col(0) = right;
    r.col(1) = down;
    r.col(2) = fwd;
    return Pose(Quat(r), eye);
  }
};

/// Row-major depth buffer, meters; 0 means background / no return.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> depth;

  DepthImage() = default;
  DepthImage(int w, int h) : width(w), height(h), depth(static_cast<std::size_t>(w) * h, 0.0f) {}

  float& at(int u, int v) { return depth[static_cast<std::size_t>(v) * width + u]; }
  float at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }

  std::size_t nonzero_count() const {
    std::size_t n = 0;
    for (float d : depth) n += (d != 0.0f);
    return n;
  }

  void validate() const {
    if (depth.size() != static_cast<std::size_t>(width) * height)
      throw std::invalid_argument("depth image: dimension mismatch");
    for (float d : depth)
      if (!std::isfinite(d) || d < 0.0f)
        throw std::invalid_argument("depth image: invalid value");
  }
};

struct ScoreConfig {
  double epsilon = 0.005;  // meters
};

struct PosedMesh {
  const TriMesh* mesh = nullptr;
  Pose pose;
};

namespace detail {

inline constexpr double kZNear = 1e-4;

/// Rasterize one camera-frame triangle into the z-buffer. Coverage: a pixel
/// is in when its sample point lies inside the projected triangle, edge ties
/// resolved by the top-left rule. Depth is perspective-correct (1/z linear in
/// screen space).
inline void raster_triangle(const Vec3& a, const Vec3& b, const Vec3& c,
                            const CameraModel& cam, DepthImage& img) {
  auto project = [&](const Vec3& p) {
    return Vec3(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy,
                p.z());
  };
  Vec3 pa = project(a), pb = project(b), pc = project(c);

  // Orient so the signed area is positive; no back-face culling.
  double area = (pb.x() - pa.x()) * (pc.y() - pa.y()) -
                (pb.y() - pa.y()) * (pc.x() - pa.x());
  if (area < 0) {
    std::swap(pb, pc);
    area = -area;
  }
  if (area == 0.0) return;

  double min_u = std::min({pa.x(), pb.x(), pc.x()});
  double max_u = std::max({pa.x(), pb.x(), pc.x()});
  double min_v = std::min({pa.y(), pb.y(), pc.y()});
  double max_v = std::max({pa.y(), pb.y(), pc.y()});
  int u0 = std::max(0, static_cast<int>(std::ceil(min_u)));
  int u1 = std::min(cam.width - 1, static_cast<int>(std::floor(max_u)));
  int v0 = std::max(0, static_cast<int>(std::ceil(min_v)));
  int v1 = std::min(cam.height - 1, static_cast<int>(std::floor(max_v)));
  if (u0 > u1 || v0 > v1) return;

  auto edge = [](const Vec3& s, const Vec3& e, double u, double v) {
    return (e.x() - s.x()) * (v - s.y()) - (e.y() - s.y()) * (u - s.x());
  };
  // Edge tie acceptance: top (horizontal, interior below) or left (going up).
  auto top_left = [](const Vec3& s, const Vec3& e) {
    double dx = e.x() - s.x(), dy = e.y() - s.y();
    return (dy == 0.0 && dx > 0.0) || dy < 0.0;
  };
  const bool tl_ab = top_left(pa, pb), tl_bc = top_left(pb, pc), tl_ca = top_left(pc, pa);

  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      double w_c = edge(pa, pb, u, v);
      double w_a = edge(pb, pc, u, v);
      double w_b = edge(pc, pa, u, v);
      bool in = (w_c > 0 || (w_c == 0 && tl_ab)) &&
                (w_a > 0 || (w_a == 0 && tl_bc)) &&
                (w_b > 0 || (w_b == 0 && tl_ca));
      if (!in) continue;
      double inv_z = (w_a / pa.z() + w_b / pb.z() + w_c / pc.z()) / area;
      float z = static_cast<float>(1.0 / inv_z);
      float& cell = img.at(u, v);
      if (cell == 0.0f || z < cell) cell = z;
    }
  }
}

/// Clip a camera-frame triangle against z >= kZNear and rasterize the result.
inline void clip_and_raster(const Vec3& a, const Vec3& b, const Vec3& c,
                            const CameraModel& cam, DepthImage& img) {
  Vec3 in[3] = {a, b, c};
  Vec3 poly[4];
  int n = 0;
  for (int i = 0; i < 3; ++i) {
    const Vec3& cur = in[i];
    const Vec3& nxt = in[(i + 1) % 3];
    bool cur_in = cur.z() >= kZNear;
    bool nxt_in = nxt.z() >= kZNear;
    if (cur_in) poly[n++] = cur;
    if (cur_in != nxt_in) {
      double t = (kZNear - cur.z()) / (nxt.z() - cur.z());
      poly[n++] = cur + t * (nxt - cur);
    }
  }
  if (n < 3) return;
  for (int i = 2; i < n; ++i) raster_triangle(poly[0], poly[i - 1], poly[i], cam, img);
}

}  // namespace detail

/// Z-buffer depth rendering of posed meshes (world frame). Each pixel holds
/// the smallest positive camera-frame depth of any covering triangle, 0 where
/// nothing projects.
inline DepthImage render_depth(const std::vector<PosedMesh>& models,
                               const CameraModel& cam) {
  cam.validate();
  DepthImage img(cam.width, cam.height);
  const Pose world_to_cam = pose_invert(cam.cam_pose);
  for (const PosedMesh& pm : models) {
    if (pm.mesh == nullptr) throw std::invalid_argument("render: null mesh");
    const Pose model_to_cam = pose_compose(world_to_cam, pm.pose);
    std::vector<Vec3> verts;
    verts.reserve(pm.mesh->vertices.size());
    for (const Vec3& v : pm.mesh->vertices) verts.push_back(model_to_cam.apply(v));
    for (const auto& t : pm.mesh->triangles)
      detail::clip_and_raster(verts[t[0]], verts[t[1]], verts[t[2]], cam, img);
  }
  return img;
}

/// 1 iff the two depths agree within epsilon. Background (0) pixels compare
/// by the same literal rule.
inline int pixel_match(double rendered, double observed, const ScoreConfig& cfg) {
  return std::abs(rendered - observed) < cfg.epsilon ? 1 : 0;
}

struct RenderScore {
  long score = 0;    // matching pixels over the union footprint
  long support = 0;  // union footprint size |P|

  double normalized() const {
    return support == 0 ? 1.0 : static_cast<double>(score) / static_cast<double>(support);
  }
};

/// Global consistency score: over P = {p : R[p] != 0 or D[p] != 0}, counts
/// pixels whose rendered and observed depths agree within epsilon.
inline RenderScore render_score(const DepthImage& observed,
                                const std::vector<PosedMesh>& hypothesis,
                                const CameraModel& cam, const ScoreConfig& cfg) {
  if (observed.width != cam.width || observed.height != cam.height)
    throw std::invalid_argument("render_score: image/camera dimension mismatch");
  DepthImage rendered = render_depth(hypothesis, cam);
  RenderScore rs;
  for (std::size_t i = 0; i < observed.depth.size(); ++i) {
    float r = rendered.depth[i];
    float d = observed.depth[i];
    if (r == 0.0f && d == 0.0f) continue;
    rs.support += 1;
    rs.score += pixel_match(r, d, cfg);
  }
  return rs;
}

}  // namespace scenesearch
