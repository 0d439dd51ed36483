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
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace scenesearch {

/// Axis-aligned pixel box, upper bounds exclusive.
struct Detection {
  std::string object_id;
  int u_min = 0, v_min = 0, u_max = 0, v_max = 0;

  bool intersects(const Detection& o) const {
    return u_min < o.u_max && o.u_min < u_max && v_min < o.v_max && o.v_min < v_max;
  }
};

struct SceneObject {
  std::string id;
  std::shared_ptr<const ObjectModel> model;
  Pose pose;
};

struct SceneGroundTruth {
  std::vector<SceneObject> objects;
  CameraModel camera;
  double table_height = 0.0;

  std::vector<PosedMesh> posed_meshes() const {
    std::vector<PosedMesh> out;
    out.reserve(objects.size());
    for (const SceneObject& o : objects) out.push_back({&o.model->mesh, o.pose});
    return out;
  }

  int index_of(const std::string& id) const {
    for (std::size_t i = 0; i < objects.size(); ++i)
      if (objects[i].id == id) return static_cast<int>(i);
    throw std::invalid_argument("scene: unknown object id " + id);
  }
};

struct DepthNoiseParams {
  double sigma = 0.0;       // additive Gaussian, meters, on non-background pixels
  double dropout = 0.0;     // probability a non-background pixel reads 0
  std::uint64_t seed = 0;
};

struct DetectionNoiseParams {
  int margin = 0;   // outward dilation of each side, pixels
  int jitter = 0;   // max uniform box offset per axis, pixels
  std::uint64_t seed = 0;
};

class OccludedObjectError : public std::runtime_error {
 public:
  explicit OccludedObjectError(const std::string& id)
      : std::runtime_error("object fully occluded: " + id), object_id(id) {}
  std::string object_id;
};

/// Renders the true scene and corrupts it sensor-style: additive Gaussian
/// noise on pixels with a return, then dropout to 0. Deterministic per seed.
inline DepthImage observe(const SceneGroundTruth& gt, const DepthNoiseParams& noise) {
  DepthImage img = render_depth(gt.posed_meshes(), gt.camera);
  if (noise.sigma == 0.0 && noise.dropout == 0.0) return img;
  std::mt19937_64 rng(noise.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, noise.sigma);
  for (float& d : img.depth) {
    if (d == 0.0f) continue;
    if (noise.dropout > 0.0 && uni(rng) < noise.dropout) {
      d = 0.0f;
      continue;
    }
    if (noise.sigma > 0.0)
      d = static_cast<float>(std::max(detail::kZNear, d + gauss(rng)));
  }
  return img;
}

namespace detail {

struct VisibleBox {
  long pixels = 0;
  int u_min = 0, v_min = 0, u_max = 0, v_max = 0;  // exclusive upper bounds
};

/// Tight bounding box of the pixels where object `index` is the front
/// surface of the full scene.
inline VisibleBox visible_box(const SceneGroundTruth& gt, const DepthImage& full,
                              std::size_t index) {
  DepthImage alone = render_depth({{&gt.objects[index].model->mesh,
                                    gt.objects[index].pose}},
                                  gt.camera);
  VisibleBox box;
  int u0 = full.width, v0 = full.height, u1 = -1, v1 = -1;
  for (int v = 0; v < full.height; ++v) {
    for (int u = 0; u < full.width; ++u) {
      float a = alone.at(u, v);
      if (a == 0.0f) continue;
      if (std::abs(a - full.at(u, v)) > 1e-6f) continue;  // occluded here
      ++box.pixels;
      u0 = std::min(u0, u);
      v0 = std::min(v0, v);
      u1 = std::max(u1, u);
      v1 = std::max(v1, v);
    }
  }
  if (box.pixels > 0) {
    box.u_min = u0;
    box.v_min = v0;
    box.u_max = u1 + 1;
    box.v_max = v1 + 1;
  }
  return box;
}

}  // namespace detail

/// Per-object bounding boxes of the visible pixels, dilated by `margin` and
/// shifted by a uniform pixel jitter, clamped to the image. Throws
/// OccludedObjectError when an object has no visible pixel.
inline std::vector<Detection> simulate_detection(const SceneGroundTruth& gt,
                                                 const DetectionNoiseParams& jitter) {
  DepthImage full = render_depth(gt.posed_meshes(), gt.camera);
  std::mt19937_64 rng(jitter.seed);
  std::vector<Detection> out;
  for (std::size_t i = 0; i < gt.objects.size(); ++i) {
    detail::VisibleBox box = detail::visible_box(gt, full, i);
    if (box.pixels == 0) throw OccludedObjectError(gt.objects[i].id);
    Detection d;
    d.object_id = gt.objects[i].id;
    d.u_min = box.u_min - jitter.margin;
    d.v_min = box.v_min - jitter.margin;
    d.u_max = box.u_max + jitter.margin;
    d.v_max = box.v_max + jitter.margin;
    if (jitter.jitter > 0) {
      std::uniform_int_distribution<int> off(-jitter.jitter, jitter.jitter);
      int du = off(rng);
      int dv = off(rng);
      d.u_min += du;
      d.u_max += du;
      d.v_min += dv;
      d.v_max += dv;
    }
    d.u_min = std::clamp(d.u_min, 0, gt.camera.width - 1);
    d.v_min = std::clamp(d.v_min, 0, gt.camera.height - 1);
    d.u_max = std::clamp(d.u_max, d.u_min + 1, gt.camera.width);
    d.v_max = std::clamp(d.v_max, d.v_min + 1, gt.camera.height);
    out.push_back(d);
  }
  return out;
}

/// Back-projects every non-background pixel inside the box to a world-frame
/// point.
inline PointCloud extract_segment(const Detection& bbox, const DepthImage& observed,
                                  const CameraModel& cam) {
  PointCloud cloud;
  cloud.frame = Frame::world;
  for (int v = bbox.v_min; v < bbox.v_max; ++v) {
    for (int u = bbox.u_min; u < bbox.u_max; ++u) {
      float d = observed.at(u, v);
      if (d == 0.0f) continue;
      cloud.points.push_back(cam.back_project(u, v, d));
    }
  }
  return cloud;
}

/// Removes the points already explained by placed objects: any point closer
/// than eps to a placed surface. Order-preserving and idempotent.
inline PointCloud subtract_explained(const PointCloud& segment,
                                     const std::vector<PosedMesh>& placed,
                                     double eps) {
  if (placed.empty()) return segment;
  std::vector<AabbTree> trees;
  trees.reserve(placed.size());
  for (const PosedMesh& pm : placed) trees.emplace_back(*pm.mesh, pm.pose);
  PointCloud out;
  out.frame = segment.frame;
  out.points.reserve(segment.points.size());
  for (const Vec3& p : segment.points) {
    bool explained = false;
    for (const AabbTree& t : trees) {
      if (t.distance(p) < eps) {
        explained = true;
        break;
      }
    }
    if (!explained) out.points.push_back(p);
  }
  return out;
}

}  // namespace scenesearch
