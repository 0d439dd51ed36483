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
#include "scenesearch/render.hpp"
#include "scenesearch/sensing.hpp"
#include "scenesearch/spatial.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace scenesearch {

enum class EdgeLabel { support, occlusion };

struct DependencyEdge {
  int from = 0;
  int to = 0;
  EdgeLabel label = EdgeLabel::support;
  double margin = 0.0;  // centroid separation that produced the edge
};

/// Directed graph over detected objects; edges order object placement
/// (support: `from` carries `to`; occlusion: `from` is in front of `to`).
struct DependencyGraph {
  std::vector<std::string> vertices;
  std::vector<DependencyEdge> edges;
  std::vector<std::string> notes;  // cycle-break records

  int index_of(const std::string& id) const {
    auto it = std::find(vertices.begin(), vertices.end(), id);
    if (it == vertices.end()) throw std::invalid_argument("graph: unknown vertex " + id);
    return static_cast<int>(it - vertices.begin());
  }
};

namespace detail {

inline bool has_cycle_from(const DependencyGraph& g, int start,
                           std::vector<int>& state, std::vector<int>& stack,
                           std::vector<int>& cycle) {
  state[start] = 1;
  stack.push_back(start);
  for (const DependencyEdge& e : g.edges) {
    if (e.from != start) continue;
    if (state[e.to] == 1) {
      auto it = std::find(stack.begin(), stack.end(), e.to);
      cycle.assign(it, stack.end());
      cycle.push_back(e.to);
      return true;
    }
    if (state[e.to] == 0 && has_cycle_from(g, e.to, state, stack, cycle)) return true;
  }
  stack.pop_back();
  state[start] = 2;
  return false;
}

/// Any directed cycle, as a vertex sequence v0..vk with v0 == vk; empty when
/// the graph is acyclic.
inline std::vector<int> find_cycle(const DependencyGraph& g) {
  std::vector<int> state(g.vertices.size(), 0), stack, cycle;
  for (std::size_t v = 0; v < g.vertices.size(); ++v)
    if (state[v] == 0 && has_cycle_from(g, static_cast<int>(v), state, stack, cycle))
      return cycle;
  return {};
}

}  // namespace detail

/// Builds the placement-ordering graph from the detected segments.
///  - support edge i->j: world x-y projections of the segments intersect and
///    segment j's centroid sits higher (+z).
///  - occlusion edge i->j: detection boxes intersect and segment j's centroid
///    is deeper along the camera axis.
/// Measurement-induced directed cycles are broken by repeatedly deleting the
/// in-cycle edge with the smallest centroid margin.
inline DependencyGraph build_dependency_graph(
    const std::map<std::string, PointCloud>& segments,
    const std::map<std::string, Detection>& detections, const CameraModel& cam) {
  DependencyGraph g;
  for (const auto& [id, seg] : segments) {
    if (seg.empty())
      throw std::invalid_argument("dependency: empty segment for " + id);
    if (detections.find(id) == detections.end())
      throw std::invalid_argument("dependency: missing detection for " + id);
    g.vertices.push_back(id);
  }

  const int n = static_cast<int>(g.vertices.size());
  std::vector<std::vector<Vec2>> hulls(n);
  std::vector<Vec3> centroids(n);
  std::vector<double> cam_depth(n);
  const Pose world_to_cam = pose_invert(cam.cam_pose);
  for (int i = 0; i < n; ++i) {
    const PointCloud& seg = segments.at(g.vertices[i]);
    std::vector<Vec2> proj;
    proj.reserve(seg.size());
    for (const Vec3& p : seg.points) proj.push_back(Vec2(p.x(), p.y()));
    hulls[i] = convex_hull_2d(std::move(proj));
    centroids[i] = seg.centroid();
    cam_depth[i] = world_to_cam.apply(centroids[i]).z();
  }

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (convex_polygons_intersect(hulls[i], hulls[j]) &&
          centroids[j].z() > centroids[i].z()) {
        g.edges.push_back({i, j, EdgeLabel::support, centroids[j].z() - centroids[i].z()});
      }
      const Detection& di = detections.at(g.vertices[i]);
      const Detection& dj = detections.at(g.vertices[j]);
      if (di.intersects(dj) && cam_depth[j] > cam_depth[i]) {
        g.edges.push_back({i, j, EdgeLabel::occlusion, cam_depth[j] - cam_depth[i]});
      }
    }
  }

  // Cycle breaking.
  while (true) {
    std::vector<int> cycle = detail::find_cycle(g);
    if (cycle.empty()) break;
    int victim = -1;
    double victim_margin = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < cycle.size(); ++k) {
      for (std::size_t e = 0; e < g.edges.size(); ++e) {
        if (g.edges[e].from == cycle[k] && g.edges[e].to == cycle[k + 1] &&
            g.edges[e].margin < victim_margin) {
          victim_margin = g.edges[e].margin;
          victim = static_cast<int>(e);
        }
      }
    }
    if (victim < 0) throw std::logic_error("dependency: cycle without edges");
    std::ostringstream note;
    note << "cycle broken: dropped edge " << g.vertices[g.edges[victim].from] << " -> "
         << g.vertices[g.edges[victim].to] << " (margin " << victim_margin << ")";
    g.notes.push_back(note.str());
    g.edges.erase(g.edges.begin() + victim);
  }
  return g;
}

/// Splits the graph into weakly connected components and topologically sorts
/// each one (ties by ascending object id). One ordered list per component,
/// components ordered by their smallest object id.
inline std::vector<std::vector<std::string>> ordered_lists(const DependencyGraph& g) {
  const int n = static_cast<int>(g.vertices.size());
  std::vector<int> comp(n, -1);
  int num_comp = 0;
  for (int start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    std::vector<int> queue{start};
    comp[start] = num_comp;
    while (!queue.empty()) {
      int v = queue.back();
      queue.pop_back();
      for (const DependencyEdge& e : g.edges) {
        int other = -1;
        if (e.from == v) other = e.to;
        if (e.to == v) other = e.from;
        if (other >= 0 && comp[other] < 0) {
          comp[other] = num_comp;
          queue.push_back(other);
        }
      }
    }
    ++num_comp;
  }

  std::vector<std::vector<std::string>> lists(num_comp);
  std::vector<int> indegree(n, 0);
  for (const DependencyEdge& e : g.edges) ++indegree[e.to];
  std::vector<char> done(n, 0);
  for (int c = 0; c < num_comp; ++c) {
    std::vector<int> remaining;
    for (int v = 0; v < n; ++v)
      if (comp[v] == c) remaining.push_back(v);
    std::size_t expect = remaining.size();
    std::vector<int> local_indegree = indegree;
    while (lists[c].size() < expect) {
      int pick = -1;
      for (int v : remaining) {
        if (done[v] || local_indegree[v] > 0) continue;
        if (pick < 0 || g.vertices[v] < g.vertices[pick]) pick = v;
      }
      if (pick < 0) throw std::logic_error("ordered_lists: cycle detected");
      done[pick] = 1;
      lists[c].push_back(g.vertices[pick]);
      for (const DependencyEdge& e : g.edges)
        if (e.from == pick) --local_indegree[e.to];
    }
  }
  std::sort(lists.begin(), lists.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return lists;
}

inline std::string to_dot(const DependencyGraph& g) {
  std::ostringstream out;
  out << "digraph dependencies {\n";
  for (const std::string& v : g.vertices) out << "  \"" << v << "\";\n";
  for (const DependencyEdge& e : g.edges) {
    out << "  \"" << g.vertices[e.from] << "\" -> \"" << g.vertices[e.to] << "\" [label=\""
        << (e.label == EdgeLabel::support ? "support" : "occlusion") << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace scenesearch
