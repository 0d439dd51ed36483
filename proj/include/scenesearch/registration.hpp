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
#include "scenesearch/spatial.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace scenesearch {

struct ScoredPose {
  Pose pose;
  double lcp = 0.0;  // fraction of model points explained, in [0,1]
};

struct CandidateSet {
  std::string object_id;
  std::vector<ScoredPose> candidates;  // sorted by lcp, descending
  double budget_used = 0.0;            // seconds
};

/// Closed-form least-squares rigid transform mapping src[i] -> dst[i]:
/// cross-covariance, SVD, orthogonal polar factor with det=+1 guard.
inline Pose rigid_from_correspondences(const std::vector<Vec3>& src,
                                       const std::vector<Vec3>& dst) {
  if (src.size() != dst.size() || src.size() < 3)
    throw std::invalid_argument("rigid_from_correspondences: need >= 3 pairs");
  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(src.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i)
    h += (src[i] - cs) * (dst[i] - cd).transpose();
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  return Pose(Quat(r), cd - r * cs);
}

/// Uniform area-weighted surface sampling, deterministic under seed.
inline PointCloud sample_model_cloud(const TriMesh& mesh, int n,
                                     std::uint64_t seed = 0) {
  if (n < 100) throw std::invalid_argument("sample_model_cloud: n must be >= 100");
  mesh.validate();
  if (mesh.triangles.empty())
    throw std::invalid_argument("sample_model_cloud: empty mesh");
  std::vector<double> cdf(mesh.triangles.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    acc += mesh.triangle_area(i);
    cdf[i] = acc;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  PointCloud cloud;
  cloud.points.reserve(n);
  for (int s = 0; s < n; ++s) {
    double pick = uni(rng) * acc;
    std::size_t t = std::lower_bound(cdf.begin(), cdf.end(), pick) - cdf.begin();
    if (t >= mesh.triangles.size()) t = mesh.triangles.size() - 1;
    const auto& tri = mesh.triangles[t];
    double r1 = std::sqrt(uni(rng));
    double r2 = uni(rng);
    cloud.points.push_back((1.0 - r1) * mesh.vertices[tri[0]] +
                           r1 * (1.0 - r2) * mesh.vertices[tri[1]] +
                           r1 * r2 * mesh.vertices[tri[2]]);
  }
  return cloud;
}

/// Largest-common-pointset score: fraction of transformed model points whose
/// nearest segment point lies within delta.
inline double lcp_score(const PointCloud& model, const GridHash& segment_hash,
                        const Pose& pose, double delta) {
  if (model.empty()) throw std::invalid_argument("lcp_score: empty model cloud");
  if (segment_hash.size() == 0) return 0.0;
  long hits = 0;
  for (const Vec3& p : model.points)
    if (segment_hash.any_within(pose.apply(p), delta)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(model.size());
}

inline double lcp_score(const PointCloud& model, const PointCloud& segment,
                        const Pose& pose, double delta) {
  if (model.empty()) throw std::invalid_argument("lcp_score: empty model cloud");
  if (segment.empty()) return 0.0;
  GridHash hash(segment.points, delta, 4.0 * delta);
  return lcp_score(model, hash, pose, delta);
}

struct RegistrationConfig {
  double delta = 0.005;              // LCP inlier radius, meters
  double dist_tolerance = 0.0;       // pair-length slack; 0 -> 1.5 * delta
  double ratio_tolerance = 0.02;     // diagonal-intersection ratio slack
  double min_base_spread = 0.5;      // base spread as a fraction of segment diameter
  double coplanarity_tol = 0.005;    // base out-of-plane slack, meters
  int sample_pool = 16;              // random base-point candidates per slot
  std::size_t max_candidates = 200000;

  double pair_tol() const { return dist_tolerance > 0 ? dist_tolerance : 1.5 * delta; }
};

/// Budget for candidate generation: wall-clock when `seconds` > 0, otherwise
/// a fixed number of base trials (the reproducible mode).
struct RegistrationBudget {
  long base_trials = 20000;
  double seconds = 0.0;
};

namespace detail {

/// Closest-point parameters of two 3D segments (a1,a2) and (b1,b2): fills the
/// normalized parameters r1,r2 of the mutual closest points and returns the
/// gap between them. Parallel segments return a large gap.
inline double segment_intersection_params(const Vec3& a1, const Vec3& a2,
                                          const Vec3& b1, const Vec3& b2,
                                          double& r1, double& r2) {
  Vec3 u = a2 - a1, v = b2 - b1, w = a1 - b1;
  double a = u.dot(u), b = u.dot(v), c = v.dot(v), d = u.dot(w), e = v.dot(w);
  double den = a * c - b * b;
  if (den < 1e-12 * a * c || den <= 0.0) return std::numeric_limits<double>::infinity();
  r1 = (b * e - c * d) / den;
  r2 = (a * e - b * d) / den;
  return (w + r1 * u - r2 * v).norm();
}

struct PairIndex {
  struct Entry {
    float d;
    int i, j;
  };
  std::vector<Entry> entries;  // i < j, sorted by distance

  explicit PairIndex(const std::vector<Vec3>& pts) {
    const int n = static_cast<int>(pts.size());
    entries.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        entries.push_back({static_cast<float>((pts[i] - pts[j]).norm()), i, j});
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.d < b.d; });
  }

  /// All stored pairs whose length is within tol of d.
  template <typename F>
  void for_each_near(double d, double tol, F&& f) const {
    auto lo = std::lower_bound(entries.begin(), entries.end(), d - tol,
                               [](const Entry& e, double v) { return e.d < v; });
    for (auto it = lo; it != entries.end() && it->d <= d + tol; ++it) f(*it);
  }
};

}  // namespace detail

/// Global candidate generation: samples wide, approximately coplanar 4-point
/// bases from the segment, finds congruent 4-point sets in the model cloud
/// (matching the two pair lengths and the two diagonal-intersection ratios),
/// solves the rigid transform per correspondence and scores it by LCP.
/// Accumulates every candidate found within the budget, sorted by LCP.
inline CandidateSet generate_candidates(const PointCloud& model,
                                        const PointCloud& segment,
                                        const RegistrationBudget& budget,
                                        const RegistrationConfig& cfg,
                                        std::uint64_t seed) {
  const auto t_start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
        .count();
  };
  if (segment.size() < 4)
    throw std::invalid_argument("generate_candidates: segment has fewer than 4 points");
  const double diam = segment.diameter();
  if (diam < 4.0 * cfg.delta)
    throw std::invalid_argument("generate_candidates: segment is degenerate");

  detail::PairIndex pairs(model.points);
  GridHash segment_hash(segment.points, cfg.delta, 4.0 * cfg.delta);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(segment.size()) - 1);

  CandidateSet out;
  const double spread_min = cfg.min_base_spread * diam;
  const double pair_tol = cfg.pair_tol();

  // e-points of candidate first pairs, hashed for the congruence match.
  std::vector<Vec3> e1_points;
  std::vector<std::pair<int, int>> e1_pairs;

  long trial = 0;
  while (true) {
    if (budget.seconds > 0.0) {
      if (elapsed() >= budget.seconds) break;
    } else if (trial >= budget.base_trials) {
      break;
    }
    ++trial;

    // --- base selection: three spread points plus a near-coplanar fourth ---
    const auto& sp = segment.points;
    int i0 = pick(rng);
    int i1 = i0, i2 = i0, i3 = i0;
    double best = -1.0;
    for (int k = 0; k < cfg.sample_pool; ++k) {
      int c = pick(rng);
      double d = (sp[c] - sp[i0]).norm();
      if (d > best) {
        best = d;
        i1 = c;
      }
    }
    if (best < spread_min) continue;
    best = -1.0;
    for (int k = 0; k < cfg.sample_pool; ++k) {
      int c = pick(rng);
      double d = std::min((sp[c] - sp[i0]).norm(), (sp[c] - sp[i1]).norm());
      if (d > best) {
        best = d;
        i2 = c;
      }
    }
    if (best < 0.25 * spread_min) continue;
    Vec3 normal = (sp[i1] - sp[i0]).cross(sp[i2] - sp[i0]);
    if (normal.norm() < 1e-12) continue;
    normal.normalize();
    best = -1.0;
    for (int k = 0; k < cfg.sample_pool; ++k) {
      int c = pick(rng);
      if (c == i0 || c == i1 || c == i2) continue;
      if (std::abs(normal.dot(sp[c] - sp[i0])) > cfg.coplanarity_tol) continue;
      double d = std::min({(sp[c] - sp[i0]).norm(), (sp[c] - sp[i1]).norm(),
                           (sp[c] - sp[i2]).norm()});
      if (d > best) {
        best = d;
        i3 = c;
      }
    }
    if (best < 0.25 * spread_min) continue;

    // Choose the pairing whose diagonals actually cross.
    const int perms[3][4] = {{i0, i1, i2, i3}, {i0, i2, i1, i3}, {i0, i3, i1, i2}};
    int base[4] = {-1, -1, -1, -1};
    double r1 = 0.0, r2 = 0.0;
    for (const auto& perm : perms) {
      double t1, t2;
      double gap = detail::segment_intersection_params(sp[perm[0]], sp[perm[1]],
                                                       sp[perm[2]], sp[perm[3]], t1, t2);
      if (gap < cfg.coplanarity_tol && t1 > 0.05 && t1 < 0.95 && t2 > 0.05 && t2 < 0.95) {
        base[0] = perm[0];
        base[1] = perm[1];
        base[2] = perm[2];
        base[3] = perm[3];
        r1 = t1;
        r2 = t2;
        break;
      }
    }
    if (base[0] < 0) continue;

    const double d1 = (sp[base[1]] - sp[base[0]]).norm();
    const double d2 = (sp[base[3]] - sp[base[2]]).norm();

    // --- congruent set extraction in the model cloud ---
    e1_points.clear();
    e1_pairs.clear();
    pairs.for_each_near(d1, pair_tol, [&](const detail::PairIndex::Entry& e) {
      const Vec3& p = model.points[e.i];
      const Vec3& q = model.points[e.j];
      e1_points.push_back(p + r1 * (q - p));
      e1_pairs.emplace_back(e.i, e.j);
      e1_points.push_back(q + r1 * (p - q));
      e1_pairs.emplace_back(e.j, e.i);
    });
    if (e1_points.empty()) continue;
    GridHash e1_hash(e1_points, pair_tol, 4.0 * pair_tol);

    std::vector<Vec3> src(4), dst(4);
    pairs.for_each_near(d2, pair_tol, [&](const detail::PairIndex::Entry& e) {
      for (int order = 0; order < 2; ++order) {
        int a = order == 0 ? e.i : e.j;
        int b = order == 0 ? e.j : e.i;
        Vec3 e2 = model.points[a] + r2 * (model.points[b] - model.points[a]);
        // Every e1 point near e2 proposes a congruent quad.
        e1_hash.for_each_within(e2, pair_tol, [&](int c) {
          const auto [m0, m1] = e1_pairs[c];
          if (m0 == a || m0 == b || m1 == a || m1 == b) return;
          // Verify the ratio invariants on the model quad itself.
          double q1, q2;
          double gap = detail::segment_intersection_params(
              model.points[m0], model.points[m1], model.points[a], model.points[b],
              q1, q2);
          if (!(gap < cfg.coplanarity_tol + pair_tol)) return;
          if (std::abs(q1 - r1) > cfg.ratio_tolerance ||
              std::abs(q2 - r2) > cfg.ratio_tolerance)
            return;
          src[0] = model.points[m0];
          src[1] = model.points[m1];
          src[2] = model.points[a];
          src[3] = model.points[b];
          dst[0] = sp[base[0]];
          dst[1] = sp[base[1]];
          dst[2] = sp[base[2]];
          dst[3] = sp[base[3]];
          Pose t = rigid_from_correspondences(src, dst);
          double resid = 0.0;
          for (int k = 0; k < 4; ++k)
            resid = std::max(resid, (t.apply(src[k]) - dst[k]).norm());
          if (resid > pair_tol) return;
          out.candidates.push_back({t, lcp_score(model, segment_hash, t, cfg.delta)});
        });
        if (out.candidates.size() >= cfg.max_candidates) return;
      }
    });
    if (out.candidates.size() >= cfg.max_candidates) break;
  }

  out.budget_used = elapsed();
  if (out.candidates.empty())
    throw std::runtime_error("generate_candidates: no candidates within budget");
  std::stable_sort(out.candidates.begin(), out.candidates.end(),
                   [](const ScoredPose& a, const ScoredPose& b) { return a.lcp > b.lcp; });
  return out;
}

struct IcpResult {
  Pose pose;
  bool empty_segment = false;   // segment had no usable points; pose == init
  bool degenerate = false;      // too few correspondences to update
  bool converged = false;
  int iterations = 0;
  double trimmed_mse = 0.0;     // over the final trimmed set
  std::vector<double> mse_history;
};

/// Trimmed ICP: nearest-neighbor correspondences from the transformed model
/// to the segment, keep the best `overlap` fraction by residual, closed-form
/// rigid update; stops when the update magnitude drops below 1e-6 or after
/// max_iters. The trimmed MSE is non-increasing across iterations.
inline IcpResult trimmed_icp(const Pose& init, const PointCloud& model,
                             const PointCloud& segment, double overlap,
                             int max_iters, double nn_radius = 0.3) {
  if (overlap <= 0.0 || overlap > 1.0)
    throw std::invalid_argument("trimmed_icp: overlap must be in (0, 1]");
  if (model.empty()) throw std::invalid_argument("trimmed_icp: empty model cloud");
  IcpResult res;
  res.pose = init;
  if (segment.empty()) {
    res.empty_segment = true;
    return res;
  }
  GridHash hash(segment.points, 0.01, nn_radius);
  const std::size_t n = model.size();
  const std::size_t keep = std::max<std::size_t>(3, static_cast<std::size_t>(overlap * n));

  struct Corr {
    double d;
    int model_idx;
    int seg_idx;
  };
  std::vector<Corr> corrs;
  corrs.reserve(n);
  std::vector<Vec3> src, dst;

  for (int iter = 0; iter < max_iters; ++iter) {
    corrs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      Vec3 p = res.pose.apply(model.points[i]);
      auto [idx, dist] = hash.nearest_within(p, nn_radius);
      if (idx >= 0) corrs.push_back({dist, static_cast<int>(i), idx});
    }
    if (corrs.size() < 3) {
      res.degenerate = true;
      break;
    }
    std::size_t m = std::min(keep, corrs.size());
    std::nth_element(corrs.begin(), corrs.begin() + (m - 1), corrs.end(),
                     [](const Corr& a, const Corr& b) { return a.d < b.d; });
    double mse = 0.0;
    src.clear();
    dst.clear();
    for (std::size_t i = 0; i < m; ++i) {
      mse += corrs[i].d * corrs[i].d;
      src.push_back(res.pose.apply(model.points[corrs[i].model_idx]));
      dst.push_back(segment.points[corrs[i].seg_idx]);
    }
    mse /= static_cast<double>(m);
    res.mse_history.push_back(mse);
    res.trimmed_mse = mse;
    res.iterations = iter + 1;

    Pose delta = rigid_from_correspondences(src, dst);
    res.pose = pose_compose(delta, res.pose);
    double update = delta.translation.norm() +
                    2.0 * std::acos(std::min(1.0, std::abs(delta.rotation.w())));
    if (update < 1e-6) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace scenesearch
