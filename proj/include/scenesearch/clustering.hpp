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
#include "scenesearch/registration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace scenesearch {

struct ClusterConfig {
  int k_tr = 5;
  int k_rot = 5;
  double sigma = deg_to_rad(30.0);   // rotation kernel bandwidth, radians
  int max_iterations = 50;
  int max_representatives = 25;
  std::size_t rotation_sample_cap = 2000;  // per translation cluster
};

struct TranslationCluster {
  Vec3 center;
  std::vector<int> members;  // indices into the candidate list
};

/// Standard K-Means over candidate translations with k-means++ seeding,
/// deterministic under seed. Empty clusters are dropped. With fewer
/// candidates than k_tr every candidate becomes its own singleton cluster.
inline std::vector<TranslationCluster> cluster_translations(
    const std::vector<ScoredPose>& candidates, int k_tr, std::uint64_t seed) {
  if (k_tr < 1) throw std::invalid_argument("cluster_translations: k_tr < 1");
  const int n = static_cast<int>(candidates.size());
  std::vector<TranslationCluster> out;
  if (n == 0) return out;
  if (n <= k_tr) {
    for (int i = 0; i < n; ++i)
      out.push_back({candidates[i].pose.translation, {i}});
    return out;
  }

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<Vec3> centers;
  // k-means++ seeding.
  centers.push_back(candidates[static_cast<int>(uni(rng) * n) % n].pose.translation);
  std::vector<double> d2(n);
  while (static_cast<int>(centers.size()) < k_tr) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& c : centers)
        best = std::min(best, (candidates[i].pose.translation - c).squaredNorm());
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) break;  // all points coincide with a center
    double pick = uni(rng) * total;
    int chosen = n - 1;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc >= pick) {
        chosen = i;
        break;
      }
    }
    centers.push_back(candidates[chosen].pose.translation);
  }

  std::vector<int> assign(n, 0), prev(n, -1);
  for (int iter = 0; iter < 50 && assign != prev; ++iter) {
    prev = assign;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centers.size(); ++c) {
        double d = (candidates[i].pose.translation - centers[c]).squaredNorm();
        if (d < best) {
          best = d;
          assign[i] = static_cast<int>(c);
        }
      }
    }
    std::vector<Vec3> sums(centers.size(), Vec3::Zero());
    std::vector<int> counts(centers.size(), 0);
    for (int i = 0; i < n; ++i) {
      sums[assign[i]] += candidates[i].pose.translation;
      counts[assign[i]] += 1;
    }
    for (std::size_t c = 0; c < centers.size(); ++c)
      if (counts[c] > 0) centers[c] = sums[c] / counts[c];
  }

  out.resize(centers.size());
  for (std::size_t c = 0; c < centers.size(); ++c) out[c].center = centers[c];
  for (int i = 0; i < n; ++i) out[assign[i]].members.push_back(i);
  out.erase(std::remove_if(out.begin(), out.end(),
                           [](const TranslationCluster& c) { return c.members.empty(); }),
            out.end());
  return out;
}

namespace detail {

/// Kernel distance sqrt(K(x,x) + K(y,y) - 2 K(x,y)) for the Gaussian kernel
/// of the quotient geodesic distance; K(x,x) = 1.
inline double kernel_distance(double k_xy) {
  return std::sqrt(std::max(0.0, 2.0 - 2.0 * k_xy));
}

}  // namespace detail

/// Kernel K-Means over rotations with the symmetry-aware geodesic distance
/// and Gaussian kernel exp(-d^2/sigma^2). Each cluster is summarized by its
/// medoid: the member minimizing the sum of kernel distances to co-members.
/// Returned poses keep the medoid's full pose; lcp is the max over the
/// cluster. Deterministic under seed.
inline std::vector<ScoredPose> cluster_rotations(const std::vector<ScoredPose>& members,
                                                 int k_rot, const SymmetryGroup& sym,
                                                 double sigma, std::uint64_t seed,
                                                 std::vector<int>* member_to_rep = nullptr,
                                                 std::vector<long>* rep_counts = nullptr) {
  if (members.empty()) throw std::invalid_argument("cluster_rotations: empty input");
  if (k_rot < 1) throw std::invalid_argument("cluster_rotations: k_rot < 1");
  const int n = static_cast<int>(members.size());
  if (member_to_rep) member_to_rep->assign(n, 0);
  if (rep_counts) rep_counts->clear();
  if (n <= k_rot) {
    std::vector<ScoredPose> reps = members;
    if (member_to_rep)
      for (int i = 0; i < n; ++i) (*member_to_rep)[i] = i;
    if (rep_counts) rep_counts->assign(n, 1);
    return reps;
  }

  // Pairwise Gaussian kernel over the quotient distance.
  std::vector<double> kmat(static_cast<std::size_t>(n) * n, 1.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double d = rotation_distance(members[i].pose.rotation, members[j].pose.rotation, sym);
      double k = std::exp(-(d * d) / (sigma * sigma));
      kmat[static_cast<std::size_t>(i) * n + j] = k;
      kmat[static_cast<std::size_t>(j) * n + i] = k;
    }
  }
  auto kv = [&](int i, int j) { return kmat[static_cast<std::size_t>(i) * n + j]; };

  // k-means++-style seeding in the kernel-induced metric.
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<int> seeds{static_cast<int>(uni(rng) * n) % n};
  std::vector<double> d2(n);
  while (static_cast<int>(seeds.size()) < k_rot) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int s : seeds) {
        double d = detail::kernel_distance(kv(i, s));
        best = std::min(best, d * d);
      }
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) break;
    double pick = uni(rng) * total;
    int chosen = n - 1;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc >= pick) {
        chosen = i;
        break;
      }
    }
    seeds.push_back(chosen);
  }

  const int k = static_cast<int>(seeds.size());
  std::vector<int> assign(n, 0), prev(n, -1);
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      double d = detail::kernel_distance(kv(i, seeds[c]));
      if (d < best) {
        best = d;
        assign[i] = c;
      }
    }
  }

  std::vector<std::vector<int>> clusters(k);
  for (int iter = 0; iter < 50 && assign != prev; ++iter) {
    prev = assign;
    for (auto& c : clusters) c.clear();
    for (int i = 0; i < n; ++i) clusters[assign[i]].push_back(i);
    // Feature-space distance to each cluster mean via the kernel trick.
    std::vector<double> self_term(k, 0.0);
    for (int c = 0; c < k; ++c) {
      const auto& mem = clusters[c];
      if (mem.empty()) continue;
      double s = 0.0;
      for (int y : mem)
        for (int z : mem) s += kv(y, z);
      self_term[c] = s / (static_cast<double>(mem.size()) * mem.size());
    }
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const auto& mem = clusters[c];
        if (mem.empty()) continue;
        double cross = 0.0;
        for (int y : mem) cross += kv(i, y);
        double cost = 1.0 - 2.0 * cross / mem.size() + self_term[c];
        if (cost < best) {
          best = cost;
          assign[i] = c;
        }
      }
    }
  }
  for (auto& c : clusters) c.clear();
  for (int i = 0; i < n; ++i) clusters[assign[i]].push_back(i);

  std::vector<ScoredPose> reps;
  for (int c = 0; c < k; ++c) {
    const auto& mem = clusters[c];
    if (mem.empty()) continue;
    int medoid = mem.front();
    double best_sum = std::numeric_limits<double>::infinity();
    for (int x : mem) {
      double s = 0.0;
      for (int y : mem) s += detail::kernel_distance(kv(x, y));
      if (s < best_sum) {
        best_sum = s;
        medoid = x;
      }
    }
    ScoredPose rep = members[medoid];
    for (int y : mem) rep.lcp = std::max(rep.lcp, members[y].lcp);
    if (member_to_rep)
      for (int y : mem) (*member_to_rep)[y] = static_cast<int>(reps.size());
    if (rep_counts) rep_counts->push_back(static_cast<long>(mem.size()));
    reps.push_back(rep);
  }
  return reps;
}

/// Per-object compressed hypothesis set: representatives plus bookkeeping for
/// coverage checks.
struct HypothesisSet {
  std::string object_id;
  std::vector<ScoredPose> representatives;      // sorted by lcp, descending
  std::vector<long> provenance;                 // member count per representative
  std::vector<int> candidate_to_rep;            // input candidate -> representative
  double max_translation_spread = 0.0;          // member center distance bound
  double max_rotation_spread = 0.0;             // member medoid quotient bound
};

/// Two-level compression: K-Means on translations, then kernel K-Means on
/// rotations inside each translation cluster. Representative pose pairs the
/// translation-cluster center with the rotation medoid. Candidate pools that
/// already fit the representative budget pass through unchanged.
inline HypothesisSet build_hypothesis_set(const CandidateSet& candidates,
                                          const SymmetryGroup& sym,
                                          const ClusterConfig& cfg,
                                          std::uint64_t seed) {
  if (candidates.candidates.empty())
    throw std::invalid_argument("build_hypothesis_set: empty candidate set");
  HypothesisSet out;
  out.object_id = candidates.object_id;
  const auto& pool = candidates.candidates;
  const int n = static_cast<int>(pool.size());

  if (n <= cfg.max_representatives) {
    out.representatives = pool;
    out.provenance.assign(n, 1);
    out.candidate_to_rep.resize(n);
    for (int i = 0; i < n; ++i) out.candidate_to_rep[i] = i;
    return out;
  }

  out.candidate_to_rep.assign(n, -1);
  auto tr_clusters = cluster_translations(pool, cfg.k_tr, seed);
  struct RepEntry {
    ScoredPose rep;
    long count;
    std::vector<int> member_ids;
  };
  std::vector<RepEntry> entries;
  for (std::size_t tc = 0; tc < tr_clusters.size(); ++tc) {
    const auto& cluster = tr_clusters[tc];
    std::vector<int> ids = cluster.members;
    // Large clusters are summarized from a deterministic subsample; the
    // remaining members are assigned to their nearest representative below.
    if (ids.size() > cfg.rotation_sample_cap) {
      std::mt19937_64 shuffle_rng(seed ^ (0x9e3779b97f4a7c15ULL + tc));
      std::shuffle(ids.begin(), ids.end(), shuffle_rng);
      ids.resize(cfg.rotation_sample_cap);
    }
    std::vector<ScoredPose> members;
    members.reserve(ids.size());
    for (int i : ids) members.push_back(pool[i]);
    std::vector<int> member_to_rep;
    std::vector<long> rep_counts;
    auto reps = cluster_rotations(members, cfg.k_rot, sym, cfg.sigma,
                                  seed + 1 + tc, &member_to_rep, &rep_counts);
    std::size_t base = entries.size();
    for (std::size_t r = 0; r < reps.size(); ++r) {
      RepEntry e;
      e.rep = reps[r];
      e.rep.pose.translation = cluster.center;
      e.count = rep_counts[r];
      entries.push_back(std::move(e));
    }
    std::vector<char> sampled_flag(n, 0);
    for (std::size_t m = 0; m < ids.size(); ++m) {
      entries[base + member_to_rep[m]].member_ids.push_back(ids[m]);
      sampled_flag[ids[m]] = 1;
    }
    // Members skipped by the subsample join the nearest representative of
    // their translation cluster (quotient rotation distance).
    for (int i : cluster.members) {
      if (sampled_flag[i]) continue;
      std::size_t best_r = base;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t r = base; r < entries.size(); ++r) {
        double d = rotation_distance(pool[i].pose.rotation,
                                     entries[r].rep.pose.rotation, sym);
        if (d < best_d) {
          best_d = d;
          best_r = r;
        }
      }
      entries[best_r].member_ids.push_back(i);
      entries[best_r].count += 1;
      entries[best_r].rep.lcp = std::max(entries[best_r].rep.lcp, pool[i].lcp);
    }
  }

  std::stable_sort(entries.begin(), entries.end(),
                   [](const RepEntry& a, const RepEntry& b) { return a.rep.lcp > b.rep.lcp; });
  if (static_cast<int>(entries.size()) > cfg.max_representatives)
    entries.resize(cfg.max_representatives);

  for (std::size_t r = 0; r < entries.size(); ++r) {
    out.representatives.push_back(entries[r].rep);
    out.provenance.push_back(entries[r].count);
    for (int i : entries[r].member_ids) {
      out.candidate_to_rep[i] = static_cast<int>(r);
      out.max_translation_spread =
          std::max(out.max_translation_spread,
                   (pool[i].pose.translation - entries[r].rep.pose.translation).norm());
      out.max_rotation_spread =
          std::max(out.max_rotation_spread,
                   rotation_distance(pool[i].pose.rotation,
                                     entries[r].rep.pose.rotation, sym));
    }
  }
  // Candidates whose representative was truncated by the budget re-attach to
  // their nearest surviving representative.
  for (int i = 0; i < n; ++i) {
    if (out.candidate_to_rep[i] >= 0) continue;
    std::size_t best_r = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < out.representatives.size(); ++r) {
      double d = (pool[i].pose.translation -
                  out.representatives[r].pose.translation).norm() +
                 rotation_distance(pool[i].pose.rotation,
                                   out.representatives[r].pose.rotation, sym);
      if (d < best_d) {
        best_d = d;
        best_r = r;
      }
    }
    out.candidate_to_rep[i] = static_cast<int>(best_r);
    out.provenance[best_r] += 1;
    out.max_translation_spread =
        std::max(out.max_translation_spread,
                 (pool[i].pose.translation -
                  out.representatives[best_r].pose.translation).norm());
    out.max_rotation_spread =
        std::max(out.max_rotation_spread,
                 rotation_distance(pool[i].pose.rotation,
                                   out.representatives[best_r].pose.rotation, sym));
  }
  return out;
}

}  // namespace scenesearch
