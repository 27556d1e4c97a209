#include "dsp/decoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "dsp/error.hpp"

namespace dsp {

std::string to_string(DecoderKind k) {
  switch (k) {
    case DecoderKind::NN: return "nn";
    case DecoderKind::NMS: return "nms";
    case DecoderKind::KMeans: return "kmeans";
  }
  return "nn";
}

DecoderKind parse_decoder(const std::string& name) {
  if (name == "nn") return DecoderKind::NN;
  if (name == "nms") return DecoderKind::NMS;
  if (name == "kmeans" || name == "k-means") return DecoderKind::KMeans;
  throw Error(ErrorCode::InvalidConfig, "unknown decoder '" + name + "' (expected nn, nms or kmeans)");
}

namespace {

std::vector<int> ranked_nodes(const std::vector<double>& heatmap) {
  std::vector<int> order(heatmap.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return heatmap[static_cast<std::size_t>(a)] > heatmap[static_cast<std::size_t>(b)];
  });
  return order;
}

void check_heatmap(const std::vector<double>& heatmap, const DAGraph& da) {
  if (da.size() == 0) throw Error(ErrorCode::EmptyGraph, "goal decoding on an empty DA graph");
  if (heatmap.size() != da.size()) {
    throw Error(ErrorCode::ShapeMismatch, "heatmap has " + std::to_string(heatmap.size()) + " values for " +
                                              std::to_string(da.size()) + " DA nodes");
  }
}

}  // namespace

std::vector<double> goal_scores(const std::vector<Vec2>& goals, const std::vector<double>& heatmap, const DAGraph& da) {
  std::vector<double> s;
  s.reserve(goals.size());
  for (const Vec2& g : goals) s.push_back(heatmap[static_cast<std::size_t>(nearest_da_node(da, g))]);
  return s;
}

std::vector<double> normalize_scores(const std::vector<double>& scores) {
  const double total = std::accumulate(scores.begin(), scores.end(), 0.0);
  std::vector<double> p(scores.size(), scores.empty() ? 0.0 : 1.0 / static_cast<double>(scores.size()));
  if (total > 0.0) {
    for (std::size_t i = 0; i < scores.size(); ++i) p[i] = scores[i] / total;
  }
  return p;
}

NMSResult nms_goal_decoder(const std::vector<double>& heatmap, const DAGraph& da, const NMSConfig& cfg) {
  check_heatmap(heatmap, da);
  if (cfg.M <= 0 || !(cfg.radius >= 0.0) || !(cfg.decay > 0.0 && cfg.decay < 1.0)) {
    throw Error(ErrorCode::InvalidConfig, "NMS needs M > 0, radius >= 0 and decay in (0, 1)");
  }
  NMSResult r;
  const std::vector<int> order = ranked_nodes(heatmap);
  const std::size_t want = std::min<std::size_t>(static_cast<std::size_t>(cfg.M), order.size());
  std::vector<char> taken(order.size(), 0);
  double radius = cfg.radius;
  while (r.nodes.size() < want) {
    for (int i : order) {
      if (r.nodes.size() == want) break;
      if (taken[static_cast<std::size_t>(i)]) continue;
      const Vec2 p = da.nodes[static_cast<std::size_t>(i)].position;
      bool ok = true;
      for (int j : r.nodes) {
        if (distance(p, da.nodes[static_cast<std::size_t>(j)].position) < radius) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      taken[static_cast<std::size_t>(i)] = 1;
      r.nodes.push_back(i);
      r.radius_at_accept.push_back(radius);
    }
    if (r.nodes.size() < want) radius = radius * cfg.decay < 1e-12 ? 0.0 : radius * cfg.decay;
  }
  for (int i : r.nodes) {
    r.set.goals.push_back(da.nodes[static_cast<std::size_t>(i)].position);
    r.set.scores.push_back(heatmap[static_cast<std::size_t>(i)]);
  }
  r.set.candidates = r.nodes;
  return r;
}

KMeansResult weighted_kmeans(const std::vector<Vec2>& points, std::vector<double> weights, int M, int iters,
                             std::uint64_t seed) {
  if (points.empty()) throw Error(ErrorCode::EmptyGraph, "k-means over an empty point set");
  if (M <= 0) throw Error(ErrorCode::InvalidConfig, "k-means needs M > 0");
  if (weights.size() != points.size()) throw Error(ErrorCode::ShapeMismatch, "k-means weights and points differ in length");
  const std::size_t n = points.size();
  double total = 0.0;
  for (double& w : weights) {
    w = std::max(w, 0.0);
    total += w;
  }
  if (!(total > 0.0)) std::fill(weights.begin(), weights.end(), 1.0);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto sample = [&](const std::vector<double>& mass) -> std::size_t {
    const double sum = std::accumulate(mass.begin(), mass.end(), 0.0);
    if (!(sum > 0.0)) return n;
    const double u = unit(rng) * sum;
    double acc = 0.0;
    std::size_t last = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (mass[i] <= 0.0) continue;
      acc += mass[i];
      last = i;
      if (u < acc) return i;
    }
    return last;
  };

  std::vector<Vec2> centers;
  centers.reserve(static_cast<std::size_t>(M));
  centers.push_back(points[sample(weights)]);
  // Greedy k-means++: several D^2-weighted draws per step, keep the one with the lowest potential.
  const int trials = 2 + static_cast<int>(std::log(static_cast<double>(M)));
  std::vector<double> d2(n), mass(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = (points[i] - centers[0]).squared_norm();
  while (static_cast<int>(centers.size()) < M) {
    for (std::size_t i = 0; i < n; ++i) mass[i] = weights[i] * d2[i];
    std::size_t pick = n;
    double best_potential = std::numeric_limits<double>::infinity();
    for (int k = 0; k < trials; ++k) {
      const std::size_t c = sample(mass);
      if (c == n) break;
      double potential = 0.0;
      for (std::size_t i = 0; i < n; ++i) potential += weights[i] * std::min(d2[i], (points[i] - points[c]).squared_norm());
      if (potential < best_potential) {
        best_potential = potential;
        pick = c;
      }
    }
    if (pick == n) {
      // Every weighted point coincides with a center: reuse the heaviest.
      pick = static_cast<std::size_t>(std::max_element(weights.begin(), weights.end()) - weights.begin());
    }
    centers.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], (points[i] - points[pick]).squared_norm());
  }

  KMeansResult r;
  std::vector<int> assign(n, -1);
  for (int it = 0; it < std::max(iters, 1); ++it) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (points[i] - centers[0]).squared_norm();
      for (int c = 1; c < M; ++c) {
        const double d = (points[i] - centers[static_cast<std::size_t>(c)]).squared_norm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      changed = changed || assign[i] != best;
      assign[i] = best;
      objective += weights[i] * best_d;
    }
    r.objective.push_back(objective);
    r.iterations = it + 1;
    if (!changed && it > 0) break;
    std::vector<Vec2> sum(static_cast<std::size_t>(M), Vec2{0.0, 0.0});
    std::vector<double> mass_c(static_cast<std::size_t>(M), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[static_cast<std::size_t>(assign[i])] = sum[static_cast<std::size_t>(assign[i])] + points[i] * weights[i];
      mass_c[static_cast<std::size_t>(assign[i])] += weights[i];
    }
    for (int c = 0; c < M; ++c) {
      if (mass_c[static_cast<std::size_t>(c)] > 0.0) {
        centers[static_cast<std::size_t>(c)] = sum[static_cast<std::size_t>(c)] * (1.0 / mass_c[static_cast<std::size_t>(c)]);
      }
    }
  }
  r.set.goals = std::move(centers);
  return r;
}

KMeansResult kmeans_goal_decoder(const std::vector<double>& heatmap, const DAGraph& da, const KMeansConfig& cfg) {
  check_heatmap(heatmap, da);
  std::vector<int> nodes = ranked_nodes(heatmap);
  if (cfg.candidates > 0 && nodes.size() > static_cast<std::size_t>(cfg.candidates)) {
    nodes.resize(static_cast<std::size_t>(cfg.candidates));
  }
  std::vector<Vec2> pts;
  std::vector<double> w;
  for (int i : nodes) {
    pts.push_back(da.nodes[static_cast<std::size_t>(i)].position);
    w.push_back(heatmap[static_cast<std::size_t>(i)]);
  }
  KMeansResult r = weighted_kmeans(pts, std::move(w), cfg.M, cfg.iters, cfg.seed);
  r.set.scores = goal_scores(r.set.goals, heatmap, da);
  r.set.candidates = std::move(nodes);
  return r;
}

GoalSet nn_goal_set(const GoalHypotheses& h, const std::vector<double>& heatmap, const DAGraph& da) {
  check_heatmap(heatmap, da);
  GoalSet s;
  const diff::Matrix& g = h.goals.value();
  for (Eigen::Index m = 0; m < g.rows(); ++m) s.goals.push_back({g(m, 0), g(m, 1)});
  s.scores = goal_scores(s.goals, heatmap, da);
  s.header_assignments = h.gamma.value();
  s.candidates = h.candidates;
  return s;
}

}  // namespace dsp
