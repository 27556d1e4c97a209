#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsp/da_graph.hpp"
#include "dsp/diff/tape.hpp"
#include "dsp/network.hpp"

namespace dsp {

enum class DecoderKind { NN, NMS, KMeans };

std::string to_string(DecoderKind k);
/// Accepts "nn", "nms", "kmeans". Throws InvalidConfig.
DecoderKind parse_decoder(const std::string& name);

struct GoalSet {
  std::vector<Vec2> goals;
  std::vector<double> scores;  // heatmap value at the DA node nearest to each goal
  diff::Matrix header_assignments;  // NN only: M x K', rows sum to one
  std::vector<int> candidates;  // DA nodes the goals were drawn from
};

struct NMSConfig {
  int M = 6;
  double radius = 2.8;  // R_supp, meters
  double decay = 0.8;
};

struct NMSResult {
  GoalSet set;
  std::vector<int> nodes;  // accepted DA nodes in acceptance order
  std::vector<double> radius_at_accept;
};

/// Greedy selection in descending score order (ties to the lower index). When
/// a pass over the queue ends short of M goals the radius is multiplied by
/// `decay` and every unaccepted node is considered again from the top. With
/// fewer than M nodes all of them are returned.
NMSResult nms_goal_decoder(const std::vector<double>& heatmap, const DAGraph& da, const NMSConfig& cfg);

struct KMeansConfig {
  int M = 6;
  int iters = 50;
  std::uint64_t seed = 0;
  int candidates = 64;  // top-scored nodes clustered; <= 0 uses every node
};

struct KMeansResult {
  GoalSet set;
  std::vector<double> objective;  // weighted within-cluster sum of squares after each assignment
  int iterations = 0;
};

/// Score-weighted Lloyd iterations from greedy weighted k-means++ seeding. All-zero
/// weights fall back to uniform weights.
KMeansResult kmeans_goal_decoder(const std::vector<double>& heatmap, const DAGraph& da, const KMeansConfig& cfg);

/// Plain weighted k-means over explicit points (used by the decoder).
KMeansResult weighted_kmeans(const std::vector<Vec2>& points, std::vector<double> weights, int M, int iters,
                             std::uint64_t seed);

/// Goal set from the learned decoder's current values.
GoalSet nn_goal_set(const GoalHypotheses& h, const std::vector<double>& heatmap, const DAGraph& da);

/// Heatmap scores at the DA nodes nearest to each goal.
std::vector<double> goal_scores(const std::vector<Vec2>& goals, const std::vector<double>& heatmap, const DAGraph& da);

/// Scores normalized to sum to one; uniform when they sum to zero.
std::vector<double> normalize_scores(const std::vector<double>& scores);

}  // namespace dsp
