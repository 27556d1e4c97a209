#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dsp/da_graph.hpp"
#include "dsp/scenario.hpp"

namespace dsp {

/// Sparse boolean relation over n nodes: rows[i] lists the j with (i, j) set,
/// sorted and unique. Row i aggregates from the nodes it lists.
struct Relation {
  int n = 0;
  std::vector<std::vector<int>> rows;

  explicit Relation(int size = 0) : n(size), rows(static_cast<std::size_t>(size)) {}

  void add(int i, int j);  // keeps the row sorted and unique
  bool contains(int i, int j) const;
  std::size_t count() const;
  Relation transpose() const;
  /// (this ; other): i -> k iff some j has this(i, j) and other(j, k).
  Relation compose(const Relation& other) const;
  bool operator==(const Relation&) const = default;
};

/// Relations for exponents 2^l, l in [0, L), by repeated squaring.
std::vector<Relation> dilated_relations(const Relation& base, int levels);

struct LSConfig {
  double seg_len = 2.0;
  int dilation_levels = 4;  // L
};

struct LSNode {
  int index = 0;
  int lane = 0;  // index into Scenario::lanes
  int segment = 0;  // order along the lane
  Vec2 position{};  // chord midpoint of the segment
  Vec2 tangent{};   // unit chord direction
  LaneFlags flags;
  double s_begin = 0.0;
  double s_end = 0.0;
};

inline constexpr int kLSFeatureDim = 8;

struct LSGraph {
  std::vector<LSNode> nodes;  // lane order, then arc-length order
  double seg_len = 0.0;
  /// suc(i, j): j is a successor segment of i; pre = transpose(suc).
  Relation pre, suc, left, right;
  std::vector<Relation> dilated_pre;  // [l] relates 2^l-hop predecessors
  std::vector<Relation> dilated_suc;

  std::size_t size() const { return nodes.size(); }
  /// Row-major N x 8: position, tangent, 4 flags.
  std::vector<double> features() const;
};

/// Throws EmptyMap when the scenario has no lanes.
LSGraph build_ls_graph(const Scenario& s, const LSConfig& cfg);

/// (source, target) pairs with their radius; sorted by target, then source.
struct PairList {
  double radius = 0.0;
  std::vector<std::pair<int, int>> pairs;
};

struct InterLayerConfig {
  double r_da_ls = 2.0;      // r1: DA <-> LS
  double r_agent_ls = 10.0;  // r2: agent <-> LS
  double r_da_agent = 6.0;   // r3: DA -> agent
  double r_agent_agent = 100.0;  // agent -> agent interaction context
};

struct InterLayerEdges {
  PairList da_to_ls, ls_to_da, agent_to_ls, ls_to_agent, da_to_agent, agent_to_agent;
};

/// All pairs within the configured radius (inclusive); a radius <= 0 yields
/// an empty relation. Agents are anchored at their t = 0 position.
InterLayerEdges build_interlayer_edges(const DAGraph& da, const LSGraph& ls,
                                       const std::vector<AgentTrack>& tracks,
                                       const InterLayerConfig& cfg);

/// Pairs (source, target) with |source - target| <= radius via a uniform grid hash.
PairList radius_pairs(const std::vector<Vec2>& sources, const std::vector<Vec2>& targets, double radius,
                      bool exclude_same_index = false);

std::string dump_ls_graph(const LSGraph& g);

}  // namespace dsp
