#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dsp/scenario.hpp"

namespace dsp {

struct DAConfig {
  double pitch = 2.0;    // grid spacing, meters
  double extent = 60.0;  // side of the square sampling window, meters
  double r_occ = 1.5;    // occupancy radius, meters
  int dilation_layers = 4;  // K: offsets 2^k cells for k in [0, K)
};

struct DANode {
  int index = 0;
  Vec2 position{};
  std::array<int, 2> grid{};  // (column, row)
  std::vector<std::uint8_t> occ;  // length T, 1 if any unpadded agent is within r_occ at t
};

/// Grid offsets of the 8 Moore directions, counter-clockwise from +x.
inline constexpr std::array<std::array<int, 2>, 8> kMooreDirections{
    {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};

struct DAGraph {
  std::vector<DANode> nodes;  // row-major: rows (y) ascending, then columns (x) ascending
  double pitch = 0.0;
  double extent = 0.0;
  Vec2 origin{};  // position of grid cell (0, 0)
  int cols = 0;
  int rows = 0;
  std::vector<int> cell_to_node;  // rows * cols, -1 when the cell is not free space
  /// dilated[k][i][d]: node at grid offset 2^k * kMooreDirections[d] from i, or -1.
  std::vector<std::vector<std::array<int, 8>>> dilated;
  /// Moore adjacency (equal to the k = 0 table), sorted ascending.
  std::vector<std::vector<int>> edges;

  std::size_t size() const { return nodes.size(); }
  int node_at(int col, int row) const;
  /// Neighbor set N(i, k) in direction order, absent entries skipped.
  std::vector<int> neighbors(int i, int k) const;
};

/// Samples the free space on a target-centered grid and links Moore and
/// dilated neighbors that have an obstacle-free line of sight. Obstacles whose
/// centroid lies outside every drivable polygon are ignored.
/// Throws EmptyGraph when no grid point is free.
DAGraph build_da_graph(const Scenario& s, const DAConfig& cfg);

/// occ[i * T + t]; computed through the grid index.
std::vector<std::uint8_t> occupancy_features(const DAGraph& g, const Scenario& s, double r_occ);

/// Closest node, lowest index on ties. Throws EmptyGraph.
int nearest_da_node(const DAGraph& g, Vec2 p);

/// Obstacles taking part in the free-space test.
std::vector<Polygon> active_obstacles(const Scenario& s);

/// Structured text dump (nodes, edges, dilation tables) for golden tests.
std::string dump_da_graph(const DAGraph& g);

}  // namespace dsp
