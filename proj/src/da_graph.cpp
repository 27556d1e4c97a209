#include "dsp/da_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dsp/error.hpp"
#include "dsp/scenario_io.hpp"

namespace dsp {

namespace {

struct Box {
  double min_x, min_y, max_x, max_y;
  bool contains(Vec2 p, double pad = 1e-9) const {
    return p.x >= min_x - pad && p.x <= max_x + pad && p.y >= min_y - pad && p.y <= max_y + pad;
  }
  bool overlaps(Vec2 a, Vec2 b) const {
    return std::max(a.x, b.x) >= min_x - 1e-9 && std::min(a.x, b.x) <= max_x + 1e-9 &&
           std::max(a.y, b.y) >= min_y - 1e-9 && std::min(a.y, b.y) <= max_y + 1e-9;
  }
};

Box bounds(const Polygon& poly) {
  Box b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
        -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const Vec2& p : poly) {
    b.min_x = std::min(b.min_x, p.x);
    b.min_y = std::min(b.min_y, p.y);
    b.max_x = std::max(b.max_x, p.x);
    b.max_y = std::max(b.max_y, p.y);
  }
  return b;
}

Vec2 centroid(const Polygon& poly) {
  Vec2 c{};
  for (const Vec2& p : poly) c = c + p;
  return c * (1.0 / static_cast<double>(poly.size()));
}

}  // namespace

int DAGraph::node_at(int col, int row) const {
  if (col < 0 || row < 0 || col >= cols || row >= rows) return -1;
  return cell_to_node[static_cast<std::size_t>(row) * static_cast<std::size_t>(cols) +
                      static_cast<std::size_t>(col)];
}

std::vector<int> DAGraph::neighbors(int i, int k) const {
  std::vector<int> out;
  for (int j : dilated[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)]) {
    if (j >= 0) out.push_back(j);
  }
  return out;
}

std::vector<Polygon> active_obstacles(const Scenario& s) {
  std::vector<Polygon> out;
  for (const Polygon& obs : s.obstacle_polygons) {
    if (obs.size() < 3) continue;
    const Vec2 c = centroid(obs);
    for (const Polygon& d : s.drivable_polygons) {
      if (point_in_polygon(c, d, true)) {
        out.push_back(obs);
        break;
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> occupancy_features(const DAGraph& g, const Scenario& s, double r_occ) {
  const std::size_t T = static_cast<std::size_t>(s.horizon.T);
  std::vector<std::uint8_t> occ(g.size() * T, 0);
  if (r_occ < 0.0) return occ;
  for (const AgentTrack& track : s.tracks) {
    for (std::size_t t = 0; t < track.states.size() && t < T; ++t) {
      const AgentState& st = track.states[t];
      if (st.padded) continue;
      const Vec2 p = st.position;
      const int c0 = static_cast<int>(std::ceil((p.x - r_occ - g.origin.x) / g.pitch - 1e-9));
      const int c1 = static_cast<int>(std::floor((p.x + r_occ - g.origin.x) / g.pitch + 1e-9));
      const int r0 = static_cast<int>(std::ceil((p.y - r_occ - g.origin.y) / g.pitch - 1e-9));
      const int r1 = static_cast<int>(std::floor((p.y + r_occ - g.origin.y) / g.pitch + 1e-9));
      for (int r = std::max(r0, 0); r <= std::min(r1, g.rows - 1); ++r) {
        for (int c = std::max(c0, 0); c <= std::min(c1, g.cols - 1); ++c) {
          const int i = g.node_at(c, r);
          if (i < 0) continue;
          if (distance(g.nodes[static_cast<std::size_t>(i)].position, p) <= r_occ) {
            occ[static_cast<std::size_t>(i) * T + t] = 1;
          }
        }
      }
    }
  }
  return occ;
}

DAGraph build_da_graph(const Scenario& s, const DAConfig& cfg) {
  if (!(cfg.pitch > 0.0) || !(cfg.extent >= 0.0) || cfg.dilation_layers < 1) {
    throw Error(ErrorCode::InvalidConfig, "DA graph needs pitch > 0, extent >= 0, K >= 1");
  }
  const Vec2 center = s.tracks[target_index(s)].current().position;

  DAGraph g;
  g.pitch = cfg.pitch;
  g.extent = cfg.extent;
  const int n = static_cast<int>(std::floor(cfg.extent / cfg.pitch + 1e-9)) + 1;
  g.cols = n;
  g.rows = n;
  const double half = 0.5 * (n - 1) * cfg.pitch;
  g.origin = {center.x - half, center.y - half};
  g.cell_to_node.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), -1);

  std::vector<Box> drivable_boxes;
  for (const Polygon& d : s.drivable_polygons) drivable_boxes.push_back(bounds(d));
  const std::vector<Polygon> obstacles = active_obstacles(s);
  std::vector<Box> obstacle_boxes;
  for (const Polygon& o : obstacles) obstacle_boxes.push_back(bounds(o));

  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const Vec2 p{g.origin.x + c * cfg.pitch, g.origin.y + r * cfg.pitch};
      bool free = false;
      for (std::size_t k = 0; k < s.drivable_polygons.size() && !free; ++k) {
        free = drivable_boxes[k].contains(p) && point_in_polygon(p, s.drivable_polygons[k], true);
      }
      for (std::size_t k = 0; k < obstacles.size() && free; ++k) {
        if (obstacle_boxes[k].contains(p) && point_in_polygon(p, obstacles[k], true)) free = false;
      }
      if (!free) continue;
      DANode node;
      node.index = static_cast<int>(g.nodes.size());
      node.position = p;
      node.grid = {c, r};
      g.cell_to_node[static_cast<std::size_t>(r) * static_cast<std::size_t>(n) + static_cast<std::size_t>(c)] =
          node.index;
      g.nodes.push_back(std::move(node));
    }
  }
  if (g.nodes.empty()) {
    throw Error(ErrorCode::EmptyGraph, "no grid point of scenario '" + s.id + "' lies in free space");
  }

  auto line_of_sight = [&](int i, int j) {
    // Canonical endpoint order keeps the relation exactly symmetric.
    const Vec2 a = g.nodes[static_cast<std::size_t>(std::min(i, j))].position;
    const Vec2 b = g.nodes[static_cast<std::size_t>(std::max(i, j))].position;
    for (std::size_t k = 0; k < obstacles.size(); ++k) {
      if (obstacle_boxes[k].overlaps(a, b) && segment_hits_polygon(a, b, obstacles[k])) return false;
    }
    return true;
  };

  const std::size_t N = g.nodes.size();
  g.dilated.assign(static_cast<std::size_t>(cfg.dilation_layers), std::vector<std::array<int, 8>>(N));
  for (int k = 0; k < cfg.dilation_layers; ++k) {
    const int step = 1 << k;
    for (std::size_t i = 0; i < N; ++i) {
      const auto [c, r] = g.nodes[i].grid;
      for (std::size_t d = 0; d < 8; ++d) {
        int j = g.node_at(c + step * kMooreDirections[d][0], r + step * kMooreDirections[d][1]);
        if (j >= 0 && !line_of_sight(static_cast<int>(i), j)) j = -1;
        g.dilated[static_cast<std::size_t>(k)][i][d] = j;
      }
    }
  }
  g.edges.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    g.edges[i] = g.neighbors(static_cast<int>(i), 0);
    std::sort(g.edges[i].begin(), g.edges[i].end());
  }

  const auto occ = occupancy_features(g, s, cfg.r_occ);
  const std::size_t T = static_cast<std::size_t>(s.horizon.T);
  for (std::size_t i = 0; i < N; ++i) {
    g.nodes[i].occ.assign(occ.begin() + static_cast<std::ptrdiff_t>(i * T),
                          occ.begin() + static_cast<std::ptrdiff_t>((i + 1) * T));
  }
  return g;
}

int nearest_da_node(const DAGraph& g, Vec2 p) {
  if (g.nodes.empty()) throw Error(ErrorCode::EmptyGraph, "nearest_da_node on an empty graph");
  const int c0 = std::clamp(static_cast<int>(std::lround((p.x - g.origin.x) / g.pitch)), 0, g.cols - 1);
  const int r0 = std::clamp(static_cast<int>(std::lround((p.y - g.origin.y) / g.pitch)), 0, g.rows - 1);
  double best = std::numeric_limits<double>::infinity();
  int best_index = -1;
  auto consider = [&](int c, int r) {
    const int i = g.node_at(c, r);
    if (i < 0) return;
    const double d = distance(g.nodes[static_cast<std::size_t>(i)].position, p);
    if (d < best || (d == best && i < best_index)) {
      best = d;
      best_index = i;
    }
  };
  const int max_ring = std::max(g.cols, g.rows);
  for (int ring = 0; ring <= max_ring; ++ring) {
    // Every cell at Chebyshev index distance `ring` is at least (ring - 0.5) pitches away.
    if (best_index >= 0 && best + 1e-9 < (ring - 0.5) * g.pitch) break;
    if (ring == 0) {
      consider(c0, r0);
      continue;
    }
    for (int dc = -ring; dc <= ring; ++dc) {
      consider(c0 + dc, r0 - ring);
      consider(c0 + dc, r0 + ring);
    }
    for (int dr = -ring + 1; dr <= ring - 1; ++dr) {
      consider(c0 - ring, r0 + dr);
      consider(c0 + ring, r0 + dr);
    }
  }
  return best_index;
}

std::string dump_da_graph(const DAGraph& g) {
  nlohmann::ordered_json root;
  root["pitch"] = g.pitch;
  root["extent"] = g.extent;
  root["origin"] = {g.origin.x, g.origin.y};
  root["grid"] = {g.cols, g.rows};
  auto nodes = nlohmann::ordered_json::array();
  for (const DANode& n : g.nodes) {
    std::string occ;
    for (auto v : n.occ) occ.push_back(v ? '1' : '0');
    nodes.push_back({n.index, n.position.x, n.position.y, n.grid[0], n.grid[1], occ});
  }
  root["nodes"] = std::move(nodes);
  auto edges = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    for (int j : g.edges[i]) {
      if (static_cast<int>(i) < j) edges.push_back({static_cast<int>(i), j});
    }
  }
  root["edges"] = std::move(edges);
  auto dil = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < g.dilated.size(); ++k) {
    for (std::size_t i = 0; i < g.dilated[k].size(); ++i) {
      for (std::size_t d = 0; d < 8; ++d) {
        const int j = g.dilated[k][i][d];
        if (j >= 0) dil.push_back({static_cast<int>(k), static_cast<int>(d), static_cast<int>(i), j});
      }
    }
  }
  root["dilated"] = std::move(dil);
  return compact_dump(root);
}

}  // namespace dsp
