#include "dsp/ls_graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <unordered_map>

#include "dsp/error.hpp"
#include "dsp/scenario_io.hpp"

namespace dsp {

void Relation::add(int i, int j) {
  auto& row = rows[static_cast<std::size_t>(i)];
  auto it = std::lower_bound(row.begin(), row.end(), j);
  if (it == row.end() || *it != j) row.insert(it, j);
}

bool Relation::contains(int i, int j) const {
  const auto& row = rows[static_cast<std::size_t>(i)];
  return std::binary_search(row.begin(), row.end(), j);
}

std::size_t Relation::count() const {
  std::size_t c = 0;
  for (const auto& r : rows) c += r.size();
  return c;
}

Relation Relation::transpose() const {
  Relation t(n);
  for (int i = 0; i < n; ++i) {
    for (int j : rows[static_cast<std::size_t>(i)]) t.rows[static_cast<std::size_t>(j)].push_back(i);
  }
  return t;  // rows are filled in ascending i, hence sorted
}

Relation Relation::compose(const Relation& other) const {
  Relation out(n);
  std::vector<char> mark(static_cast<std::size_t>(other.n), 0);
  for (int i = 0; i < n; ++i) {
    auto& row = out.rows[static_cast<std::size_t>(i)];
    for (int j : rows[static_cast<std::size_t>(i)]) {
      for (int k : other.rows[static_cast<std::size_t>(j)]) {
        if (!mark[static_cast<std::size_t>(k)]) {
          mark[static_cast<std::size_t>(k)] = 1;
          row.push_back(k);
        }
      }
    }
    for (int k : row) mark[static_cast<std::size_t>(k)] = 0;
    std::sort(row.begin(), row.end());
  }
  return out;
}

std::vector<Relation> dilated_relations(const Relation& base, int levels) {
  std::vector<Relation> out;
  if (levels <= 0) return out;
  out.push_back(base);
  for (int l = 1; l < levels; ++l) out.push_back(out.back().compose(out.back()));
  return out;
}

std::vector<double> LSGraph::features() const {
  std::vector<double> f;
  f.reserve(nodes.size() * kLSFeatureDim);
  for (const LSNode& n : nodes) {
    f.insert(f.end(), {n.position.x, n.position.y, n.tangent.x, n.tangent.y,
                       n.flags.turn_left ? 1.0 : 0.0, n.flags.turn_right ? 1.0 : 0.0,
                       n.flags.traffic_control ? 1.0 : 0.0, n.flags.is_intersection ? 1.0 : 0.0});
  }
  return f;
}

LSGraph build_ls_graph(const Scenario& s, const LSConfig& cfg) {
  if (s.lanes.empty()) throw Error(ErrorCode::EmptyMap, "scenario '" + s.id + "' has no lanes");
  if (!(cfg.seg_len > 0.0)) throw Error(ErrorCode::InvalidConfig, "seg_len must be positive");

  LSGraph g;
  g.seg_len = cfg.seg_len;
  std::vector<std::pair<int, int>> lane_span;  // [first, last] node per lane
  std::unordered_map<std::string, int> lane_index;
  for (std::size_t li = 0; li < s.lanes.size(); ++li) {
    const LanePolyline& lane = s.lanes[li];
    lane_index[lane.id] = static_cast<int>(li);
    const double length = polyline_length(lane.centerline);
    const int count = std::max(1, static_cast<int>(std::ceil(length / cfg.seg_len - 1e-6)));
    const int first = static_cast<int>(g.nodes.size());
    for (int k = 0; k < count; ++k) {
      LSNode node;
      node.index = static_cast<int>(g.nodes.size());
      node.lane = static_cast<int>(li);
      node.segment = k;
      node.s_begin = k * cfg.seg_len;
      node.s_end = k + 1 == count ? length : (k + 1) * cfg.seg_len;
      const Vec2 a = point_at_arclength(lane.centerline, node.s_begin);
      const Vec2 b = point_at_arclength(lane.centerline, node.s_end);
      node.position = (a + b) * 0.5;
      Vec2 d = b - a;
      if (d.norm() < 1e-12) d = lane.centerline.back() - lane.centerline.front();
      node.tangent = d.norm() > 0.0 ? d * (1.0 / d.norm()) : Vec2{1.0, 0.0};
      node.flags = lane.flags;
      g.nodes.push_back(node);
    }
    lane_span.emplace_back(first, static_cast<int>(g.nodes.size()) - 1);
  }

  const int N = static_cast<int>(g.nodes.size());
  g.suc = Relation(N);
  g.left = Relation(N);
  g.right = Relation(N);
  for (std::size_t li = 0; li < s.lanes.size(); ++li) {
    const auto [first, last] = lane_span[li];
    for (int i = first; i < last; ++i) g.suc.add(i, i + 1);
    for (const std::string& succ : s.lanes[li].successors) {
      auto it = lane_index.find(succ);
      if (it != lane_index.end()) g.suc.add(last, lane_span[static_cast<std::size_t>(it->second)].first);
    }
  }
  // Predecessor lists are implied by successor lists (reciprocity is validated).
  g.pre = g.suc.transpose();

  auto lateral = [&](std::size_t li, const std::vector<std::string>& neighbors, Relation& rel) {
    const auto [first, last] = lane_span[li];
    for (const std::string& id : neighbors) {
      auto it = lane_index.find(id);
      if (it == lane_index.end()) continue;
      const auto [nf, nl] = lane_span[static_cast<std::size_t>(it->second)];
      for (int i = first; i <= last; ++i) {
        const LSNode& a = g.nodes[static_cast<std::size_t>(i)];
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (int j = nf; j <= nl; ++j) {
          const double d = distance(a.position, g.nodes[static_cast<std::size_t>(j)].position);
          if (d < best_d) {
            best_d = d;
            best = j;
          }
        }
        // Reject diagonal links: the partner must sit within one segment along the lane.
        const Vec2 offset = g.nodes[static_cast<std::size_t>(best)].position - a.position;
        if (std::abs(offset.dot(a.tangent)) <= cfg.seg_len) rel.add(i, best);
      }
    }
  };
  for (std::size_t li = 0; li < s.lanes.size(); ++li) {
    lateral(li, s.lanes[li].left_neighbors, g.left);
    lateral(li, s.lanes[li].right_neighbors, g.right);
  }

  g.dilated_suc = dilated_relations(g.suc, cfg.dilation_levels);
  g.dilated_pre = dilated_relations(g.pre, cfg.dilation_levels);
  return g;
}

PairList radius_pairs(const std::vector<Vec2>& sources, const std::vector<Vec2>& targets, double radius,
                      bool exclude_same_index) {
  PairList out;
  out.radius = radius;
  if (!(radius > 0.0) || sources.empty() || targets.empty()) return out;
  auto key = [radius](Vec2 p) {
    return std::pair<long long, long long>{static_cast<long long>(std::floor(p.x / radius)),
                                           static_cast<long long>(std::floor(p.y / radius))};
  };
  std::map<std::pair<long long, long long>, std::vector<int>> buckets;
  for (std::size_t j = 0; j < sources.size(); ++j) buckets[key(sources[j])].push_back(static_cast<int>(j));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto [cx, cy] = key(targets[i]);
    std::vector<int> hits;
    for (long long dx = -1; dx <= 1; ++dx) {
      for (long long dy = -1; dy <= 1; ++dy) {
        auto it = buckets.find({cx + dx, cy + dy});
        if (it == buckets.end()) continue;
        for (int j : it->second) {
          if (exclude_same_index && j == static_cast<int>(i)) continue;
          if (distance(sources[static_cast<std::size_t>(j)], targets[i]) <= radius) hits.push_back(j);
        }
      }
    }
    std::sort(hits.begin(), hits.end());
    for (int j : hits) out.pairs.emplace_back(j, static_cast<int>(i));
  }
  return out;
}

InterLayerEdges build_interlayer_edges(const DAGraph& da, const LSGraph& ls,
                                       const std::vector<AgentTrack>& tracks,
                                       const InterLayerConfig& cfg) {
  std::vector<Vec2> da_pos, ls_pos, agent_pos;
  for (const auto& n : da.nodes) da_pos.push_back(n.position);
  for (const auto& n : ls.nodes) ls_pos.push_back(n.position);
  for (const auto& t : tracks) agent_pos.push_back(t.current().position);

  InterLayerEdges e;
  e.da_to_ls = radius_pairs(da_pos, ls_pos, cfg.r_da_ls);
  e.ls_to_da = radius_pairs(ls_pos, da_pos, cfg.r_da_ls);
  e.agent_to_ls = radius_pairs(agent_pos, ls_pos, cfg.r_agent_ls);
  e.ls_to_agent = radius_pairs(ls_pos, agent_pos, cfg.r_agent_ls);
  e.da_to_agent = radius_pairs(da_pos, agent_pos, cfg.r_da_agent);
  e.agent_to_agent = radius_pairs(agent_pos, agent_pos, cfg.r_agent_agent, true);
  return e;
}

std::string dump_ls_graph(const LSGraph& g) {
  nlohmann::ordered_json root;
  root["seg_len"] = g.seg_len;
  auto nodes = nlohmann::ordered_json::array();
  for (const LSNode& n : g.nodes) {
    nodes.push_back({n.index, n.lane, n.segment, n.position.x, n.position.y, n.tangent.x, n.tangent.y,
                     static_cast<int>(n.flags.turn_left), static_cast<int>(n.flags.turn_right),
                     static_cast<int>(n.flags.traffic_control), static_cast<int>(n.flags.is_intersection)});
  }
  root["nodes"] = std::move(nodes);
  auto rel = [](const Relation& r) {
    auto out = nlohmann::ordered_json::array();
    for (int i = 0; i < r.n; ++i) {
      for (int j : r.rows[static_cast<std::size_t>(i)]) out.push_back({i, j});
    }
    return out;
  };
  root["suc"] = rel(g.suc);
  root["pre"] = rel(g.pre);
  root["left"] = rel(g.left);
  root["right"] = rel(g.right);
  auto dil = nlohmann::ordered_json::object();
  for (std::size_t l = 0; l < g.dilated_suc.size(); ++l) {
    dil["suc_" + std::to_string(1 << l)] = rel(g.dilated_suc[l]);
    dil["pre_" + std::to_string(1 << l)] = rel(g.dilated_pre[l]);
  }
  root["dilated"] = std::move(dil);
  return compact_dump(root);
}

}  // namespace dsp
