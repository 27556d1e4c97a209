#include "dsp/scenario.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "dsp/error.hpp"

namespace dsp {

namespace {

bool finite(Vec2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

void check_ring(const Polygon& poly, const char* kind, std::size_t index) {
  for (const Vec2& p : poly) {
    if (!finite(p)) {
      throw Error(ErrorCode::InvalidScenario,
                  std::string(kind) + "[" + std::to_string(index) + "] has a non-finite vertex");
    }
  }
}

}  // namespace

AgentTrack make_track(std::string id, const std::vector<std::optional<Vec2>>& observations,
                      const std::vector<Vec2>& headings, bool is_target) {
  AgentTrack track;
  track.id = std::move(id);
  track.is_target = is_target;
  const std::size_t n = observations.size();
  track.states.resize(n);
  std::optional<std::size_t> first_valid;
  for (std::size_t t = 0; t < n; ++t) {
    if (observations[t]) {
      track.states[t] = {*observations[t], headings.at(t), false};
      if (!first_valid) first_valid = t;
    }
  }
  if (!first_valid) {
    throw Error(ErrorCode::InvalidScenario, "track '" + track.id + "' has no valid observation");
  }
  // Nearest valid state: scan forward for leading gaps, backward for the rest.
  std::optional<std::size_t> last_valid;
  for (std::size_t t = 0; t < n; ++t) {
    if (observations[t]) {
      last_valid = t;
      continue;
    }
    std::size_t src = *first_valid;
    if (last_valid) {
      src = *last_valid;
      for (std::size_t u = t + 1; u < n; ++u) {
        if (observations[u]) {
          if (u - t < t - *last_valid) src = u;
          break;
        }
      }
    }
    track.states[t] = {track.states[src].position, track.states[src].tangent, true};
  }
  return track;
}

void validate(const Scenario& s) {
  const Horizon& h = s.horizon;
  if (h.T <= 0 || h.H <= 0 || !(h.dt > 0.0)) {
    throw Error(ErrorCode::InvalidScenario, "horizon must have positive T, H and dt");
  }
  std::size_t targets = 0;
  for (const AgentTrack& track : s.tracks) {
    const std::string who = "track '" + track.id + "'";
    if (static_cast<int>(track.states.size()) != h.T) {
      throw Error(ErrorCode::InvalidScenario, who + " has " + std::to_string(track.states.size()) +
                                                  " states, expected T = " + std::to_string(h.T));
    }
    for (std::size_t t = 0; t < track.states.size(); ++t) {
      const AgentState& st = track.states[t];
      if (!finite(st.position) || !finite(st.tangent)) {
        throw Error(ErrorCode::InvalidScenario, who + " state " + std::to_string(t) + " is not finite");
      }
      if (!st.padded && std::abs(st.tangent.norm() - 1.0) > 1e-6) {
        throw Error(ErrorCode::InvalidScenario,
                    who + " state " + std::to_string(t) + " tangent is not unit length");
      }
    }
    if (track.gt_future) {
      if (static_cast<int>(track.gt_future->size()) != h.H) {
        throw Error(ErrorCode::InvalidScenario,
                    who + " gt_future has " + std::to_string(track.gt_future->size()) +
                        " positions, expected H = " + std::to_string(h.H));
      }
      for (const Vec2& p : *track.gt_future) {
        if (!finite(p)) throw Error(ErrorCode::InvalidScenario, who + " gt_future is not finite");
      }
    }
    if (track.is_target) ++targets;
  }
  if (targets != 1) {
    throw Error(ErrorCode::InvalidScenario,
                "expected exactly one target track, found " + std::to_string(targets));
  }

  std::unordered_map<std::string, const LanePolyline*> by_id;
  for (const LanePolyline& lane : s.lanes) {
    if (!by_id.emplace(lane.id, &lane).second) {
      throw Error(ErrorCode::InvalidScenario, "duplicate lane id '" + lane.id + "'");
    }
  }
  auto contains = [](const std::vector<std::string>& ids, const std::string& id) {
    for (const auto& x : ids) {
      if (x == id) return true;
    }
    return false;
  };
  for (const LanePolyline& lane : s.lanes) {
    const std::string who = "lane '" + lane.id + "'";
    if (lane.centerline.size() < 2) {
      throw Error(ErrorCode::InvalidScenario, who + " centerline has fewer than 2 points");
    }
    for (const Vec2& p : lane.centerline) {
      if (!finite(p)) throw Error(ErrorCode::InvalidScenario, who + " centerline is not finite");
    }
    for (const auto* list : {&lane.predecessors, &lane.successors, &lane.left_neighbors,
                             &lane.right_neighbors}) {
      for (const std::string& ref : *list) {
        if (!by_id.count(ref)) {
          throw Error(ErrorCode::InvalidScenario, who + " references unknown lane '" + ref + "'");
        }
      }
    }
    for (const std::string& suc : lane.successors) {
      if (!contains(by_id.at(suc)->predecessors, lane.id)) {
        throw Error(ErrorCode::InvalidScenario,
                    who + " lists '" + suc + "' as successor without the reciprocal predecessor");
      }
    }
    for (const std::string& pre : lane.predecessors) {
      if (!contains(by_id.at(pre)->successors, lane.id)) {
        throw Error(ErrorCode::InvalidScenario,
                    who + " lists '" + pre + "' as predecessor without the reciprocal successor");
      }
    }
  }
  for (std::size_t i = 0; i < s.drivable_polygons.size(); ++i) {
    check_ring(s.drivable_polygons[i], "drivable_polygons", i);
  }
  for (std::size_t i = 0; i < s.obstacle_polygons.size(); ++i) {
    check_ring(s.obstacle_polygons[i], "obstacle_polygons", i);
  }
}

std::size_t target_index(const Scenario& s) {
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < s.tracks.size(); ++i) {
    if (!s.tracks[i].is_target) continue;
    if (found) throw Error(ErrorCode::NoTarget, "more than one target track");
    found = i;
  }
  if (!found) throw Error(ErrorCode::NoTarget, "scenario '" + s.id + "' has no target track");
  return *found;
}

Scenario transform_scenario(const Scenario& s, const Affine2& t) {
  Scenario out = s;
  for (AgentTrack& track : out.tracks) {
    for (AgentState& st : track.states) {
      st.position = t.apply(st.position);
      st.tangent = t.apply_vector(st.tangent);
    }
    if (track.gt_future) {
      for (Vec2& p : *track.gt_future) p = t.apply(p);
    }
  }
  const bool mirrored = (t.a * t.d - t.b * t.c) < 0.0;
  for (LanePolyline& lane : out.lanes) {
    for (Vec2& p : lane.centerline) p = t.apply(p);
    if (mirrored) {
      std::swap(lane.left_neighbors, lane.right_neighbors);
      std::swap(lane.flags.turn_left, lane.flags.turn_right);
    }
  }
  for (Polygon& poly : out.drivable_polygons) {
    for (Vec2& p : poly) p = t.apply(p);
  }
  for (Polygon& poly : out.obstacle_polygons) {
    for (Vec2& p : poly) p = t.apply(p);
  }
  out.world_to_scene = t.after(s.world_to_scene);
  return out;
}

Scenario normalize_to_target(const Scenario& s) {
  const AgentTrack& target = s.tracks[target_index(s)];
  if (target.states.empty()) throw Error(ErrorCode::NoTarget, "target track has no states");
  const AgentState& now = target.current();
  if (now.padded) {
    throw Error(ErrorCode::InvalidScenario, "target state at t = 0 is padded");
  }
  const double n = now.tangent.norm();
  if (!(n > 1e-12) || !std::isfinite(n)) {
    throw Error(ErrorCode::DegenerateHeading, "target heading at t = 0 has zero length");
  }
  const double c = now.tangent.x / n;
  const double sn = now.tangent.y / n;
  // R(-theta) (p - p0)
  Affine2 t{c, sn, -sn, c, 0.0, 0.0};
  t = t.after(Affine2::translation(now.position * -1.0));
  return transform_scenario(s, t);
}

Affine2 augmentation_transform(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  std::bernoulli_distribution flip(0.5);
  const double a = angle(rng);
  const bool mirror = flip(rng);
  const Affine2 rot = Affine2::rotation(a);
  return mirror ? rot.after(Affine2::mirror_x()) : rot;
}

Scenario augment(const Scenario& s, std::uint64_t seed) {
  return transform_scenario(s, augmentation_transform(seed));
}

}  // namespace dsp
