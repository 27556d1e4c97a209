#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsp/geometry.hpp"

namespace dsp {

/// One observed timestep: position, unit heading and a padding flag. Flattened
/// this is the 5-dim per-state input of the agent encoder.
struct AgentState {
  Vec2 position{};
  Vec2 tangent{1.0, 0.0};
  bool padded = false;

  bool operator==(const AgentState&) const = default;
};

struct AgentTrack {
  std::string id;
  std::vector<AgentState> states;  // oldest first; states.back() is t = 0
  bool is_target = false;
  std::optional<std::vector<Vec2>> gt_future;

  const AgentState& current() const { return states.back(); }
  bool operator==(const AgentTrack&) const = default;
};

/// Builds a track of length `observations.size()` from possibly-missing
/// observations. Missing entries are back-filled from the nearest valid state
/// and flagged as padded; headings of valid states come from `headings`.
AgentTrack make_track(std::string id, const std::vector<std::optional<Vec2>>& observations,
                      const std::vector<Vec2>& headings, bool is_target = false);

struct LaneFlags {
  bool turn_left = false;
  bool turn_right = false;
  bool traffic_control = false;
  bool is_intersection = false;

  bool operator==(const LaneFlags&) const = default;
};

struct LanePolyline {
  std::string id;
  std::vector<Vec2> centerline;
  std::vector<std::string> predecessors;
  std::vector<std::string> successors;
  std::vector<std::string> left_neighbors;
  std::vector<std::string> right_neighbors;
  LaneFlags flags;

  bool operator==(const LanePolyline&) const = default;
};

struct Horizon {
  int T = 20;
  int H = 30;
  double dt = 0.1;

  bool operator==(const Horizon&) const = default;
};

struct Scenario {
  std::string id;
  Horizon horizon;
  std::vector<AgentTrack> tracks;
  std::vector<LanePolyline> lanes;
  std::vector<Polygon> drivable_polygons;
  std::vector<Polygon> obstacle_polygons;
  /// Maps original (world) coordinates to this scenario's coordinates.
  Affine2 world_to_scene{};

  bool operator==(const Scenario&) const = default;
};

/// Throws Error(InvalidScenario) naming the offending track/lane.
void validate(const Scenario& s);

/// Index of the unique target track; throws NoTarget otherwise.
std::size_t target_index(const Scenario& s);

/// Applies `t` to every geometric field. A mirroring map swaps left/right
/// lane neighbors and turn flags so lane semantics stay consistent.
Scenario transform_scenario(const Scenario& s, const Affine2& t);

/// Target at the origin with its current heading along +x.
Scenario normalize_to_target(const Scenario& s);

/// Random rotation in [-pi, pi) about the origin and a fair-coin mirror
/// across the x-axis. Deterministic in `seed`.
Scenario augment(const Scenario& s, std::uint64_t seed);

/// The transform `augment` would apply for `seed` (mirror first, then rotate).
Affine2 augmentation_transform(std::uint64_t seed);

}  // namespace dsp
