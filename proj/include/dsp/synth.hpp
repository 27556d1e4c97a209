#pragma once

#include <cstdint>
#include <string>

#include "dsp/scenario.hpp"

namespace dsp {

enum class MapTemplate { StraightRoad, TIntersection, FourWay };

std::string to_string(MapTemplate t);
/// Accepts "straight", "t-intersection", "four-way" (and a few aliases).
MapTemplate parse_map_template(const std::string& name);

struct SynthSpec {
  MapTemplate map_template = MapTemplate::FourWay;
  int num_agents = 4;  // including the target, in [1, 8]
  double speed_min = 3.0;  // m/s
  double speed_max = 8.0;
  double accel_min = -1.0;  // m/s^2
  double accel_max = 1.0;
  double lane_width = 3.5;
  double drivable_margin = 2.0;  // drivable area beyond the outer lane edge
  double arm_length = 50.0;      // length of each road arm from the center
  double lateral_noise = 0.2;    // max constant lateral offset from the lane center
  double obstacle_probability = 0.5;
  double pad_probability = 0.25;  // chance a non-target agent misses early observations
  bool random_world_pose = true;
  Horizon horizon{};
};

/// Pure function of (spec, seed). The target follows one lane path sampled
/// from the topology with a clamped constant-acceleration speed profile.
/// Throws InfeasibleSpec for out-of-range parameters.
Scenario synth_scenario(const SynthSpec& spec, std::uint64_t seed);

}  // namespace dsp
