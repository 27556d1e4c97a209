#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include <json.hpp>

#include "dsp/error.hpp"
#include "dsp/scenario_io.hpp"
#include "dsp/synth.hpp"
#include "test_support.hpp"

using namespace dsp;
using nlohmann::json;

namespace {

Scenario heading_north_at(Vec2 p) {
  Scenario s;
  s.id = "north";
  std::vector<std::optional<Vec2>> obs;
  std::vector<Vec2> headings;
  for (int t = 0; t < s.horizon.T; ++t) {
    obs.emplace_back(Vec2{p.x, p.y - 0.5 * (s.horizon.T - 1 - t)});
    headings.push_back({0.0, 1.0});
  }
  AgentTrack target = make_track("target", obs, headings, true);
  std::vector<Vec2> fut;
  for (int h = 1; h <= s.horizon.H; ++h) fut.push_back({p.x, p.y + 0.5 * h});
  target.gt_future = fut;
  s.tracks.push_back(target);
  LanePolyline lane;
  lane.id = "lane";
  lane.centerline = {{p.x, p.y - 20.0}, {p.x, p.y + 30.0}};
  s.lanes.push_back(lane);
  s.drivable_polygons.push_back({{p.x - 3, p.y - 20}, {p.x + 3, p.y - 20}, {p.x + 3, p.y + 30}, {p.x - 3, p.y + 30}});
  return s;
}

double max_pairwise_change(const Scenario& a, const Scenario& b) {
  std::vector<Vec2> pa, pb;
  for (std::size_t i = 0; i < a.tracks.size(); ++i) {
    for (std::size_t t = 0; t < a.tracks[i].states.size(); ++t) {
      pa.push_back(a.tracks[i].states[t].position);
      pb.push_back(b.tracks[i].states[t].position);
    }
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::size_t j = i + 1; j < pa.size(); ++j) {
      worst = std::max(worst, std::abs(distance(pa[i], pa[j]) - distance(pb[i], pb[j])));
    }
  }
  return worst;
}

double max_position_gap(const Scenario& a, const Scenario& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.tracks.size(); ++i) {
    for (std::size_t t = 0; t < a.tracks[i].states.size(); ++t) {
      worst = std::max(worst, distance(a.tracks[i].states[t].position, b.tracks[i].states[t].position));
      worst = std::max(worst, distance(a.tracks[i].states[t].tangent, b.tracks[i].states[t].tangent));
    }
  }
  for (std::size_t l = 0; l < a.lanes.size(); ++l) {
    for (std::size_t k = 0; k < a.lanes[l].centerline.size(); ++k) {
      worst = std::max(worst, distance(a.lanes[l].centerline[k], b.lanes[l].centerline[k]));
    }
  }
  return worst;
}

SynthSpec spec_for(MapTemplate t, int agents = 4) {
  SynthSpec s;
  s.map_template = t;
  s.num_agents = agents;
  return s;
}

}  // namespace

TEST_CASE("normalization moves the target to the origin heading +x") {
  const Scenario n = normalize_to_target(heading_north_at({5.0, 3.0}));
  const AgentState& cur = n.tracks[0].current();
  CHECK(cur.position.norm() < 1e-12);
  CHECK(cur.tangent.x == doctest::Approx(1.0));
  CHECK(std::abs(cur.tangent.y) < 1e-12);
  // A point 1 m north of the target ends 1 m ahead of it.
  CHECK(n.tracks[0].gt_future->front().x == doctest::Approx(0.5));
  CHECK(std::abs(n.tracks[0].gt_future->front().y) < 1e-12);
}

TEST_CASE("normalization is idempotent and invertible") {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const Scenario raw = synth_scenario(spec_for(static_cast<MapTemplate>(seed % 3)), seed);
    const Scenario once = normalize_to_target(raw);
    const Scenario twice = normalize_to_target(once);
    CHECK(max_position_gap(once, twice) < 1e-9);
    const Affine2 step = twice.world_to_scene.after(once.world_to_scene.inverse());
    CHECK(step.is_identity(1e-9));
    const Scenario back = transform_scenario(once, once.world_to_scene.after(raw.world_to_scene.inverse()).inverse());
    CHECK(max_position_gap(back, raw) < 1e-9);
  }
}

TEST_CASE("normalization errors") {
  Scenario s = heading_north_at({0, 0});
  s.tracks[0].is_target = false;
  CHECK_THROWS_AS(normalize_to_target(s), Error);
  try {
    normalize_to_target(s);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoTarget);
  }
  Scenario d = heading_north_at({0, 0});
  d.tracks[0].states.back().tangent = {0.0, 0.0};
  try {
    normalize_to_target(d);
    FAIL("expected DegenerateHeading");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateHeading);
  }
}

TEST_CASE("augmentation is deterministic and an isometry") {
  const Scenario n = normalize_to_target(synth_scenario(spec_for(MapTemplate::FourWay, 6), 21));
  CHECK(augment(n, 5) == augment(n, 5));
  for (std::uint64_t seed = 0; seed < 100; ++seed) CHECK(max_pairwise_change(n, augment(n, seed)) < 1e-9);
}

TEST_CASE("augmentation covers rotations and mirrors") {
  int mirrored = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Affine2 t = augmentation_transform(seed);
    const double det = t.a * t.d - t.b * t.c;
    CHECK(std::abs(std::abs(det) - 1.0) < 1e-12);
    if (det < 0) ++mirrored;
  }
  CHECK(mirrored > 60);
  CHECK(mirrored < 140);
}

TEST_CASE("mirroring twice restores the scenario and swaps lane sides once") {
  Scenario s = normalize_to_target(synth_scenario(spec_for(MapTemplate::StraightRoad), 2));
  const Scenario m1 = transform_scenario(s, Affine2::mirror_x());
  const Scenario m2 = transform_scenario(m1, Affine2::mirror_x());
  CHECK(max_position_gap(s, m2) < 1e-9);
  for (std::size_t l = 0; l < s.lanes.size(); ++l) {
    CHECK(m1.lanes[l].left_neighbors == s.lanes[l].right_neighbors);
    CHECK(m2.lanes[l].left_neighbors == s.lanes[l].left_neighbors);
  }
}

TEST_CASE("straight road endpoint displacement follows the kinematics") {
  SynthSpec spec = spec_for(MapTemplate::StraightRoad, 1);
  spec.accel_min = spec.accel_max = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scenario s = normalize_to_target(synth_scenario(spec, seed));
    const AgentTrack& t = s.tracks[0];
    const double dt = s.horizon.dt;
    const double speed = distance(t.states[t.states.size() - 1].position, t.states[t.states.size() - 2].position) / dt;
    const double expected = speed * s.horizon.H * dt;
    const double actual = t.gt_future->back().norm();
    CHECK(std::abs(actual - expected) <= 0.1 * expected);
  }
}

TEST_CASE("four-way intersection offers at least three lane paths from the target") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Scenario s = normalize_to_target(synth_scenario(spec_for(MapTemplate::FourWay), seed));
    std::map<std::string, const LanePolyline*> by_id;
    for (const auto& l : s.lanes) by_id[l.id] = &l;
    // Lane under the target's current position.
    const LanePolyline* start = nullptr;
    double best = 1e9;
    for (const auto& l : s.lanes) {
      const double dd = distance_to_polyline({0, 0}, l.centerline);
      if (dd < best) best = dd, start = &l;
    }
    REQUIRE(start != nullptr);
    std::set<std::vector<std::string>> paths;
    std::function<void(const LanePolyline*, std::vector<std::string>)> walk = [&](const LanePolyline* l, std::vector<std::string> path) {
      path.push_back(l->id);
      if (l->successors.empty() || path.size() > 6) {
        paths.insert(path);
        return;
      }
      for (const auto& n : l->successors) walk(by_id.at(n), path);
    };
    walk(start, {});
    CHECK(paths.size() >= 3);
  }
}

TEST_CASE("synthesis is a pure function of spec and seed") {
  const SynthSpec spec = spec_for(MapTemplate::TIntersection, 5);
  CHECK(scenario_to_string(synth_scenario(spec, 17)) == scenario_to_string(synth_scenario(spec, 17)));
  CHECK(scenario_to_string(synth_scenario(spec, 17)) != scenario_to_string(synth_scenario(spec, 18)));
  SynthSpec bad = spec;
  bad.num_agents = 9;
  CHECK_THROWS_AS(synth_scenario(bad, 1), Error);
  bad = spec;
  bad.arm_length = 1.0;
  CHECK_THROWS_AS(synth_scenario(bad, 1), Error);
}

TEST_CASE("synthetic scenarios satisfy the model invariants") {
  for (std::uint64_t seed = 0; seed < 9; ++seed) {
    const Scenario s = synth_scenario(spec_for(static_cast<MapTemplate>(seed % 3), 1 + static_cast<int>(seed % 8)), seed);
    CHECK_NOTHROW(validate(s));
    CHECK(s.horizon.T == 20);
    CHECK(s.horizon.H == 30);
    for (const auto& l : s.lanes) {
      for (const auto& p : l.predecessors) {
        const auto it = std::find_if(s.lanes.begin(), s.lanes.end(), [&](const LanePolyline& o) { return o.id == p; });
        REQUIRE(it != s.lanes.end());
        CHECK(std::find(it->successors.begin(), it->successors.end(), l.id) != it->successors.end());
      }
    }
  }
}

TEST_CASE("scenario files round-trip") {
  const Scenario s = synth_scenario(spec_for(MapTemplate::FourWay, 7), 4);
  const auto path = std::filesystem::temp_directory_path() / "dsp_roundtrip.json";
  write_scenario(s, path);
  CHECK(read_scenario(path) == s);
  std::filesystem::remove(path);
  CHECK(scenario_from_string(scenario_to_string(s)) == s);
}

TEST_CASE("malformed scenario files are rejected with a location") {
  const Scenario s = synth_scenario(spec_for(MapTemplate::StraightRoad, 2), 4);
  json j = json::parse(scenario_to_string(s));
  j["tracks"][1]["states"].erase(0);
  try {
    scenario_from_string(j.dump());
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(e.message().find("tracks[1]") != std::string::npos);
  }

  try {
    scenario_from_string("{\n  \"schema_version\": 1,\n  oops\n}");
    FAIL("expected a syntax error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(e.message().find("line 3") != std::string::npos);
  }

  json v = json::parse(scenario_to_string(s));
  v["schema_version"] = 2;
  try {
    scenario_from_string(v.dump());
    FAIL("expected a schema mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaVersionMismatch);
  }
}

TEST_CASE("unknown fields are ignored") {
  const Scenario s = synth_scenario(spec_for(MapTemplate::StraightRoad, 2), 8);
  json j = json::parse(scenario_to_string(s));
  j["producer"] = {{"name", "elsewhere"}, {"build", 12}};
  j["tracks"][0]["color"] = "red";
  j["lanes"][0]["speed_limit"] = 13.9;
  CHECK(scenario_from_string(j.dump()) == s);
}

TEST_CASE("missing observations are back-filled and flagged") {
  std::vector<std::optional<Vec2>> obs(5);
  obs[2] = Vec2{1, 1};
  obs[3] = Vec2{2, 1};
  obs[4] = Vec2{3, 1};
  const AgentTrack t = make_track("a", obs, std::vector<Vec2>(5, Vec2{1, 0}));
  CHECK(t.states[0].padded);
  CHECK(t.states[1].padded);
  CHECK_FALSE(t.states[2].padded);
  CHECK(t.states[0].position == Vec2{1, 1});
  CHECK(t.states[1].position == Vec2{1, 1});
}
