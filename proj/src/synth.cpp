#include "dsp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <unordered_map>

#include "dsp/error.hpp"

namespace dsp {

std::string to_string(MapTemplate t) {
  switch (t) {
    case MapTemplate::StraightRoad: return "straight";
    case MapTemplate::TIntersection: return "t-intersection";
    case MapTemplate::FourWay: return "four-way";
  }
  return "unknown";
}

MapTemplate parse_map_template(const std::string& name) {
  if (name == "straight" || name == "straight-road") return MapTemplate::StraightRoad;
  if (name == "t-intersection" || name == "t" || name == "tee") return MapTemplate::TIntersection;
  if (name == "four-way" || name == "4-way" || name == "fourway") return MapTemplate::FourWay;
  throw Error(ErrorCode::InvalidConfig, "unknown map template '" + name + "'");
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Vec2 rot90(Vec2 v) { return {-v.y, v.x}; }

std::vector<Vec2> line(Vec2 a, Vec2 b, int n) {
  std::vector<Vec2> pts;
  for (int i = 0; i <= n; ++i) pts.push_back(a + (b - a) * (static_cast<double>(i) / n));
  return pts;
}

std::vector<Vec2> bezier(Vec2 p0, Vec2 p1, Vec2 p2, Vec2 p3, int n) {
  std::vector<Vec2> pts;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double u = 1.0 - t;
    pts.push_back(p0 * (u * u * u) + p1 * (3 * u * u * t) + p2 * (3 * u * t * t) + p3 * (t * t * t));
  }
  return pts;
}

Polygon rect(Vec2 center, Vec2 along, double half_len, double half_width) {
  const Vec2 n = rot90(along);
  return {center - along * half_len - n * half_width, center + along * half_len - n * half_width,
          center + along * half_len + n * half_width, center - along * half_len + n * half_width};
}

struct Map {
  std::vector<LanePolyline> lanes;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<Polygon> drivable;
  std::vector<Polygon> obstacles;
  // Lanes an agent may start on.
  std::vector<std::string> entry_lanes;

  LanePolyline& add(LanePolyline lane) {
    index[lane.id] = lanes.size();
    lanes.push_back(std::move(lane));
    return lanes.back();
  }
  LanePolyline& at(const std::string& id) { return lanes[index.at(id)]; }

  void link(const std::string& from, const std::string& to) {
    at(from).successors.push_back(to);
    at(to).predecessors.push_back(from);
  }
};

Map straight_map(const SynthSpec& spec) {
  Map m;
  const double w = spec.lane_width;
  const double L = spec.arm_length;
  // Two lanes per direction, each split at x = 0 into an upstream and downstream piece.
  struct Row {
    const char* name;
    double y;
    double dir;
  };
  const Row rows[] = {{"e_in", -0.5 * w, 1.0}, {"e_out", -1.5 * w, 1.0},
                      {"w_in", 0.5 * w, -1.0}, {"w_out", 1.5 * w, -1.0}};
  for (const Row& r : rows) {
    const Vec2 start{-r.dir * L, r.y};
    const Vec2 mid{0.0, r.y};
    const Vec2 end{r.dir * L, r.y};
    LanePolyline a;
    a.id = std::string(r.name) + "_a";
    a.centerline = line(start, mid, 10);
    LanePolyline b;
    b.id = std::string(r.name) + "_b";
    b.centerline = line(mid, end, 10);
    m.add(std::move(a));
    m.add(std::move(b));
    m.link(std::string(r.name) + "_a", std::string(r.name) + "_b");
    m.entry_lanes.push_back(std::string(r.name) + "_a");
  }
  // Left of a lane is the +90 degree side of its travel direction.
  for (const char* piece : {"_a", "_b"}) {
    const std::string p = piece;
    m.at("e_out" + p).left_neighbors.push_back("e_in" + p);
    m.at("e_in" + p).right_neighbors.push_back("e_out" + p);
    m.at("w_out" + p).left_neighbors.push_back("w_in" + p);
    m.at("w_in" + p).right_neighbors.push_back("w_out" + p);
  }
  const double half = 2.0 * w + spec.drivable_margin;
  m.drivable.push_back({{-L, -half}, {L, -half}, {L, half}, {-L, half}});
  return m;
}

Map intersection_map(const SynthSpec& spec, bool four_way, Rng& rng) {
  Map m;
  const double w = spec.lane_width;
  const double L = spec.arm_length;
  const double box = w;  // stop line distance from the center
  const double half = w + spec.drivable_margin;
  std::vector<int> arms = four_way ? std::vector<int>{0, 1, 2, 3} : std::vector<int>{0, 2, 3};
  auto dir = [](int arm) {
    const double a = arm * std::numbers::pi / 2.0;
    return Vec2{std::cos(a), std::sin(a)};
  };
  const bool controlled = std::bernoulli_distribution(0.5)(rng);
  // Arm 2 (west) is listed first so the target's approach lane is lane 0.
  std::rotate(arms.begin(), std::find(arms.begin(), arms.end(), 2), arms.end());
  for (int arm : arms) {
    const Vec2 u = dir(arm);
    const Vec2 n = rot90(u);
    LanePolyline in;
    in.id = "in_" + std::to_string(arm);
    in.centerline = line(u * L + n * (0.5 * w), u * box + n * (0.5 * w), 12);
    in.flags.traffic_control = controlled;
    LanePolyline out;
    out.id = "out_" + std::to_string(arm);
    out.centerline = line(u * box - n * (0.5 * w), u * L - n * (0.5 * w), 12);
    m.add(std::move(in));
    m.add(std::move(out));
    m.entry_lanes.push_back("in_" + std::to_string(arm));
    m.drivable.push_back(rect(u * (0.5 * (L + half)), u, 0.5 * (L - half), half));
  }
  for (int from : arms) {
    for (int to : arms) {
      if (from == to) continue;
      const Vec2 ui = dir(from);
      const Vec2 uj = dir(to);
      const Vec2 p0 = ui * box + rot90(ui) * (0.5 * w);
      const Vec2 p3 = uj * box - rot90(uj) * (0.5 * w);
      LanePolyline c;
      c.id = "conn_" + std::to_string(from) + "_" + std::to_string(to);
      const double turn = (ui * -1.0).cross(uj);
      if (std::abs(turn) < 1e-9) {
        c.centerline = line(p0, p3, 8);
      } else {
        const double k = 0.55 * distance(p0, p3) / std::sqrt(2.0);
        c.centerline = bezier(p0, p0 - ui * k, p3 - uj * k, p3, 12);
      }
      c.flags.turn_left = turn > 1e-9;
      c.flags.turn_right = turn < -1e-9;
      c.flags.is_intersection = true;
      c.flags.traffic_control = controlled;
      m.add(std::move(c));
      m.link("in_" + std::to_string(from), "conn_" + std::to_string(from) + "_" + std::to_string(to));
      m.link("conn_" + std::to_string(from) + "_" + std::to_string(to), "out_" + std::to_string(to));
    }
  }
  m.drivable.push_back({{-half, -half}, {half, -half}, {half, half}, {-half, half}});
  return m;
}

void place_obstacles(Map& m, const SynthSpec& spec, Rng& rng) {
  if (spec.drivable_margin < 1.0) return;
  if (!std::bernoulli_distribution(spec.obstacle_probability)(rng)) return;
  const int count = uniform_int(rng, 1, 2);
  // Parked objects sit in the margin strip beyond the outermost lane's right edge.
  const double lateral = 0.5 * spec.lane_width + 0.5 * spec.drivable_margin;
  for (int i = 0; i < count; ++i) {
    const std::size_t k = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(m.lanes.size()) - 1));
    const LanePolyline& lane = m.lanes[k];
    if (lane.flags.is_intersection || !lane.right_neighbors.empty()) continue;
    const Vec2 a = lane.centerline.front();
    const Vec2 b = lane.centerline.back();
    const double len = distance(a, b);
    if (len < 14.0) continue;
    const Vec2 along = (b - a) * (1.0 / len);
    const double s = uniform(rng, 6.0, len - 6.0);
    const Vec2 right{along.y, -along.x};
    m.obstacles.push_back(rect(a + along * s + right * lateral, along, 1.0, 0.4));
  }
}

struct Path {
  std::vector<Vec2> pts;
  double length = 0.0;
};

Path make_path(const Map& m, const std::vector<std::string>& lane_ids) {
  Path p;
  for (const auto& id : lane_ids) {
    const auto& cl = m.lanes[m.index.at(id)].centerline;
    for (const Vec2& q : cl) {
      if (!p.pts.empty() && distance(p.pts.back(), q) < 1e-9) continue;
      p.pts.push_back(q);
    }
  }
  p.length = polyline_length(p.pts);
  return p;
}

/// Random walk over successors starting at `start` until a lane without successors.
std::vector<std::string> sample_route(const Map& m, const std::string& start, Rng& rng) {
  std::vector<std::string> route{start};
  for (int guard = 0; guard < 16; ++guard) {
    const auto& succ = m.lanes[m.index.at(route.back())].successors;
    if (succ.empty()) break;
    route.push_back(succ[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(succ.size()) - 1))]);
  }
  return route;
}

Vec2 tangent_at(const Path& p, double s) {
  double acc = 0.0;
  for (std::size_t i = 1; i < p.pts.size(); ++i) {
    const double seg = distance(p.pts[i - 1], p.pts[i]);
    if (acc + seg >= s || i + 1 == p.pts.size()) {
      const Vec2 d = p.pts[i] - p.pts[i - 1];
      return d * (1.0 / d.norm());
    }
    acc += seg;
  }
  return {1.0, 0.0};
}

/// Arc-length positions at t = -(T-1)dt .. H dt relative to s0 at t = 0 under a
/// clamped constant acceleration.
std::vector<double> arclength_profile(double s0, double v0, double accel, double vmin, double vmax,
                                      const Horizon& h) {
  const int n = h.T + h.H;
  std::vector<double> s(static_cast<std::size_t>(n));
  const std::size_t now = static_cast<std::size_t>(h.T - 1);
  s[now] = s0;
  double v = v0;
  for (std::size_t k = now + 1; k < s.size(); ++k) {
    const double vn = std::clamp(v + accel * h.dt, vmin, vmax);
    s[k] = s[k - 1] + 0.5 * (v + vn) * h.dt;
    v = vn;
  }
  v = v0;
  for (std::size_t k = now; k-- > 0;) {
    const double vp = std::clamp(v - accel * h.dt, vmin, vmax);
    s[k] = s[k + 1] - 0.5 * (v + vp) * h.dt;
    v = vp;
  }
  return s;
}

AgentTrack make_agent(const std::string& id, const Path& path, const std::vector<double>& s,
                      double lateral, const Horizon& h, int missing, bool is_target) {
  std::vector<std::optional<Vec2>> obs;
  std::vector<Vec2> headings;
  std::vector<Vec2> future;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const Vec2 tan = tangent_at(path, s[k]);
    const Vec2 p = point_at_arclength(path.pts, s[k]) + rot90(tan) * lateral;
    if (static_cast<int>(k) < h.T) {
      obs.push_back(static_cast<int>(k) < missing ? std::nullopt : std::optional<Vec2>(p));
      headings.push_back(tan);
    } else {
      future.push_back(p);
    }
  }
  AgentTrack track = make_track(id, obs, headings, is_target);
  track.gt_future = std::move(future);
  return track;
}

}  // namespace

Scenario synth_scenario(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.num_agents < 1 || spec.num_agents > 8) {
    throw Error(ErrorCode::InfeasibleSpec, "num_agents must be in [1, 8]");
  }
  if (!(spec.speed_min >= 0.0) || !(spec.speed_max >= spec.speed_min) || spec.speed_max <= 0.0) {
    throw Error(ErrorCode::InfeasibleSpec, "speed range must satisfy 0 <= min <= max, max > 0");
  }
  if (!(spec.accel_max >= spec.accel_min)) {
    throw Error(ErrorCode::InfeasibleSpec, "acceleration range is empty");
  }
  if (!(spec.lane_width > 0.0) || !(spec.drivable_margin >= 0.0)) {
    throw Error(ErrorCode::InfeasibleSpec, "lane width must be positive, margin non-negative");
  }
  const Horizon& h = spec.horizon;
  if (h.T < 2 || h.H < 1 || !(h.dt > 0.0)) {
    throw Error(ErrorCode::InfeasibleSpec, "horizon needs T >= 2, H >= 1, dt > 0");
  }
  const double travel = spec.speed_max * (h.T + h.H) * h.dt;
  if (spec.arm_length < travel + 2.0 * spec.lane_width || spec.arm_length < 10.0) {
    throw Error(ErrorCode::InfeasibleSpec,
                "arm_length " + std::to_string(spec.arm_length) +
                    " m has zero usable lanes for the requested speed range (needs >= " +
                    std::to_string(travel + 2.0 * spec.lane_width) + " m)");
  }

  Rng rng(seed);
  Map map;
  switch (spec.map_template) {
    case MapTemplate::StraightRoad: map = straight_map(spec); break;
    case MapTemplate::TIntersection: map = intersection_map(spec, false, rng); break;
    case MapTemplate::FourWay: map = intersection_map(spec, true, rng); break;
  }
  place_obstacles(map, spec, rng);

  Scenario s;
  s.id = to_string(spec.map_template) + "-" + std::to_string(seed);
  s.horizon = h;
  const double hist = (h.T - 1) * h.dt;
  const double fut = h.H * h.dt;

  for (int a = 0; a < spec.num_agents; ++a) {
    const bool is_target = a == 0;
    std::string start;
    if (is_target) {
      start = spec.map_template == MapTemplate::StraightRoad
                  ? (std::bernoulli_distribution(0.5)(rng) ? "e_in_a" : "e_out_a")
                  : map.entry_lanes.front();
    } else {
      start = map.entry_lanes[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<int>(map.entry_lanes.size()) - 1))];
    }
    const Path path = make_path(map, sample_route(map, start, rng));
    const double v0 = uniform(rng, spec.speed_min, spec.speed_max);
    const double accel = uniform(rng, spec.accel_min, spec.accel_max);
    const double vmax_reach = spec.speed_max;
    const double back = vmax_reach * hist + 1.0;
    const double ahead = vmax_reach * fut + 1.0;
    double s0 = 0.0;
    const double entry_len = polyline_length(map.lanes[map.index.at(start)].centerline);
    if (is_target && spec.map_template != MapTemplate::StraightRoad) {
      // Reach the stop line within the prediction horizon.
      const double lo = std::max(back, entry_len - 0.9 * v0 * fut);
      s0 = uniform(rng, lo, std::max(lo, entry_len - 1.0));
    } else {
      s0 = uniform(rng, back, std::max(back, path.length - ahead));
    }
    const auto profile = arclength_profile(s0, v0, accel, spec.speed_min, spec.speed_max, h);
    const double lateral = uniform(rng, -spec.lateral_noise, spec.lateral_noise);
    int missing = 0;
    if (!is_target && std::bernoulli_distribution(spec.pad_probability)(rng)) {
      missing = uniform_int(rng, 1, h.T / 2);
    }
    const std::string id = is_target ? "target" : "agent_" + std::to_string(a);
    s.tracks.push_back(make_agent(id, path, profile, lateral, h, missing, is_target));
  }

  s.lanes = std::move(map.lanes);
  s.drivable_polygons = std::move(map.drivable);
  s.obstacle_polygons = std::move(map.obstacles);

  if (spec.random_world_pose) {
    const double angle = uniform(rng, -std::numbers::pi, std::numbers::pi);
    const Vec2 shift{uniform(rng, -200.0, 200.0), uniform(rng, -200.0, 200.0)};
    s = transform_scenario(s, Affine2::translation(shift).after(Affine2::rotation(angle)));
    s.world_to_scene = Affine2::identity();
  }
  validate(s);
  return s;
}

}  // namespace dsp
