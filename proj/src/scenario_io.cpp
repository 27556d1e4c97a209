#include "dsp/scenario_io.hpp"

#include <fstream>
#include <sstream>

#include "dsp/error.hpp"

namespace dsp {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

ojson point(Vec2 p) { return ojson::array({p.x, p.y}); }

ojson ring(const Polygon& poly) {
  ojson r = ojson::array();
  for (const Vec2& p : poly) r.push_back(point(p));
  if (!poly.empty()) r.push_back(point(poly.front()));
  return r;
}

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ParseError, "field '" + path + "': " + what);
}

const json& require(const json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) field_error(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) field_error(path + "." + key, "missing");
  return *it;
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) field_error(path, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) field_error(path, "expected an integer");
  return j.get<int>();
}

Vec2 parse_point(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) field_error(path, "expected [x, y]");
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]")};
}

std::vector<Vec2> parse_points(const json& j, const std::string& path) {
  if (!j.is_array()) field_error(path, "expected an array of points");
  std::vector<Vec2> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(parse_point(j[i], path + "[" + std::to_string(i) + "]"));
  }
  return out;
}

Polygon parse_ring(const json& j, const std::string& path) {
  Polygon poly = parse_points(j, path);
  if (poly.size() >= 2 && poly.front() == poly.back()) poly.pop_back();
  return poly;
}

std::vector<std::string> parse_ids(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) return {};
  if (!it->is_array()) field_error(path + "." + key, "expected an array of lane ids");
  std::vector<std::string> out;
  for (const auto& v : *it) {
    if (!v.is_string()) field_error(path + "." + key, "lane ids must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

bool flag(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it != obj.end() && it->is_boolean() && it->get<bool>();
}

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

void dump_into(std::ostringstream& os, const ojson& j, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
  if (j.is_object()) {
    if (j.empty()) {
      os << "{}";
      return;
    }
    os << "{\n";
    std::size_t i = 0;
    for (auto it = j.begin(); it != j.end(); ++it, ++i) {
      os << pad << ojson(it.key()).dump() << ": ";
      dump_into(os, it.value(), indent, depth + 1);
      os << (i + 1 < j.size() ? ",\n" : "\n");
    }
    os << close_pad << "}";
    return;
  }
  if (j.is_array()) {
    bool flat = true;
    for (const auto& e : j) {
      if (e.is_structured()) flat = false;
    }
    if (flat) {
      os << j.dump();
      return;
    }
    if (j.empty()) {
      os << "[]";
      return;
    }
    os << "[\n";
    for (std::size_t i = 0; i < j.size(); ++i) {
      os << pad;
      const auto& e = j[i];
      bool inline_tuple = e.is_array();
      for (const auto& inner : e) inline_tuple = inline_tuple && !inner.is_structured();
      if (inline_tuple) {
        os << e.dump();
      } else {
        dump_into(os, e, indent, depth + 1);
      }
      os << (i + 1 < j.size() ? ",\n" : "\n");
    }
    os << close_pad << "]";
    return;
  }
  os << j.dump();
}

}  // namespace

std::string compact_dump(const ojson& j, int indent) {
  std::ostringstream os;
  dump_into(os, j, indent, 0);
  os << "\n";
  return os.str();
}

std::string scenario_to_string(const Scenario& s) {
  ojson root;
  root["schema_version"] = kScenarioSchemaVersion;
  root["id"] = s.id;
  root["horizon"] = {{"T", s.horizon.T}, {"H", s.horizon.H}, {"dt", s.horizon.dt}};
  const Affine2& f = s.world_to_scene;
  root["frame"] = ojson::array({f.a, f.b, f.c, f.d, f.tx, f.ty});

  ojson tracks = ojson::array();
  for (const AgentTrack& t : s.tracks) {
    ojson jt;
    jt["id"] = t.id;
    jt["is_target"] = t.is_target;
    ojson states = ojson::array();
    for (const AgentState& st : t.states) {
      states.push_back(ojson::array(
          {st.position.x, st.position.y, st.tangent.x, st.tangent.y, st.padded ? 1 : 0}));
    }
    jt["states"] = std::move(states);
    if (t.gt_future) {
      ojson fut = ojson::array();
      for (const Vec2& p : *t.gt_future) fut.push_back(point(p));
      jt["gt_future"] = std::move(fut);
    }
    tracks.push_back(std::move(jt));
  }
  root["tracks"] = std::move(tracks);

  ojson lanes = ojson::array();
  for (const LanePolyline& l : s.lanes) {
    ojson jl;
    jl["id"] = l.id;
    ojson cl = ojson::array();
    for (const Vec2& p : l.centerline) cl.push_back(point(p));
    jl["centerline"] = std::move(cl);
    jl["predecessors"] = l.predecessors;
    jl["successors"] = l.successors;
    jl["left_neighbors"] = l.left_neighbors;
    jl["right_neighbors"] = l.right_neighbors;
    jl["flags"] = {{"turn_left", l.flags.turn_left},
                   {"turn_right", l.flags.turn_right},
                   {"traffic_control", l.flags.traffic_control},
                   {"is_intersection", l.flags.is_intersection}};
    lanes.push_back(std::move(jl));
  }
  root["lanes"] = std::move(lanes);

  ojson drivable = ojson::array();
  for (const Polygon& p : s.drivable_polygons) drivable.push_back(ring(p));
  root["drivable_polygons"] = std::move(drivable);
  ojson obstacles = ojson::array();
  for (const Polygon& p : s.obstacle_polygons) obstacles.push_back(ring(p));
  root["obstacle_polygons"] = std::move(obstacles);
  return compact_dump(root);
}

Scenario scenario_from_string(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line_of_offset(text, e.byte)) + ": " + e.what());
  }
  const int version = integer(require(root, "schema_version", "$"), "schema_version");
  if (version != kScenarioSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch,
                "file has schema_version " + std::to_string(version) + ", reader supports " +
                    std::to_string(kScenarioSchemaVersion));
  }

  Scenario s;
  if (auto it = root.find("id"); it != root.end() && it->is_string()) s.id = it->get<std::string>();
  const json& h = require(root, "horizon", "$");
  s.horizon.T = integer(require(h, "T", "horizon"), "horizon.T");
  s.horizon.H = integer(require(h, "H", "horizon"), "horizon.H");
  s.horizon.dt = number(require(h, "dt", "horizon"), "horizon.dt");
  if (auto it = root.find("frame"); it != root.end()) {
    if (!it->is_array() || it->size() != 6) field_error("frame", "expected 6 numbers");
    Affine2& f = s.world_to_scene;
    double* dst[] = {&f.a, &f.b, &f.c, &f.d, &f.tx, &f.ty};
    for (std::size_t i = 0; i < 6; ++i) *dst[i] = number((*it)[i], "frame");
  }

  const json& tracks = require(root, "tracks", "$");
  if (!tracks.is_array()) field_error("tracks", "expected an array");
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const std::string path = "tracks[" + std::to_string(i) + "]";
    const json& jt = tracks[i];
    AgentTrack t;
    const json& id = require(jt, "id", path);
    if (!id.is_string()) field_error(path + ".id", "expected a string");
    t.id = id.get<std::string>();
    const std::string named = path + " (track '" + t.id + "')";
    t.is_target = flag(jt, "is_target");
    const json& states = require(jt, "states", path);
    if (!states.is_array()) field_error(named + ".states", "expected an array");
    if (static_cast<int>(states.size()) != s.horizon.T) {
      field_error(named + ".states", "has " + std::to_string(states.size()) +
                                         " states, expected T = " + std::to_string(s.horizon.T));
    }
    for (std::size_t k = 0; k < states.size(); ++k) {
      const std::string sp = named + ".states[" + std::to_string(k) + "]";
      const json& st = states[k];
      if (!st.is_array() || st.size() != 5) field_error(sp, "expected [x, y, dx, dy, pad]");
      AgentState a;
      a.position = {number(st[0], sp), number(st[1], sp)};
      a.tangent = {number(st[2], sp), number(st[3], sp)};
      a.padded = number(st[4], sp) != 0.0;
      t.states.push_back(a);
    }
    if (auto it = jt.find("gt_future"); it != jt.end() && !it->is_null()) {
      t.gt_future = parse_points(*it, named + ".gt_future");
      if (static_cast<int>(t.gt_future->size()) != s.horizon.H) {
        field_error(named + ".gt_future",
                    "has " + std::to_string(t.gt_future->size()) + " positions, expected H = " +
                        std::to_string(s.horizon.H));
      }
    }
    s.tracks.push_back(std::move(t));
  }

  const json& lanes = require(root, "lanes", "$");
  if (!lanes.is_array()) field_error("lanes", "expected an array");
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const std::string path = "lanes[" + std::to_string(i) + "]";
    const json& jl = lanes[i];
    LanePolyline l;
    const json& id = require(jl, "id", path);
    if (!id.is_string()) field_error(path + ".id", "expected a string");
    l.id = id.get<std::string>();
    l.centerline = parse_points(require(jl, "centerline", path), path + ".centerline");
    l.predecessors = parse_ids(jl, "predecessors", path);
    l.successors = parse_ids(jl, "successors", path);
    l.left_neighbors = parse_ids(jl, "left_neighbors", path);
    l.right_neighbors = parse_ids(jl, "right_neighbors", path);
    if (auto it = jl.find("flags"); it != jl.end() && it->is_object()) {
      l.flags.turn_left = flag(*it, "turn_left");
      l.flags.turn_right = flag(*it, "turn_right");
      l.flags.traffic_control = flag(*it, "traffic_control");
      l.flags.is_intersection = flag(*it, "is_intersection");
    }
    s.lanes.push_back(std::move(l));
  }

  auto rings = [&](const char* key) {
    std::vector<Polygon> out;
    auto it = root.find(key);
    if (it == root.end()) return out;
    if (!it->is_array()) field_error(key, "expected an array of rings");
    for (std::size_t i = 0; i < it->size(); ++i) {
      out.push_back(parse_ring((*it)[i], std::string(key) + "[" + std::to_string(i) + "]"));
    }
    return out;
  };
  s.drivable_polygons = rings("drivable_polygons");
  s.obstacle_polygons = rings("obstacle_polygons");

  try {
    validate(s);
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.message());
  }
  return s;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

void write_scenario(const Scenario& s, const std::filesystem::path& path) {
  write_text_file(path, scenario_to_string(s));
}

Scenario read_scenario(const std::filesystem::path& path) {
  try {
    return scenario_from_string(read_text_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError) throw;
    throw Error(e.code(), path.string() + ": " + e.message());
  }
}

}  // namespace dsp
