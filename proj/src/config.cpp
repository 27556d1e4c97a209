#include "dsp/config.hpp"

#include <algorithm>

#include <json.hpp>

#include "dsp/error.hpp"
#include "dsp/scenario_io.hpp"

namespace dsp {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidConfig, section + "." + key + " has the wrong type: " + it->dump());
  }
}

const json& section(const json& root, const char* name) {
  static const json empty = json::object();
  auto it = root.find(name);
  if (it == root.end()) return empty;
  if (!it->is_object()) throw Error(ErrorCode::InvalidConfig, std::string(name) + " must be an object");
  return *it;
}

}  // namespace

Config config_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("config: ") + e.what());
  }
  if (!root.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
  Config c;
  read(root, "seed", c.seed, "");
  read(root, "workers", c.workers, "");

  const json& n = section(root, "network");
  NetConfig& nc = c.network;
  read(n, "d_da", nc.d_da, "network");
  read(n, "d_ls", nc.d_ls, "network");
  read(n, "d_agt", nc.d_agt, "network");
  read(n, "K", nc.K, "network");
  read(n, "L", nc.L, "network");
  read(n, "num_da_blocks", nc.num_da_blocks, "network");
  read(n, "num_laneconv_layers", nc.num_laneconv_layers, "network");
  read(n, "M", nc.M, "network");
  read(n, "K_sel", nc.K_sel, "network");
  read(n, "d_dec", nc.d_dec, "network");
  read(n, "d_comp", nc.d_comp, "network");
  read(n, "coord_scale", nc.coord_scale, "network");

  const json& g = section(root, "graph");
  read(g, "pitch", c.graph.da.pitch, "graph");
  read(g, "extent", c.graph.da.extent, "graph");
  read(g, "r_occ", c.graph.da.r_occ, "graph");
  read(g, "seg_len", c.graph.ls.seg_len, "graph");
  read(g, "r_da_ls", c.graph.edges.r_da_ls, "graph");
  read(g, "r_agent_ls", c.graph.edges.r_agent_ls, "graph");
  read(g, "r_da_agent", c.graph.edges.r_da_agent, "graph");
  read(g, "r_agent_agent", c.graph.edges.r_agent_agent, "graph");

  const json& t = section(root, "train");
  TrainConfig& tc = c.train;
  read(t, "omega1", tc.omega1, "train");
  read(t, "omega2", tc.omega2, "train");
  read(t, "focal_alpha", tc.focal_alpha, "train");
  read(t, "focal_beta", tc.focal_beta, "train");
  read(t, "positive_radius", tc.positive_radius, "train");
  read(t, "sigma_label", tc.sigma_label, "train");
  read(t, "lr_start", tc.lr_start, "train");
  read(t, "lr_end", tc.lr_end, "train");
  read(t, "decay_start_epoch", tc.decay_start_epoch, "train");
  read(t, "epochs", tc.epochs, "train");
  read(t, "batch_size", tc.batch_size, "train");
  read(t, "augment", tc.augment, "train");
  read(t, "eval_every", tc.eval_every, "train");

  const json& d = section(root, "decoder");
  if (auto it = d.find("kind"); it != d.end()) c.decoder.kind = parse_decoder(it->get<std::string>());
  read(d, "nms_radius", c.decoder.nms.radius, "decoder");
  read(d, "nms_decay", c.decoder.nms.decay, "decoder");
  read(d, "kmeans_iters", c.decoder.kmeans.iters, "decoder");
  read(d, "kmeans_candidates", c.decoder.kmeans.candidates, "decoder");

  const json& s = section(root, "synth");
  SynthSpec& sp = c.synth;
  if (auto it = s.find("template"); it != s.end()) sp.map_template = parse_map_template(it->get<std::string>());
  read(s, "num_agents", sp.num_agents, "synth");
  read(s, "speed_min", sp.speed_min, "synth");
  read(s, "speed_max", sp.speed_max, "synth");
  read(s, "accel_min", sp.accel_min, "synth");
  read(s, "accel_max", sp.accel_max, "synth");
  read(s, "lane_width", sp.lane_width, "synth");
  read(s, "drivable_margin", sp.drivable_margin, "synth");
  read(s, "arm_length", sp.arm_length, "synth");
  read(s, "lateral_noise", sp.lateral_noise, "synth");
  read(s, "obstacle_probability", sp.obstacle_probability, "synth");
  read(s, "pad_probability", sp.pad_probability, "synth");
  read(s, "random_world_pose", sp.random_world_pose, "synth");
  read(s, "T", sp.horizon.T, "synth");
  read(s, "H", sp.horizon.H, "synth");
  read(s, "dt", sp.horizon.dt, "synth");

  c.network.M = std::max(c.network.M, 1);
  c.decoder.nms.M = c.network.M;
  c.decoder.kmeans.M = c.network.M;
  c.decoder.kmeans.seed = c.seed;
  c.network.T = sp.horizon.T;
  c.network.H = sp.horizon.H;
  c.network.validate();
  c.train.validate();
  return c;
}

std::string config_to_json(const Config& c) {
  ojson root;
  root["seed"] = c.seed;
  root["workers"] = c.workers;
  const NetConfig& n = c.network;
  root["network"] = {{"d_da", n.d_da},       {"d_ls", n.d_ls},
                     {"d_agt", n.d_agt},     {"K", n.K},
                     {"L", n.L},             {"num_da_blocks", n.num_da_blocks},
                     {"num_laneconv_layers", n.num_laneconv_layers},
                     {"M", n.M},             {"K_sel", n.K_sel},
                     {"d_dec", n.d_dec},     {"d_comp", n.d_comp},
                     {"coord_scale", n.coord_scale}};
  root["graph"] = {{"pitch", c.graph.da.pitch},
                   {"extent", c.graph.da.extent},
                   {"r_occ", c.graph.da.r_occ},
                   {"seg_len", c.graph.ls.seg_len},
                   {"r_da_ls", c.graph.edges.r_da_ls},
                   {"r_agent_ls", c.graph.edges.r_agent_ls},
                   {"r_da_agent", c.graph.edges.r_da_agent},
                   {"r_agent_agent", c.graph.edges.r_agent_agent}};
  const TrainConfig& t = c.train;
  root["train"] = {{"omega1", t.omega1},
                   {"omega2", t.omega2},
                   {"focal_alpha", t.focal_alpha},
                   {"focal_beta", t.focal_beta},
                   {"positive_radius", t.positive_radius},
                   {"sigma_label", t.sigma_label},
                   {"lr_start", t.lr_start},
                   {"lr_end", t.lr_end},
                   {"decay_start_epoch", t.decay_start_epoch},
                   {"epochs", t.epochs},
                   {"batch_size", t.batch_size},
                   {"augment", t.augment},
                   {"eval_every", t.eval_every}};
  root["decoder"] = {{"kind", to_string(c.decoder.kind)},
                     {"nms_radius", c.decoder.nms.radius},
                     {"nms_decay", c.decoder.nms.decay},
                     {"kmeans_iters", c.decoder.kmeans.iters},
                     {"kmeans_candidates", c.decoder.kmeans.candidates}};
  const SynthSpec& s = c.synth;
  root["synth"] = {{"template", to_string(s.map_template)},
                   {"num_agents", s.num_agents},
                   {"speed_min", s.speed_min},
                   {"speed_max", s.speed_max},
                   {"accel_min", s.accel_min},
                   {"accel_max", s.accel_max},
                   {"lane_width", s.lane_width},
                   {"drivable_margin", s.drivable_margin},
                   {"arm_length", s.arm_length},
                   {"lateral_noise", s.lateral_noise},
                   {"obstacle_probability", s.obstacle_probability},
                   {"pad_probability", s.pad_probability},
                   {"random_world_pose", s.random_world_pose},
                   {"T", s.horizon.T},
                   {"H", s.horizon.H},
                   {"dt", s.horizon.dt}};
  return root.dump(2) + "\n";
}

Config load_config(const std::string& path) {
  try {
    return config_from_json(read_text_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.message());
  }
}

std::string manifest_to_json(const RunManifest& m) {
  ojson root;
  root["tool_version"] = m.tool_version;
  root["seed"] = m.config.seed;
  root["checkpoint"] = m.checkpoint;
  root["train_scenarios"] = m.train_scenarios;
  root["eval_scenarios"] = m.eval_scenarios;
  root["config"] = ojson::parse(config_to_json(m.config));
  return root.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  RunManifest m;
  try {
    const json root = json::parse(text);
    m.tool_version = root.at("tool_version").get<std::string>();
    m.checkpoint = root.at("checkpoint").get<std::string>();
    m.train_scenarios = root.at("train_scenarios").get<std::vector<std::string>>();
    m.eval_scenarios = root.at("eval_scenarios").get<std::vector<std::string>>();
    m.config = config_from_json(root.at("config").dump());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("manifest: ") + e.what());
  }
  return m;
}

}  // namespace dsp
