#include "dsp/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include "dsp/error.hpp"
#include "dsp/scenario_io.hpp"

namespace dsp {

PreparedScene prepare_normalized(const Scenario& normalized, const GraphConfig& g, const NetConfig& n) {
  PreparedScene p;
  p.scene = normalized;
  DAConfig da_cfg = g.da;
  da_cfg.dilation_layers = std::max(da_cfg.dilation_layers, n.K);
  LSConfig ls_cfg = g.ls;
  ls_cfg.dilation_levels = std::max(ls_cfg.dilation_levels, n.L);
  p.da = build_da_graph(p.scene, da_cfg);
  p.ls = build_ls_graph(p.scene, ls_cfg);
  p.edges = build_interlayer_edges(p.da, p.ls, p.scene.tracks, g.edges);
  const auto occ = occupancy_features(p.da, p.scene, da_cfg.r_occ);
  p.input = make_scene_input(p.scene, p.da, p.ls, p.edges, occ, n);
  return p;
}

PreparedScene prepare_scene(const Scenario& s, const GraphConfig& g, const NetConfig& n) {
  return prepare_normalized(normalize_to_target(s), g, n);
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::vector<PreparedScene> prepare_scenes(const std::vector<Scenario>& scenes, const GraphConfig& g, const NetConfig& n,
                                          int workers) {
  std::vector<PreparedScene> out(scenes.size());
  parallel_for(scenes.size(), workers, [&](std::size_t i) { out[i] = prepare_scene(scenes[i], g, n); });
  return out;
}

PredictionSet predict(const DSPNet& net, const PreparedScene& p, const DecoderConfig& dec) {
  diff::Tape tape;
  const SceneFeatures f = net.forward(tape, p.input);
  const diff::Matrix& hm = f.heatmap.value();
  std::vector<double> heat(hm.data(), hm.data() + hm.size());

  GoalSet goals;
  switch (dec.kind) {
    case DecoderKind::NN: goals = nn_goal_set(net.decode_goals(tape, f, p.input), heat, p.da); break;
    case DecoderKind::NMS: goals = nms_goal_decoder(heat, p.da, dec.nms).set; break;
    case DecoderKind::KMeans: goals = kmeans_goal_decoder(heat, p.da, dec.kmeans).set; break;
  }

  diff::Matrix g(static_cast<Eigen::Index>(goals.goals.size()), 2);
  for (std::size_t m = 0; m < goals.goals.size(); ++m) g.row(static_cast<Eigen::Index>(m)) << goals.goals[m].x, goals.goals[m].y;
  const diff::Var ctx = net.target_context(tape, f, p.input);
  const diff::Matrix traj = net.complete(tape, ctx, tape.constant(g)).value();

  PredictionSet out;
  out.scenario_id = p.scene.id;
  out.source = dec.kind;
  out.world_to_scene = p.scene.world_to_scene;
  out.goals = goals.goals;
  out.goal_scores = goals.scores;
  out.probabilities = normalize_scores(goals.scores);
  for (Eigen::Index m = 0; m < traj.rows(); ++m) {
    Trajectory t;
    for (Eigen::Index s = 0; s < traj.cols() / 2; ++s) t.push_back({traj(m, 2 * s), traj(m, 2 * s + 1)});
    out.trajectories.push_back(std::move(t));
  }
  out.heatmap = std::move(heat);
  for (const DANode& n : p.da.nodes) out.heatmap_positions.push_back(n.position);
  return out;
}

std::vector<PredictionSet> predict_all(const DSPNet& net, const std::vector<PreparedScene>& scenes,
                                       const DecoderConfig& dec, int workers) {
  std::vector<PredictionSet> out(scenes.size());
  parallel_for(scenes.size(), workers, [&](std::size_t i) { out[i] = predict(net, scenes[i], dec); });
  return out;
}

EvalReport evaluate(const DSPNet& net, const std::vector<PreparedScene>& scenes, const DecoderConfig& dec,
                    const std::string& split, int workers) {
  std::vector<Trajectory> gts;
  for (const PreparedScene& p : scenes) gts.push_back(target_gt(p.scene));
  const std::vector<PredictionSet> preds = predict_all(net, scenes, dec, workers);
  EvalReport r;
  r.split = split;
  r.decoder = to_string(dec.kind);
  r.metrics.push_back(summarize(preds, gts, 1));
  r.metrics.push_back(summarize(preds, gts, 6));
  return r;
}

std::vector<std::filesystem::path> list_scenarios(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_regular_file(path)) return {path};
  if (!fs::is_directory(path)) throw Error(ErrorCode::IoError, "'" + path.string() + "' is neither a file nor a directory");
  for (const auto& e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<Scenario> read_scenarios(const std::filesystem::path& path) {
  std::vector<Scenario> out;
  for (const auto& f : list_scenarios(path)) out.push_back(read_scenario(f));
  return out;
}

}  // namespace dsp
