#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsp/config.hpp"
#include "dsp/error.hpp"
#include "dsp/scenario_io.hpp"
#include "dsp/synth.hpp"

namespace fs = std::filesystem;
using namespace dsp;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> decoder;
};

void add_common(CLI::App* cmd, Common& c, bool with_decoder) {
  cmd->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Random seed (overrides the config)");
  cmd->add_option("--workers", c.workers, "Parallel workers for per-scenario stages")->check(CLI::PositiveNumber);
  if (with_decoder) {
    cmd->add_option("--decoder", c.decoder, "Goal decoder")->check(CLI::IsMember({"nn", "nms", "kmeans"}));
  }
}

Config resolve(const Common& c, Config base) {
  if (c.seed) {
    base.seed = *c.seed;
    base.decoder.kmeans.seed = *c.seed;
  }
  if (c.workers) base.workers = *c.workers;
  if (c.decoder) base.decoder.kind = parse_decoder(*c.decoder);
  return base;
}

Config load_or_default(const Common& c) { return resolve(c, c.config_path.empty() ? Config{} : load_config(c.config_path)); }

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create directory '" + p.string() + "': " + ec.message());
}

struct LoadedModel {
  Config config;
  diff::ParamStore store;
};

/// The checkpoint header carries the config it was trained with.
LoadedModel load_model(const std::string& path, const Common& c) {
  std::string meta;
  diff::ParamStore store = diff::ParamStore::load(path, &meta);
  Config cfg;
  try {
    cfg = config_from_json(meta);
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, path + ": checkpoint metadata is not a config: " + e.message());
  }
  return {resolve(c, cfg), std::move(store)};
}

std::vector<std::string> as_strings(const std::vector<fs::path>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) out.push_back(p.string());
  return out;
}

// ---------------------------------------------------------------------------

int run_synth(const Common& c, const std::string& tmpl, int n, const fs::path& out) {
  Config cfg = load_or_default(c);
  const bool mixed = tmpl == "mixed";
  const MapTemplate cycle[] = {MapTemplate::StraightRoad, MapTemplate::TIntersection, MapTemplate::FourWay};
  if (!mixed && !tmpl.empty()) cfg.synth.map_template = parse_map_template(tmpl);
  ensure_dir(out);
  for (int i = 0; i < n; ++i) {
    SynthSpec spec = cfg.synth;
    if (mixed) spec.map_template = cycle[i % 3];
    const Scenario s = synth_scenario(spec, cfg.seed + static_cast<std::uint64_t>(i));
    write_scenario(s, out / (s.id + ".json"));
  }
  std::cout << "wrote " << n << " scenarios to " << out.string() << "\n";
  return 0;
}

int run_build_graph(const Common& c, const fs::path& scenario, const fs::path& out) {
  const Config cfg = load_or_default(c);
  const PreparedScene p = prepare_scene(read_scenario(scenario), cfg.graph, cfg.network);
  ensure_dir(out);
  const std::string stem = p.scene.id;
  write_text_file(out / (stem + ".da.txt"), dump_da_graph(p.da));
  write_text_file(out / (stem + ".ls.txt"), dump_ls_graph(p.ls));
  nlohmann::ordered_json summary;
  summary["scenario"] = p.scene.id;
  summary["da_nodes"] = p.da.size();
  summary["ls_nodes"] = p.ls.size();
  summary["edges"] = {{"da_to_ls", p.edges.da_to_ls.pairs.size()},
                      {"ls_to_da", p.edges.ls_to_da.pairs.size()},
                      {"agent_to_ls", p.edges.agent_to_ls.pairs.size()},
                      {"ls_to_agent", p.edges.ls_to_agent.pairs.size()},
                      {"da_to_agent", p.edges.da_to_agent.pairs.size()},
                      {"agent_to_agent", p.edges.agent_to_agent.pairs.size()}};
  write_text_file(out / (stem + ".summary.json"), summary.dump(2) + "\n");
  std::cout << p.scene.id << ": " << p.da.size() << " DA nodes, " << p.ls.size() << " LS nodes\n";
  return 0;
}

int run_train(const Common& c, const fs::path& data, const std::string& split, const fs::path& out,
              std::string checkpoint, std::optional<int> epochs) {
  Config cfg = load_or_default(c);
  if (epochs) {
    cfg.train.epochs = *epochs;
    cfg.train.validate();
  }
  ensure_dir(out);
  if (checkpoint.empty()) checkpoint = (out / "checkpoint.bin").string();

  RunManifest manifest;
  manifest.config = cfg;
  manifest.checkpoint = checkpoint;
  manifest.train_scenarios = as_strings(list_scenarios(data));
  if (!split.empty()) manifest.eval_scenarios = as_strings(list_scenarios(split));
  write_text_file(out / "manifest.json", manifest_to_json(manifest));

  const std::vector<Scenario> train_set = read_scenarios(data);
  const std::vector<Scenario> eval_set = split.empty() ? std::vector<Scenario>{} : read_scenarios(split);

  diff::ParamStore store(cfg.seed);
  DSPNet net(cfg.network, store);
  TrainOptions opts;
  opts.train = cfg.train;
  opts.graph = cfg.graph;
  opts.eval_decoder = cfg.decoder;
  opts.seed = cfg.seed;
  opts.workers = cfg.workers;
  opts.checkpoint_path = checkpoint;
  opts.log_path = (out / "train_log.jsonl").string();
  opts.checkpoint_metadata = config_to_json(cfg);
  opts.on_epoch = [](const TrainLogRecord& r) {
    std::cout << "epoch " << r.epoch << " lr " << r.lr << " loss " << r.loss;
    if (r.evaluated) std::cout << " minFDE " << r.eval.min_fde << " MR " << r.eval.miss_rate << " brier " << r.eval.brier_min_fde;
    std::cout << "\n" << std::flush;
  };
  const TrainResult res = train(net, train_set, eval_set, opts);
  std::cout << "best brier-minFDE " << res.best_brier << " at epoch " << res.best_epoch << ", checkpoint " << checkpoint
            << "\n";
  return 0;
}

int run_predict(const Common& c, const std::string& checkpoint, const fs::path& input, const fs::path& out) {
  LoadedModel m = load_model(checkpoint, c);
  const DSPNet net(m.config.network, m.store);
  const std::vector<Scenario> scenes = read_scenarios(input);
  const auto prepared = prepare_scenes(scenes, m.config.graph, m.config.network, m.config.workers);
  const auto preds = predict_all(net, prepared, m.config.decoder, m.config.workers);
  ensure_dir(out);
  for (const PredictionSet& p : preds) write_text_file(out / (p.scenario_id + ".pred.json"), prediction_to_json(p));
  std::cout << "wrote " << preds.size() << " prediction files to " << out.string() << "\n";
  return 0;
}

int run_eval(const Common& c, const std::string& checkpoint, const std::string& split, const std::string& out,
             const std::string& plots) {
  LoadedModel m = load_model(checkpoint, c);
  const DSPNet net(m.config.network, m.store);
  const std::vector<Scenario> scenes = read_scenarios(split);
  for (const Scenario& s : scenes) {
    try {
      target_gt(s);
    } catch (const Error& e) {
      throw Error(e.code(), s.id + ": " + e.message());
    }
  }
  const auto prepared = prepare_scenes(scenes, m.config.graph, m.config.network, m.config.workers);
  const EvalReport report = evaluate(net, prepared, m.config.decoder, fs::path(split).filename().string(), m.config.workers);
  const std::string text = report_to_json(report);
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text_file(out, text);
    std::cout << "wrote " << out << "\n";
  }
  if (!plots.empty()) {
    ensure_dir(plots);
    const auto preds = predict_all(net, prepared, m.config.decoder, m.config.workers);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      write_text_file(fs::path(plots) / (preds[i].scenario_id + ".svg"), render_svg(prepared[i].scene, &preds[i]));
    }
  }
  return 0;
}

int run_plot(const fs::path& scenario, const std::string& prediction, const fs::path& out, bool no_heatmap) {
  Scenario s = read_scenario(scenario);
  std::optional<PredictionSet> pred;
  if (!prediction.empty()) {
    pred = prediction_from_json(read_text_file(prediction));
    // Predictions live in the target frame; draw the scene there too.
    s = normalize_to_target(s);
  }
  PlotOptions opts;
  opts.show_heatmap = !no_heatmap;
  write_text_file(out, render_svg(s, pred ? &*pred : nullptr, opts));
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-scale trajectory prediction: synthesis, graphs, training, prediction, evaluation"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  Common common;

  auto* synth = app.add_subcommand("synth", "Generate synthetic scenario files");
  std::string tmpl;
  int n = 1;
  std::string synth_out;
  add_common(synth, common, false);
  synth->add_option("--template", tmpl, "straight, t-intersection, four-way or mixed");
  synth->add_option("--n", n, "Number of scenarios")->check(CLI::PositiveNumber);
  synth->add_option("--out", synth_out, "Output directory")->required();

  auto* graph = app.add_subcommand("build-graph", "Dump the DA/LS graphs of a scenario");
  std::string graph_scenario, graph_out;
  add_common(graph, common, false);
  graph->add_option("scenario", graph_scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  graph->add_option("--out", graph_out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  std::string train_data, train_split, train_out, train_ckpt;
  std::optional<int> epochs;
  add_common(tr, common, true);
  tr->add_option("--data", train_data, "Training scenarios (directory or file)")->required()->check(CLI::ExistingPath);
  tr->add_option("--split", train_split, "Held-out evaluation scenarios")->check(CLI::ExistingPath);
  tr->add_option("--out", train_out, "Run directory (manifest, log, checkpoint)")->required();
  tr->add_option("--checkpoint", train_ckpt, "Checkpoint path (default: <out>/checkpoint.bin)");
  tr->add_option("--epochs", epochs, "Override the number of epochs")->check(CLI::PositiveNumber);

  auto* pr = app.add_subcommand("predict", "Write prediction sets");
  std::string pred_ckpt, pred_input, pred_out;
  add_common(pr, common, true);
  pr->add_option("--checkpoint", pred_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  pr->add_option("scenarios", pred_input, "Scenario file or directory")->required()->check(CLI::ExistingPath);
  pr->add_option("--out", pred_out, "Output directory")->required();

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  std::string eval_ckpt, eval_split, eval_out, eval_plots;
  add_common(ev, common, true);
  ev->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--split", eval_split, "Scenario directory or file")->required()->check(CLI::ExistingPath);
  ev->add_option("--out", eval_out, "Report path (default: stdout)");
  ev->add_option("--plots", eval_plots, "Directory for per-scenario SVG overlays");

  auto* pl = app.add_subcommand("plot", "Render a scenario (and optionally a prediction) to SVG");
  std::string plot_scenario, plot_pred, plot_out;
  bool no_heatmap = false;
  pl->add_option("scenario", plot_scenario, "Scenario file")->required()->check(CLI::ExistingFile);
  pl->add_option("--prediction", plot_pred, "Prediction file")->check(CLI::ExistingFile);
  pl->add_option("--out", plot_out, "SVG path")->required();
  pl->add_flag("--no-heatmap", no_heatmap, "Hide the heatmap layer");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return run_synth(common, tmpl, n, synth_out);
    if (*graph) return run_build_graph(common, graph_scenario, graph_out);
    if (*tr) return run_train(common, train_data, train_split, train_out, train_ckpt, epochs);
    if (*pr) return run_predict(common, pred_ckpt, pred_input, pred_out);
    if (*ev) return run_eval(common, eval_ckpt, eval_split, eval_out, eval_plots);
    if (*pl) return run_plot(plot_scenario, plot_pred, plot_out, no_heatmap);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
