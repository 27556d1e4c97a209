#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "dsp/config.hpp"
#include "dsp/error.hpp"
#include "dsp/scenario_io.hpp"

namespace py = pybind11;
using namespace py::literals;
using namespace dsp;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Vec2> points(const Array& a, const char* what) {
  if (a.ndim() != 2 || a.shape(1) != 2) throw Error(ErrorCode::ShapeMismatch, std::string(what) + " must be N x 2");
  std::vector<Vec2> out(static_cast<std::size_t>(a.shape(0)));
  auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out[static_cast<std::size_t>(i)] = {r(i, 0), r(i, 1)};
  return out;
}

Array to_array(const std::vector<Vec2>& pts) {
  Array out({static_cast<py::ssize_t>(pts.size()), py::ssize_t{2}});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    w(static_cast<py::ssize_t>(i), 0) = pts[i].x;
    w(static_cast<py::ssize_t>(i), 1) = pts[i].y;
  }
  return out;
}

/// Modes from an M x H x 2 array.
PredictionSet prediction(const Array& trajectories, const std::vector<double>& probabilities) {
  if (trajectories.ndim() != 3 || trajectories.shape(2) != 2) {
    throw Error(ErrorCode::ShapeMismatch, "trajectories must be M x H x 2");
  }
  if (static_cast<py::ssize_t>(probabilities.size()) != trajectories.shape(0)) {
    throw Error(ErrorCode::ShapeMismatch, "one probability per mode");
  }
  auto r = trajectories.unchecked<3>();
  PredictionSet p;
  for (py::ssize_t m = 0; m < r.shape(0); ++m) {
    Trajectory t;
    for (py::ssize_t h = 0; h < r.shape(1); ++h) t.push_back({r(m, h, 0), r(m, h, 1)});
    p.trajectories.push_back(std::move(t));
  }
  p.probabilities = probabilities;
  return p;
}

std::vector<Scenario> parse_all(const std::vector<std::string>& texts) {
  std::vector<Scenario> out;
  for (const std::string& t : texts) out.push_back(scenario_from_string(t));
  return out;
}

struct Model {
  Config config;
  diff::ParamStore store;
};

Model load(const std::string& checkpoint, const std::optional<std::string>& decoder) {
  std::string meta;
  Model m{{}, diff::ParamStore::load(checkpoint, &meta)};
  m.config = config_from_json(meta);
  if (decoder) m.config.decoder.kind = parse_decoder(*decoder);
  return m;
}

py::dict log_dict(const TrainLogRecord& r) {
  py::dict d("epoch"_a = r.epoch, "step"_a = r.step, "lr"_a = r.lr, "loss"_a = r.loss, "loss_gc"_a = r.loss_gc,
             "loss_gr"_a = r.loss_gr, "loss_tr"_a = r.loss_tr, "seconds"_a = r.seconds);
  if (r.evaluated) {
    d["minADE"] = r.eval.min_ade;
    d["minFDE"] = r.eval.min_fde;
    d["MR"] = r.eval.miss_rate;
    d["brier_minFDE"] = r.eval.brier_min_fde;
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Dual-scale motion forecasting core";
  m.attr("__version__") = kToolVersion;

  static py::exception<Error> error(m, "DspError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error)(e.what());
      exc.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def(
      "synth_scenario",
      [](const std::string& map_template, std::uint64_t seed, int num_agents) {
        SynthSpec spec;
        spec.map_template = parse_map_template(map_template);
        spec.num_agents = num_agents;
        return scenario_to_string(synth_scenario(spec, seed));
      },
      "map_template"_a = "four-way", "seed"_a = 0, "num_agents"_a = 4, "Synthetic scenario as JSON text.");
  m.def(
      "normalize", [](const std::string& scenario) { return scenario_to_string(normalize_to_target(scenario_from_string(scenario))); },
      "scenario"_a, "Scenario re-expressed in the target frame.");

  m.def(
      "da_graph",
      [](const std::string& scenario, double pitch, double extent) {
        DAConfig cfg;
        cfg.pitch = pitch;
        cfg.extent = extent;
        const DAGraph g = build_da_graph(scenario_from_string(scenario), cfg);
        std::vector<Vec2> pos;
        for (const DANode& n : g.nodes) pos.push_back(n.position);
        return py::dict("positions"_a = to_array(pos), "edges"_a = g.edges);
      },
      "scenario"_a, "pitch"_a = 2.0, "extent"_a = 60.0);
  m.def(
      "ls_graph",
      [](const std::string& scenario, double seg_len) {
        LSConfig cfg;
        cfg.seg_len = seg_len;
        const LSGraph g = build_ls_graph(scenario_from_string(scenario), cfg);
        std::vector<Vec2> pos;
        for (const LSNode& n : g.nodes) pos.push_back(n.position);
        return py::dict("positions"_a = to_array(pos), "suc"_a = g.suc.rows, "pre"_a = g.pre.rows, "left"_a = g.left.rows,
                        "right"_a = g.right.rows);
      },
      "scenario"_a, "seg_len"_a = 2.0);

  m.def(
      "nms_goals",
      [](const std::vector<double>& heatmap, const Array& positions, int M, double radius, double decay) {
        DAGraph g;
        const auto pts = points(positions, "positions");
        for (std::size_t i = 0; i < pts.size(); ++i) {
          DANode n;
          n.index = static_cast<int>(i);
          n.position = pts[i];
          g.nodes.push_back(n);
        }
        const NMSResult r = nms_goal_decoder(heatmap, g, NMSConfig{M, radius, decay});
        return py::make_tuple(r.nodes, r.radius_at_accept);
      },
      "heatmap"_a, "positions"_a, "M"_a = 6, "radius"_a = 2.8, "decay"_a = 0.8,
      "Accepted node indices and the suppression radius at each acceptance.");
  m.def(
      "weighted_kmeans",
      [](const Array& pts, const std::vector<double>& weights, int M, int iters, std::uint64_t seed) {
        const KMeansResult r = weighted_kmeans(points(pts, "points"), weights, M, iters, seed);
        return py::make_tuple(to_array(r.set.goals), r.objective);
      },
      "points"_a, "weights"_a, "M"_a = 6, "iters"_a = 50, "seed"_a = 0);

  m.def(
      "min_ade", [](const Array& t, const std::vector<double>& p, const Array& gt) { return min_ade(prediction(t, p), points(gt, "gt")); },
      "trajectories"_a, "probabilities"_a, "gt"_a);
  m.def(
      "min_fde", [](const Array& t, const std::vector<double>& p, const Array& gt) { return min_fde(prediction(t, p), points(gt, "gt")); },
      "trajectories"_a, "probabilities"_a, "gt"_a);
  m.def(
      "brier_min_fde",
      [](const Array& t, const std::vector<double>& p, const Array& gt) { return brier_min_fde(prediction(t, p), points(gt, "gt")); },
      "trajectories"_a, "probabilities"_a, "gt"_a);
  m.def("miss_rate", &miss_rate, "min_fdes"_a, "threshold"_a = 2.0);

  m.def("default_config", []() { return config_to_json(Config{}); });
  m.def(
      "train",
      [](const std::string& config, const std::vector<std::string>& scenarios, const std::string& checkpoint) {
        const Config cfg = config_from_json(config);
        const auto scenes = parse_all(scenarios);
        std::vector<TrainLogRecord> records;
        {
          py::gil_scoped_release release;
          diff::ParamStore store(cfg.seed);
          const DSPNet net(cfg.network, store);
          TrainOptions opts;
          opts.train = cfg.train;
          opts.graph = cfg.graph;
          opts.eval_decoder = cfg.decoder;
          opts.seed = cfg.seed;
          opts.workers = cfg.workers;
          opts.checkpoint_path = checkpoint;
          opts.checkpoint_metadata = config_to_json(cfg);
          records = train(net, scenes, {}, opts).log;
        }
        py::list log;
        for (const TrainLogRecord& r : records) log.append(log_dict(r));
        return log;
      },
      "config"_a, "scenarios"_a, "checkpoint"_a, "Trains from scratch and writes the best checkpoint; returns the log.");
  m.def(
      "predict",
      [](const std::string& checkpoint, const std::string& scenario, std::optional<std::string> decoder) {
        Model mod = load(checkpoint, decoder);
        const DSPNet net(mod.config.network, mod.store);
        return prediction_to_json(predict(net, prepare_scene(scenario_from_string(scenario), mod.config.graph, mod.config.network),
                                          mod.config.decoder));
      },
      "checkpoint"_a, "scenario"_a, "decoder"_a = py::none());
  m.def(
      "evaluate",
      [](const std::string& checkpoint, const std::vector<std::string>& scenarios, std::optional<std::string> decoder,
         const std::string& split) {
        Model mod = load(checkpoint, decoder);
        const DSPNet net(mod.config.network, mod.store);
        const auto prepared = prepare_scenes(parse_all(scenarios), mod.config.graph, mod.config.network, mod.config.workers);
        return report_to_json(evaluate(net, prepared, mod.config.decoder, split, mod.config.workers));
      },
      "checkpoint"_a, "scenarios"_a, "decoder"_a = py::none(), "split"_a = "eval");
}
