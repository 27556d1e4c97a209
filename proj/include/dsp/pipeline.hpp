#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dsp/da_graph.hpp"
#include "dsp/decoders.hpp"
#include "dsp/evaluation.hpp"
#include "dsp/ls_graph.hpp"
#include "dsp/network.hpp"

namespace dsp {

struct GraphConfig {
  DAConfig da;
  LSConfig ls;
  InterLayerConfig edges;
};

struct DecoderConfig {
  DecoderKind kind = DecoderKind::NN;
  NMSConfig nms;
  KMeansConfig kmeans;
};

/// A normalized scene with its graphs and network inputs.
struct PreparedScene {
  Scenario scene;
  DAGraph da;
  LSGraph ls;
  InterLayerEdges edges;
  SceneInput input;
};

/// Normalizes to the target frame, then builds both graph layers and the
/// inter-layer edges.
PreparedScene prepare_scene(const Scenario& s, const GraphConfig& g, const NetConfig& n);
/// Same, skipping normalization (for scenes already in the target frame, e.g. augmented).
PreparedScene prepare_normalized(const Scenario& normalized, const GraphConfig& g, const NetConfig& n);

std::vector<PreparedScene> prepare_scenes(const std::vector<Scenario>& scenes, const GraphConfig& g, const NetConfig& n,
                                          int workers);

PredictionSet predict(const DSPNet& net, const PreparedScene& p, const DecoderConfig& dec);

std::vector<PredictionSet> predict_all(const DSPNet& net, const std::vector<PreparedScene>& scenes,
                                       const DecoderConfig& dec, int workers);

/// K = 1 and K = 6 metrics; throws MissingGTFuture if any scene lacks ground truth.
EvalReport evaluate(const DSPNet& net, const std::vector<PreparedScene>& scenes, const DecoderConfig& dec,
                    const std::string& split, int workers);

/// Runs fn(i) for i in [0, n) on up to `workers` threads; the first exception is rethrown.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// Scenario files (*.json) of a directory in lexicographic order, or a single file.
std::vector<std::filesystem::path> list_scenarios(const std::filesystem::path& path);
std::vector<Scenario> read_scenarios(const std::filesystem::path& path);

}  // namespace dsp
