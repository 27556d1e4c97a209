#pragma once

#include <string>
#include <vector>

#include "dsp/decoders.hpp"
#include "dsp/geometry.hpp"
#include "dsp/scenario.hpp"

namespace dsp {

using Trajectory = std::vector<Vec2>;

struct PredictionSet {
  std::string scenario_id;
  DecoderKind source = DecoderKind::NN;
  std::vector<Trajectory> trajectories;  // M x H, target frame
  std::vector<double> probabilities;     // sums to one
  std::vector<Vec2> goals;
  std::vector<double> goal_scores;
  std::vector<double> heatmap;  // per DA node
  std::vector<Vec2> heatmap_positions;
  Affine2 world_to_scene;  // frame the trajectories are expressed in

  /// Mode with the highest probability (lowest index on ties).
  std::size_t top_mode() const;
  /// The single top mode with probability one.
  PredictionSet top1() const;
};

double min_ade(const PredictionSet& pred, const Trajectory& gt);
double min_fde(const PredictionSet& pred, const Trajectory& gt);
/// Mode achieving min_fde (lowest index on ties).
std::size_t best_fde_mode(const PredictionSet& pred, const Trajectory& gt);
/// min_fde + (1 - p)^2 with p the probability of the min-FDE mode.
double brier_min_fde(const PredictionSet& pred, const Trajectory& gt);
/// Fraction of min-FDE values above `threshold`.
double miss_rate(const std::vector<double>& min_fdes, double threshold = 2.0);

struct MetricSummary {
  int K = 6;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double miss_rate = 0.0;
  double brier_min_fde = 0.0;
  int n_scenarios = 0;
};

/// Per-scenario metrics averaged over the batch. K = 1 scores only the top mode.
MetricSummary summarize(const std::vector<PredictionSet>& preds, const std::vector<Trajectory>& gts, int K);

struct EvalReport {
  std::string split;
  std::string decoder;
  std::vector<MetricSummary> metrics;  // K = 1 and K = 6
};

std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(const std::string& text);

std::string prediction_to_json(const PredictionSet& p);
PredictionSet prediction_from_json(const std::string& text);

/// Ground-truth future of the target; throws MissingGTFuture.
Trajectory target_gt(const Scenario& s);

struct PlotOptions {
  double pixels_per_meter = 8.0;
  double margin = 5.0;
  bool show_heatmap = true;
};

/// Scene overlay: drivable area, obstacles, lanes, histories, ground truth,
/// heatmap, goals and predicted trajectories.
std::string render_svg(const Scenario& s, const PredictionSet* pred, const PlotOptions& opts = {});

}  // namespace dsp
