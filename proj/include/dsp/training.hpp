#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsp/diff/param_store.hpp"
#include "dsp/pipeline.hpp"

namespace dsp {

struct TrainConfig {
  double omega1 = 0.8;
  double omega2 = 0.8;
  double focal_alpha = 2.0;
  double focal_beta = 4.0;
  double positive_radius = 1.0;  // meters
  double sigma_label = 2.0;      // meters
  double lr_start = 1e-3;
  double lr_end = 1e-4;
  int decay_start_epoch = 25;
  int epochs = 30;
  int batch_size = 4;
  bool augment = true;
  int eval_every = 1;  // epochs; 0 disables periodic evaluation
  diff::AdamConfig adam;

  void validate() const;  // InvalidConfig
};

/// Linear interpolation from lr_start to lr_end over [decay_start_epoch, epochs);
/// the last epoch runs at lr_end.
double learning_rate(const TrainConfig& cfg, int epoch);

/// 1 within positive_radius of the goal, Gaussian falloff elsewhere.
std::vector<double> goal_labels(const DAGraph& da, Vec2 gt_goal, const TrainConfig& cfg);

/// Focal loss of the heatmap against soft labels. Warns when no label is positive.
diff::Var goal_classification_loss(diff::Var heatmap, const std::vector<double>& labels, const TrainConfig& cfg);

struct WinnerLoss {
  diff::Var loss;
  int winner = 0;
};
/// Smooth-L1 (summed over x, y) between the ground truth and the closest goal
/// row; only that row receives a gradient.
WinnerLoss goal_regression_loss(diff::Var goals, Vec2 gt_goal);

/// Mean smooth-L1 over the H x 2 entries; `trajectory` is 1 x 2H.
diff::Var trajectory_regression_loss(diff::Var trajectory, const Trajectory& gt);

diff::Var total_loss(diff::Var gc, diff::Var gr, diff::Var tr, const TrainConfig& cfg);

struct SceneLoss {
  diff::Var total, gc, gr, tr;
  int winner = 0;
};
/// Full objective for one prepared scene with teacher forcing.
SceneLoss scene_loss(diff::Tape& t, const DSPNet& net, const PreparedScene& p, const TrainConfig& cfg);

/// Callback for non-fatal training diagnostics; defaults to stderr.
void set_warning_sink(std::function<void(const std::string&)> sink);
void warn(const std::string& message);

struct TrainLogRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double loss_gc = 0.0;
  double loss_gr = 0.0;
  double loss_tr = 0.0;
  bool evaluated = false;
  MetricSummary eval;  // K = 6 on the evaluation split
  double seconds = 0.0;
};

std::string log_record_to_json(const TrainLogRecord& r);

struct TrainOptions {
  TrainConfig train;
  GraphConfig graph;
  DecoderConfig eval_decoder;
  std::uint64_t seed = 0;
  int workers = 1;
  std::string checkpoint_path;  // best Brier-minFDE; empty disables
  std::string log_path;         // JSON lines; empty disables
  std::string checkpoint_metadata = "{}";
  std::function<void(const TrainLogRecord&)> on_epoch;
};

struct TrainResult {
  std::vector<TrainLogRecord> log;
  double best_brier = 0.0;
  int best_epoch = -1;
};

/// Epoch loop with per-seed shuffling, optional augmentation, batched Adam
/// steps, periodic evaluation and best-checkpoint saving. An empty `eval_set`
/// evaluates on the training scenes.
TrainResult train(const DSPNet& net, const std::vector<Scenario>& train_set, const std::vector<Scenario>& eval_set,
                  const TrainOptions& opts);

/// One optimizer step over a batch of prepared scenes; returns the mean losses.
TrainLogRecord train_step(const DSPNet& net, const std::vector<const PreparedScene*>& batch, const TrainConfig& cfg,
                          double lr);

}  // namespace dsp
