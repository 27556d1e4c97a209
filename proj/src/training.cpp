#include "dsp/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>

#include <json.hpp>

#include "dsp/error.hpp"

namespace dsp {

using diff::Matrix;
using diff::Tape;
using diff::Var;

namespace {

std::mutex warn_mutex;
std::function<void(const std::string&)> warning_sink;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
}

}  // namespace

void set_warning_sink(std::function<void(const std::string&)> sink) {
  std::lock_guard<std::mutex> lock(warn_mutex);
  warning_sink = std::move(sink);
}

void warn(const std::string& message) {
  std::lock_guard<std::mutex> lock(warn_mutex);
  if (warning_sink) warning_sink(message);
  else std::cerr << "warning: " << message << '\n';
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, "train." + m); };
  if (!(omega1 > 0.0 && omega1 <= 1.0)) fail("omega1 must lie in (0, 1]");
  if (!(omega2 > 0.0 && omega2 <= 1.0)) fail("omega2 must lie in (0, 1]");
  if (!(focal_alpha > 0.0) || !(focal_beta > 0.0)) fail("focal_alpha and focal_beta must be positive");
  if (!(positive_radius > 0.0) || !(sigma_label > 0.0)) fail("positive_radius and sigma_label must be positive");
  if (!(lr_start > 0.0) || !(lr_end > 0.0)) fail("learning rates must be positive");
  if (epochs <= 0 || batch_size <= 0) fail("epochs and batch_size must be positive");
}

double learning_rate(const TrainConfig& cfg, int epoch) {
  if (epoch < cfg.decay_start_epoch) return cfg.lr_start;
  const int span = std::max(1, cfg.epochs - cfg.decay_start_epoch);
  const double f = std::min(1.0, static_cast<double>(epoch - cfg.decay_start_epoch + 1) / span);
  return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * f;
}

std::vector<double> goal_labels(const DAGraph& da, Vec2 gt_goal, const TrainConfig& cfg) {
  std::vector<double> h;
  h.reserve(da.size());
  const double denom = 2.0 * cfg.sigma_label * cfg.sigma_label;
  for (const DANode& n : da.nodes) {
    const double d = distance(n.position, gt_goal);
    h.push_back(d < cfg.positive_radius ? 1.0 : std::exp(-d * d / denom));
  }
  return h;
}

Var goal_classification_loss(Var heatmap, const std::vector<double>& labels, const TrainConfig& cfg) {
  if (static_cast<std::size_t>(heatmap.value().size()) != labels.size()) {
    throw Error(ErrorCode::ShapeMismatch, "heatmap has " + std::to_string(heatmap.value().size()) + " entries, labels " +
                                              std::to_string(labels.size()));
  }
  if (std::none_of(labels.begin(), labels.end(), [](double h) { return h == 1.0; })) {
    warn("goal classification without positive labels; normalizing by 1");
  }
  const Matrix h = Eigen::Map<const Matrix>(labels.data(), heatmap.rows(), heatmap.cols());
  return diff::focal_loss(heatmap, h, cfg.focal_alpha, cfg.focal_beta);
}

WinnerLoss goal_regression_loss(Var goals, Vec2 gt_goal) {
  const Matrix& g = goals.value();
  if (g.cols() != 2 || g.rows() == 0) throw Error(ErrorCode::ShapeMismatch, "goals must be M x 2 with M > 0");
  WinnerLoss r;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; m < g.rows(); ++m) {
    const double d = std::hypot(g(m, 0) - gt_goal.x, g(m, 1) - gt_goal.y);
    if (d < best) {
      best = d;
      r.winner = static_cast<int>(m);
    }
  }
  Matrix target(1, 2);
  target << gt_goal.x, gt_goal.y;
  r.loss = diff::smooth_l1(diff::gather_rows(goals, std::vector<int>{r.winner}), target, 1.0, diff::Reduction::Sum);
  return r;
}

Var trajectory_regression_loss(Var trajectory, const Trajectory& gt) {
  const auto H = static_cast<Eigen::Index>(gt.size());
  if (H == 0) throw Error(ErrorCode::MissingGTFuture, "empty ground-truth future");
  if (trajectory.rows() != 1 || trajectory.cols() != 2 * H) {
    throw Error(ErrorCode::ShapeMismatch, "trajectory must be 1 x " + std::to_string(2 * H));
  }
  Matrix y(1, 2 * H);
  for (Eigen::Index s = 0; s < H; ++s) {
    y(0, 2 * s) = gt[static_cast<std::size_t>(s)].x;
    y(0, 2 * s + 1) = gt[static_cast<std::size_t>(s)].y;
  }
  return diff::smooth_l1(trajectory, y, 1.0, diff::Reduction::Mean);
}

Var total_loss(Var gc, Var gr, Var tr, const TrainConfig& cfg) {
  Var goal = diff::add(diff::scale(gc, cfg.omega2), diff::scale(gr, 1.0 - cfg.omega2));
  return diff::add(diff::scale(goal, cfg.omega1), diff::scale(tr, 1.0 - cfg.omega1));
}

SceneLoss scene_loss(Tape& t, const DSPNet& net, const PreparedScene& p, const TrainConfig& cfg) {
  const Trajectory gt = target_gt(p.scene);
  const Vec2 goal = gt.back();
  SceneLoss out;
  const SceneFeatures f = net.forward(t, p.input);
  out.gc = goal_classification_loss(f.heatmap, goal_labels(p.da, goal, cfg), cfg);

  const GoalHypotheses hyp = net.decode_goals(t, f, p.input);
  const WinnerLoss wta = goal_regression_loss(hyp.goals, goal);
  out.gr = wta.loss;
  out.winner = wta.winner;

  // Teacher forcing: the completion is conditioned on the ground-truth goal.
  Matrix g(1, 2);
  g << goal.x, goal.y;
  const Var traj = net.complete(t, net.target_context(t, f, p.input), t.constant(g));
  out.tr = trajectory_regression_loss(traj, gt);
  out.total = total_loss(out.gc, out.gr, out.tr, cfg);
  return out;
}

TrainLogRecord train_step(const DSPNet& net, const std::vector<const PreparedScene*>& batch, const TrainConfig& cfg,
                          double lr) {
  TrainLogRecord r;
  r.lr = lr;
  if (batch.empty()) return r;
  const double w = 1.0 / static_cast<double>(batch.size());
  for (const PreparedScene* p : batch) {
    Tape t;
    const SceneLoss l = scene_loss(t, net, *p, cfg);
    t.backward(diff::scale(l.total, w));
    r.loss += w * l.total.scalar();
    r.loss_gc += w * l.gc.scalar();
    r.loss_gr += w * l.gr.scalar();
    r.loss_tr += w * l.tr.scalar();
  }
  net.store().optimizer_step(lr, cfg.adam);
  r.step = net.store().step();
  return r;
}

std::string log_record_to_json(const TrainLogRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["loss"] = r.loss;
  j["loss_gc"] = r.loss_gc;
  j["loss_gr"] = r.loss_gr;
  j["loss_tr"] = r.loss_tr;
  if (r.evaluated) {
    j["minADE"] = r.eval.min_ade;
    j["minFDE"] = r.eval.min_fde;
    j["MR"] = r.eval.miss_rate;
    j["brier_minFDE"] = r.eval.brier_min_fde;
  }
  j["seconds"] = r.seconds;
  return j.dump();
}

TrainResult train(const DSPNet& net, const std::vector<Scenario>& train_set, const std::vector<Scenario>& eval_set,
                  const TrainOptions& opts) {
  const TrainConfig& cfg = opts.train;
  cfg.validate();
  if (train_set.empty()) throw Error(ErrorCode::InvalidConfig, "training set is empty");
  const NetConfig& ncfg = net.config();
  const auto start = std::chrono::steady_clock::now();

  std::vector<Scenario> normalized(train_set.size());
  parallel_for(train_set.size(), opts.workers, [&](std::size_t i) {
    normalized[i] = normalize_to_target(train_set[i]);
    target_gt(normalized[i]);
  });
  std::vector<PreparedScene> cached;
  if (!cfg.augment) {
    cached.resize(normalized.size());
    parallel_for(normalized.size(), opts.workers,
                 [&](std::size_t i) { cached[i] = prepare_normalized(normalized[i], opts.graph, ncfg); });
  }
  const std::vector<PreparedScene> eval_scenes =
      eval_set.empty() ? (cfg.augment ? prepare_scenes(train_set, opts.graph, ncfg, opts.workers) : cached)
                       : prepare_scenes(eval_set, opts.graph, ncfg, opts.workers);

  std::ofstream log;
  if (!opts.log_path.empty()) {
    log.open(opts.log_path, std::ios::trunc);
    if (!log) throw Error(ErrorCode::IoError, "cannot write training log '" + opts.log_path + "'");
  }

  TrainResult result;
  result.best_brier = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(normalized.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(mix(opts.seed, 0x5348554646ULL, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = learning_rate(cfg, epoch);

    TrainLogRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    int batches = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      std::vector<PreparedScene> fresh;
      std::vector<const PreparedScene*> batch;
      if (cfg.augment) {
        fresh.resize(e - b);
        parallel_for(e - b, opts.workers, [&](std::size_t k) {
          const std::size_t idx = order[b + k];
          const std::uint64_t s = mix(opts.seed, static_cast<std::uint64_t>(epoch), idx);
          fresh[k] = prepare_normalized(augment(normalized[idx], s), opts.graph, ncfg);
        });
        for (const auto& p : fresh) batch.push_back(&p);
      } else {
        for (std::size_t k = b; k < e; ++k) batch.push_back(&cached[order[k]]);
      }
      const TrainLogRecord step = train_step(net, batch, cfg, lr);
      rec.loss += step.loss;
      rec.loss_gc += step.loss_gc;
      rec.loss_gr += step.loss_gr;
      rec.loss_tr += step.loss_tr;
      rec.step = step.step;
      ++batches;
    }
    rec.loss /= batches;
    rec.loss_gc /= batches;
    rec.loss_gr /= batches;
    rec.loss_tr /= batches;

    const bool last = epoch + 1 == cfg.epochs;
    if ((cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) || last) {
      std::vector<Trajectory> gts;
      for (const auto& p : eval_scenes) gts.push_back(target_gt(p.scene));
      rec.eval = summarize(predict_all(net, eval_scenes, opts.eval_decoder, opts.workers), gts, 6);
      rec.evaluated = true;
      if (rec.eval.brier_min_fde < result.best_brier) {
        result.best_brier = rec.eval.brier_min_fde;
        result.best_epoch = epoch;
        if (!opts.checkpoint_path.empty()) net.store().save(opts.checkpoint_path, opts.checkpoint_metadata);
      }
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log) log << log_record_to_json(rec) << '\n' << std::flush;
    if (opts.on_epoch) opts.on_epoch(rec);
    result.log.push_back(rec);
  }
  return result;
}

}  // namespace dsp
