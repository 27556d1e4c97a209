#include "dsp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "dsp/error.hpp"
#include "dsp/scenario_io.hpp"

namespace dsp {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

namespace {

void check_shapes(const PredictionSet& pred, const Trajectory& gt) {
  if (pred.trajectories.empty()) throw Error(ErrorCode::ShapeMismatch, "prediction set has no modes");
  if (gt.empty()) throw Error(ErrorCode::MissingGTFuture, "empty ground-truth trajectory");
  for (const Trajectory& t : pred.trajectories) {
    if (t.size() != gt.size()) {
      throw Error(ErrorCode::ShapeMismatch, "predicted trajectory has " + std::to_string(t.size()) +
                                                " steps, ground truth has " + std::to_string(gt.size()));
    }
  }
}

double ade(const Trajectory& a, const Trajectory& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += distance(a[i], b[i]);
  return s / static_cast<double>(a.size());
}

ojson points_json(const std::vector<Vec2>& pts) {
  auto a = ojson::array();
  for (const Vec2& p : pts) a.push_back({p.x, p.y});
  return a;
}

std::vector<Vec2> points_from(const json& j, const char* field) {
  std::vector<Vec2> out;
  for (const auto& p : j) {
    if (!p.is_array() || p.size() != 2) throw Error(ErrorCode::ParseError, std::string(field) + ": expected [x, y] pairs");
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

}  // namespace

std::size_t PredictionSet::top_mode() const {
  if (probabilities.empty()) return 0;
  return static_cast<std::size_t>(std::max_element(probabilities.begin(), probabilities.end()) - probabilities.begin());
}

PredictionSet PredictionSet::top1() const {
  PredictionSet p = *this;
  const std::size_t m = top_mode();
  p.trajectories = {trajectories.at(m)};
  p.probabilities = {1.0};
  if (m < goals.size()) p.goals = {goals[m]};
  if (m < goal_scores.size()) p.goal_scores = {goal_scores[m]};
  return p;
}

double min_ade(const PredictionSet& pred, const Trajectory& gt) {
  check_shapes(pred, gt);
  double best = std::numeric_limits<double>::infinity();
  for (const Trajectory& t : pred.trajectories) best = std::min(best, ade(t, gt));
  return best;
}

std::size_t best_fde_mode(const PredictionSet& pred, const Trajectory& gt) {
  check_shapes(pred, gt);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t m = 0; m < pred.trajectories.size(); ++m) {
    const double d = distance(pred.trajectories[m].back(), gt.back());
    if (d < best_d) {
      best_d = d;
      best = m;
    }
  }
  return best;
}

double min_fde(const PredictionSet& pred, const Trajectory& gt) {
  const std::size_t m = best_fde_mode(pred, gt);
  return distance(pred.trajectories[m].back(), gt.back());
}

double brier_min_fde(const PredictionSet& pred, const Trajectory& gt) {
  const std::size_t m = best_fde_mode(pred, gt);
  const double p = m < pred.probabilities.size() ? pred.probabilities[m] : 0.0;
  return distance(pred.trajectories[m].back(), gt.back()) + (1.0 - p) * (1.0 - p);
}

double miss_rate(const std::vector<double>& min_fdes, double threshold) {
  if (min_fdes.empty()) return 0.0;
  const auto misses = std::count_if(min_fdes.begin(), min_fdes.end(), [&](double d) { return d > threshold; });
  return static_cast<double>(misses) / static_cast<double>(min_fdes.size());
}

MetricSummary summarize(const std::vector<PredictionSet>& preds, const std::vector<Trajectory>& gts, int K) {
  if (preds.size() != gts.size()) throw Error(ErrorCode::ShapeMismatch, "predictions and ground truths differ in count");
  MetricSummary s;
  s.K = K;
  s.n_scenarios = static_cast<int>(preds.size());
  if (preds.empty()) return s;
  std::vector<double> fdes;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const PredictionSet p = K == 1 ? preds[i].top1() : preds[i];
    s.min_ade += min_ade(p, gts[i]);
    const double f = min_fde(p, gts[i]);
    fdes.push_back(f);
    s.min_fde += f;
    s.brier_min_fde += brier_min_fde(p, gts[i]);
  }
  const double n = static_cast<double>(preds.size());
  s.min_ade /= n;
  s.min_fde /= n;
  s.brier_min_fde /= n;
  s.miss_rate = miss_rate(fdes);
  return s;
}

std::string report_to_json(const EvalReport& r) {
  ojson root;
  root["schema_version"] = 1;
  auto list = ojson::array();
  for (const MetricSummary& m : r.metrics) {
    list.push_back({{"split", r.split},
                    {"decoder", r.decoder},
                    {"K", m.K},
                    {"minADE", m.min_ade},
                    {"minFDE", m.min_fde},
                    {"MR", m.miss_rate},
                    {"brier_minFDE", m.brier_min_fde},
                    {"n_scenarios", m.n_scenarios}});
  }
  root["reports"] = std::move(list);
  return root.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  EvalReport r;
  try {
    const json root = json::parse(text);
    for (const auto& e : root.at("reports")) {
      r.split = e.at("split").get<std::string>();
      r.decoder = e.at("decoder").get<std::string>();
      MetricSummary m;
      m.K = e.at("K").get<int>();
      m.min_ade = e.at("minADE").get<double>();
      m.min_fde = e.at("minFDE").get<double>();
      m.miss_rate = e.at("MR").get<double>();
      m.brier_min_fde = e.at("brier_minFDE").get<double>();
      m.n_scenarios = e.at("n_scenarios").get<int>();
      r.metrics.push_back(m);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("report: ") + e.what());
  }
  return r;
}

std::string prediction_to_json(const PredictionSet& p) {
  ojson root;
  root["schema_version"] = 1;
  root["scenario_id"] = p.scenario_id;
  root["decoder"] = to_string(p.source);
  const Affine2& f = p.world_to_scene;
  root["frame"] = ojson::array({f.a, f.b, f.c, f.d, f.tx, f.ty});
  root["probabilities"] = p.probabilities;
  root["goals"] = points_json(p.goals);
  root["goal_scores"] = p.goal_scores;
  auto trajs = ojson::array();
  for (const Trajectory& t : p.trajectories) trajs.push_back(points_json(t));
  root["trajectories"] = std::move(trajs);
  root["heatmap"] = {{"positions", points_json(p.heatmap_positions)}, {"values", p.heatmap}};
  return compact_dump(root) + "\n";
}

PredictionSet prediction_from_json(const std::string& text) {
  PredictionSet p;
  try {
    const json root = json::parse(text);
    if (root.value("schema_version", -1) != 1) {
      throw Error(ErrorCode::SchemaVersionMismatch, "prediction schema_version must be 1");
    }
    p.scenario_id = root.at("scenario_id").get<std::string>();
    p.source = parse_decoder(root.at("decoder").get<std::string>());
    const auto& f = root.at("frame");
    p.world_to_scene = {f.at(0).get<double>(), f.at(1).get<double>(), f.at(2).get<double>(),
                        f.at(3).get<double>(), f.at(4).get<double>(), f.at(5).get<double>()};
    p.probabilities = root.at("probabilities").get<std::vector<double>>();
    p.goals = points_from(root.at("goals"), "goals");
    p.goal_scores = root.at("goal_scores").get<std::vector<double>>();
    for (const auto& t : root.at("trajectories")) p.trajectories.push_back(points_from(t, "trajectories"));
    if (root.contains("heatmap")) {
      p.heatmap_positions = points_from(root["heatmap"].at("positions"), "heatmap.positions");
      p.heatmap = root["heatmap"].at("values").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("prediction: ") + e.what());
  }
  return p;
}

Trajectory target_gt(const Scenario& s) {
  const AgentTrack& t = s.tracks[target_index(s)];
  if (!t.gt_future) throw Error(ErrorCode::MissingGTFuture, "scenario '" + s.id + "': target has no ground-truth future");
  return *t.gt_future;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

struct View {
  double min_x, min_y, max_x, max_y, ppm;
  double X(double x) const { return (x - min_x) * ppm; }
  double Y(double y) const { return (max_y - y) * ppm; }
};

std::string path_of(const std::vector<Vec2>& pts, const View& v, bool closed) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  for (std::size_t i = 0; i < pts.size(); ++i) o << (i ? " L " : "M ") << v.X(pts[i].x) << ' ' << v.Y(pts[i].y);
  if (closed) o << " Z";
  return o.str();
}

std::string heat_color(double h) {
  h = std::clamp(h, 0.0, 1.0);
  const int r = static_cast<int>(255 * h);
  const int b = static_cast<int>(255 * (1.0 - h));
  std::ostringstream o;
  o << "rgb(" << r << ",64," << b << ")";
  return o.str();
}

}  // namespace

std::string render_svg(const Scenario& s, const PredictionSet* pred, const PlotOptions& opts) {
  const AgentTrack& target = s.tracks[target_index(s)];
  const Vec2 c = target.current().position;
  double half = 30.0;
  if (target.gt_future) {
    for (const Vec2& p : *target.gt_future) half = std::max(half, (p - c).norm() + opts.margin);
  }
  if (pred) {
    for (const auto& t : pred->trajectories) {
      for (const Vec2& p : t) half = std::max(half, (p - c).norm() + opts.margin);
    }
  }
  View v{c.x - half, c.y - half, c.x + half, c.y + half, opts.pixels_per_meter};
  const double size = 2 * half * v.ppm;

  std::ostringstream o;
  o << std::fixed << std::setprecision(2);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\" viewBox=\"0 0 "
    << size << ' ' << size << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"#f4f4f4\"/>\n";
  for (const Polygon& p : s.drivable_polygons) o << "<path d=\"" << path_of(p, v, true) << "\" fill=\"#d9d9d9\" stroke=\"none\"/>\n";
  for (const Polygon& p : s.obstacle_polygons) o << "<path d=\"" << path_of(p, v, true) << "\" fill=\"#555\"/>\n";
  for (const LanePolyline& l : s.lanes) {
    o << "<path d=\"" << path_of(l.centerline, v, false) << "\" fill=\"none\" stroke=\"#9a9a9a\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n";
  }
  if (pred && opts.show_heatmap) {
    const double r = std::max(1.0, 0.4 * v.ppm);
    for (std::size_t i = 0; i < pred->heatmap.size() && i < pred->heatmap_positions.size(); ++i) {
      if (pred->heatmap[i] < 0.02) continue;
      const Vec2 p = pred->heatmap_positions[i];
      o << "<circle cx=\"" << v.X(p.x) << "\" cy=\"" << v.Y(p.y) << "\" r=\"" << r << "\" fill=\""
        << heat_color(pred->heatmap[i]) << "\" fill-opacity=\"" << std::clamp(pred->heatmap[i], 0.15, 0.9) << "\"/>\n";
    }
  }
  for (const AgentTrack& t : s.tracks) {
    std::vector<Vec2> hist;
    for (const AgentState& st : t.states) {
      if (!st.padded) hist.push_back(st.position);
    }
    if (hist.size() >= 2) {
      o << "<path d=\"" << path_of(hist, v, false) << "\" fill=\"none\" stroke=\"" << (t.is_target ? "#d9480f" : "#1c7ed6")
        << "\" stroke-width=\"2\"/>\n";
    }
    const Vec2 p = t.current().position;
    o << "<circle cx=\"" << v.X(p.x) << "\" cy=\"" << v.Y(p.y) << "\" r=\"3\" fill=\"" << (t.is_target ? "#d9480f" : "#1c7ed6") << "\"/>\n";
  }
  if (target.gt_future) {
    o << "<path d=\"" << path_of(*target.gt_future, v, false) << "\" fill=\"none\" stroke=\"#2b8a3e\" stroke-width=\"2\"/>\n";
  }
  if (pred) {
    for (std::size_t m = 0; m < pred->trajectories.size(); ++m) {
      const double p = m < pred->probabilities.size() ? pred->probabilities[m] : 0.0;
      o << "<path d=\"" << path_of(pred->trajectories[m], v, false) << "\" fill=\"none\" stroke=\"#7048e8\" stroke-width=\""
        << 1.0 + 3.0 * p << "\" stroke-opacity=\"0.85\"/>\n";
    }
    for (const Vec2& g : pred->goals) {
      o << "<path d=\"M " << v.X(g.x) - 4 << ' ' << v.Y(g.y) - 4 << " L " << v.X(g.x) + 4 << ' ' << v.Y(g.y) + 4 << " M "
        << v.X(g.x) - 4 << ' ' << v.Y(g.y) + 4 << " L " << v.X(g.x) + 4 << ' ' << v.Y(g.y) - 4
        << "\" stroke=\"#7048e8\" stroke-width=\"2\"/>\n";
    }
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace dsp
