#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "dsp/config.hpp"
#include "dsp/error.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dsp;
using namespace dsp::test;
namespace d = dsp::diff;

namespace {

std::vector<double> as_vector(const Matrix& m) { return {m.data(), m.data() + m.size()}; }

Matrix column(const std::vector<double>& v) { return Eigen::Map<const Matrix>(v.data(), static_cast<Eigen::Index>(v.size()), 1); }

struct QuietWarnings {
  QuietWarnings() { set_warning_sink([](const std::string&) {}); }
  ~QuietWarnings() { set_warning_sink(nullptr); }
};

DAGraph line_graph(const std::vector<double>& xs) {
  DAGraph g;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    DANode n;
    n.index = static_cast<int>(i);
    n.position = {xs[i], 0.0};
    g.nodes.push_back(n);
  }
  return g;
}

}  // namespace

TEST_CASE("goal labels: plateau, half height and monotone falloff") {
  const TrainConfig cfg;
  const double half = cfg.sigma_label * std::sqrt(2.0 * std::log(2.0));
  const DAGraph g = line_graph({0.0, 0.99, 1.0, half, 3.0, 6.0});
  const auto h = goal_labels(g, {0.0, 0.0}, cfg);
  CHECK(h[0] == 1.0);
  CHECK(h[1] == 1.0);
  CHECK(h[2] < 1.0);
  CHECK(h[3] == doctest::Approx(0.5).epsilon(1e-12));
  for (std::size_t i = 3; i < h.size(); ++i) CHECK(h[i] < h[i - 1]);
}

TEST_CASE("focal loss matches the scalar formula") {
  QuietWarnings quiet;
  const TrainConfig cfg;
  {
    Tape t;
    const std::vector<double> h{1.0, 0.5, 0.0}, p{0.7, 0.3, 0.2};
    const double got = goal_classification_loss(t.constant(column(p)), h, cfg).scalar();
    CHECK(std::abs(got - oracle::focal(p, h, 2.0, 4.0)) < 1e-12);
  }
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t n = 5 + static_cast<std::size_t>(trial);
    std::vector<double> h(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = i % 4 == 0 ? 1.0 : u(rng);
      p[i] = u(rng);
    }
    if (trial % 5 == 4) std::fill(h.begin(), h.end(), 0.3);
    Tape t;
    const double got = goal_classification_loss(t.constant(column(p)), h, cfg).scalar();
    CHECK(std::abs(got - oracle::focal(p, h, 2.0, 4.0)) < 1e-10);
  }
}

TEST_CASE("focal loss vanishes at a perfect prediction and falls toward the labels") {
  const TrainConfig cfg;
  const std::vector<double> h{1.0, 0.6, 0.2, 0.0};
  {
    Tape t;
    const std::vector<double> perfect{1.0 - 1e-12, 1e-9, 1e-9, 1e-9};
    CHECK(goal_classification_loss(t.constant(column(perfect)), h, cfg).scalar() < 1e-6);
  }
  const std::vector<double> start{0.3, 0.8, 0.7, 0.5};
  std::vector<double> target{0.999, 0.001, 0.001, 0.001};
  double previous = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= 10; ++k) {
    std::vector<double> p(4);
    for (std::size_t i = 0; i < 4; ++i) p[i] = start[i] + (target[i] - start[i]) * k / 10.0;
    Tape t;
    const double loss = goal_classification_loss(t.constant(column(p)), h, cfg).scalar();
    CHECK(loss < previous);
    previous = loss;
  }
}

TEST_CASE("focal loss warns without positives") {
  std::vector<std::string> seen;
  set_warning_sink([&](const std::string& m) { seen.push_back(m); });
  Tape t;
  const double loss = goal_classification_loss(t.constant(column({0.2, 0.4})), {0.1, 0.5}, TrainConfig{}).scalar();
  set_warning_sink(nullptr);
  CHECK(seen.size() == 1);
  CHECK(loss == doctest::Approx(oracle::focal({0.2, 0.4}, {0.1, 0.5}, 2.0, 4.0)));
}

TEST_CASE("winner-takes-all goal regression") {
  Tape t;
  Matrix goals(3, 2);
  goals << 5, 5, 0.5, 0, -3, 1;
  const Var g = t.input(goals);
  const WinnerLoss w = goal_regression_loss(g, {0.0, 0.0});
  CHECK(w.winner == 1);
  CHECK(w.loss.scalar() == doctest::Approx(0.125));
  t.backward(w.loss);
  const Matrix grad = g.grad();
  CHECK(grad.row(0).isZero());
  CHECK(grad.row(2).isZero());
  CHECK(grad(1, 0) == doctest::Approx(0.5));

  Tape t2;
  Matrix moved = goals;
  moved(2, 0) = -2.0;
  CHECK(goal_regression_loss(t2.constant(moved), {0.0, 0.0}).loss.scalar() == w.loss.scalar());

  Tape t3;
  Matrix exact(2, 2);
  exact << 1, 1, 4, 4;
  CHECK(goal_regression_loss(t3.constant(exact), {4.0, 4.0}).loss.scalar() == 0.0);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  for (int trial = 0; trial < 12; ++trial) {
    std::vector<Vec2> gs(6);
    Matrix m(6, 2);
    for (int k = 0; k < 6; ++k) {
      gs[static_cast<std::size_t>(k)] = {u(rng), u(rng)};
      m(k, 0) = gs[static_cast<std::size_t>(k)].x;
      m(k, 1) = gs[static_cast<std::size_t>(k)].y;
    }
    const Vec2 gt{u(rng), u(rng)};
    Tape tt;
    const WinnerLoss got = goal_regression_loss(tt.constant(m), gt);
    const auto [value, winner] = oracle::wta(gs, gt);
    CHECK(got.winner == winner);
    CHECK(std::abs(got.loss.scalar() - value) < 1e-10);
  }
}

TEST_CASE("trajectory regression is a mean smooth-L1") {
  Trajectory gt{{1, 2}, {3, 4}, {5, 6}};
  Matrix pred(1, 6);
  pred << 1.5, 2.5, 3.5, 4.5, 5.5, 6.5;
  Tape t;
  CHECK(trajectory_regression_loss(t.constant(pred), gt).scalar() == doctest::Approx(0.125));
  Matrix same(1, 6);
  same << 1, 2, 3, 4, 5, 6;
  CHECK(trajectory_regression_loss(t.constant(same), gt).scalar() == 0.0);
  CHECK_THROWS_AS(trajectory_regression_loss(t.constant(Matrix::Zero(1, 4)), gt), Error);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 12; ++trial) {
    Trajectory y(8), yhat(8);
    Matrix m(1, 16);
    for (int h = 0; h < 8; ++h) {
      y[static_cast<std::size_t>(h)] = {u(rng), u(rng)};
      yhat[static_cast<std::size_t>(h)] = {u(rng), u(rng)};
      m(0, 2 * h) = yhat[static_cast<std::size_t>(h)].x;
      m(0, 2 * h + 1) = yhat[static_cast<std::size_t>(h)].y;
    }
    Tape tt;
    CHECK(std::abs(trajectory_regression_loss(tt.constant(m), y).scalar() - oracle::trajectory_l1(yhat, y)) < 1e-10);
  }
}

TEST_CASE("total loss weighting") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  TrainConfig cfg;
  for (int trial = 0; trial < 12; ++trial) {
    const double gc = u(rng), gr = u(rng), tr = u(rng);
    Tape t;
    const auto c = [&](double x) { return t.constant(Matrix::Constant(1, 1, x)); };
    CHECK(std::abs(total_loss(c(gc), c(gr), c(tr), cfg).scalar() - oracle::total(gc, gr, tr, 0.8, 0.8)) < 1e-10);
  }
  Tape t;
  const Var gc = t.input(Matrix::Constant(1, 1, 2.0));
  const Var gr = t.input(Matrix::Constant(1, 1, 3.0));
  const Var tr = t.input(Matrix::Constant(1, 1, 4.0));
  t.backward(total_loss(gc, gr, tr, cfg));
  CHECK(gc.grad()(0, 0) == doctest::Approx(0.64));
  CHECK(gr.grad()(0, 0) == doctest::Approx(0.16));
  CHECK(tr.grad()(0, 0) == doctest::Approx(0.2));

  TrainConfig only_goal = cfg;
  only_goal.omega1 = 1.0;
  CHECK(total_loss(t.constant(Matrix::Constant(1, 1, 2.0)), t.constant(Matrix::Constant(1, 1, 3.0)),
                   t.constant(Matrix::Constant(1, 1, 1e6)), only_goal)
            .scalar() == doctest::Approx(2.2));
}

TEST_CASE("learning rate schedule") {
  const TrainConfig cfg;
  CHECK(learning_rate(cfg, 0) == 1e-3);
  CHECK(learning_rate(cfg, 24) == 1e-3);
  CHECK(learning_rate(cfg, 25) < 1e-3);
  CHECK(learning_rate(cfg, 25) > learning_rate(cfg, 26));
  CHECK(learning_rate(cfg, 29) == doctest::Approx(1e-4));
}

TEST_CASE("training configuration is validated") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.omega1 = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.focal_alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("Adam: first step, zero gradients and missing gradients") {
  d::ParamStore s(1);
  d::Parameter& w = s.get("w", 2, 3, d::Init::UniformFanIn);
  d::Parameter& z = s.get("z", 1, 2, d::Init::Ones);
  const Matrix w0 = w.value, z0 = z.value;
  CHECK_THROWS_AS(s.optimizer_step(0.01), Error);
  {
    Tape t;
    Var wv = t.param(w), zv = t.param(z);
    t.backward(d::add(d::sum(d::mul(wv, t.constant(Matrix::Constant(2, 3, 3.0)))), d::sum(d::scale(zv, 0.0))));
  }
  s.optimizer_step(0.01);
  CHECK(((w.value - w0).array() + 0.01).abs().maxCoeff() < 1e-8);
  CHECK(z.value == z0);
  CHECK(s.step() == 1);
}

TEST_CASE("optimizer steps are bitwise deterministic and resumable") {
  const NetConfig cfg = toy_net_config(6, 4);
  QuietWarnings quiet;
  const TrainConfig tc;
  std::vector<PreparedScene> scenes;
  for (std::uint64_t seed : {1, 2, 3}) scenes.push_back(prepare_scene(toy_scenario(seed), toy_graph_config(), cfg));
  std::vector<const PreparedScene*> batch;
  for (const auto& p : scenes) batch.push_back(&p);

  auto run = [&](d::ParamStore& store, int steps) {
    const DSPNet net(cfg, store);
    std::vector<double> losses;
    for (int i = 0; i < steps; ++i) {
      const TrainLogRecord r = train_step(net, batch, tc, 1e-3);
      CHECK(std::isfinite(r.loss));
      losses.push_back(r.loss);
    }
    return losses;
  };
  d::ParamStore a(4), b(4);
  const auto la = run(a, 10);
  const auto lb = run(b, 10);
  CHECK(la == lb);
  CHECK(a == b);

  const auto path = std::filesystem::temp_directory_path() / "dsp_resume.bin";
  d::ParamStore c(4);
  run(c, 5);
  c.save(path.string(), "{\"note\":1}");
  std::string meta;
  d::ParamStore resumed = d::ParamStore::load(path.string(), &meta);
  CHECK(meta == "{\"note\":1}");
  CHECK(resumed == c);
  run(resumed, 5);
  CHECK(resumed == a);
  std::filesystem::remove(path);
}

TEST_CASE("corrupted checkpoints are rejected") {
  d::ParamStore s(2);
  s.get("a", 3, 3, d::Init::UniformFanIn);
  s.get("b", 1, 4, d::Init::Ones);
  const auto path = std::filesystem::temp_directory_path() / "dsp_corrupt.bin";
  s.save(path.string());
  CHECK(d::ParamStore::load(path.string()) == s);
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(-5, std::ios::end);
  f.put('\x7f');
  f.close();
  try {
    d::ParamStore::load(path.string());
    FAIL("expected ChecksumMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ChecksumMismatch);
  }
  std::filesystem::resize_file(path, 10);
  CHECK_THROWS_AS(d::ParamStore::load(path.string()), Error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(d::ParamStore::load(path.string()), Error);
}

TEST_CASE("parameter initialization depends on seed and name only") {
  d::ParamStore a(7), b(7), c(8);
  b.get("other", 2, 2, d::Init::UniformFanIn);
  const Matrix va = a.get("w", 4, 3, d::Init::UniformFanIn).value;
  CHECK(va == b.get("w", 4, 3, d::Init::UniformFanIn).value);
  CHECK(va != c.get("w", 4, 3, d::Init::UniformFanIn).value);
  CHECK(va.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(4.0));
  CHECK_THROWS_AS(a.get("w", 3, 3, d::Init::UniformFanIn), Error);
}

TEST_CASE("loss is permutation invariant in the non-target agents") {
  const NetConfig cfg = toy_net_config(6, 4);
  const PreparedScene p = toy_prepared(11, cfg, 3);
  Scenario swapped = p.scene;
  const std::size_t target = target_index(swapped);
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < swapped.tracks.size(); ++i) {
    if (i != target) others.push_back(i);
  }
  std::swap(swapped.tracks[others[0]], swapped.tracks[others[1]]);
  const PreparedScene q = prepare_normalized(swapped, toy_graph_config(), cfg);
  d::ParamStore store(3);
  const DSPNet net(cfg, store);
  Tape t1, t2;
  const double l1 = scene_loss(t1, net, p, TrainConfig{}).total.scalar();
  const double l2 = scene_loss(t2, net, q, TrainConfig{}).total.scalar();
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
}

TEST_CASE("configuration and manifest round-trip through JSON") {
  Config c;
  c.seed = 42;
  c.train.batch_size = 2;
  c.graph.da.pitch = 1.5;
  c.decoder.kind = DecoderKind::KMeans;
  const Config back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK(back.seed == 42);
  CHECK(back.graph.da.pitch == 1.5);

  const Config partial = config_from_json(R"({"train": {"epochs": 3}, "unknown": true})");
  CHECK(partial.train.epochs == 3);
  CHECK(partial.train.omega1 == 0.8);
  CHECK_THROWS_AS(config_from_json("{ nope"), Error);
  CHECK_THROWS_AS(config_from_json(R"({"train": {"omega1": 2.0}})"), Error);

  RunManifest m;
  m.config = c;
  m.checkpoint = "ckpt.bin";
  m.train_scenarios = {"a", "b"};
  const RunManifest mb = manifest_from_json(manifest_to_json(m));
  CHECK(mb.train_scenarios == m.train_scenarios);
  CHECK(mb.tool_version == kToolVersion);
  CHECK(manifest_to_json(mb) == manifest_to_json(m));
}

TEST_CASE("a single scenario is memorized") {
  QuietWarnings quiet;
  const NetConfig cfg;
  SynthSpec spec;
  spec.map_template = MapTemplate::TIntersection;
  const PreparedScene p = prepare_scene(synth_scenario(spec, 5), GraphConfig{}, cfg);
  d::ParamStore store(1);
  const DSPNet net(cfg, store);
  TrainConfig tc;
  tc.batch_size = 1;
  for (int step = 0; step < 500; ++step) {
    const TrainLogRecord r = train_step(net, {&p}, tc, tc.lr_start);
    REQUIRE(std::isfinite(r.loss));
  }
  const Trajectory gt = target_gt(p.scene);
  const PredictionSet pred = predict(net, p, DecoderConfig{});
  CHECK(min_fde(pred, gt) < 0.3);

  // Teacher-forced completion ends at the goal it was given.
  Tape t;
  const SceneFeatures f = net.forward(t, p.input);
  Matrix goal(1, 2);
  goal << gt.back().x, gt.back().y;
  const Matrix traj = net.complete(t, net.target_context(t, f, p.input), t.constant(goal)).value();
  CHECK(std::hypot(traj(0, 2 * cfg.H - 2) - goal(0, 0), traj(0, 2 * cfg.H - 1) - goal(0, 1)) < 0.1);
}
