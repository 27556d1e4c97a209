#include <doctest.h>

#include <algorithm>
#include <random>

#include "dsp/error.hpp"
#include "test_support.hpp"

using namespace dsp;
using namespace dsp::test;
namespace d = dsp::diff;

TEST_CASE("composed training loss matches finite differences on a toy scene") {
  const NetConfig cfg = toy_net_config(6, 4);
  const PreparedScene p = toy_prepared(11, cfg);
  REQUIRE(p.da.size() <= 40);
  d::ParamStore store(5);
  const DSPNet net(cfg, store);
  const TrainConfig tc;
  const GradReport r = check_params(store, [&](Tape& t) { return scene_loss(t, net, p, tc).total; });
  INFO("worst parameter " << r.worst << " rel " << r.max_rel << " over " << r.tensors << " tensors");
  CHECK(r.tensors == static_cast<int>(store.params().size()));
  CHECK(r.max_rel < 1e-4);
}

TEST_CASE("network output shapes follow the configuration") {
  NetConfig cfg;
  cfg.T = 6;
  cfg.H = 4;
  d::ParamStore store(1);
  const DSPNet net(cfg, store);
  for (int agents : {1, 5, 8}) {
    Scenario s = toy_scenario(3, agents);
    const PreparedScene p = prepare_scene(s, toy_graph_config(), cfg);
    Tape t;
    const SceneFeatures f = net.forward(t, p.input);
    CHECK(f.agents.rows() == agents);
    CHECK(f.agents.cols() == 128);
    CHECK(f.da.rows() == static_cast<Eigen::Index>(p.da.size()));
    CHECK(f.da.cols() == 32);
    CHECK(f.ls.rows() == static_cast<Eigen::Index>(p.ls.size()));
    CHECK(f.ls.cols() == 128);
    CHECK(f.heatmap.rows() == static_cast<Eigen::Index>(p.da.size()));
    const d::Matrix& h = f.heatmap.value();
    CHECK(h.minCoeff() >= 0.0);
    CHECK(h.maxCoeff() <= 1.0);
  }
}

TEST_CASE("agent encoder treats agents independently") {
  const NetConfig cfg = toy_net_config(6, 4);
  d::ParamStore store(2);
  const DSPNet net(cfg, store);
  std::mt19937_64 rng(8);
  const d::Matrix a = random_matrix(rng, 6, 5), b = random_matrix(rng, 6, 5);
  d::Matrix ab(12, 5), ba(12, 5), aa(12, 5);
  ab << a, b;
  ba << b, a;
  aa << a, a;
  Tape t;
  const d::Matrix fab = net.agent_encoder(t, ab, 2, 6).value();
  const d::Matrix fba = net.agent_encoder(t, ba, 2, 6).value();
  const d::Matrix faa = net.agent_encoder(t, aa, 2, 6).value();
  CHECK(fab.row(0) == fba.row(1));
  CHECK(fab.row(1) == fba.row(0));
  CHECK(faa.row(0) == faa.row(1));
  CHECK_THROWS_AS(net.agent_encoder(t, a, 2, 6), Error);
}

TEST_CASE("input networks lift to the configured widths") {
  NetConfig cfg;
  cfg.T = 6;
  cfg.H = 4;
  d::ParamStore store(4);
  const DSPNet net(cfg, store);
  Tape t;
  const d::Matrix da = net.da_input_net(t, d::Matrix::Zero(5, 8)).value();
  CHECK(da.cols() == 32);
  for (Eigen::Index i = 1; i < da.rows(); ++i) CHECK(da.row(i) == da.row(0));
  CHECK(net.ls_input_net(t, d::Matrix::Zero(3, 8)).cols() == 128);
  CHECK_THROWS_AS(net.da_input_net(t, d::Matrix::Zero(5, 7)), Error);
  CHECK_THROWS_AS(net.ls_input_net(t, d::Matrix::Zero(5, 7)), Error);
}

TEST_CASE("goal hypotheses are convex combinations of the candidates") {
  const NetConfig cfg = toy_net_config(6, 4);
  d::ParamStore store(9);
  const DSPNet net(cfg, store);
  const PreparedScene p = prepare_scene(toy_scenario(4), toy_graph_config(), cfg);
  Tape t;
  const SceneFeatures f = net.forward(t, p.input);
  const GoalHypotheses g = net.decode_goals(t, f, p.input);
  const d::Matrix& gamma = g.gamma.value();
  CHECK(gamma.rows() == cfg.M);
  CHECK(gamma.cols() == static_cast<Eigen::Index>(std::min<std::size_t>(cfg.K_sel, p.da.size())));
  for (Eigen::Index m = 0; m < gamma.rows(); ++m) {
    CHECK(gamma.row(m).sum() == doctest::Approx(1.0));
    CHECK(gamma.row(m).minCoeff() >= 0.0);
  }
  // Candidates are the top-scoring nodes, ties to the lower index.
  const d::Matrix& h = f.heatmap.value();
  std::vector<int> order(static_cast<std::size_t>(h.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return h(a, 0) > h(b, 0); });
  order.resize(g.candidates.size());
  CHECK(std::vector<int>(g.candidates.begin(), g.candidates.end()) == order);
}

TEST_CASE("completion output has 2H columns per goal and ends near the goal ramp") {
  const NetConfig cfg = toy_net_config(6, 4);
  d::ParamStore store(10);
  const DSPNet net(cfg, store);
  Tape t;
  const Var ctx = t.constant(d::Matrix::Zero(1, cfg.d_agt));
  d::Matrix goals(3, 2);
  goals << 1, 2, 3, 4, -5, 6;
  const d::Matrix out = net.complete(t, ctx, t.constant(goals)).value();
  CHECK(out.rows() == 3);
  CHECK(out.cols() == 2 * cfg.H);
  CHECK_THROWS_AS(net.complete(t, t.constant(d::Matrix::Zero(2, cfg.d_agt)), t.constant(goals)), Error);
}

TEST_CASE("forward rejects inputs built for another horizon") {
  const NetConfig cfg = toy_net_config(6, 4);
  NetConfig other = cfg;
  other.T = 8;
  d::ParamStore store(1);
  const DSPNet net(other, store);
  const PreparedScene p = prepare_scene(toy_scenario(2), toy_graph_config(), cfg);
  Tape t;
  CHECK_THROWS_AS(net.forward(t, p.input), Error);
}
