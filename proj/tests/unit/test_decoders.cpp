#include <doctest.h>

#include <random>

#include "dsp/decoders.hpp"
#include "dsp/error.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace dsp;

namespace {

DAGraph scattered(const std::vector<Vec2>& pts) {
  DAGraph g;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    DANode n;
    n.index = static_cast<int>(i);
    n.position = pts[i];
    g.nodes.push_back(n);
  }
  return g;
}

DAGraph grid(double half, double pitch) {
  Scenario s;
  std::vector<std::optional<Vec2>> obs(4, Vec2{0, 0});
  s.horizon.T = 4;
  s.tracks.push_back(make_track("t", obs, std::vector<Vec2>(4, Vec2{1, 0}), true));
  s.drivable_polygons.push_back({{-half, -half}, {half, -half}, {half, half}, {-half, half}});
  DAConfig cfg;
  cfg.pitch = pitch;
  cfg.extent = 2 * half;
  return build_da_graph(s, cfg);
}

}  // namespace

TEST_CASE("decoder names parse") {
  CHECK(parse_decoder("nn") == DecoderKind::NN);
  CHECK(parse_decoder("nms") == DecoderKind::NMS);
  CHECK(parse_decoder("kmeans") == DecoderKind::KMeans);
  CHECK(to_string(DecoderKind::KMeans) == "kmeans");
  CHECK_THROWS_AS(parse_decoder("beam"), Error);
}

TEST_CASE("NMS keeps the top M when nodes are far apart") {
  std::vector<Vec2> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({10.0 * i, 0.0});
  const DAGraph g = scattered(pts);
  const std::vector<double> h{0.1, 0.9, 0.3, 0.8, 0.5, 0.7, 0.2, 0.6, 0.4, 0.05};
  const NMSResult r = nms_goal_decoder(h, g, NMSConfig{});
  CHECK(r.nodes == std::vector<int>{1, 3, 5, 7, 4, 8});
  CHECK(r.set.scores == std::vector<double>{0.9, 0.8, 0.7, 0.6, 0.5, 0.4});
  for (double radius : r.radius_at_accept) CHECK(radius == 2.8);
}

TEST_CASE("NMS suppresses a co-located runner-up at the first radius") {
  std::vector<Vec2> pts{{0, 0}, {0.5, 0}, {10, 0}, {20, 0}, {30, 0}, {40, 0}, {50, 0}};
  const std::vector<double> h{1.0, 0.99, 0.5, 0.4, 0.3, 0.2, 0.1};
  const NMSResult r = nms_goal_decoder(h, scattered(pts), NMSConfig{});
  CHECK(r.nodes == std::vector<int>{0, 2, 3, 4, 5, 6});

  NMSConfig seven;
  seven.M = 7;
  const NMSResult all = nms_goal_decoder(h, scattered(pts), seven);
  CHECK(all.nodes.back() == 1);
  CHECK(all.radius_at_accept.back() < 0.5);
}

TEST_CASE("NMS with fewer nodes than M returns every node") {
  const NMSResult r = nms_goal_decoder({0.2, 0.7, 0.7}, scattered({{0, 0}, {0, 0.1}, {0, 0.2}}), NMSConfig{});
  CHECK(r.nodes == std::vector<int>{1, 2, 0});
}

TEST_CASE("NMS agrees with the reference on random heatmaps") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(-10.0, 10.0), score(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Vec2> pts(50);
    std::vector<double> h(50);
    for (auto& p : pts) p = {pos(rng), pos(rng)};
    for (auto& s : h) s = trial % 4 == 0 ? std::round(score(rng) * 4) / 4 : score(rng);
    const DAGraph g = scattered(pts);
    const NMSResult r = nms_goal_decoder(h, g, NMSConfig{});
    CHECK(r.nodes == oracle::nms(h, pts, 6, 2.8, 0.8));
    for (std::size_t a = 0; a < r.nodes.size(); ++a) {
      for (std::size_t b = 0; b < a; ++b) {
        CHECK(distance(pts[static_cast<std::size_t>(r.nodes[a])], pts[static_cast<std::size_t>(r.nodes[b])]) >= r.radius_at_accept[a]);
      }
    }
  }
}

TEST_CASE("k-means finds separated clusters") {
  const DAGraph g = grid(20.0, 1.0);
  const std::vector<Vec2> centres{{-12, -12}, {-12, 12}, {12, -12}, {12, 12}, {0, 0}, {0, 14}};
  std::vector<double> h(g.size(), 0.0);
  std::vector<Vec2> sums(6, Vec2{}), expect(6);
  std::vector<int> counts(6, 0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t c = 0; c < centres.size(); ++c) {
      if (distance(g.nodes[i].position, centres[c]) <= 2.0) {
        h[i] = 1.0;
        sums[c] = sums[c] + g.nodes[i].position;
        ++counts[c];
      }
    }
  }
  for (std::size_t c = 0; c < 6; ++c) expect[c] = sums[c] * (1.0 / counts[c]);
  KMeansConfig cfg;
  cfg.candidates = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    cfg.seed = seed;
    const KMeansResult r = kmeans_goal_decoder(h, g, cfg);
    REQUIRE(r.set.goals.size() == 6);
    for (const Vec2& m : expect) {
      double best = 1e9;
      for (const Vec2& c : r.set.goals) best = std::min(best, distance(c, m));
      CHECK(best <= 0.5);
    }
  }
}

TEST_CASE("k-means objective never increases") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-15.0, 15.0), w(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Vec2> pts(80);
    std::vector<double> weights(80);
    for (auto& p : pts) p = {u(rng), u(rng)};
    for (auto& x : weights) x = w(rng);
    const KMeansResult r = weighted_kmeans(pts, weights, 6, 50, static_cast<std::uint64_t>(trial));
    for (std::size_t i = 1; i < r.objective.size(); ++i) CHECK(r.objective[i] <= r.objective[i - 1] + 1e-12);
  }
}

TEST_CASE("k-means degenerate inputs") {
  const DAGraph g = grid(5.0, 1.0);
  std::vector<double> h(g.size(), 0.0);
  h[17] = 0.6;
  KMeansConfig one;
  one.M = 1;
  const KMeansResult single = kmeans_goal_decoder(h, g, one);
  CHECK(single.set.goals[0] == g.nodes[17].position);

  std::vector<double> zero(g.size(), 0.0);
  one.candidates = 0;
  const KMeansResult uniform = kmeans_goal_decoder(zero, g, one);
  CHECK(std::abs(uniform.set.goals[0].x) < 1e-9);
  CHECK(std::abs(uniform.set.goals[0].y) < 1e-9);
}

TEST_CASE("k-means is invariant to scaling the scores") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const DAGraph g = grid(10.0, 2.0);
  std::vector<double> h(g.size()), h2(g.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    h[i] = u(rng);
    h2[i] = 2.0 * h[i];
  }
  KMeansConfig cfg;
  cfg.seed = 4;
  CHECK(kmeans_goal_decoder(h, g, cfg).set.goals == kmeans_goal_decoder(h2, g, cfg).set.goals);
}

TEST_CASE("goal scores read the nearest node and normalize") {
  const DAGraph g = grid(5.0, 1.0);
  std::vector<double> h(g.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = static_cast<double>(i) / static_cast<double>(h.size());
  const auto s = goal_scores({g.nodes[40].position + Vec2{0.2, -0.1}}, h, g);
  CHECK(s[0] == h[40]);
  const auto p = normalize_scores({1.0, 3.0});
  CHECK(p[0] == doctest::Approx(0.25));
  const auto u = normalize_scores({0.0, 0.0, 0.0, 0.0});
  for (double x : u) CHECK(x == 0.25);
}

TEST_CASE("learned goals reduce to candidate positions for one-hot weights") {
  const DAGraph g = grid(5.0, 1.0);
  diff::Tape t;
  diff::Matrix gamma = diff::Matrix::Zero(2, 3);
  gamma(0, 1) = 1.0;
  gamma(1, 2) = 1.0;
  const std::vector<int> cand{7, 50, 90};
  diff::Matrix goals(2, 2);
  goals << g.nodes[50].position.x, g.nodes[50].position.y, g.nodes[90].position.x, g.nodes[90].position.y;
  GoalHypotheses hyp{t.constant(goals), t.constant(gamma), cand};
  std::vector<double> h(g.size(), 0.1);
  h[90] = 0.7;
  const GoalSet set = nn_goal_set(hyp, h, g);
  CHECK(set.goals[0] == g.nodes[50].position);
  CHECK(set.goals[1] == g.nodes[90].position);
  CHECK(set.scores[1] == 0.7);
  CHECK(set.candidates == cand);
}
