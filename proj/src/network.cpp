#include "dsp/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsp/error.hpp"

namespace dsp {

using diff::Matrix;
using diff::SparsePattern;
using diff::Tape;
using diff::Var;

void NetConfig::validate() const {
  const std::pair<const char*, int> sizes[] = {
      {"d_da", d_da},   {"d_ls", d_ls},       {"d_agt", d_agt}, {"K", K},
      {"L", L},         {"num_da_blocks", num_da_blocks},       {"num_laneconv_layers", num_laneconv_layers},
      {"M", M},         {"K_sel", K_sel},     {"d_dec", d_dec}, {"d_comp", d_comp},
      {"T", T},         {"H", H}};
  for (const auto& [name, v] : sizes) {
    if (v <= 0) throw Error(ErrorCode::InvalidConfig, std::string("network.") + name + " must be positive, got " + std::to_string(v));
  }
  if (!(coord_scale > 0.0)) throw Error(ErrorCode::InvalidConfig, "network.coord_scale must be positive");
}

EdgeList EdgeList::from_pairs(const PairList& p) {
  EdgeList e;
  e.source.reserve(p.pairs.size());
  e.target.reserve(p.pairs.size());
  for (const auto& [src, tgt] : p.pairs) {
    e.source.push_back(src);
    e.target.push_back(tgt);
  }
  return e;
}

SceneInput make_scene_input(const Scenario& s, const DAGraph& da, const LSGraph& ls, const InterLayerEdges& edges,
                            const std::vector<std::uint8_t>& occ, const NetConfig& cfg) {
  SceneInput in;
  in.T = s.horizon.T;
  in.H = s.horizon.H;
  in.num_agents = static_cast<int>(s.tracks.size());
  in.target = static_cast<int>(target_index(s));
  const double cs = cfg.coord_scale;
  const int T = in.T;

  in.agent_states.resize(static_cast<Eigen::Index>(in.num_agents) * T, 5);
  for (int a = 0; a < in.num_agents; ++a) {
    const auto& states = s.tracks[static_cast<std::size_t>(a)].states;
    for (int t = 0; t < T; ++t) {
      const AgentState& st = states[static_cast<std::size_t>(t)];
      in.agent_states.row(a * T + t) << st.position.x * cs, st.position.y * cs, st.tangent.x, st.tangent.y,
          st.padded ? 1.0 : 0.0;
    }
  }

  const auto N = static_cast<Eigen::Index>(da.size());
  if (occ.size() != static_cast<std::size_t>(N) * static_cast<std::size_t>(T)) {
    throw Error(ErrorCode::ShapeMismatch, "occupancy has " + std::to_string(occ.size()) + " entries, expected " +
                                              std::to_string(N * T));
  }
  in.da_input.resize(N, 2 + T);
  in.da_positions.resize(N, 2);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Vec2 p = da.nodes[static_cast<std::size_t>(i)].position;
    in.da_positions.row(i) << p.x, p.y;
    in.da_input(i, 0) = p.x * cs;
    in.da_input(i, 1) = p.y * cs;
    for (int t = 0; t < T; ++t) in.da_input(i, 2 + t) = occ[static_cast<std::size_t>(i * T + t)];
  }

  const auto M = static_cast<Eigen::Index>(ls.size());
  const std::vector<double> f = ls.features();
  in.ls_input = Eigen::Map<const Matrix>(f.data(), M, kLSFeatureDim);
  in.ls_input.leftCols(2) *= cs;

  if (static_cast<int>(da.dilated.size()) < cfg.K) {
    throw Error(ErrorCode::ShapeMismatch, "DA graph has " + std::to_string(da.dilated.size()) +
                                              " dilation tables, network needs K = " + std::to_string(cfg.K));
  }
  for (int k = 0; k < cfg.K; ++k) {
    std::vector<std::vector<int>> rows(static_cast<std::size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i) rows[static_cast<std::size_t>(i)] = da.neighbors(static_cast<int>(i), k);
    in.da_neighbors.push_back(SparsePattern::from_rows(rows, static_cast<int>(N)));
  }

  if (static_cast<int>(ls.dilated_pre.size()) < cfg.L || static_cast<int>(ls.dilated_suc.size()) < cfg.L) {
    throw Error(ErrorCode::ShapeMismatch, "LS graph has " + std::to_string(ls.dilated_suc.size()) +
                                              " dilation levels, network needs L = " + std::to_string(cfg.L));
  }
  in.ls_left = SparsePattern::from_rows(ls.left.rows, static_cast<int>(M));
  in.ls_right = SparsePattern::from_rows(ls.right.rows, static_cast<int>(M));
  for (int l = 0; l < cfg.L; ++l) {
    in.ls_pre.push_back(SparsePattern::from_rows(ls.dilated_pre[static_cast<std::size_t>(l)].rows, static_cast<int>(M)));
    in.ls_suc.push_back(SparsePattern::from_rows(ls.dilated_suc[static_cast<std::size_t>(l)].rows, static_cast<int>(M)));
  }

  in.agent_to_ls = EdgeList::from_pairs(edges.agent_to_ls);
  in.da_to_ls = EdgeList::from_pairs(edges.da_to_ls);
  in.ls_to_da = EdgeList::from_pairs(edges.ls_to_da);
  in.ls_to_agent = EdgeList::from_pairs(edges.ls_to_agent);
  in.da_to_agent = EdgeList::from_pairs(edges.da_to_agent);
  in.agent_to_agent = EdgeList::from_pairs(edges.agent_to_agent);
  return in;
}

// ---------------------------------------------------------------------------
// Parameters

DSPNet::Linear DSPNet::linear_param(const std::string& name, int in, int out, bool bias, int fan_in) {
  Linear l;
  l.w = &store_->get(name + ".w", in, out, diff::Init::UniformFanIn, fan_in);
  if (bias) l.b = &store_->get(name + ".b", 1, out, diff::Init::Zeros);
  return l;
}

DSPNet::Norm DSPNet::norm_param(const std::string& name, int dim) {
  return {&store_->get(name + ".gamma", 1, dim, diff::Init::Ones), &store_->get(name + ".beta", 1, dim, diff::Init::Zeros)};
}

DSPNet::Dense DSPNet::dense_param(const std::string& name, int in, int out) {
  return {linear_param(name, in, out, false), norm_param(name + ".ln", out)};
}

DSPNet::ResBlock DSPNet::res_param(const std::string& name, int dim, int kernel) {
  return {dense_param(name + ".a", kernel * dim, dim), dense_param(name + ".b", kernel * dim, dim)};
}

void DSPNet::make_gat(const std::string& name, int d_tgt, int d_ctx) {
  GatParams g;
  g.w_tgt = linear_param(name + ".w_tgt", d_tgt, d_tgt, false);
  g.w_ctx = linear_param(name + ".w_ctx", d_ctx, d_tgt, false);
  g.w_att = linear_param(name + ".w_att", 2 * d_tgt, 1, false);
  g.w1 = linear_param(name + ".w1", d_ctx, d_tgt, false);
  g.w2 = linear_param(name + ".w2", 2 * d_tgt, d_tgt, false);
  g.norm = norm_param(name + ".ln", d_tgt);
  gats_[name] = g;
}

DSPNet::DSPNet(const NetConfig& cfg, diff::ParamStore& store) : cfg_(cfg), store_(&store) {
  cfg_.validate();
  const int half = std::max(1, cfg_.d_agt / 2);
  agt_in_ = dense_param("agent.conv_in", 3 * 5, half);
  agt_res1_ = res_param("agent.res1", half, 3);
  agt_up_ = dense_param("agent.conv_up", 3 * half, cfg_.d_agt);
  agt_res2_ = res_param("agent.res2", cfg_.d_agt, 3);
  agt_out_ = dense_param("agent.out", 2 * cfg_.d_agt, cfg_.d_agt);

  da_in1_ = dense_param("da_input.l1", 2 + cfg_.T, cfg_.d_da);
  da_in2_ = dense_param("da_input.l2", cfg_.d_da, cfg_.d_da);
  ls_in1_ = dense_param("ls_input.l1", kLSFeatureDim, cfg_.d_ls);
  ls_in2_ = dense_param("ls_input.l2", cfg_.d_ls, cfg_.d_ls);

  for (int b = 0; b <= cfg_.num_da_blocks; ++b) {
    std::vector<DALayer> layers;
    for (int k = 0; k < cfg_.K; ++k) {
      const std::string n = "da_block" + std::to_string(b) + ".layer" + std::to_string(k);
      DALayer l;
      l.w1 = linear_param(n + ".w1", cfg_.d_da, cfg_.d_da, false);
      l.w2 = linear_param(n + ".w2", 2 * cfg_.d_da, cfg_.d_da, false);
      l.w3 = linear_param(n + ".w3", cfg_.d_da, cfg_.d_da, false);
      l.n1 = norm_param(n + ".ln1", cfg_.d_da);
      l.n2 = norm_param(n + ".ln2", cfg_.d_da);
      l.n3 = norm_param(n + ".ln3", cfg_.d_da);
      layers.push_back(l);
    }
    da_blocks_.push_back(std::move(layers));
  }

  const int relations = 3 + 2 * cfg_.L;
  for (int i = 0; i < cfg_.num_laneconv_layers; ++i) {
    const std::string n = "laneconv" + std::to_string(i);
    LaneConvLayer l;
    l.w = linear_param(n + ".w", relations * cfg_.d_ls, cfg_.d_ls, false, cfg_.d_ls);
    l.n1 = norm_param(n + ".ln1", cfg_.d_ls);
    l.out = linear_param(n + ".out", cfg_.d_ls, cfg_.d_ls, false);
    l.n2 = norm_param(n + ".ln2", cfg_.d_ls);
    laneconv_.push_back(l);
  }

  make_gat("gat.agt2ls", cfg_.d_ls, cfg_.d_agt);
  make_gat("gat.da2ls", cfg_.d_ls, cfg_.d_da);
  make_gat("gat.ls2da", cfg_.d_da, cfg_.d_ls);
  make_gat("gat.ls2agt", cfg_.d_agt, cfg_.d_ls);
  make_gat("gat.da2agt", cfg_.d_agt, cfg_.d_da);
  make_gat("gat.agt2agt", cfg_.d_agt, cfg_.d_agt);

  heat1_ = dense_param("heatmap.l1", cfg_.d_da, cfg_.d_da);
  heat2_ = linear_param("heatmap.l2", cfg_.d_da, 1, true);

  dec_emb1_ = dense_param("decoder.emb1", cfg_.d_da + 1 + 2, cfg_.d_dec);
  dec_emb2_ = dense_param("decoder.emb2", cfg_.d_dec, cfg_.d_dec);
  dec_q_ = linear_param("decoder.q", cfg_.d_dec, cfg_.d_dec, false);
  dec_k_ = linear_param("decoder.k", cfg_.d_dec, cfg_.d_dec, false);
  dec_v_ = linear_param("decoder.v", cfg_.d_dec, cfg_.d_dec, false);
  dec_o_ = linear_param("decoder.o", cfg_.d_dec, cfg_.d_dec, false);
  dec_att_norm_ = norm_param("decoder.att_ln", cfg_.d_dec);
  for (int m = 0; m < cfg_.M; ++m) {
    const std::string n = "decoder.header" + std::to_string(m);
    dec_headers_.emplace_back(dense_param(n + ".l1", cfg_.d_dec, cfg_.d_dec), linear_param(n + ".l2", cfg_.d_dec, 1, false));
  }

  comp_in_ = dense_param("completion.in", cfg_.d_agt + 2, cfg_.d_comp);
  comp_res_ = res_param("completion.res", cfg_.d_comp);
  comp_out_ = linear_param("completion.out", cfg_.d_comp, 2 * cfg_.H, true);
}

// ---------------------------------------------------------------------------
// Building blocks

Var DSPNet::apply(Tape& t, const Linear& l, Var x) const {
  return diff::linear(x, t.param(*l.w), l.b ? t.param(*l.b) : Var{});
}

Var DSPNet::apply(Tape& t, const Norm& n, Var x) const {
  return diff::layer_norm(x, t.param(*n.g), t.param(*n.b));
}

Var DSPNet::sigma(Tape& t, const Norm& n, Var x) const { return diff::relu(apply(t, n, x)); }

Var DSPNet::dense(Tape& t, const Dense& d, Var x) const { return apply(t, d.norm, apply(t, d.lin, x)); }

Var DSPNet::conv1d(Tape& t, const Dense& c, Var x, int T) const {
  Var window = diff::concat({diff::temporal_shift(x, T, -1), x, diff::temporal_shift(x, T, 1)});
  return dense(t, c, window);
}

Var DSPNet::residual(Tape& t, const ResBlock& r, Var x, int T) const {
  auto step = [&](const Dense& d, Var v) { return T > 0 ? conv1d(t, d, v, T) : dense(t, d, v); };
  Var h = diff::relu(step(r.a, x));
  return diff::relu(diff::add(step(r.b, h), x));
}

Var DSPNet::agent_encoder(Tape& t, const Matrix& states, int num_agents, int T) const {
  if (states.cols() != 5 || states.rows() != static_cast<Eigen::Index>(num_agents) * T) {
    throw Error(ErrorCode::ShapeMismatch, "agent states are (" + std::to_string(states.rows()) + ", " +
                                              std::to_string(states.cols()) + "), expected (" +
                                              std::to_string(num_agents * T) + ", 5)");
  }
  Var x = t.constant(states);
  Var h = diff::relu(conv1d(t, agt_in_, x, T));
  h = residual(t, agt_res1_, h, T);
  h = diff::relu(conv1d(t, agt_up_, h, T));
  h = residual(t, agt_res2_, h, T);

  std::vector<int> last(static_cast<std::size_t>(num_agents));
  std::vector<std::vector<int>> sets(static_cast<std::size_t>(num_agents));
  for (int a = 0; a < num_agents; ++a) {
    last[static_cast<std::size_t>(a)] = a * T + T - 1;
    auto& s = sets[static_cast<std::size_t>(a)];
    s.resize(static_cast<std::size_t>(T));
    std::iota(s.begin(), s.end(), a * T);
  }
  Var pooled = diff::max_pool_sets(h, SparsePattern::from_rows(sets, num_agents * T));
  Var cur = diff::gather_rows(h, last);
  return diff::relu(dense(t, agt_out_, diff::concat({cur, pooled})));
}

Var DSPNet::da_input_net(Tape& t, const Matrix& x) const {
  if (x.cols() != 2 + cfg_.T) {
    throw Error(ErrorCode::ShapeMismatch, "DA input has " + std::to_string(x.cols()) + " columns, expected 2 + T = " +
                                              std::to_string(2 + cfg_.T));
  }
  Var h = diff::relu(dense(t, da_in1_, t.constant(x)));
  return diff::relu(dense(t, da_in2_, h));
}

Var DSPNet::ls_input_net(Tape& t, const Matrix& x) const {
  if (x.cols() != kLSFeatureDim) throw Error(ErrorCode::ShapeMismatch, "LS input must have 8 columns");
  Var h = diff::relu(dense(t, ls_in1_, t.constant(x)));
  return diff::relu(dense(t, ls_in2_, h));
}

Var DSPNet::da_block(Tape& t, Var u, const std::vector<SparsePattern>& neighbors, int block) const {
  const auto& layers = da_blocks_.at(static_cast<std::size_t>(block));
  if (neighbors.size() < layers.size()) throw Error(ErrorCode::ShapeMismatch, "fewer neighbor tables than DA layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const DALayer& l = layers[k];
    Var h = sigma(t, l.n1, apply(t, l.w1, u));
    Var pooled = diff::max_pool_sets(h, neighbors[k]);
    Var z = sigma(t, l.n2, apply(t, l.w2, diff::concat({u, pooled})));
    u = sigma(t, l.n3, diff::add(u, apply(t, l.w3, z)));
  }
  return u;
}

Var DSPNet::laneconv(Tape& t, Var v, const SceneInput& in, int layer) const {
  const LaneConvLayer& l = laneconv_.at(static_cast<std::size_t>(layer));
  std::vector<Var> parts{v, diff::sparse_adj_matmul(in.ls_left, v), diff::sparse_adj_matmul(in.ls_right, v)};
  for (int k = 0; k < cfg_.L; ++k) {
    parts.push_back(diff::sparse_adj_matmul(in.ls_pre.at(static_cast<std::size_t>(k)), v));
    parts.push_back(diff::sparse_adj_matmul(in.ls_suc.at(static_cast<std::size_t>(k)), v));
  }
  Var y = sigma(t, l.n1, apply(t, l.w, diff::concat(std::span<const Var>(parts))));
  y = apply(t, l.n2, apply(t, l.out, y));
  return diff::relu(diff::add(y, v));
}

Var DSPNet::gat(Tape& t, Var targets, Var contexts, const EdgeList& edges, const std::string& name) const {
  const GatParams& g = gats_.at(name);
  if (edges.source.size() != edges.target.size()) throw Error(ErrorCode::ShapeMismatch, name + ": ragged edge list");
  if (edges.size() == 0) return targets;
  const auto Nt = targets.rows();
  const auto Nc = contexts.rows();

  // Canonical (target, context) order makes the sums independent of edge order.
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (edges.target[a] != edges.target[b]) return edges.target[a] < edges.target[b];
    return edges.source[a] < edges.source[b];
  });
  std::vector<int> src(order.size()), tgt(order.size());
  std::vector<bool> has_context(static_cast<std::size_t>(Nt), false);
  for (std::size_t e = 0; e < order.size(); ++e) {
    src[e] = edges.source[order[e]];
    tgt[e] = edges.target[order[e]];
    if (src[e] < 0 || src[e] >= Nc || tgt[e] < 0 || tgt[e] >= Nt) {
      throw Error(ErrorCode::ShapeMismatch, name + ": edge (" + std::to_string(src[e]) + ", " + std::to_string(tgt[e]) +
                                                ") out of range");
    }
    has_context[static_cast<std::size_t>(tgt[e])] = true;
  }

  Var q = apply(t, g.w_tgt, targets);
  Var k = apply(t, g.w_ctx, contexts);
  Var logits = diff::leaky_relu(
      apply(t, g.w_att, diff::concat({diff::gather_rows(q, tgt), diff::gather_rows(k, src)})));
  Var alpha = diff::segment_softmax(logits, tgt, Nt);
  Var pooled = diff::scatter_sum_rows(diff::mul_rows(diff::gather_rows(contexts, src), alpha), tgt, Nt);
  Var msg = apply(t, g.w1, pooled);
  Var upd = apply(t, g.norm, apply(t, g.w2, diff::concat({targets, msg})));
  upd = diff::leaky_relu(diff::add(upd, targets));
  return diff::select_rows(has_context, upd, targets);
}

Var DSPNet::heatmap_head(Tape& t, Var da) const {
  Var h = diff::relu(dense(t, heat1_, da));
  return diff::sigmoid(apply(t, heat2_, h));
}

SceneFeatures DSPNet::forward(Tape& t, const SceneInput& in) const {
  if (in.T != cfg_.T || in.H != cfg_.H) {
    throw Error(ErrorCode::ShapeMismatch, "scene horizon (T = " + std::to_string(in.T) + ", H = " + std::to_string(in.H) +
                                              ") differs from the network's (T = " + std::to_string(cfg_.T) +
                                              ", H = " + std::to_string(cfg_.H) + ")");
  }
  SceneFeatures f;
  f.agents = agent_encoder(t, in.agent_states, in.num_agents, in.T);
  Var da = da_input_net(t, in.da_input);
  Var ls = ls_input_net(t, in.ls_input);

  for (int b = 0; b < cfg_.num_da_blocks; ++b) da = da_block(t, da, in.da_neighbors, b);

  ls = gat(t, ls, f.agents, in.agent_to_ls, "gat.agt2ls");
  ls = gat(t, ls, da, in.da_to_ls, "gat.da2ls");
  for (int l = 0; l < cfg_.num_laneconv_layers; ++l) ls = laneconv(t, ls, in, l);

  da = gat(t, da, ls, in.ls_to_da, "gat.ls2da");
  f.agents = gat(t, f.agents, ls, in.ls_to_agent, "gat.ls2agt");
  da = da_block(t, da, in.da_neighbors, cfg_.num_da_blocks);

  f.da = da;
  f.ls = ls;
  f.heatmap = heatmap_head(t, da);
  return f;
}

GoalHypotheses DSPNet::decode_goals(Tape& t, const SceneFeatures& f, const SceneInput& in) const {
  const Matrix& heat = f.heatmap.value();
  const int N = static_cast<int>(heat.rows());
  const int k_sel = std::min(cfg_.K_sel, N);
  std::vector<int> idx(static_cast<std::size_t>(N));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k_sel, idx.end(), [&](int a, int b) {
    if (heat(a, 0) != heat(b, 0)) return heat(a, 0) > heat(b, 0);
    return a < b;
  });
  idx.resize(static_cast<std::size_t>(k_sel));

  Matrix pos(k_sel, 2);
  for (int c = 0; c < k_sel; ++c) pos.row(c) = in.da_positions.row(idx[static_cast<std::size_t>(c)]);
  const Matrix coords = pos * cfg_.coord_scale;

  // The selection itself is piecewise constant; the selected scores stay differentiable.
  Var feat = diff::gather_rows(f.da, idx);
  Var score = diff::gather_rows(f.heatmap, idx);
  Var emb = diff::relu(dense(t, dec_emb1_, diff::concat({feat, score, t.constant(coords)})));
  emb = diff::relu(dense(t, dec_emb2_, emb));

  Var q = apply(t, dec_q_, emb);
  Var k = apply(t, dec_k_, emb);
  Var v = apply(t, dec_v_, emb);
  Var att = diff::softmax(diff::scale(diff::matmul_nt(q, k), 1.0 / std::sqrt(static_cast<double>(cfg_.d_dec))), 1);
  emb = diff::relu(apply(t, dec_att_norm_, diff::add(emb, apply(t, dec_o_, diff::matmul(att, v)))));

  std::vector<Var> logits;
  for (const auto& [l1, l2] : dec_headers_) logits.push_back(apply(t, l2, diff::relu(dense(t, l1, emb))));
  Var gamma_t = diff::softmax(diff::concat(std::span<const Var>(logits)), 0);  // K' x M

  GoalHypotheses out;
  out.gamma = diff::transpose(gamma_t);
  out.goals = diff::matmul(out.gamma, t.constant(pos));
  out.candidates = std::move(idx);
  return out;
}

Var DSPNet::target_context(Tape& t, const SceneFeatures& f, const SceneInput& in) const {
  Var a = gat(t, f.agents, f.da, in.da_to_agent, "gat.da2agt");
  a = gat(t, a, a, in.agent_to_agent, "gat.agt2agt");
  return diff::gather_rows(a, std::vector<int>{in.target});
}

Var DSPNet::complete(Tape& t, Var context, Var goals) const {
  const int H = cfg_.H;
  if (context.rows() != 1 || context.cols() != cfg_.d_agt) throw Error(ErrorCode::ShapeMismatch, "completion context must be 1 x d_agt");
  if (goals.cols() != 2) throw Error(ErrorCode::ShapeMismatch, "goals must have 2 columns");

  const auto G = goals.rows();
  Var rep = diff::gather_rows(context, std::vector<int>(static_cast<std::size_t>(G), 0));
  Var h = diff::relu(dense(t, comp_in_, diff::concat({rep, diff::scale(goals, cfg_.coord_scale)})));
  h = residual(t, comp_res_, h, 0);
  Var offsets = diff::scale(apply(t, comp_out_, h), 1.0 / cfg_.coord_scale);

  // Straight-line interpolation toward the goal; the MLP predicts the deviation.
  Matrix ramp = Matrix::Zero(2, 2 * H);
  for (int s = 0; s < H; ++s) {
    ramp(0, 2 * s) = static_cast<double>(s + 1) / H;
    ramp(1, 2 * s + 1) = static_cast<double>(s + 1) / H;
  }
  return diff::add(diff::matmul(goals, t.constant(ramp)), offsets);
}

}  // namespace dsp
