#pragma once

#include <map>
#include <string>
#include <vector>

#include "dsp/da_graph.hpp"
#include "dsp/diff/ops.hpp"
#include "dsp/diff/param_store.hpp"
#include "dsp/ls_graph.hpp"
#include "dsp/scenario.hpp"

namespace dsp {

struct NetConfig {
  int d_da = 32;
  int d_ls = 128;
  int d_agt = 128;
  int K = 4;  // DA dilation layers per block
  int L = 4;  // LaneConv dilation levels
  int num_da_blocks = 2;
  int num_laneconv_layers = 2;
  int M = 6;       // goal headers
  int K_sel = 64;  // heatmap candidates fed to the goal decoder
  int d_dec = 64;  // goal decoder embedding width
  int d_comp = 128;  // completion hidden width
  int T = 20;  // observed steps
  int H = 30;  // predicted steps
  double coord_scale = 0.1;  // meters -> network input units

  void validate() const;  // InvalidConfig unless every size is positive
};

/// Directed edges, context `source[e]` -> target `target[e]`.
struct EdgeList {
  std::vector<int> source;
  std::vector<int> target;

  std::size_t size() const { return source.size(); }
  static EdgeList from_pairs(const PairList& p);
};

/// Dense inputs and sparse structure of one normalized scene.
struct SceneInput {
  int T = 20;
  int H = 30;
  int num_agents = 0;
  int target = 0;  // row of the target agent
  diff::Matrix agent_states;  // (num_agents * T) x 5, oldest state first per agent
  diff::Matrix da_input;      // N_da x (2 + T)
  diff::Matrix da_positions;  // N_da x 2, meters
  diff::Matrix ls_input;      // N_ls x 8
  std::vector<diff::SparsePattern> da_neighbors;  // [k]: N(i, k)
  diff::SparsePattern ls_left, ls_right;
  std::vector<diff::SparsePattern> ls_pre, ls_suc;  // [l]: 2^l-hop relations
  EdgeList agent_to_ls, da_to_ls, ls_to_da, ls_to_agent, da_to_agent, agent_to_agent;
};

SceneInput make_scene_input(const Scenario& normalized, const DAGraph& da, const LSGraph& ls,
                            const InterLayerEdges& edges, const std::vector<std::uint8_t>& occ,
                            const NetConfig& cfg);

struct SceneFeatures {
  diff::Var agents;   // N_agt x d_agt
  diff::Var da;       // N_da x d_da
  diff::Var ls;       // N_ls x d_ls
  diff::Var heatmap;  // N_da x 1, in [0, 1]
};

/// Differentiable output of the learned goal decoder.
struct GoalHypotheses {
  diff::Var goals;  // M x 2, meters
  diff::Var gamma;  // M x K', rows sum to one
  std::vector<int> candidates;  // DA node of each of the K' columns
};

/// The full predictor. Parameters live in the ParamStore passed at
/// construction, which must outlive the network.
class DSPNet {
 public:
  DSPNet(const NetConfig& cfg, diff::ParamStore& store);

  const NetConfig& config() const { return cfg_; }
  diff::ParamStore& store() const { return *store_; }

  SceneFeatures forward(diff::Tape& t, const SceneInput& in) const;

  diff::Var agent_encoder(diff::Tape& t, const diff::Matrix& states, int num_agents, int T) const;
  diff::Var da_input_net(diff::Tape& t, const diff::Matrix& x) const;
  diff::Var ls_input_net(diff::Tape& t, const diff::Matrix& x) const;
  /// One block of K dilated layers; `block` selects the weights.
  diff::Var da_block(diff::Tape& t, diff::Var u, const std::vector<diff::SparsePattern>& neighbors, int block) const;
  diff::Var laneconv(diff::Tape& t, diff::Var v, const SceneInput& in, int layer) const;
  /// Attention from contexts onto targets along `edges`; `name` selects the weights.
  diff::Var gat(diff::Tape& t, diff::Var targets, diff::Var contexts, const EdgeList& edges,
                const std::string& name) const;
  diff::Var heatmap_head(diff::Tape& t, diff::Var da) const;

  GoalHypotheses decode_goals(diff::Tape& t, const SceneFeatures& f, const SceneInput& in) const;
  /// Target feature fused with DA context and the other agents (1 x d_agt).
  diff::Var target_context(diff::Tape& t, const SceneFeatures& f, const SceneInput& in) const;
  /// One trajectory per goal row: G x 2 goals -> G x (2H), rows [x0, y0, x1, y1, ...].
  diff::Var complete(diff::Tape& t, diff::Var context, diff::Var goals) const;

 private:
  struct Linear {
    diff::Parameter* w = nullptr;
    diff::Parameter* b = nullptr;
  };
  struct Norm {
    diff::Parameter* g = nullptr;
    diff::Parameter* b = nullptr;
  };
  Linear linear_param(const std::string& name, int in, int out, bool bias, int fan_in = 0);
  Norm norm_param(const std::string& name, int dim);
  diff::Var apply(diff::Tape& t, const Linear& l, diff::Var x) const;
  diff::Var apply(diff::Tape& t, const Norm& n, diff::Var x) const;
  /// LayerNorm + ReLU.
  diff::Var sigma(diff::Tape& t, const Norm& n, diff::Var x) const;

  struct GatParams {
    Linear w_tgt, w_ctx, w_att, w1, w2;
    Norm norm;
  };
  void make_gat(const std::string& name, int d_tgt, int d_ctx);

  struct Dense {
    Linear lin;
    Norm norm;
  };
  struct ResBlock {
    Dense a, b;
  };
  struct DALayer {
    Linear w1, w2, w3;
    Norm n1, n2, n3;
  };
  struct LaneConvLayer {
    Linear w;  // stacked [W_0; W_left; W_right; W_pre^l; W_suc^l ...]
    Norm n1;
    Linear out;
    Norm n2;
  };
  Dense dense_param(const std::string& name, int in, int out);
  ResBlock res_param(const std::string& name, int dim, int kernel = 1);
  /// LN(x W); the ReLU is left to the caller.
  diff::Var dense(diff::Tape& t, const Dense& d, diff::Var x) const;
  /// Kernel-3 temporal convolution over blocks of T rows, then LN.
  diff::Var conv1d(diff::Tape& t, const Dense& c, diff::Var x, int T) const;
  /// relu(x + LN(W_b relu(LN(W_a x)))), optionally as temporal convolutions.
  diff::Var residual(diff::Tape& t, const ResBlock& r, diff::Var x, int T) const;

  NetConfig cfg_;
  diff::ParamStore* store_;

  Dense agt_in_, agt_up_;
  ResBlock agt_res1_, agt_res2_;
  Dense agt_out_;

  Dense da_in1_, da_in2_;
  Dense ls_in1_, ls_in2_;

  std::vector<std::vector<DALayer>> da_blocks_;  // num_da_blocks + 1 (post-fusion block last)
  std::vector<LaneConvLayer> laneconv_;
  std::map<std::string, GatParams> gats_;

  Dense heat1_;
  Linear heat2_;

  Dense dec_emb1_, dec_emb2_;
  Linear dec_q_, dec_k_, dec_v_, dec_o_;
  Norm dec_att_norm_;
  std::vector<std::pair<Dense, Linear>> dec_headers_;

  Dense comp_in_;
  ResBlock comp_res_;
  Linear comp_out_;
};

}  // namespace dsp
