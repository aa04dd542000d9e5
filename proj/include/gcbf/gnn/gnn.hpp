#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcbf/dynamics/dynamics.hpp"
#include "gcbf/numerics/rng.hpp"
#include "gcbf/numerics/tape.hpp"
#include "gcbf/world/graph.hpp"

namespace gcbf::gnn {

using dyn::Mat;
using dyn::Vec;
using num::Tape;
using num::Tensor;
using num::Var;

// Fully connected stack; weights[k] is in x out, biases[k] is 1 x out.
struct Mlp {
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  std::size_t in_dim() const { return weights.front().rows(); }
  std::size_t out_dim() const { return weights.back().cols(); }
};

// psi1 encodes every edge input, psi2 scores it, psi3 maps it to a message and
// psi4 reads out the attention-weighted message sum.
struct GnnNet {
  Mlp psi1, psi2, psi3, psi4;
};

struct GnnParams {
  dyn::EnvKind env = dyn::EnvKind::DoubleIntegrator;
  GnnNet cert;    // h_theta, scalar output
  GnnNet policy;  // pi_NN, m outputs

  // Every tensor in a fixed order: certificate first, then policy; within a
  // network psi1..psi4, weights before biases layer by layer.
  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  std::vector<std::string> tensor_names() const;
  std::size_t cert_tensor_count() const;
  bool all_finite() const;
};

// FNV-1a over the environment and every tensor's shape and bytes.
std::uint64_t fingerprint(const GnnParams& p);

// Layer sizes: psi1 (256, 256) -> 128, psi2 (128, 128) -> 1, psi3 (256, 256) ->
// 128, psi4 (256, 256) -> 1 or m. Hidden layers are orthogonal with gain sqrt 2,
// the psi1..psi3 output layers orthogonal with gain 1, the certificate output
// layer orthogonal with gain 0.01 and the policy output layer zero. Biases are 0.
GnnParams init_params(num::Rng& rng, dyn::EnvKind env);

// Edge input width 3 + 3 + edge_dim.
int edge_input_dim(dyn::EnvKind env);

// Network weights recorded on a tape, as inputs (trainable) or constants.
struct MlpVars {
  std::vector<Var> weights, biases;
};
struct NetVars {
  MlpVars psi1, psi2, psi3, psi4;
  std::vector<Var> all() const;
};
NetVars bind(Tape& tape, const GnnNet& net, bool trainable);

// Relu between layers, linear output.
Var mlp_forward(Tape& tape, const MlpVars& mlp, Var x);

struct ForwardResult {
  Var out;        // one row per segment
  Var attention;  // |E| x 1
};

// Single round of attention aggregation over the rows of z grouped by offsets.
ForwardResult gnn_forward(Tape& tape, const NetVars& net, Var z, const num::Index& offsets);

// Several graphs concatenated into one segment layout.
struct GraphBatch {
  Mat z;                             // stacked edge inputs
  std::vector<std::size_t> offsets;  // one segment per agent of every graph
  std::vector<std::size_t> first_agent;  // graph k owns agents [first_agent[k], first_agent[k+1])
  std::vector<int> senders;          // global edge sender index, for introspection
  int n_agents() const { return static_cast<int>(offsets.size()) - 1; }
};
GraphBatch make_batch(const std::vector<const world::SceneGraph*>& graphs);

Tensor to_tensor(const Mat& m);
num::Index make_index(std::vector<std::size_t> v);

// h_i for every agent of a graph.
Vec certificate_values(const GnnParams& p, const world::SceneGraph& g);
double gcbf_forward(const GnnParams& p, const world::SceneGraph& g, int i);

// pi_NN for every agent (N x m), without the nominal term.
Mat policy_deviation(const GnnParams& p, const world::SceneGraph& g);
// clamp(pi_NN + u_nom) for every agent.
std::vector<Vec> policy_actions(const GnnParams& p, const world::SceneGraph& g, const dyn::Dynamics& d,
                                const std::vector<Vec>& u_nom);
Vec policy_forward(const GnnParams& p, const world::SceneGraph& g, const dyn::Dynamics& d, int i,
                   const Vec& u_nom_i);

struct AttentionEntry {
  int sender;
  double weight;
};
// Certificate attention weights of agent i, in edge order.
std::vector<AttentionEntry> attention_weights(const GnnParams& p, const world::SceneGraph& g, int i);
// All certificate attention weights, one per edge.
Vec all_attention_weights(const GnnParams& p, const world::SceneGraph& g);

}  // namespace gcbf::gnn
