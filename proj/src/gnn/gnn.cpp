#include "gcbf/gnn/gnn.hpp"

#include <cmath>

#include "gcbf/error.hpp"
#include "gcbf/numerics/eigen_bridge.hpp"

namespace gcbf::gnn {

namespace {

constexpr std::size_t kWide = 256;
constexpr std::size_t kNarrow = 128;

// Orthogonal rows or columns (whichever is fewer) scaled by gain.
Tensor orthogonal(num::Rng& rng, std::size_t rows, std::size_t cols, double gain) {
  const auto big = static_cast<Eigen::Index>(std::max(rows, cols));
  const auto small = static_cast<Eigen::Index>(std::min(rows, cols));
  Mat a(big, small);
  for (Eigen::Index c = 0; c < small; ++c) {
    for (Eigen::Index r = 0; r < big; ++r) a(r, c) = rng.normal();
  }
  Eigen::HouseholderQR<Mat> qr(a);
  Mat q = qr.householderQ() * Mat::Identity(big, small);
  const Mat rr = qr.matrixQR();
  for (Eigen::Index c = 0; c < small; ++c) {
    if (rr(c, c) < 0) q.col(c) *= -1.0;
  }
  if (rows < cols) q.transposeInPlace();
  return num::from_eigen(gain * q);
}

Mlp make_mlp(num::Rng& rng, std::size_t in, std::vector<std::size_t> hidden, std::size_t out, double out_gain) {
  Mlp m;
  std::size_t prev = in;
  hidden.push_back(out);
  for (std::size_t k = 0; k < hidden.size(); ++k) {
    const bool last = k + 1 == hidden.size();
    const double gain = last ? out_gain : std::sqrt(2.0);
    m.weights.push_back(gain == 0.0 ? Tensor::matrix(prev, hidden[k]) : orthogonal(rng, prev, hidden[k], gain));
    m.biases.push_back(Tensor::matrix(1, hidden[k]));
    prev = hidden[k];
  }
  return m;
}

GnnNet make_net(num::Rng& rng, std::size_t in, std::size_t out, double out_gain) {
  GnnNet n;
  n.psi1 = make_mlp(rng, in, {kWide, kWide}, kNarrow, 1.0);
  n.psi2 = make_mlp(rng, kNarrow, {kNarrow, kNarrow}, 1, 1.0);
  n.psi3 = make_mlp(rng, kNarrow, {kWide, kWide}, kNarrow, 1.0);
  n.psi4 = make_mlp(rng, kNarrow, {kWide, kWide}, out, out_gain);
  return n;
}

template <class Net, class Fn>
void for_each_mlp(Net& net, Fn&& fn) {
  fn(net.psi1, "psi1");
  fn(net.psi2, "psi2");
  fn(net.psi3, "psi3");
  fn(net.psi4, "psi4");
}

template <class P, class T>
void collect(P& p, std::vector<T>& out) {
  for (auto* net : {&p.cert, &p.policy}) {
    for_each_mlp(*net, [&](auto& m, const char*) {
      for (std::size_t k = 0; k < m.weights.size(); ++k) {
        out.push_back(&m.weights[k]);
        out.push_back(&m.biases[k]);
      }
    });
  }
}

MlpVars bind_mlp(Tape& t, const Mlp& m, bool trainable) {
  MlpVars v;
  for (std::size_t k = 0; k < m.weights.size(); ++k) {
    v.weights.push_back(trainable ? t.input(m.weights[k]) : t.constant(m.weights[k]));
    v.biases.push_back(trainable ? t.input(m.biases[k]) : t.constant(m.biases[k]));
  }
  return v;
}

struct SingleGraph {
  Tape tape;
  GraphBatch batch;
  num::Index offsets;
  Var z;
};

void prepare(SingleGraph& s, const world::SceneGraph& g) {
  s.batch = make_batch({&g});
  s.offsets = make_index(s.batch.offsets);
  s.z = s.tape.constant(to_tensor(s.batch.z));
}

}  // namespace

std::vector<Tensor*> GnnParams::tensors() {
  std::vector<Tensor*> out;
  collect(*this, out);
  return out;
}

std::vector<const Tensor*> GnnParams::tensors() const {
  std::vector<const Tensor*> out;
  collect(*this, out);
  return out;
}

std::vector<std::string> GnnParams::tensor_names() const {
  std::vector<std::string> names;
  for (const auto& [net, prefix] : {std::pair{&cert, "cert"}, std::pair{&policy, "policy"}}) {
    for_each_mlp(*net, [&](const Mlp& m, const char* name) {
      for (std::size_t k = 0; k < m.weights.size(); ++k) {
        names.push_back(std::string(prefix) + "." + name + ".w" + std::to_string(k));
        names.push_back(std::string(prefix) + "." + name + ".b" + std::to_string(k));
      }
    });
  }
  return names;
}

std::size_t GnnParams::cert_tensor_count() const {
  std::size_t n = 0;
  for_each_mlp(cert, [&](const Mlp& m, const char*) { n += 2 * m.weights.size(); });
  return n;
}

bool GnnParams::all_finite() const {
  for (const Tensor* t : tensors()) {
    if (!t->all_finite()) return false;
  }
  return true;
}

std::uint64_t fingerprint(const GnnParams& p) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= b[k];
      h *= 1099511628211ull;
    }
  };
  const int env = static_cast<int>(p.env);
  mix(&env, sizeof env);
  for (const Tensor* t : p.tensors()) {
    for (std::size_t d : t->shape()) mix(&d, sizeof d);
    mix(t->ptr(), t->size() * sizeof(double));
  }
  return h;
}

int edge_input_dim(dyn::EnvKind env) { return 6 + dyn::env_shape(env).edge_dim; }

GnnParams init_params(num::Rng& rng, dyn::EnvKind env) {
  GnnParams p;
  p.env = env;
  const auto in = static_cast<std::size_t>(edge_input_dim(env));
  num::Rng cr = rng.split(1), pr = rng.split(2);
  rng.next_u64();
  p.cert = make_net(cr, in, 1, 0.01);
  p.policy = make_net(pr, in, static_cast<std::size_t>(dyn::env_shape(env).m), 0.0);
  return p;
}

std::vector<Var> NetVars::all() const {
  std::vector<Var> out;
  for (const MlpVars* m : {&psi1, &psi2, &psi3, &psi4}) {
    for (std::size_t k = 0; k < m->weights.size(); ++k) {
      out.push_back(m->weights[k]);
      out.push_back(m->biases[k]);
    }
  }
  return out;
}

NetVars bind(Tape& tape, const GnnNet& net, bool trainable) {
  return {bind_mlp(tape, net.psi1, trainable), bind_mlp(tape, net.psi2, trainable),
          bind_mlp(tape, net.psi3, trainable), bind_mlp(tape, net.psi4, trainable)};
}

Var mlp_forward(Tape& tape, const MlpVars& mlp, Var x) {
  for (std::size_t k = 0; k < mlp.weights.size(); ++k) {
    x = tape.add(tape.matmul(x, mlp.weights[k]), mlp.biases[k]);
    if (k + 1 < mlp.weights.size()) x = tape.relu(x);
  }
  return x;
}

ForwardResult gnn_forward(Tape& tape, const NetVars& net, Var z, const num::Index& offsets) {
  const Var q = mlp_forward(tape, net.psi1, z);
  const Var w = tape.segment_softmax(mlp_forward(tape, net.psi2, q), offsets);
  const Var msg = mlp_forward(tape, net.psi3, q);
  const Var agg = tape.segment_sum(tape.mul(w, msg), offsets);
  return {mlp_forward(tape, net.psi4, agg), w};
}

GraphBatch make_batch(const std::vector<const world::SceneGraph*>& graphs) {
  GraphBatch b;
  std::size_t rows = 0;
  Eigen::Index cols = 0;
  for (const auto* g : graphs) {
    rows += g->edges.size();
    cols = 6 + g->edge_features.cols();
  }
  b.z.resize(static_cast<Eigen::Index>(rows), cols);
  b.offsets.push_back(0);
  b.first_agent.push_back(0);
  std::size_t edge0 = 0;
  int node0 = 0;
  for (const auto* g : graphs) {
    if (6 + g->edge_features.cols() != cols) throw ShapeError("graphs of different environments in one batch");
    const Mat z = world::edge_inputs(*g);
    b.z.middleRows(static_cast<Eigen::Index>(edge0), z.rows()) = z;
    for (int i = 0; i < g->n_agents; ++i) b.offsets.push_back(edge0 + g->offsets[i + 1]);
    for (const auto& e : g->edges) b.senders.push_back(node0 + e.sender);
    edge0 += g->edges.size();
    node0 += g->n_nodes();
    b.first_agent.push_back(b.first_agent.back() + static_cast<std::size_t>(g->n_agents));
  }
  return b;
}

Tensor to_tensor(const Mat& m) { return num::from_eigen(m); }

num::Index make_index(std::vector<std::size_t> v) {
  return std::make_shared<const std::vector<std::size_t>>(std::move(v));
}

Vec certificate_values(const GnnParams& p, const world::SceneGraph& g) {
  SingleGraph s;
  prepare(s, g);
  const auto r = gnn_forward(s.tape, bind(s.tape, p.cert, false), s.z, s.offsets);
  return num::to_eigen(r.out.value()).col(0);
}

double gcbf_forward(const GnnParams& p, const world::SceneGraph& g, int i) { return certificate_values(p, g)[i]; }

Mat policy_deviation(const GnnParams& p, const world::SceneGraph& g) {
  SingleGraph s;
  prepare(s, g);
  const auto r = gnn_forward(s.tape, bind(s.tape, p.policy, false), s.z, s.offsets);
  return num::to_eigen(r.out.value());
}

std::vector<Vec> policy_actions(const GnnParams& p, const world::SceneGraph& g, const dyn::Dynamics& d,
                                const std::vector<Vec>& u_nom) {
  const Mat dev = policy_deviation(p, g);
  std::vector<Vec> out;
  for (int i = 0; i < g.n_agents; ++i) out.push_back(d.clamp(dev.row(i).transpose() + u_nom[i]));
  return out;
}

Vec policy_forward(const GnnParams& p, const world::SceneGraph& g, const dyn::Dynamics& d, int i,
                   const Vec& u_nom_i) {
  return d.clamp(policy_deviation(p, g).row(i).transpose() + u_nom_i);
}

Vec all_attention_weights(const GnnParams& p, const world::SceneGraph& g) {
  SingleGraph s;
  prepare(s, g);
  const auto r = gnn_forward(s.tape, bind(s.tape, p.cert, false), s.z, s.offsets);
  return num::to_eigen(r.attention.value()).col(0);
}

std::vector<AttentionEntry> attention_weights(const GnnParams& p, const world::SceneGraph& g, int i) {
  const Vec w = all_attention_weights(p, g);
  std::vector<AttentionEntry> out;
  for (std::size_t k = g.offsets[i]; k < g.offsets[i + 1]; ++k) {
    out.push_back({g.edges[k].sender, w[static_cast<Eigen::Index>(k)]});
  }
  return out;
}

}  // namespace gcbf::gnn
