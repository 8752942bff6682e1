#pragma once

#include "gdm/graph.hpp"
#include "gdm/rng.hpp"
#include "gdm/tensor.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdm {

/// Three graph-convolution layers with relu, mean-pool readout and a dense
/// head: d -> h -> h -> h -> C. The conv weights form the feature extractor,
/// (head_weight, head_bias) the predictive head.
struct GcnModel {
  int input_dim = 0;
  int hidden_dim = 0;
  int num_classes = 0;
  std::array<Matrix, 3> conv_weight;
  std::array<Matrix, 3> conv_bias;
  Matrix head_weight;
  Matrix head_bias;

  std::vector<Matrix*> extractor_params() {
    return {&conv_weight[0], &conv_bias[0], &conv_weight[1], &conv_bias[1], &conv_weight[2], &conv_bias[2]};
  }
  std::vector<const Matrix*> extractor_params() const {
    return {&conv_weight[0], &conv_bias[0], &conv_weight[1], &conv_bias[1], &conv_weight[2], &conv_bias[2]};
  }
  std::vector<Matrix*> head_params() { return {&head_weight, &head_bias}; }
  std::vector<const Matrix*> head_params() const { return {&head_weight, &head_bias}; }

  std::vector<Matrix*> all_params() {
    auto p = extractor_params();
    for (Matrix* m : head_params()) p.push_back(m);
    return p;
  }
  std::vector<const Matrix*> all_params() const {
    auto p = extractor_params();
    for (const Matrix* m : head_params()) p.push_back(m);
    return p;
  }

  bool operator==(const GcnModel& o) const {
    if (input_dim != o.input_dim || hidden_dim != o.hidden_dim || num_classes != o.num_classes) return false;
    const auto a = all_params(), b = o.all_params();
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i]->rows() != b[i]->rows() || a[i]->cols() != b[i]->cols() || *a[i] != *b[i]) return false;
    return true;
  }
};

inline constexpr int kDefaultHiddenDim = 256;

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
inline GcnModel init_model(int input_dim, int hidden_dim, int num_classes, std::uint64_t seed) {
  if (input_dim <= 0 || hidden_dim <= 0 || num_classes <= 0)
    throw std::invalid_argument("init_model: dimensions must be positive");
  Rng rng(derive_seed(seed, "gcn-init"));
  const auto uniform = [&rng](int rows, int cols) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
    Matrix w(rows, cols);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
    return w;
  };
  GcnModel m;
  m.input_dim = input_dim;
  m.hidden_dim = hidden_dim;
  m.num_classes = num_classes;
  m.conv_weight[0] = uniform(input_dim, hidden_dim);
  m.conv_weight[1] = uniform(hidden_dim, hidden_dim);
  m.conv_weight[2] = uniform(hidden_dim, hidden_dim);
  for (auto& b : m.conv_bias) b = Matrix::Zero(1, hidden_dim);
  m.head_weight = uniform(hidden_dim, num_classes);
  m.head_bias = Matrix::Zero(1, num_classes);
  return m;
}

/// A model's parameters bound to one tape.
struct ModelVars {
  std::array<tg::Var, 3> conv_weight;
  std::array<tg::Var, 3> conv_bias;
  tg::Var head_weight;
  tg::Var head_bias;
  int input_dim = 0;

  std::vector<tg::Var> extractor() const {
    return {conv_weight[0], conv_bias[0], conv_weight[1], conv_bias[1], conv_weight[2], conv_bias[2]};
  }
  std::vector<tg::Var> head() const { return {head_weight, head_bias}; }
};

inline ModelVars bind_model(tg::Tape& tape, const GcnModel& m, bool grad_extractor, bool grad_head) {
  ModelVars v;
  for (std::size_t l = 0; l < 3; ++l) {
    v.conv_weight[l] = tape.leaf(m.conv_weight[l], grad_extractor);
    v.conv_bias[l] = tape.leaf(m.conv_bias[l], grad_extractor);
  }
  v.head_weight = tape.leaf(m.head_weight, grad_head);
  v.head_bias = tape.leaf(m.head_bias, grad_head);
  v.input_dim = m.input_dim;
  return v;
}

/// Graph embedding f(A, X): three relu(A_norm H W + b) layers, then the mean
/// over nodes. Differentiable in the parameters, `a_norm` and `x`.
inline tg::Var gcn_embed(const ModelVars& mv, tg::Var a_norm, tg::Var x) {
  if (x.cols() != mv.input_dim)
    throw std::invalid_argument("gcn_embed: feature dim " + std::to_string(x.cols()) + " != model input dim " +
                                std::to_string(mv.input_dim));
  if (a_norm.rows() != x.rows() || a_norm.cols() != x.rows())
    throw std::invalid_argument("gcn_embed: adjacency " + tg::shape_str(a_norm.value()) + " vs features " +
                                tg::shape_str(x.value()));
  tg::Var h = x;
  for (std::size_t l = 0; l < 3; ++l) {
    tg::Var z = h.cols() <= mv.conv_weight[l].cols() ? tg::matmul(tg::matmul(a_norm, h), mv.conv_weight[l])
                                                     : tg::matmul(a_norm, tg::matmul(h, mv.conv_weight[l]));
    h = tg::relu(tg::add(z, mv.conv_bias[l]));
  }
  return tg::row_mean(h);
}

/// Embedding of a dataset graph (constant adjacency and features).
inline tg::Var gcn_embed(const ModelVars& mv, tg::Tape& tape, const Graph& g) {
  return gcn_embed(mv, tape.constant(normalize_adjacency(g.adjacency)), tape.constant(g.features));
}

inline tg::Var gcn_head(const ModelVars& mv, tg::Var embedding) {
  return tg::add(tg::matmul(embedding, mv.head_weight), mv.head_bias);
}

/// Embedding value (1 x h) without gradient bookkeeping.
inline Matrix gcn_embed(const GcnModel& m, const Graph& g) {
  if (g.features.cols() != m.input_dim)
    throw std::invalid_argument("gcn_embed: graph feature dim " + std::to_string(g.features.cols()) +
                                " != model input dim " + std::to_string(m.input_dim));
  const Matrix a = normalize_adjacency(g.adjacency);
  Matrix h = g.features;
  for (std::size_t l = 0; l < 3; ++l) {
    Matrix z = h.cols() <= m.conv_weight[l].cols() ? Matrix((a * h) * m.conv_weight[l]) : Matrix(a * (h * m.conv_weight[l]));
    z.rowwise() += m.conv_bias[l].row(0);
    h = z.cwiseMax(0.0);
  }
  return h.colwise().mean();
}

/// Class scores (1 x C).
inline Matrix gcn_logits(const GcnModel& m, const Graph& g) {
  if (g.features.cols() != m.input_dim)
    throw std::invalid_argument("gcn_logits: graph feature dim " + std::to_string(g.features.cols()) +
                                " != model input dim " + std::to_string(m.input_dim));
  Matrix logits = gcn_embed(m, g) * m.head_weight;
  logits += m.head_bias;
  return logits;
}

/// Argmax with ties to the lowest class index.
inline int argmax_row(const Matrix& row) {
  int best = 0;
  for (Index c = 1; c < row.cols(); ++c)
    if (row(0, c) > row(0, best)) best = static_cast<int>(c);
  return best;
}

inline int predict(const GcnModel& m, const Graph& g) { return argmax_row(gcn_logits(m, g)); }

inline double accuracy(const GcnModel& m, std::span<const Graph* const> graphs) {
  if (graphs.empty()) throw std::invalid_argument("accuracy: empty graph set");
  std::size_t hit = 0;
  for (const Graph* g : graphs)
    if (predict(m, *g) == g->label) ++hit;
  return 100.0 * static_cast<double>(hit) / static_cast<double>(graphs.size());
}

/// Mean cross-entropy over the batch. When `embeddings` is given it receives
/// the per-graph embedding nodes in batch order.
inline tg::Var ce_loss(const ModelVars& mv, tg::Tape& tape, std::span<const Graph* const> batch,
                       std::vector<tg::Var>* embeddings = nullptr) {
  if (batch.empty()) throw std::invalid_argument("ce_loss: empty batch");
  std::vector<tg::Var> logits;
  std::vector<int> labels;
  logits.reserve(batch.size());
  for (const Graph* g : batch) {
    tg::Var e = gcn_embed(mv, tape, *g);
    if (embeddings) embeddings->push_back(e);
    logits.push_back(gcn_head(mv, e));
    labels.push_back(g->label);
  }
  return tg::nll(tg::log_softmax(tg::concat_rows(logits)), labels);
}

inline double ce_loss_value(const GcnModel& m, std::span<const Graph* const> batch) {
  tg::Tape tape;
  return ce_loss(bind_model(tape, m, false, false), tape, batch).item();
}

/// Adam with bias correction over a fixed list of parameter tensors.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

inline AdamState make_adam(std::span<const Matrix* const> params, double lr) {
  AdamState s;
  s.lr = lr;
  for (const Matrix* p : params) {
    s.m.push_back(Matrix::Zero(p->rows(), p->cols()));
    s.v.push_back(Matrix::Zero(p->rows(), p->cols()));
  }
  return s;
}

inline void adam_step(AdamState& s, std::span<Matrix* const> params, std::span<const Matrix> grads) {
  if (params.size() != grads.size() || params.size() != s.m.size())
    throw std::invalid_argument("adam_step: " + std::to_string(params.size()) + " params, " +
                                std::to_string(grads.size()) + " grads, " + std::to_string(s.m.size()) +
                                " moment buffers");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols() ||
        s.m[i].rows() != grads[i].rows() || s.m[i].cols() != grads[i].cols())
      throw std::invalid_argument("adam_step: shape mismatch at parameter " + std::to_string(i) + ": " +
                                  tg::shape_str(*params[i]) + " vs grad " + tg::shape_str(grads[i]));
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i].cwiseAbs2();
    *params[i] -= (s.lr * (s.m[i].array() / c1) / ((s.v[i].array() / c2).sqrt() + s.eps)).matrix();
  }
}

/// Optimizer pair for one model: feature extractor and predictive head.
struct ModelOptimizer {
  AdamState extractor;
  AdamState head;
};

inline ModelOptimizer make_optimizer(const GcnModel& m, double lr_extractor, double lr_head) {
  const auto ep = m.extractor_params();
  const auto hp = m.head_params();
  return {make_adam(ep, lr_extractor), make_adam(hp, lr_head)};
}

/// Cross-entropy gradients of one batch at the current parameters, plus the
/// per-graph embedding values of the forward pass.
struct CeGradients {
  double loss = 0.0;
  std::vector<Matrix> extractor;
  std::vector<Matrix> head;
  std::vector<Matrix> embeddings;
};

inline CeGradients ce_gradients(const GcnModel& model, std::span<const Graph* const> batch) {
  tg::Tape tape;
  const ModelVars mv = bind_model(tape, model, true, true);
  std::vector<tg::Var> emb;
  tg::Var loss = ce_loss(mv, tape, batch, &emb);
  tape.backward(loss);
  CeGradients out;
  out.loss = loss.item();
  for (const tg::Var& v : mv.extractor()) out.extractor.push_back(v.grad());
  for (const tg::Var& v : mv.head()) out.head.push_back(v.grad());
  for (const tg::Var& e : emb) out.embeddings.push_back(e.value());
  return out;
}

inline void apply_gradients(GcnModel& model, ModelOptimizer& opt, const CeGradients& g) {
  adam_step(opt.extractor, model.extractor_params(), g.extractor);
  adam_step(opt.head, model.head_params(), g.head);
}

/// One Adam update of both parameter groups on the batch cross-entropy.
/// Returns the loss before the update.
inline double train_model_step(GcnModel& model, std::span<const Graph* const> batch, ModelOptimizer& opt) {
  const CeGradients g = ce_gradients(model, batch);
  apply_gradients(model, opt, g);
  return g.loss;
}

}  // namespace gdm
