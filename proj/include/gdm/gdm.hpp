#pragma once

// Interpretation synthesis by graph distribution matching: per-class
// interpretive graphs with Bernoulli edge logits are pulled towards the
// training data in the embedding space of the model as it trains.

#include "gdm/gcn.hpp"
#include "gdm/graph.hpp"
#include "gdm/rng.hpp"
#include "gdm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdm {

enum class Variant { full, first, last, ensemble, frozen };

inline std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::first: return "first";
    case Variant::last: return "last";
    case Variant::ensemble: return "ensemble";
    case Variant::frozen: return "frozen";
  }
  return "full";
}

inline Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::full, Variant::first, Variant::last, Variant::ensemble, Variant::frozen})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown variant '" + s + "' (valid: full, first, last, ensemble, frozen)");
}

struct GdmConfig {
  int graphs_per_class = 10;
  int iterations = 200;           // outer iterations per restart
  int restarts = 5;               // model re-initializations
  int interp_batch = 0;           // per class; 0 means min(graphs_per_class, 16)
  int train_batch = 64;           // per class, capped at the class size
  double lr_interp = 0.01;        // plain gradient step on the interpretations
  double lr_extractor = 1e-3;
  double lr_head = 1e-3;
  double alpha = 0.01;            // feature matching weight
  double beta = 0.1;              // sparsity matching weight
  double tau = 1.0;               // relaxation temperature
  int model_steps_per_iter = 1;
  Variant variant = Variant::full;
  std::uint64_t seed = 0;
  int hidden_dim = kDefaultHiddenDim;
  double init_logit = 3.0;        // |omega| at initialization
  int snapshot_every = 10;        // ensemble variant snapshot cadence

  int effective_interp_batch() const {
    return interp_batch > 0 ? std::min(interp_batch, graphs_per_class) : std::min(graphs_per_class, 16);
  }

  void validate() const {
    const auto require = [](bool ok, const char* field, const char* what) {
      if (!ok) throw std::invalid_argument(std::string("GdmConfig.") + field + ": " + what);
    };
    require(graphs_per_class >= 1, "graphs_per_class", "must be >= 1");
    require(iterations >= 1, "iterations", "must be >= 1");
    require(restarts >= 1, "restarts", "must be >= 1");
    require(interp_batch >= 0, "interp_batch", "must be >= 0");
    require(train_batch >= 1, "train_batch", "must be >= 1");
    require(lr_interp >= 0.0, "lr_interp", "must be >= 0");
    require(lr_extractor >= 0.0, "lr_extractor", "must be >= 0");
    require(lr_head >= 0.0, "lr_head", "must be >= 0");
    require(alpha >= 0.0, "alpha", "must be >= 0");
    require(beta >= 0.0, "beta", "must be >= 0");
    require(tau > 0.0, "tau", "must be > 0");
    require(model_steps_per_iter >= 1, "model_steps_per_iter", "must be >= 1");
    require(hidden_dim >= 1, "hidden_dim", "must be >= 1");
    require(init_logit > 0.0, "init_logit", "must be > 0");
    require(snapshot_every >= 1, "snapshot_every", "must be >= 1");
  }
};

/// Learnable interpretation of one class: symmetric edge logits (diagonal
/// unused) and node features.
struct InterpretiveGraph {
  int class_id = 0;
  Matrix omega;
  Matrix features;
  double tau = 1.0;

  int num_nodes() const { return static_cast<int>(omega.rows()); }
};

struct GdmState {
  std::vector<std::vector<InterpretiveGraph>> interps;  // per class
  double sparsity_target = 0.0;  // mean initial edge density, fixed after init
  bool train_features = false;
  Rng rng;                       // relaxation noise

  std::vector<const InterpretiveGraph*> all() const {
    std::vector<const InterpretiveGraph*> out;
    for (const auto& cls : interps)
      for (const auto& ig : cls) out.push_back(&ig);
    return out;
  }
};

inline Matrix offdiag_mask(int m) {
  Matrix mask = Matrix::Ones(m, m);
  mask.diagonal().setZero();
  return mask;
}

/// Mean of sigmoid(omega) over off-diagonal entries.
inline double expected_density(const Matrix& omega) {
  const Index m = omega.rows();
  if (m < 2) return 0.0;
  double total = 0.0;
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j)
      if (i != j) total += tg::sigmoid(omega(i, j));
  return total / static_cast<double>(m * (m - 1));
}

namespace gdm_detail {

/// Node subset of size min(m, n) grown breadth-first from a random node,
/// falling back to random unvisited nodes when a component is exhausted.
inline std::vector<int> connected_subset(const Graph& g, int m, Rng& rng) {
  const int n = g.num_nodes();
  if (m >= n) {
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  std::vector<int> chosen, frontier;
  while (static_cast<int>(chosen.size()) < m) {
    if (frontier.empty()) {
      std::vector<int> rest;
      for (int v = 0; v < n; ++v)
        if (!taken[static_cast<std::size_t>(v)]) rest.push_back(v);
      const int v = rest[rng.below(rest.size())];
      taken[static_cast<std::size_t>(v)] = 1;
      chosen.push_back(v);
      frontier.push_back(v);
      continue;
    }
    const std::size_t pick = rng.below(frontier.size());
    const int u = frontier[pick];
    std::vector<int> fresh;
    for (int v = 0; v < n; ++v)
      if (g.has_edge(u, v) && !taken[static_cast<std::size_t>(v)]) fresh.push_back(v);
    if (fresh.empty()) {
      frontier.erase(frontier.begin() + static_cast<std::ptrdiff_t>(pick));
      continue;
    }
    const int v = fresh[rng.below(fresh.size())];
    taken[static_cast<std::size_t>(v)] = 1;
    chosen.push_back(v);
    frontier.push_back(v);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace gdm_detail

/// Per class, graphs_per_class interpretive graphs with round(mean class node
/// count) nodes, each seeded from a random induced subgraph of a training
/// graph: omega = +init_logit on edges and -init_logit elsewhere.
inline GdmState init_interpretations(const GraphDataset& ds, const GdmConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "interp-init"));
  GdmState state;
  state.rng = Rng(derive_seed(cfg.seed, "relaxation"));
  state.train_features = ds.semantic_features;
  state.interps.resize(static_cast<std::size_t>(ds.num_classes));
  double density_sum = 0.0;
  std::size_t count = 0;
  for (int c = 0; c < ds.num_classes; ++c) {
    const std::vector<std::size_t> members = ds.indices(Split::train, c);
    if (members.empty())
      throw std::invalid_argument("init_interpretations: class " + std::to_string(c) + " has no training graphs");
    double mean_n = 0.0;
    for (std::size_t i : members) mean_n += ds.graphs[i].num_nodes();
    const int m = std::max(1, static_cast<int>(std::lround(mean_n / static_cast<double>(members.size()))));
    std::vector<std::size_t> large;
    for (std::size_t i : members)
      if (ds.graphs[i].num_nodes() >= m) large.push_back(i);
    const std::vector<std::size_t>& pool = large.empty() ? members : large;

    for (int k = 0; k < cfg.graphs_per_class; ++k) {
      const Graph& src = ds.graphs[pool[rng.below(pool.size())]];
      const std::vector<int> nodes = gdm_detail::connected_subset(src, m, rng);
      InterpretiveGraph ig;
      ig.class_id = c;
      ig.tau = cfg.tau;
      ig.omega = Matrix::Constant(m, m, -cfg.init_logit);
      for (std::size_t a = 0; a < nodes.size(); ++a)
        for (std::size_t b = 0; b < nodes.size(); ++b)
          if (src.has_edge(nodes[a], nodes[b])) ig.omega(static_cast<Index>(a), static_cast<Index>(b)) = cfg.init_logit;
      ig.omega.diagonal().setZero();
      if (ds.semantic_features) {
        ig.features = Matrix::Zero(m, ds.feature_dim);
        for (std::size_t a = 0; a < nodes.size(); ++a) ig.features.row(static_cast<Index>(a)) = src.features.row(nodes[a]);
      } else {
        ig.features = surrogate_index_features(m, ds.feature_dim);
      }
      density_sum += expected_density(ig.omega);
      ++count;
      state.interps[static_cast<std::size_t>(c)].push_back(std::move(ig));
    }
  }
  state.sparsity_target = density_sum / static_cast<double>(count);
  return state;
}

/// Symmetric logistic noise logit(u), u ~ U(0,1) drawn once per upper-triangle
/// entry; zero diagonal.
inline Matrix draw_logistic_noise(int m, Rng& rng) {
  Matrix noise = Matrix::Zero(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) {
      const double u = rng.open_uniform();
      noise(i, j) = noise(j, i) = std::log(u) - std::log1p(-u);
    }
  return noise;
}

/// sigmoid((noise + omega) / tau) with the diagonal zeroed; differentiable in omega.
inline tg::Var relax_adjacency(tg::Var omega, const Matrix& noise, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("relax_adjacency: tau must be positive");
  tg::Tape& t = *omega.tape();
  const int m = static_cast<int>(omega.rows());
  tg::Var z = tg::scale(tg::add(omega, t.constant(noise)), 1.0 / tau);
  return tg::hadamard(tg::sigmoid(z), t.constant(offdiag_mask(m)));
}

inline tg::Var relax_adjacency(tg::Var omega, double tau, Rng& rng) {
  return relax_adjacency(omega, draw_logistic_noise(static_cast<int>(omega.rows()), rng), tau);
}

/// One relaxed sample of the interpretive graph's adjacency.
inline Matrix relax_adjacency(const InterpretiveGraph& ig, Rng& rng) {
  tg::Tape tape;
  return relax_adjacency(tape.constant(ig.omega), ig.tau, rng).value();
}

/// Interpretive graph parameters bound to a tape.
struct InterpLeaves {
  tg::Var omega;
  tg::Var features;
  double tau = 1.0;
};

inline InterpLeaves bind_interpretation(tg::Tape& tape, const InterpretiveGraph& ig, bool train_features) {
  return {tape.leaf(ig.omega, true), tape.leaf(ig.features, train_features), ig.tau};
}

/// Embedding of a relaxed sample: relax -> normalize -> GCN embedding.
inline tg::Var interpretive_embedding(const ModelVars& mv, const InterpLeaves& leaves, const Matrix& noise) {
  return gcn_embed(mv, tg::normalized_adjacency(relax_adjacency(leaves.omega, noise, leaves.tau)), leaves.features);
}

/// Mean embedding (1 x h) of real graphs under a fixed model.
inline Matrix mean_embedding(const GcnModel& model, std::span<const Graph* const> graphs) {
  if (graphs.empty()) throw std::invalid_argument("mean_embedding: empty batch");
  Matrix acc = Matrix::Zero(1, model.hidden_dim);
  for (const Graph* g : graphs) acc += gcn_embed(model, *g);
  return acc / static_cast<double>(graphs.size());
}

/// Mean over graphs of the node-mean feature vector (1 x d).
inline Matrix mean_feature(std::span<const Graph* const> graphs) {
  if (graphs.empty()) throw std::invalid_argument("mean_feature: empty batch");
  Matrix acc = Matrix::Zero(1, graphs.front()->features.cols());
  for (const Graph* g : graphs) {
    if (g->features.cols() != acc.cols()) throw std::invalid_argument("mean_feature: feature-dim mismatch");
    acc += g->features.colwise().mean();
  }
  return acc / static_cast<double>(graphs.size());
}

/// ||real_mean - mean of interpretive embeddings||^2.
inline tg::Var dm_loss(tg::Tape& tape, const Matrix& real_mean, const std::vector<tg::Var>& interp_embeddings) {
  if (interp_embeddings.empty()) throw std::invalid_argument("dm_loss: empty interpretive batch");
  return tg::sq_norm(tg::sub(tape.constant(real_mean), tg::mean_of(interp_embeddings)));
}

/// Distribution matching loss of an interpretive batch against a batch of
/// real graphs of the same class. Gradients reach the interpretive leaves;
/// the model is bound as constants.
inline tg::Var dm_loss(tg::Tape& tape, const GcnModel& model, std::span<const Graph* const> train_batch,
                       const std::vector<InterpLeaves>& interp_batch, Rng& rng) {
  if (train_batch.empty() || interp_batch.empty()) throw std::invalid_argument("dm_loss: empty batch");
  const ModelVars mv = bind_model(tape, model, false, false);
  std::vector<tg::Var> emb;
  for (const auto& leaves : interp_batch)
    emb.push_back(interpretive_embedding(mv, leaves, draw_logistic_noise(static_cast<int>(leaves.omega.rows()), rng)));
  return dm_loss(tape, mean_embedding(model, train_batch), emb);
}

/// ||real_mean_feature - mean over the batch of node-mean features||^2.
inline tg::Var feature_loss(tg::Tape& tape, const Matrix& real_mean_feature, const std::vector<tg::Var>& interp_features) {
  if (interp_features.empty()) throw std::invalid_argument("feature_loss: empty interpretive batch");
  std::vector<tg::Var> pooled;
  for (const tg::Var& x : interp_features) {
    if (x.cols() != real_mean_feature.cols())
      throw std::invalid_argument("feature_loss: feature dim " + std::to_string(x.cols()) + " vs " +
                                  std::to_string(real_mean_feature.cols()));
    pooled.push_back(tg::row_mean(x));
  }
  return tg::sq_norm(tg::sub(tape.constant(real_mean_feature), tg::mean_of(pooled)));
}

inline tg::Var feature_loss(tg::Tape& tape, std::span<const Graph* const> train_batch,
                            const std::vector<tg::Var>& interp_features) {
  return feature_loss(tape, mean_feature(train_batch), interp_features);
}

/// Differentiable off-diagonal mean of sigmoid(omega).
inline tg::Var expected_density(tg::Var omega) {
  tg::Tape& t = *omega.tape();
  const Index m = omega.rows();
  const double pairs = m < 2 ? 1.0 : static_cast<double>(m * (m - 1));
  return tg::scale(tg::sum(tg::hadamard(tg::sigmoid(omega), t.constant(offdiag_mask(static_cast<int>(m))))), 1.0 / pairs);
}

/// Sum over graphs of max(expected density - target, 0).
inline tg::Var sparsity_loss(tg::Tape& tape, const std::vector<tg::Var>& omegas, double target) {
  tg::Var total = tape.scalar(0.0);
  for (const tg::Var& w : omegas) total = tg::add(total, tg::max_zero(tg::add(expected_density(w), tape.scalar(-target))));
  return total;
}

/// Sparsity loss over every interpretive graph in the state.
inline double sparsity_loss(const GdmState& state) {
  double total = 0.0;
  for (const auto* ig : state.all()) total += std::max(expected_density(ig->omega) - state.sparsity_target, 0.0);
  return total;
}

/// Per-class regression targets taken from a batch of real graphs.
struct ClassTargets {
  Matrix mean_embedding;
  Matrix mean_feature;
};

struct ClassLosses {
  double dm = 0.0;
  double feature = 0.0;
  double sparsity = 0.0;
  double total = 0.0;
};

/// G + G^T: gradient with respect to the shared upper-triangle parameter of a
/// symmetric matrix whose two mirrored entries were used separately.
inline Matrix symmetric_gradient(const Matrix& g) {
  Matrix s = g + g.transpose();
  s.diagonal().setZero();
  return s;
}

/// One plain gradient step on all classes' interpretations against fixed
/// targets: L_c = L_DM + alpha * L_feat + beta * L_sparsity over a random
/// interpretive batch per class.
inline std::vector<ClassLosses> interpretation_update(GdmState& state, const GcnModel& model,
                                                      const std::vector<ClassTargets>& targets,
                                                      const GdmConfig& cfg, Rng& batch_rng) {
  if (targets.size() != state.interps.size())
    throw std::invalid_argument("interpretation_update: one target per class required");
  tg::Tape tape;
  const ModelVars mv = bind_model(tape, model, false, false);
  const std::size_t b1 = static_cast<std::size_t>(cfg.effective_interp_batch());
  const double alpha = state.train_features ? cfg.alpha : 0.0;

  struct Bound {
    InterpretiveGraph* graph;
    InterpLeaves leaves;
  };
  std::vector<Bound> bound;
  std::vector<ClassLosses> losses(state.interps.size());
  std::vector<tg::Var> class_totals;
  for (std::size_t c = 0; c < state.interps.size(); ++c) {
    auto& pool = state.interps[c];
    if (pool.empty()) throw std::invalid_argument("interpretation_update: class without interpretations");
    const auto picks = batch_rng.sample(pool.size(), std::min(b1, pool.size()));
    std::vector<tg::Var> emb, feats, omegas;
    for (std::size_t k : picks) {
      InterpLeaves leaves = bind_interpretation(tape, pool[k], state.train_features);
      const Matrix noise = draw_logistic_noise(pool[k].num_nodes(), state.rng);
      emb.push_back(interpretive_embedding(mv, leaves, noise));
      feats.push_back(leaves.features);
      omegas.push_back(leaves.omega);
      bound.push_back({&pool[k], leaves});
    }
    tg::Var dm = dm_loss(tape, targets[c].mean_embedding, emb);
    tg::Var sp = sparsity_loss(tape, omegas, state.sparsity_target);
    tg::Var total = tg::add(dm, tg::scale(sp, cfg.beta));
    losses[c].dm = dm.item();
    losses[c].sparsity = sp.item();
    if (alpha > 0.0) {
      tg::Var ft = feature_loss(tape, targets[c].mean_feature, feats);
      losses[c].feature = ft.item();
      total = tg::add(total, tg::scale(ft, alpha));
    }
    losses[c].total = total.item();
    class_totals.push_back(total);
  }
  tg::Var objective = class_totals.front();
  for (std::size_t c = 1; c < class_totals.size(); ++c) objective = tg::add(objective, class_totals[c]);
  tape.backward(objective);

  for (const Bound& b : bound) {
    b.graph->omega -= cfg.lr_interp * symmetric_gradient(b.leaves.omega.grad());
    if (state.train_features) b.graph->features -= cfg.lr_interp * b.leaves.features.grad();
  }
  return losses;
}

/// Per-class random training batch of up to `per_class` graphs.
inline std::vector<std::vector<const Graph*>> sample_class_batches(const GraphDataset& ds, int per_class, Rng& rng) {
  std::vector<std::vector<const Graph*>> out(static_cast<std::size_t>(ds.num_classes));
  for (int c = 0; c < ds.num_classes; ++c) {
    const auto members = ds.indices(Split::train, c);
    if (members.empty())
      throw std::invalid_argument("sample_class_batches: class " + std::to_string(c) + " has no training graphs");
    const auto picks = rng.sample(members.size(), std::min(members.size(), static_cast<std::size_t>(per_class)));
    for (std::size_t k : picks) out[static_cast<std::size_t>(c)].push_back(&ds.graphs[members[k]]);
  }
  return out;
}

inline std::vector<ClassTargets> targets_from(const GcnModel& model,
                                              const std::vector<std::vector<const Graph*>>& batches) {
  std::vector<ClassTargets> t;
  for (const auto& b : batches) t.push_back({mean_embedding(model, b), mean_feature(b)});
  return t;
}

inline std::vector<const Graph*> flatten_batches(const std::vector<std::vector<const Graph*>>& batches) {
  std::vector<const Graph*> flat;
  for (const auto& b : batches) flat.insert(flat.end(), b.begin(), b.end());
  return flat;
}

/// Class targets from embeddings already computed for flatten_batches(batches).
inline std::vector<ClassTargets> targets_from(const std::vector<std::vector<const Graph*>>& batches,
                                              const std::vector<Matrix>& embeddings) {
  std::vector<ClassTargets> t;
  std::size_t offset = 0;
  for (const auto& b : batches) {
    Matrix acc = Matrix::Zero(1, embeddings.at(offset).cols());
    for (std::size_t i = 0; i < b.size(); ++i) acc += embeddings[offset + i];
    offset += b.size();
    t.push_back({acc / static_cast<double>(b.size()), mean_feature(b)});
  }
  return t;
}

/// Samples training batches from `train`, then one interpretation update
/// against the (frozen) model.
inline std::vector<ClassLosses> interpretation_step(GdmState& state, const GcnModel& model, const GraphDataset& train,
                                                    const GdmConfig& cfg, Rng& rng) {
  const auto batches = sample_class_batches(train, cfg.train_batch, rng);
  return interpretation_update(state, model, targets_from(model, batches), cfg, rng);
}

/// Discrete graph of an interpretation: edge (i, j) iff sigmoid(omega_ij) >
/// 0.5. Semantic features are re-one-hotted at their argmax.
inline Graph discretize(const InterpretiveGraph& ig, bool semantic_features) {
  const int m = ig.num_nodes();
  Graph g(m, ig.class_id);
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j)
      if (ig.omega(i, j) + ig.omega(j, i) > 0.0) g.add_edge(i, j);
  if (semantic_features) {
    g.features = Matrix::Zero(m, ig.features.cols());
    for (int i = 0; i < m; ++i) {
      Index best = 0;
      ig.features.row(i).maxCoeff(&best);
      g.features(i, best) = 1.0;
    }
  } else {
    g.features = ig.features;
  }
  return g;
}

inline std::vector<Graph> discretize_all(const GdmState& state) {
  std::vector<Graph> out;
  for (const auto* ig : state.all()) out.push_back(discretize(*ig, state.train_features));
  return out;
}

struct IterationLog {
  int restart = 0;
  int iteration = 0;
  double ce_loss = 0.0;  // 0 when no model step ran (frozen variant)
  std::vector<double> dm_loss;
};

struct GdmResult {
  GdmState state;
  GcnModel model;  // last trained (or, for frozen, last initialized) model
  std::vector<IterationLog> log;
};

/// Joint training and interpretation. For each of `restarts` fresh models and
/// each of `iterations` steps: one interpretation update against the current
/// parameters, then model_steps_per_iter Adam steps on the cross-entropy.
/// Variants change which parameters the interpretation is matched against:
///   frozen   - fresh model per restart, never trained
///   first    - only the initial parameters of the first restart
///   last     - only the final trained parameters
///   ensemble - snapshots of the same training runs, visited in shuffled order
///              after training finished
inline GdmResult run_gdm(const GraphDataset& ds, const GdmConfig& cfg,
                         const std::function<void(const IterationLog&)>& on_iteration = {}) {
  cfg.validate();
  GdmResult result;
  result.state = init_interpretations(ds, cfg);
  GdmState& state = result.state;

  Rng train_rng(derive_seed(cfg.seed, "train-batch"));
  Rng interp_rng(derive_seed(cfg.seed, "interp-batch"));
  const auto new_model = [&](int k) {
    return init_model(ds.feature_dim, cfg.hidden_dim, ds.num_classes,
                      derive_seed(cfg.seed, "model-init-k" + std::to_string(k)));
  };
  const auto emit = [&](IterationLog entry, const std::vector<ClassLosses>& losses) {
    for (const auto& l : losses) entry.dm_loss.push_back(l.dm);
    if (on_iteration) on_iteration(entry);
    result.log.push_back(std::move(entry));
  };

  // Extra model steps beyond the first use fresh batches.
  const auto extra_model_steps = [&](GcnModel& model, ModelOptimizer& opt) {
    for (int s = 1; s < cfg.model_steps_per_iter; ++s)
      train_model_step(model, flatten_batches(sample_class_batches(ds, cfg.train_batch, train_rng)), opt);
  };

  switch (cfg.variant) {
    case Variant::full: {
      for (int k = 0; k < cfg.restarts; ++k) {
        GcnModel model = new_model(k);
        ModelOptimizer opt = make_optimizer(model, cfg.lr_extractor, cfg.lr_head);
        for (int t = 0; t < cfg.iterations; ++t) {
          const auto batches = sample_class_batches(ds, cfg.train_batch, train_rng);
          const CeGradients grads = ce_gradients(model, flatten_batches(batches));
          const auto losses = interpretation_update(state, model, targets_from(batches, grads.embeddings), cfg, interp_rng);
          apply_gradients(model, opt, grads);
          extra_model_steps(model, opt);
          emit({k, t, grads.loss, {}}, losses);
        }
        result.model = std::move(model);
      }
      break;
    }
    case Variant::frozen: {
      for (int k = 0; k < cfg.restarts; ++k) {
        GcnModel model = new_model(k);
        for (int t = 0; t < cfg.iterations; ++t) {
          const auto batches = sample_class_batches(ds, cfg.train_batch, train_rng);
          const auto losses = interpretation_update(state, model, targets_from(model, batches), cfg, interp_rng);
          emit({k, t, 0.0, {}}, losses);
        }
        result.model = std::move(model);
      }
      break;
    }
    case Variant::first:
    case Variant::last:
    case Variant::ensemble: {
      // Train exactly as the full variant does, collecting snapshots and losses.
      std::vector<GcnModel> snapshots;
      std::vector<double> ce_trace;
      for (int k = 0; k < cfg.restarts; ++k) {
        GcnModel model = new_model(k);
        ModelOptimizer opt = make_optimizer(model, cfg.lr_extractor, cfg.lr_head);
        if (cfg.variant == Variant::first && k == 0) snapshots.push_back(model);
        for (int t = 0; t < cfg.iterations; ++t) {
          if (cfg.variant == Variant::ensemble && t % cfg.snapshot_every == 0) snapshots.push_back(model);
          const auto batches = sample_class_batches(ds, cfg.train_batch, train_rng);
          ce_trace.push_back(train_model_step(model, flatten_batches(batches), opt));
          extra_model_steps(model, opt);
        }
        result.model = std::move(model);
      }
      if (cfg.variant == Variant::last) snapshots.push_back(result.model);

      Rng order_rng(derive_seed(cfg.seed, "ensemble-order"));
      std::vector<std::size_t> order;
      std::size_t cursor = 0;
      for (int k = 0; k < cfg.restarts; ++k) {
        for (int t = 0; t < cfg.iterations; ++t) {
          if (cursor == order.size()) {
            order.resize(snapshots.size());
            for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
            order_rng.shuffle(order);
            cursor = 0;
          }
          const GcnModel& snap = snapshots[order[cursor++]];
          const auto batches = sample_class_batches(ds, cfg.train_batch, interp_rng);
          const auto losses = interpretation_update(state, snap, targets_from(snap, batches), cfg, interp_rng);
          emit({k, t, ce_trace[static_cast<std::size_t>(k * cfg.iterations + t)], {}}, losses);
        }
      }
      break;
    }
  }
  return result;
}

}  // namespace gdm
