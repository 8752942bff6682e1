#pragma once

#include "gdm/gcn.hpp"
#include "gdm/gdm.hpp"
#include "gdm/graph.hpp"
#include "gdm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace gdm {

struct ModelDims {
  int input_dim = 0;
  int hidden_dim = kDefaultHiddenDim;
  int num_classes = 0;
};

inline ModelDims dims_of(const GcnModel& m) { return {m.input_dim, m.hidden_dim, m.num_classes}; }

inline constexpr int kSurrogateEpochs = 300;

/// Fresh model trained by full-batch Adam cross-entropy on `graphs` only.
inline GcnModel train_surrogate(std::span<const Graph> graphs, ModelDims dims, std::uint64_t seed,
                                int epochs = kSurrogateEpochs, double lr = 1e-3) {
  if (epochs < 0) throw std::invalid_argument("train_surrogate: negative epochs");
  std::vector<int> per_class(static_cast<std::size_t>(dims.num_classes), 0);
  for (const Graph& g : graphs) {
    if (g.label < 0 || g.label >= dims.num_classes) throw std::invalid_argument("train_surrogate: label out of range");
    ++per_class[static_cast<std::size_t>(g.label)];
  }
  for (int c = 0; c < dims.num_classes; ++c)
    if (per_class[static_cast<std::size_t>(c)] == 0)
      throw std::invalid_argument("train_surrogate: no graph for class " + std::to_string(c));
  GcnModel model = init_model(dims.input_dim, dims.hidden_dim, dims.num_classes, seed);
  ModelOptimizer opt = make_optimizer(model, lr, lr);
  std::vector<const Graph*> batch;
  for (const Graph& g : graphs) batch.push_back(&g);
  for (int e = 0; e < epochs; ++e) train_model_step(model, batch, opt);
  return model;
}

namespace metrics_detail {

inline void require_nonempty(std::span<const Graph* const> graphs, const char* what) {
  if (graphs.empty()) throw std::invalid_argument(std::string(what) + ": empty graph set");
}

inline double percent(std::size_t hit, std::size_t total) {
  return 100.0 * static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace metrics_detail

/// Percentage of graphs on which the two models' argmax predictions agree.
inline double model_fidelity(const GcnModel& surrogate, const GcnModel& target, std::span<const Graph* const> test) {
  metrics_detail::require_nonempty(test, "model_fidelity");
  if (surrogate.input_dim != target.input_dim)
    throw std::invalid_argument("model_fidelity: feature dims differ");
  std::size_t agree = 0;
  for (const Graph* g : test)
    if (predict(surrogate, *g) == predict(target, *g)) ++agree;
  return metrics_detail::percent(agree, test.size());
}

/// Percentage of graphs the surrogate labels correctly.
inline double model_utility(const GcnModel& surrogate, std::span<const Graph* const> test) {
  metrics_detail::require_nonempty(test, "model_utility");
  return accuracy(surrogate, test);
}

/// Percentage of predictions matching `reference`, element by element. Both
/// fidelity (reference = target predictions) and utility (reference = labels)
/// reduce to this.
inline double agreement(std::span<const int> predictions, std::span<const int> reference) {
  if (predictions.empty() || predictions.size() != reference.size())
    throw std::invalid_argument("agreement: sizes differ or empty");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == reference[i]) ++hit;
  return metrics_detail::percent(hit, predictions.size());
}

/// Percentage of interpretive graphs the target assigns to their own class.
inline double predictive_accuracy(const GcnModel& target, std::span<const Graph> interps) {
  if (interps.empty()) throw std::invalid_argument("predictive_accuracy: no interpretive graphs");
  std::size_t hit = 0;
  for (const Graph& g : interps)
    if (predict(target, g) == g.label) ++hit;
  return metrics_detail::percent(hit, interps.size());
}

/// Mean fraction of absent edges among off-diagonal node pairs.
inline double mean_sparsity(std::span<const Graph> interps) {
  if (interps.empty()) throw std::invalid_argument("mean_sparsity: no interpretive graphs");
  double total = 0.0;
  for (const Graph& g : interps) {
    const double n = g.num_nodes();
    const double pairs = n * (n - 1.0) / 2.0;
    total += pairs > 0.0 ? 1.0 - static_cast<double>(g.num_edges()) / pairs : 1.0;
  }
  return total / static_cast<double>(interps.size());
}

inline double cosine_similarity(const Matrix& a, const Matrix& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.cwiseProduct(b).sum() / (na * nb);
}

enum class SurrogateSource { interpretations, real };

struct TrajectoryOptions {
  SurrogateSource source = SurrogateSource::interpretations;
  int iterations = 200;
};

/// Target and surrogate start from the same parameters; the target trains on
/// real batches while GDM updates the interpretations, and the surrogate
/// trains (one full-batch step per iteration) on the current discretized
/// interpretations, or on the real training set for the control run. Entry t
/// is the mean cosine similarity of the two models' test logits before
/// iteration t's updates.
inline std::vector<double> trajectory_fidelity(const GraphDataset& ds, const GdmConfig& cfg,
                                               TrajectoryOptions opts = {}) {
  cfg.validate();
  const auto test = ds.view(Split::test);
  if (test.empty()) throw std::invalid_argument("trajectory_fidelity: dataset has no test split");
  GdmState state = init_interpretations(ds, cfg);
  GcnModel target = init_model(ds.feature_dim, cfg.hidden_dim, ds.num_classes, derive_seed(cfg.seed, "model-init-k0"));
  GcnModel surrogate = target;
  ModelOptimizer target_opt = make_optimizer(target, cfg.lr_extractor, cfg.lr_head);
  ModelOptimizer surrogate_opt = make_optimizer(surrogate, cfg.lr_extractor, cfg.lr_head);
  Rng train_rng(derive_seed(cfg.seed, "train-batch"));
  Rng interp_rng(derive_seed(cfg.seed, "interp-batch"));
  const auto real_train = ds.view(Split::train);

  std::vector<double> curve;
  for (int t = 0; t < opts.iterations; ++t) {
    double sim = 0.0;
    for (const Graph* g : test) sim += cosine_similarity(gcn_logits(target, *g), gcn_logits(surrogate, *g));
    curve.push_back(sim / static_cast<double>(test.size()));

    const auto batches = sample_class_batches(ds, cfg.train_batch, train_rng);
    const CeGradients grads = ce_gradients(target, flatten_batches(batches));
    interpretation_update(state, target, targets_from(batches, grads.embeddings), cfg, interp_rng);
    apply_gradients(target, target_opt, grads);

    if (opts.source == SurrogateSource::real) {
      train_model_step(surrogate, real_train, surrogate_opt);
    } else {
      const std::vector<Graph> interps = discretize_all(state);
      train_model_step(surrogate, view_of(interps), surrogate_opt);
    }
  }
  return curve;
}

/// `per_class` training graphs per class drawn uniformly without replacement.
inline std::vector<Graph> random_baseline(const GraphDataset& ds, int per_class, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "random-baseline"));
  std::vector<Graph> out;
  for (int c = 0; c < ds.num_classes; ++c) {
    const auto members = ds.indices(Split::train, c);
    if (static_cast<int>(members.size()) < per_class)
      throw std::invalid_argument("random_baseline: class " + std::to_string(c) + " has " +
                                  std::to_string(members.size()) + " training graphs, need " + std::to_string(per_class));
    for (std::size_t k : rng.sample(members.size(), static_cast<std::size_t>(per_class)))
      out.push_back(ds.graphs[members[k]]);
  }
  return out;
}

/// Flattened Laplacian D - A with rows/columns ordered by descending degree
/// (ties by node index), zero-padded to max_n x max_n.
inline Eigen::RowVectorXd sorted_laplacian_features(const Graph& g, int max_n) {
  const int n = g.num_nodes();
  if (n > max_n) throw std::invalid_argument("sorted_laplacian_features: graph larger than padding");
  const std::vector<int> deg = g.degrees();
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return deg[static_cast<std::size_t>(a)] > deg[static_cast<std::size_t>(b)];
  });
  Eigen::RowVectorXd f = Eigen::RowVectorXd::Zero(static_cast<Index>(max_n) * max_n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int u = order[static_cast<std::size_t>(i)], v = order[static_cast<std::size_t>(j)];
      const double value = u == v ? static_cast<double>(deg[static_cast<std::size_t>(u)]) : -g.adjacency(u, v);
      f(static_cast<Index>(i) * max_n + j) = value;
    }
  return f;
}

struct LrOptions {
  int epochs = 500;
  double lr = 0.05;
};

struct LrBaselineResult {
  double utility = 0.0;  // test accuracy of the logistic regression, percent
  int max_nodes = 0;
  std::vector<std::vector<std::pair<int, int>>> class_edges;  // top-|weight| node pairs per class
};

/// Multinomial logistic regression on degree-sorted Laplacians, trained by
/// full-batch gradient descent. Interpretations are the top_k_edges
/// off-diagonal positions (i < j) per class ranked by |w_ij| + |w_ji|.
inline LrBaselineResult lr_baseline(std::span<const Graph* const> train, std::span<const Graph* const> test,
                                    int top_k_edges, LrOptions opts = {}) {
  if (train.empty() || test.empty()) throw std::invalid_argument("lr_baseline: empty split");
  int max_n = 0, num_classes = 0;
  for (const Graph* g : train) {
    max_n = std::max(max_n, g->num_nodes());
    num_classes = std::max(num_classes, g->label + 1);
  }
  for (const Graph* g : test) max_n = std::max(max_n, g->num_nodes());
  const Index dim = static_cast<Index>(max_n) * max_n;
  const auto design = [&](std::span<const Graph* const> graphs) {
    Matrix x(static_cast<Index>(graphs.size()), dim);
    for (std::size_t i = 0; i < graphs.size(); ++i) x.row(static_cast<Index>(i)) = sorted_laplacian_features(*graphs[i], max_n);
    return x;
  };
  const Matrix x_train = design(train);
  const Matrix x_test = design(test);
  std::vector<int> y_train;
  for (const Graph* g : train) y_train.push_back(g->label);

  Matrix w = Matrix::Zero(dim, num_classes);
  Matrix b = Matrix::Zero(1, num_classes);
  for (int e = 0; e < opts.epochs; ++e) {
    tg::Tape tape;
    tg::Var wv = tape.leaf(w), bv = tape.leaf(b);
    tg::Var logits = tg::add(tg::matmul(tape.constant(x_train), wv), bv);
    tg::Var loss = tg::nll(tg::log_softmax(logits), y_train);
    tape.backward(loss);
    w -= opts.lr * wv.grad();
    b -= opts.lr * bv.grad();
  }

  LrBaselineResult result;
  result.max_nodes = max_n;
  const Matrix scores = (x_test * w).rowwise() + b.row(0);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < test.size(); ++i)
    if (argmax_row(scores.row(static_cast<Index>(i))) == test[i]->label) ++hit;
  result.utility = metrics_detail::percent(hit, test.size());

  for (int c = 0; c < num_classes; ++c) {
    std::vector<std::pair<double, std::pair<int, int>>> ranked;
    for (int i = 0; i < max_n; ++i)
      for (int j = i + 1; j < max_n; ++j)
        ranked.push_back({std::abs(w(static_cast<Index>(i) * max_n + j, c)) + std::abs(w(static_cast<Index>(j) * max_n + i, c)),
                          {i, j}});
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::pair<int, int>> edges;
    for (std::size_t k = 0; k < ranked.size() && static_cast<int>(k) < top_k_edges; ++k) edges.push_back(ranked[k].second);
    result.class_edges.push_back(std::move(edges));
  }
  return result;
}

/// Mean, population standard deviation and raw repetition values.
struct Stat {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> runs;
};

inline Stat aggregate(std::vector<double> runs) {
  Stat s;
  s.runs = std::move(runs);
  if (s.runs.empty()) return s;
  s.mean = std::accumulate(s.runs.begin(), s.runs.end(), 0.0) / static_cast<double>(s.runs.size());
  double var = 0.0;
  for (double r : s.runs) var += (r - s.mean) * (r - s.mean);
  s.std = std::sqrt(var / static_cast<double>(s.runs.size()));
  return s;
}

struct MetricsReport {
  Stat fidelity;
  Stat utility;
  Stat predictive_accuracy;
  double mean_sparsity = 0.0;
  std::vector<std::uint64_t> seeds;
};

struct EvalOptions {
  int repetitions = 5;
  int epochs = kSurrogateEpochs;
  std::uint64_t seed = 0;
  bool skip_train = false;  // use the target itself as surrogate
  int threads = 1;
};

/// The repetition protocol: per repetition a freshly seeded surrogate is
/// trained on the interpretations and scored against the target (fidelity)
/// and the labels (utility) on `test`. Repetitions are independent and may
/// run on several threads.
inline MetricsReport evaluate_interpretations(const GcnModel& target, std::span<const Graph> interps,
                                              std::span<const Graph* const> test, EvalOptions opts = {}) {
  if (opts.repetitions < 1) throw std::invalid_argument("evaluate_interpretations: repetitions must be >= 1");
  const auto reps = static_cast<std::size_t>(opts.repetitions);
  MetricsReport report;
  for (std::size_t r = 0; r < reps; ++r)
    report.seeds.push_back(derive_seed(opts.seed, "surrogate-rep" + std::to_string(r)));
  std::vector<double> fid(reps), util(reps);
  std::vector<std::exception_ptr> errors(reps);
  const auto run = [&](std::size_t r) {
    try {
      const GcnModel surrogate =
          opts.skip_train ? target : train_surrogate(interps, dims_of(target), report.seeds[r], opts.epochs);
      fid[r] = model_fidelity(surrogate, target, test);
      util[r] = model_utility(surrogate, test);
    } catch (...) {
      errors[r] = std::current_exception();
    }
  };
  const auto workers = static_cast<std::size_t>(std::max(1, opts.threads));
  if (workers == 1) {
    for (std::size_t r = 0; r < reps; ++r) run(r);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, reps); ++w)
      pool.emplace_back([&, w] {
        for (std::size_t r = w; r < reps; r += workers) run(r);
      });
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  const double pa = predictive_accuracy(target, interps);
  report.fidelity = aggregate(fid);
  report.utility = aggregate(util);
  report.predictive_accuracy = aggregate(std::vector<double>(reps, pa));
  report.mean_sparsity = mean_sparsity(interps);
  return report;
}

}  // namespace gdm
