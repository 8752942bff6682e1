#pragma once

#include "gdm/gcn.hpp"
#include "gdm/rng.hpp"
#include "gdm/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace gdm {

struct GradCheckResult {
  std::string name;
  double worst = 0.0;  // max relative error over all cases and entries
  int cases = 0;
};

namespace gradcheck_detail {

inline Matrix random_matrix(Index r, Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = lo + (hi - lo) * rng.uniform();
  return m;
}

/// Entries bounded away from zero so relu's kink is not crossed by the probe.
inline Matrix away_from_zero(Index r, Index c, Rng& rng) {
  Matrix m = random_matrix(r, c, rng, 0.1, 1.0);
  for (Index i = 0; i < m.size(); ++i)
    if (rng.uniform() < 0.5) m.data()[i] = -m.data()[i];
  return m;
}

/// Reduces an op output to a scalar through fixed random weights, so every
/// output entry contributes a distinct amount.
inline tg::Var weighted_sum(tg::Tape& t, tg::Var y, const Matrix& w) { return tg::sum(tg::hadamard(y, t.constant(w))); }

}  // namespace gradcheck_detail

/// Central-difference checks of every differentiable op on `cases` random
/// inputs each.
inline std::vector<GradCheckResult> run_op_grad_checks(std::uint64_t seed, int cases = 100, double h = 1e-4) {
  using namespace gradcheck_detail;
  using tg::Tape;
  using tg::Var;
  Rng rng(derive_seed(seed, "grad-check"));
  std::vector<GradCheckResult> out;

  // shapes chosen per case; `make` builds x and a closure over its own constants
  using Case = std::function<std::pair<Matrix, std::function<Var(Tape&, Var)>>(Rng&)>;
  const auto run = [&](const std::string& name, const Case& make) {
    GradCheckResult r{name, 0.0, cases};
    for (int k = 0; k < cases; ++k) {
      auto [x, f] = make(rng);
      r.worst = std::max(r.worst, tg::grad_check(f, x, h));
    }
    out.push_back(r);
  };
  const auto dims = [](Rng& g) { return std::pair<Index, Index>(1 + static_cast<Index>(g.below(4)), 1 + static_cast<Index>(g.below(4))); };

  run("matmul(lhs)", [&](Rng& g) {
    auto [r, c] = dims(g);
    const Index k = 1 + static_cast<Index>(g.below(4));
    Matrix b = random_matrix(c, k, g), w = random_matrix(r, k, g);
    return std::pair{random_matrix(r, c, g), std::function<Var(Tape&, Var)>([=](Tape& t, Var x) {
                       return weighted_sum(t, tg::matmul(x, t.constant(b)), w);
                     })};
  });
  run("matmul(rhs)", [&](Rng& g) {
    auto [r, c] = dims(g);
    const Index k = 1 + static_cast<Index>(g.below(4));
    Matrix a = random_matrix(k, r, g), w = random_matrix(k, c, g);
    return std::pair{random_matrix(r, c, g), std::function<Var(Tape&, Var)>([=](Tape& t, Var x) {
                       return weighted_sum(t, tg::matmul(t.constant(a), x), w);
                     })};
  });
  run("add", [&](Rng& g) {
    auto [r, c] = dims(g);
    Matrix b = random_matrix(r, c, g), w = random_matrix(r, c, g);
    return std::pair{random_matrix(r, c, g), std::function<Var(Tape&, Var)>([=](Tape& t, Var x) {
                       return weighted_sum(t, tg::add(t.constant(b), x), w);
                     })};
  });
  run("add(row broadcast)", [&](Rng& g) {
    auto [r, c] = dims(g);
    Matrix a = random_matrix(r + 1, c, g), w = random_matrix(r + 1, c, g);
    return std::pair{random_matrix(1, c, g), std::function<Var(Tape&, Var)>([=](Tape& t, Var x) {
                       return weighted_sum(t, tg::add(t.constant(a), x), w);
                     })};
  });
  run("scale", [&](Rng& g) {
    auto [r, c] = dims(g);
    const double k = 4.0 * g.uniform() - 2.0;
    Matrix w = random_matrix(r, c, g);
    return std::pair{random_matrix(r, c, g),
                     std::function<Var(Tape&, Var)>([=](Tape& t, Var x) { return weighted_sum(t, tg::scale(x, k), w); })};
  });
  run("sub", [&](Rng& g) {
    auto [r, c] = dims(g);
    Matrix a = random_matrix(r, c, g), w = random_matrix(r, c, g);
    return std::pair{random_matrix(r, c, g), std::function<Var(Tape&, Var)>([=](Tape& t, Var x) {
                       return weighted_sum(t, tg::sub(t.constant(a), x), w);
                     })};
  });
  run("hadamard", [&](Rng& g) {
    auto [r, c] = dims(g);
    Matrix w = random_matrix(r, c, g);
    return std::pair{random_matrix(r, c, g), std::function<Var(Tape&, Var)>([=](Tape& t, Var x) {
                       return weighted_sum(t, tg::hadamard(x, x), w);
                     })};
  });
  run("relu", [&](Rng& g) {
    auto [r, c] = dims(g);
    Matrix w = random_matrix(r, c, g);
    return std::pair{away_from_zero(r, c, g),
                     std::function<Var(Tape&, Var)>([=](Tape& t, Var x) { return weighted_sum(t, tg::relu(x), w); })};
  });
  run("sigmoid", [&](Rng& g) {
    auto [r, c] = dims(g);
    Matrix w = random_matrix(r, c, g);
    return std::pair{random_matrix(r, c, g, -4.0, 4.0),
                     std::function<Var(Tape&, Var)>([=](Tape& t, Var x) { return weighted_sum(t, tg::sigmoid(x), w); })};
  });
  run("row_mean", [&](Rng& g) {
    auto [r, c] = dims(g);
    Matrix w = random_matrix(1, c, g);
    return std::pair{random_matrix(r, c, g),
                     std::function<Var(Tape&, Var)>([=](Tape& t, Var x) { return weighted_sum(t, tg::row_mean(x), w); })};
  });
  run("sum", [&](Rng& g) {
    auto [r, c] = dims(g);
    Matrix w = random_matrix(r, c, g);
    return std::pair{random_matrix(r, c, g), std::function<Var(Tape&, Var)>([=](Tape& t, Var x) {
                       return tg::sum(tg::hadamard(x, t.constant(w)));
                     })};
  });
  run("sq_norm", [&](Rng& g) {
    auto [r, c] = dims(g);
    return std::pair{random_matrix(r, c, g), std::function<Var(Tape&, Var)>([](Tape&, Var x) { return tg::sq_norm(x); })};
  });
  run("log_softmax", [&](Rng& g) {
    auto [r, c] = dims(g);
    Matrix w = random_matrix(r, c, g);
    return std::pair{random_matrix(r, c, g, -3.0, 3.0),
                     std::function<Var(Tape&, Var)>([=](Tape& t, Var x) { return weighted_sum(t, tg::log_softmax(x), w); })};
  });
  run("nll", [&](Rng& g) {
    auto [r, c] = dims(g);
    std::vector<int> labels;
    for (Index i = 0; i < r; ++i) labels.push_back(static_cast<int>(g.below(static_cast<std::size_t>(c))));
    return std::pair{random_matrix(r, c, g, -3.0, 3.0), std::function<Var(Tape&, Var)>([=](Tape&, Var x) {
                       return tg::nll(tg::log_softmax(x), std::span<const int>(labels));
                     })};
  });
  run("concat_rows", [&](Rng& g) {
    auto [r, c] = dims(g);
    Matrix other = random_matrix(2, c, g), w = random_matrix(r + 2, c, g);
    return std::pair{random_matrix(r, c, g), std::function<Var(Tape&, Var)>([=](Tape& t, Var x) {
                       return weighted_sum(t, tg::concat_rows({x, t.constant(other)}), w);
                     })};
  });
  run("mean_of", [&](Rng& g) {
    auto [r, c] = dims(g);
    Matrix other = random_matrix(r, c, g), w = random_matrix(r, c, g);
    return std::pair{random_matrix(r, c, g), std::function<Var(Tape&, Var)>([=](Tape& t, Var x) {
                       return weighted_sum(t, tg::mean_of({x, t.constant(other), tg::scale(x, 2.0)}), w);
                     })};
  });
  run("normalized_adjacency", [&](Rng& g) {
    const Index n = 1 + static_cast<Index>(g.below(6));
    Matrix a = random_matrix(n, n, g, 0.0, 1.0);
    a = (0.5 * (a + a.transpose())).eval();
    a.diagonal().setZero();
    Matrix w = random_matrix(n, n, g);
    return std::pair{a, std::function<Var(Tape&, Var)>([=](Tape& t, Var x) {
                       return weighted_sum(t, tg::normalized_adjacency(x), w);
                     })};
  });
  return out;
}

/// Central-difference check of the cross-entropy gradient with respect to
/// every model parameter on a random small graph batch.
inline GradCheckResult run_gcn_grad_check(std::uint64_t seed, int nodes = 5, double h = 1e-4) {
  Rng rng(derive_seed(seed, "gcn-grad-check"));
  const int d = 4, hidden = 6, classes = 3;
  GcnModel model = init_model(d, hidden, classes, derive_seed(seed, "gcn-init"));
  std::vector<Graph> graphs;
  for (int k = 0; k < 2; ++k) {
    Graph g(nodes, k % classes);
    for (int i = 0; i < nodes; ++i)
      for (int j = i + 1; j < nodes; ++j)
        if (rng.uniform() < 0.5) g.add_edge(i, j);
    g.features = gradcheck_detail::random_matrix(nodes, d, rng);
    graphs.push_back(std::move(g));
  }
  std::vector<const Graph*> batch;
  for (const Graph& g : graphs) batch.push_back(&g);

  GradCheckResult r{"gcn ce_loss parameters", 0.0, 1};
  const CeGradients grads = ce_gradients(model, batch);
  std::vector<Matrix> analytic = grads.extractor;
  analytic.insert(analytic.end(), grads.head.begin(), grads.head.end());
  std::vector<Matrix*> params = model.all_params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& w = *params[p];
    for (Index i = 0; i < w.size(); ++i) {
      const double orig = w.data()[i];
      w.data()[i] = orig + h;
      const double up = ce_loss_value(model, batch);
      w.data()[i] = orig - h;
      const double down = ce_loss_value(model, batch);
      w.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[p].data()[i];
      r.worst = std::max(r.worst, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return r;
}

}  // namespace gdm
