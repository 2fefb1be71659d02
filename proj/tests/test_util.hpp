#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ddtas/loss.hpp"
#include "ddtas/mining.hpp"
#include "ddtas/model.hpp"

namespace ddtas::testing {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

inline Eigen::MatrixXd random_unit_rows(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  Eigen::MatrixXd m = random_matrix(rows, cols, rng);
  for (Eigen::Index i = 0; i < rows; ++i) m.row(i).normalize();
  return m;
}

// P classes x K instances, grouped.
inline std::vector<int> pk_labels(int classes, int instances) {
  std::vector<int> labels;
  for (int c = 0; c < classes; ++c) {
    for (int k = 0; k < instances; ++k) labels.push_back(c);
  }
  return labels;
}

// Central differences of a scalar function of a vector.
inline Eigen::VectorXd central_diff(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                    double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd p = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + h;
    const double up = f(p);
    p[i] = orig - h;
    const double down = f(p);
    p[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero entries from
// turning rounding noise into large ratios.
inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-4) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i], floor));
  return worst;
}

// Anchor-centric mined sets as (anchor, partner) lists, for set comparisons.
struct PairSets {
  std::vector<std::pair<int, int>> pos;
  std::vector<std::pair<int, int>> neg;
};

inline PairSets as_sets(const MinedPairs& m) {
  PairSets s;
  for (std::size_t a = 0; a < m.num_anchors(); ++a) {
    for (int p : m.positives[a]) s.pos.emplace_back(static_cast<int>(a), p);
    for (int k : m.negatives[a]) s.neg.emplace_back(static_cast<int>(a), k);
  }
  std::sort(s.pos.begin(), s.pos.end());
  std::sort(s.neg.begin(), s.neg.end());
  return s;
}

inline bool is_subset(const std::vector<std::pair<int, int>>& small, const std::vector<std::pair<int, int>>& big) {
  return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

// Independent per-pair predicate evaluation: for every candidate pair the
// anchor's extrema are recomputed from scratch.
inline PairSets brute_force_mine(const Eigen::MatrixXd& s, const std::vector<int>& labels, double tol_pos,
                                 double tol_neg) {
  const int n = static_cast<int>(labels.size());
  PairSets out;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      bool any_pos = false, any_neg = false;
      double max_neg = -2.0, min_pos = 2.0;
      for (int k = 0; k < n; ++k) {
        if (k == i) continue;
        if (labels[k] == labels[i]) {
          any_pos = true;
          if (s(i, k) < min_pos) min_pos = s(i, k);
        } else {
          any_neg = true;
          if (s(i, k) > max_neg) max_neg = s(i, k);
        }
      }
      if (!any_pos || !any_neg) continue;
      if (labels[j] == labels[i]) {
        if (s(i, j) < max_neg + tol_pos) out.pos.emplace_back(i, j);
      } else if (s(i, j) > min_pos - tol_neg) {
        out.neg.emplace_back(i, j);
      }
    }
  }
  return out;
}

// Every candidate partner of every anchor.
inline MinedPairs all_pairs(const std::vector<int>& labels) {
  MinedPairs m;
  const int n = static_cast<int>(labels.size());
  m.positives.resize(n);
  m.negatives.resize(n);
  for (int a = 0; a < n; ++a) {
    for (int j = 0; j < n; ++j) {
      if (j == a) continue;
      (labels[j] == labels[a] ? m.positives[a] : m.negatives[a]).push_back(j);
    }
    m.n_pos += static_cast<std::int64_t>(m.positives[a].size());
    m.n_neg += static_cast<std::int64_t>(m.negatives[a].size());
  }
  return m;
}

inline SimilarityMatrix perturbed(const SimilarityMatrix& s, int i, int j, double d) {
  Eigen::MatrixXd v = s.values();
  v(i, j) += d;
  v(j, i) += d;
  return SimilarityMatrix(v, s.labels());
}

// Both orientations of an unordered pair read the same entry once S is
// symmetric, so FD over a symmetric perturbation sees their sum.
inline std::map<std::pair<int, int>, double> unordered_grads(const LossOutput& out) {
  std::map<std::pair<int, int>, double> g;
  for (const auto& pg : out.grad_s) g[{std::min(pg.anchor, pg.partner), std::max(pg.anchor, pg.partner)}] += pg.grad;
  return g;
}

// d(grad_S)/d(lambda) for per-anchor normalization, written out by hand:
//   positive: d/dl of -sig(mu (l - S)) / (A n_pos)  = -mu sig (1 - sig) / (A n_pos)
//   negative: d/dl of +sig(nu (S - l)) / (A n_neg)  = -nu sig (1 - sig) / (A n_neg)
inline std::vector<PairGrad> dgrad_dlambda(const SimilarityMatrix& s, const MinedPairs& m, const LossParams& p) {
  int anchors = 0;
  for (std::size_t a = 0; a < m.num_anchors(); ++a) anchors += (!m.positives[a].empty() || !m.negatives[a].empty());
  std::vector<PairGrad> out;
  for (std::size_t a = 0; a < m.num_anchors(); ++a) {
    const double np = static_cast<double>(m.positives[a].size());
    const double nn = static_cast<double>(m.negatives[a].size());
    for (int j : m.positives[a]) {
      const double sg = 1.0 / (1.0 + std::exp(-p.mu * (p.lambda - s(a, j))));
      out.push_back({static_cast<int>(a), j, true, -p.mu * sg * (1 - sg) / (anchors * np)});
    }
    for (int k : m.negatives[a]) {
      const double sg = 1.0 / (1.0 + std::exp(-p.nu * (s(a, k) - p.lambda)));
      out.push_back({static_cast<int>(a), k, false, -p.nu * sg * (1 - sg) / (anchors * nn)});
    }
  }
  return out;
}

// Exact dL^m/dlambda through one SGD lookahead step, meta mask and meta
// threshold held at their lambda values:
//   g = dL^m/dtheta_hat . (-psi d/dlambda dL^t/dtheta)
inline double analytic_meta_gradient(const EmbeddingNet& net, const Eigen::MatrixXd& main_x,
                                     const std::vector<int>& main_labels, const MinedPairs& main_pairs,
                                     const Eigen::MatrixXd& meta_x, const std::vector<int>& meta_labels,
                                     double gamma_pos, double gamma_neg, LossParams p, double lambda, double psi) {
  p.lambda = lambda;
  const Eigen::MatrixXd e = forward(net, main_x);
  const SimilarityMatrix s = similarity_matrix(e, main_labels);
  const ParamGrads gt = backward(net, main_x, embedding_grad(e, soft_contrastive(s, main_pairs, p).grad_s));
  const EmbeddingNet hat = unflatten(net, flatten(net) - psi * flatten(gt));

  const Eigen::VectorXd dhat =
      -psi * flatten(backward(net, main_x, embedding_grad(e, dgrad_dlambda(s, main_pairs, p))));

  const Eigen::MatrixXd em = forward(hat, meta_x);
  const SimilarityMatrix sm = similarity_matrix(em, meta_labels);
  const MinedPairs meta_pairs = mine_asms(sm, gamma_pos, gamma_neg);
  const Eigen::VectorXd gm =
      flatten(backward(hat, meta_x, embedding_grad(em, soft_contrastive(sm, meta_pairs, p).grad_s)));
  return gm.dot(dhat);
}

}  // namespace ddtas::testing
