#include "ddtas/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace ddtas {

std::string to_string(LossNormalization n) { return n == LossNormalization::global ? "global" : "per_anchor"; }

LossNormalization loss_normalization_from_string(const std::string& name) {
  if (name == "per_anchor") return LossNormalization::per_anchor;
  if (name == "global") return LossNormalization::global;
  throw std::invalid_argument("unknown loss normalization '" + name + "'");
}

void LossParams::validate() const {
  if (!(mu > 0.0) || !(nu > 0.0) || !std::isfinite(mu) || !std::isfinite(nu)) {
    throw std::invalid_argument("loss scales mu and nu must be finite and > 0");
  }
  if (!std::isfinite(lambda) || !std::isfinite(alpha_pos) || !std::isfinite(alpha_neg)) {
    throw std::invalid_argument("loss thresholds must be finite");
  }
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

LossOutput soft_contrastive(const SimilarityMatrix& s, const MinedPairs& pairs, const LossParams& params) {
  params.validate();
  if (pairs.num_anchors() != s.size()) throw std::invalid_argument("mined pairs do not match similarity matrix");

  LossOutput out;
  for (std::size_t a = 0; a < pairs.num_anchors(); ++a) {
    if (!pairs.positives[a].empty() || !pairs.negatives[a].empty()) ++out.anchors_used;
  }
  if (out.anchors_used == 0) return out;

  const bool global = params.normalization == LossNormalization::global;
  // Under global normalization each branch is already a batch mean.
  const double anchor_scale = global ? 1.0 : 1.0 / out.anchors_used;
  const double lambda = params.lambda;

  for (std::size_t a = 0; a < pairs.num_anchors(); ++a) {
    const auto& pos = pairs.positives[a];
    const auto& neg = pairs.negatives[a];
    if (!pos.empty()) {
      const double count = global ? static_cast<double>(pairs.n_pos) : static_cast<double>(pos.size());
      const double w = anchor_scale / count;
      for (int p : pos) {
        const double x = params.mu * (lambda - s(a, static_cast<std::size_t>(p)));
        out.value += w * softplus(x) / params.mu;
        const double sg = sigmoid(x);
        out.grad_s.push_back({static_cast<int>(a), p, true, -w * sg});
        out.grad_lambda += w * sg;
      }
    }
    if (!neg.empty()) {
      const double count = global ? static_cast<double>(pairs.n_neg) : static_cast<double>(neg.size());
      const double w = anchor_scale / count;
      for (int k : neg) {
        const double x = params.nu * (s(a, static_cast<std::size_t>(k)) - lambda);
        out.value += w * softplus(x) / params.nu;
        const double sg = sigmoid(x);
        out.grad_s.push_back({static_cast<int>(a), k, false, w * sg});
        out.grad_lambda -= w * sg;
      }
    }
  }
  return out;
}

LossOutput contrastive(const SimilarityMatrix& s, const MinedPairs& pairs, const LossParams& params) {
  params.validate();
  if (pairs.num_anchors() != s.size()) throw std::invalid_argument("mined pairs do not match similarity matrix");

  LossOutput out;
  const std::int64_t total = pairs.n_pos + pairs.n_neg;
  if (total == 0) return out;
  const double w = 1.0 / static_cast<double>(total);

  for (std::size_t a = 0; a < pairs.num_anchors(); ++a) {
    const auto& pos = pairs.positives[a];
    const auto& neg = pairs.negatives[a];
    if (!pos.empty() || !neg.empty()) ++out.anchors_used;
    for (int p : pos) {
      const double gap = params.alpha_pos - s(a, static_cast<std::size_t>(p));
      if (gap > 0.0) {
        out.value += w * gap;
        out.grad_s.push_back({static_cast<int>(a), p, true, -w});
      } else {
        out.grad_s.push_back({static_cast<int>(a), p, true, 0.0});
      }
    }
    for (int k : neg) {
      const double gap = s(a, static_cast<std::size_t>(k)) - params.alpha_neg;
      if (gap > 0.0) {
        out.value += w * gap;
        out.grad_s.push_back({static_cast<int>(a), k, false, w});
      } else {
        out.grad_s.push_back({static_cast<int>(a), k, false, 0.0});
      }
    }
  }
  return out;
}

Eigen::MatrixXd embedding_grad(const Eigen::MatrixXd& embeddings, const std::vector<PairGrad>& grad_s) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(embeddings.rows(), embeddings.cols());
  for (const auto& pg : grad_s) {
    if (pg.grad == 0.0) continue;
    g.row(pg.anchor) += pg.grad * embeddings.row(pg.partner);
    g.row(pg.partner) += pg.grad * embeddings.row(pg.anchor);
  }
  return g;
}

}  // namespace ddtas
