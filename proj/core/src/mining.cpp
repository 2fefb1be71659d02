#include "ddtas/mining.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ddtas {

namespace {

constexpr double kSymTol = 1e-9;

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

SimilarityMatrix::SimilarityMatrix(Eigen::MatrixXd values, std::vector<int> labels)
    : values_(std::move(values)), labels_(std::move(labels)) {
  const auto n = static_cast<Eigen::Index>(labels_.size());
  if (values_.rows() != n || values_.cols() != n) {
    throw std::invalid_argument("similarity matrix must be B x B with B labels");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(values_(i, i) - 1.0) > kSymTol) {
      throw std::invalid_argument("similarity diagonal must be 1 (row " + std::to_string(i) + ")");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      const double v = values_(i, j);
      if (!std::isfinite(v) || v < -1.0 - kSymTol || v > 1.0 + kSymTol) {
        throw std::invalid_argument("similarity out of [-1, 1]");
      }
      if (std::abs(v - values_(j, i)) > kSymTol) throw std::invalid_argument("similarity matrix not symmetric");
    }
  }
}

SimilarityMatrix similarity_matrix(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw std::invalid_argument("embedding rows and labels differ");
  }
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    if (std::abs(embeddings.row(i).norm() - 1.0) > 1e-6) {
      throw std::invalid_argument("embedding row " + std::to_string(i) + " is not unit-norm");
    }
  }
  Eigen::MatrixXd s = embeddings * embeddings.transpose();
  // Exact symmetry regardless of summation order in the product kernel.
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < s.cols(); ++j) s(j, i) = s(i, j);
  }
  return SimilarityMatrix(std::move(s), labels);
}

std::string to_string(MiningMode mode) {
  switch (mode) {
    case MiningMode::base: return "base";
    case MiningMode::symmetric: return "symmetric";
    case MiningMode::asms: return "asms";
    case MiningMode::at_asms: return "at_asms";
  }
  return "unknown";
}

MiningMode mining_mode_from_string(const std::string& name) {
  if (name == "base") return MiningMode::base;
  if (name == "symmetric") return MiningMode::symmetric;
  if (name == "asms") return MiningMode::asms;
  if (name == "at_asms") return MiningMode::at_asms;
  throw std::invalid_argument("unknown mining mode '" + name + "'");
}

void MiningConfig::validate() const {
  if (!std::isfinite(gamma) || !std::isfinite(gamma_pos) || !std::isfinite(gamma_neg)) {
    throw std::invalid_argument("mining tolerances must be finite");
  }
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("kappa must be finite and >= 0");
}

PairCounts pair_counts(std::int64_t batch_size, std::int64_t instances) {
  if (instances < 1 || batch_size < 1 || batch_size % instances != 0) {
    throw std::invalid_argument("pair_counts: batch size must be a positive multiple of instances");
  }
  return PairCounts{(batch_size * instances - batch_size) / 2,
                    (batch_size * batch_size - batch_size * instances) / 2};
}

PairCounts candidate_pair_counts(const std::vector<int>& labels) {
  PairCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) {
      (labels[i] == labels[j] ? c.n_pos : c.n_neg) += 1;
    }
  }
  return c;
}

MinedPairs mine_with_tolerances(const SimilarityMatrix& s, double tol_pos, double tol_neg) {
  const std::size_t n = s.size();
  const auto& labels = s.labels();
  MinedPairs out;
  out.positives.assign(n, {});
  out.negatives.assign(n, {});
  out.tolerance_pos = tol_pos;
  out.tolerance_neg = tol_neg;

  for (std::size_t i = 0; i < n; ++i) {
    double max_neg = -std::numeric_limits<double>::infinity();
    double min_pos = std::numeric_limits<double>::infinity();
    bool has_pos = false, has_neg = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double v = s(i, j);
      if (labels[j] == labels[i]) {
        has_pos = true;
        min_pos = std::min(min_pos, v);
      } else {
        has_neg = true;
        max_neg = std::max(max_neg, v);
      }
    }
    if (!has_pos || !has_neg) {
      out.skipped_anchors.push_back(static_cast<int>(i));
      continue;
    }
    const double pos_bound = max_neg + tol_pos;
    const double neg_bound = min_pos - tol_neg;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double v = s(i, j);
      if (labels[j] == labels[i]) {
        if (v < pos_bound) out.positives[i].push_back(static_cast<int>(j));
      } else if (v > neg_bound) {
        out.negatives[i].push_back(static_cast<int>(j));
      }
    }
    out.n_pos += static_cast<std::int64_t>(out.positives[i].size());
    out.n_neg += static_cast<std::int64_t>(out.negatives[i].size());
  }
  return out;
}

MinedPairs mine_base(const SimilarityMatrix& s) { return mine_with_tolerances(s, 0.0, 0.0); }

MinedPairs mine_symmetric(const SimilarityMatrix& s, double gamma) { return mine_with_tolerances(s, gamma, gamma); }

MinedPairs mine_asms(const SimilarityMatrix& s, double gamma_pos, double gamma_neg) {
  return mine_with_tolerances(s, gamma_pos, gamma_neg);
}

MiningDecision adaptive_thresholds(double gamma_pos, double gamma_neg, double kappa,
                                   std::int64_t n_neg_first_pass, std::int64_t total_pos) {
  if (total_pos <= 0) throw std::invalid_argument("adaptive_thresholds: total positive pair count must be > 0");
  MiningDecision d;
  d.first_n_neg = n_neg_first_pass;
  d.xi = static_cast<double>(n_neg_first_pass) / static_cast<double>(total_pos);
  d.sigma_xi = logistic(d.xi);
  if (d.xi > 1.0) {
    d.eps_pos = kappa * gamma_pos * d.sigma_xi;
    d.eps_neg = kappa * gamma_neg * d.sigma_xi;
    d.gamma_pos_hat = gamma_pos + d.eps_pos;
    d.gamma_neg_hat = gamma_neg - d.eps_neg;
    d.adjusted = true;
  } else {
    d.gamma_pos_hat = gamma_pos;
    d.gamma_neg_hat = gamma_neg;
  }
  return d;
}

MiningResult mine_at_asms(const SimilarityMatrix& s, const MiningConfig& config, std::int64_t total_pos) {
  if (config.mode != MiningMode::at_asms) throw std::invalid_argument("mine_at_asms requires mode at_asms");
  config.validate();
  MinedPairs first = mine_asms(s, config.gamma_pos, config.gamma_neg);
  MiningDecision d = adaptive_thresholds(config.gamma_pos, config.gamma_neg, config.kappa, first.n_neg, total_pos);
  d.first_n_pos = first.n_pos;
  if (!d.adjusted) return MiningResult{std::move(first), d};
  return MiningResult{mine_asms(s, d.gamma_pos_hat, d.gamma_neg_hat), d};
}

MiningResult mine(const SimilarityMatrix& s, const MiningConfig& config, std::int64_t total_pos) {
  config.validate();
  if (config.mode == MiningMode::at_asms) return mine_at_asms(s, config, total_pos);

  MiningResult r;
  double tol_pos = 0.0, tol_neg = 0.0;
  switch (config.mode) {
    case MiningMode::base: break;
    case MiningMode::symmetric: tol_pos = tol_neg = config.gamma; break;
    case MiningMode::asms:
      tol_pos = config.gamma_pos;
      tol_neg = config.gamma_neg;
      break;
    case MiningMode::at_asms: break;
  }
  r.pairs = mine_with_tolerances(s, tol_pos, tol_neg);
  r.decision.first_n_pos = r.pairs.n_pos;
  r.decision.first_n_neg = r.pairs.n_neg;
  if (total_pos > 0) {
    r.decision.xi = static_cast<double>(r.pairs.n_neg) / static_cast<double>(total_pos);
    r.decision.sigma_xi = logistic(r.decision.xi);
  }
  r.decision.gamma_pos_hat = tol_pos;
  r.decision.gamma_neg_hat = tol_neg;
  return r;
}

}  // namespace ddtas
