#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ddtas {

// Cosine similarities of a batch of unit-norm embeddings, with batch labels.
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;

  // Validates shape, symmetry (1e-9), unit diagonal (1e-9) and range.
  SimilarityMatrix(Eigen::MatrixXd values, std::vector<int> labels);

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }
  double operator()(std::size_t i, std::size_t j) const {
    return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }

 private:
  Eigen::MatrixXd values_;
  std::vector<int> labels_;
};

// Requires unit-norm rows (|norm - 1| <= 1e-6); throws std::invalid_argument otherwise.
SimilarityMatrix similarity_matrix(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels);

enum class MiningMode { base, symmetric, asms, at_asms };

std::string to_string(MiningMode mode);
MiningMode mining_mode_from_string(const std::string& name);

struct MiningConfig {
  MiningMode mode = MiningMode::at_asms;
  double gamma = 0.01;       // symmetric mode
  double gamma_pos = 0.1;    // asms / at_asms
  double gamma_neg = 0.01;   // asms / at_asms
  double kappa = 0.5;

  void validate() const;
};

// Per-anchor kept partners. Anchors lacking a positive or a negative
// candidate contribute nothing and are listed in `skipped_anchors`.
struct MinedPairs {
  std::vector<std::vector<int>> positives;
  std::vector<std::vector<int>> negatives;
  std::int64_t n_pos = 0;
  std::int64_t n_neg = 0;
  double tolerance_pos = 0.0;
  double tolerance_neg = 0.0;
  std::vector<int> skipped_anchors;

  std::size_t num_anchors() const noexcept { return positives.size(); }
  bool empty() const noexcept { return n_pos == 0 && n_neg == 0; }
};

struct PairCounts {
  std::int64_t n_pos = 0;
  std::int64_t n_neg = 0;
};

// Candidate unordered pairs in a P-K batch:
//   N_neg = (B^2 - B * instances) / 2,  N_pos = (B * instances - B) / 2.
PairCounts pair_counts(std::int64_t batch_size, std::int64_t instances);

// Same quantity counted from an arbitrary label vector.
PairCounts candidate_pair_counts(const std::vector<int>& labels);

// Relative mining with per-anchor extrema and strict inequalities:
//   keep positive j  iff  S_ij < max_k S_ik(neg) + tol_pos
//   keep negative k  iff  S_ik > min_j S_ij(pos) - tol_neg
MinedPairs mine_with_tolerances(const SimilarityMatrix& s, double tol_pos, double tol_neg);

MinedPairs mine_base(const SimilarityMatrix& s);
MinedPairs mine_symmetric(const SimilarityMatrix& s, double gamma);
MinedPairs mine_asms(const SimilarityMatrix& s, double gamma_pos, double gamma_neg);

struct MiningDecision {
  std::int64_t first_n_pos = 0;
  std::int64_t first_n_neg = 0;
  double xi = 0.0;
  double sigma_xi = 0.0;
  double eps_pos = 0.0;
  double eps_neg = 0.0;
  double gamma_pos_hat = 0.0;
  double gamma_neg_hat = 0.0;
  bool adjusted = false;
};

// xi = n_neg / N_pos. If xi > 1 the tolerances become
//   gamma_pos + kappa * gamma_pos * sigmoid(xi),  gamma_neg - kappa * gamma_neg * sigmoid(xi);
// otherwise they are returned unchanged. Throws when total_pos <= 0.
MiningDecision adaptive_thresholds(double gamma_pos, double gamma_neg, double kappa,
                                   std::int64_t n_neg_first_pass, std::int64_t total_pos);

struct MiningResult {
  MinedPairs pairs;
  MiningDecision decision;
};

// Two-pass adaptive-tolerance asymmetric mining. Requires mode == at_asms.
MiningResult mine_at_asms(const SimilarityMatrix& s, const MiningConfig& config, std::int64_t total_pos);

// Dispatch on config.mode. Static modes report an unadjusted decision whose
// first-pass counts equal the output counts.
MiningResult mine(const SimilarityMatrix& s, const MiningConfig& config, std::int64_t total_pos);

}  // namespace ddtas
