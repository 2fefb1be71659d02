#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddtas/mining.hpp"

namespace ddtas {

// Branch normalization for the soft contrastive loss.
//   per_anchor: each anchor's positive/negative sums are divided by that
//               anchor's mined counts, then averaged over contributing anchors.
//   global:     each branch is divided by the batch-wide mined count.
enum class LossNormalization { per_anchor, global };

std::string to_string(LossNormalization n);
LossNormalization loss_normalization_from_string(const std::string& name);

struct LossParams {
  double lambda = 0.7;
  double mu = 2.0;
  double nu = 40.0;
  double alpha_pos = 0.7;
  double alpha_neg = 0.7;
  LossNormalization normalization = LossNormalization::per_anchor;

  void validate() const;
};

// d loss / d S(anchor, partner) for one mined, anchor-directed pair.
struct PairGrad {
  int anchor = 0;
  int partner = 0;
  bool positive = false;
  double grad = 0.0;
};

struct LossOutput {
  double value = 0.0;
  std::vector<PairGrad> grad_s;
  double grad_lambda = 0.0;
  int anchors_used = 0;
};

// Overflow-safe log(1 + e^x) and logistic.
double softplus(double x);
double sigmoid(double x);

// Per anchor a:
//   L_a = 1/(mu n_pos^a) sum_pos log(1 + e^{mu (lambda - S)})
//       + 1/(nu n_neg^a) sum_neg log(1 + e^{nu (S - lambda)})
// L = mean of L_a over anchors with at least one mined pair. An empty branch
// contributes zero. Gradients are with respect to the matrix entries S(a, p)
// read from the anchor's row.
LossOutput soft_contrastive(const SimilarityMatrix& s, const MinedPairs& pairs, const LossParams& params);

// Mean over mined pairs of [S_neg - alpha_neg]_+ + [alpha_pos - S_pos]_+, with
// subgradient 0 at the hinge corner. grad_lambda is always 0.
LossOutput contrastive(const SimilarityMatrix& s, const MinedPairs& pairs, const LossParams& params);

// Chain dL/dS through S = E E^T into dL/dE for a B x D embedding batch.
Eigen::MatrixXd embedding_grad(const Eigen::MatrixXd& embeddings, const std::vector<PairGrad>& grad_s);

}  // namespace ddtas
