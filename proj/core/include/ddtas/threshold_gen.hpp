#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddtas/data.hpp"
#include "ddtas/loss.hpp"
#include "ddtas/mining.hpp"
#include "ddtas/model.hpp"

namespace ddtas {

// incremental: lambda' = [lambda - phi g]_+
// literal:     lambda' = [-phi g]_+
enum class LambdaUpdateMode { incremental, literal };
enum class MetaPass { single_batch, full_epoch };

std::string to_string(LambdaUpdateMode m);
std::string to_string(MetaPass p);
LambdaUpdateMode lambda_update_mode_from_string(const std::string& name);
MetaPass meta_pass_from_string(const std::string& name);

struct MetaConfig {
  double psi = 1e-5;   // lookahead SGD step
  double phi = 0.01;   // threshold descent step
  double fd_h = 1e-3;  // central-difference half-width on lambda
  LambdaUpdateMode update_mode = LambdaUpdateMode::incremental;
  MetaPass meta_pass = MetaPass::single_batch;
  int meta_batch_size = 0;  // 0: the whole meta set is one batch
  int generator_period = 1;

  void validate() const;
};

// Inputs plus labels for one batch, detached from any dataset.
struct FeatureBatch {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;
};

FeatureBatch make_batch(const LabeledDataset& data, const std::vector<std::size_t>& rows);

struct LookaheadResult {
  EmbeddingNet net;
  bool starved = false;
};

// One SGD step on the soft contrastive loss of `batch` restricted to `pairs`,
// at threshold `lambda`. The input net is not modified.
LookaheadResult lookahead_params(const EmbeddingNet& net, const FeatureBatch& batch, const MinedPairs& pairs,
                                 const LossParams& params, double lambda, double psi);

// Soft contrastive loss of `meta_batch` through `net_hat`, mined with static
// ASMS tolerances from `mining`, at threshold `lambda_eval`. Throws
// StarvedBatchError when mining keeps no pair.
double meta_loss(const EmbeddingNet& net_hat, const FeatureBatch& meta_batch, const MiningConfig& mining,
                 const LossParams& params, double lambda_eval);

// Same, with mining replaced by a fixed set of meta pairs.
double meta_loss_fixed_pairs(const EmbeddingNet& net_hat, const FeatureBatch& meta_batch, const MinedPairs& meta_pairs,
                             const LossParams& params, double lambda_eval);

struct MetaGradient {
  double g = 0.0;
  bool starved_main = false;
};

// g = [L_m(theta_hat(lambda + h)) - L_m(theta_hat(lambda - h))] / (2h) with
// the meta mining mask and the meta loss threshold taken from the
// unperturbed lookahead theta_hat(lambda).
MetaGradient meta_gradient_fd(const EmbeddingNet& net, const FeatureBatch& main_batch, const MinedPairs& main_pairs,
                              const FeatureBatch& meta_batch, const MiningConfig& mining, const LossParams& params,
                              double lambda, const MetaConfig& cfg);

double update_lambda(double lambda, double g, double phi, LambdaUpdateMode mode);

struct ThresholdUpdate {
  double lambda = 0.0;
  double g = 0.0;
  bool starved_main = false;
};

// single_batch uses meta_batches.front(); full_epoch averages g over all of
// them. The live net is only read.
ThresholdUpdate generate_threshold(const EmbeddingNet& net, const FeatureBatch& main_batch,
                                   const MinedPairs& main_pairs, std::span<const FeatureBatch> meta_batches,
                                   const MiningConfig& mining, const LossParams& params, double lambda,
                                   const MetaConfig& cfg);

// Meta batches for one generator call: one P-K batch for single_batch, or
// floor(|meta| / size) P-K batches for full_epoch. meta_batch_size == 0 (or
// >= |meta|) yields the whole meta set in row order.
std::vector<FeatureBatch> draw_meta_batches(const MetaSet& meta, const MetaConfig& cfg, int instances, Rng& rng);

}  // namespace ddtas
