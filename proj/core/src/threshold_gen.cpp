#include "ddtas/threshold_gen.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ddtas/errors.hpp"

namespace ddtas {

std::string to_string(LambdaUpdateMode m) { return m == LambdaUpdateMode::literal ? "literal" : "incremental"; }
std::string to_string(MetaPass p) { return p == MetaPass::full_epoch ? "full_epoch" : "single_batch"; }

LambdaUpdateMode lambda_update_mode_from_string(const std::string& name) {
  if (name == "incremental") return LambdaUpdateMode::incremental;
  if (name == "literal") return LambdaUpdateMode::literal;
  throw std::invalid_argument("unknown update mode '" + name + "'");
}

MetaPass meta_pass_from_string(const std::string& name) {
  if (name == "single_batch") return MetaPass::single_batch;
  if (name == "full_epoch") return MetaPass::full_epoch;
  throw std::invalid_argument("unknown meta pass '" + name + "'");
}

void MetaConfig::validate() const {
  if (!(psi >= 0.0) || !(phi >= 0.0) || !(fd_h > 0.0) || !std::isfinite(psi) || !std::isfinite(phi) ||
      !std::isfinite(fd_h)) {
    throw std::invalid_argument("meta config needs psi >= 0, phi >= 0, fd_h > 0");
  }
  if (meta_batch_size < 0) throw std::invalid_argument("meta_batch_size must be >= 0");
  if (generator_period < 1) throw std::invalid_argument("generator_period must be >= 1");
}

FeatureBatch make_batch(const LabeledDataset& data, const std::vector<std::size_t>& rows) {
  FeatureBatch b{gather_rows(data, rows), {}};
  b.labels.reserve(rows.size());
  for (auto r : rows) b.labels.push_back(data.labels()[r]);
  return b;
}

LookaheadResult lookahead_params(const EmbeddingNet& net, const FeatureBatch& batch, const MinedPairs& pairs,
                                 const LossParams& params, double lambda, double psi) {
  if (pairs.empty()) return LookaheadResult{net, true};
  const ForwardCache cache = forward_cached(net, batch.inputs);
  const SimilarityMatrix s = similarity_matrix(cache.output, batch.labels);
  LossParams p = params;
  p.lambda = lambda;
  const LossOutput loss = soft_contrastive(s, pairs, p);
  const Eigen::MatrixXd g_emb = embedding_grad(cache.output, loss.grad_s);
  return LookaheadResult{sgd_step(net, backward(net, cache, g_emb), psi), false};
}

double meta_loss_fixed_pairs(const EmbeddingNet& net_hat, const FeatureBatch& meta_batch, const MinedPairs& meta_pairs,
                             const LossParams& params, double lambda_eval) {
  const SimilarityMatrix s = similarity_matrix(forward(net_hat, meta_batch.inputs), meta_batch.labels);
  LossParams p = params;
  p.lambda = lambda_eval;
  return soft_contrastive(s, meta_pairs, p).value;
}

namespace {

MinedPairs mine_meta(const EmbeddingNet& net_hat, const FeatureBatch& meta_batch, const MiningConfig& mining) {
  const SimilarityMatrix s = similarity_matrix(forward(net_hat, meta_batch.inputs), meta_batch.labels);
  MinedPairs pairs = mine_asms(s, mining.gamma_pos, mining.gamma_neg);
  if (pairs.empty()) throw StarvedBatchError("meta batch is starved: static ASMS mining kept no pairs");
  return pairs;
}

}  // namespace

double meta_loss(const EmbeddingNet& net_hat, const FeatureBatch& meta_batch, const MiningConfig& mining,
                 const LossParams& params, double lambda_eval) {
  return meta_loss_fixed_pairs(net_hat, meta_batch, mine_meta(net_hat, meta_batch, mining), params, lambda_eval);
}

MetaGradient meta_gradient_fd(const EmbeddingNet& net, const FeatureBatch& main_batch, const MinedPairs& main_pairs,
                              const FeatureBatch& meta_batch, const MiningConfig& mining, const LossParams& params,
                              double lambda, const MetaConfig& cfg) {
  cfg.validate();
  if (main_pairs.empty()) return MetaGradient{0.0, true};

  const LookaheadResult centre = lookahead_params(net, main_batch, main_pairs, params, lambda, cfg.psi);
  const MinedPairs meta_pairs = mine_meta(centre.net, meta_batch, mining);

  const double h = cfg.fd_h;
  const EmbeddingNet up = lookahead_params(net, main_batch, main_pairs, params, lambda + h, cfg.psi).net;
  const EmbeddingNet down = lookahead_params(net, main_batch, main_pairs, params, lambda - h, cfg.psi).net;
  const double l_up = meta_loss_fixed_pairs(up, meta_batch, meta_pairs, params, lambda);
  const double l_down = meta_loss_fixed_pairs(down, meta_batch, meta_pairs, params, lambda);
  return MetaGradient{(l_up - l_down) / (2.0 * h), false};
}

double update_lambda(double lambda, double g, double phi, LambdaUpdateMode mode) {
  if (!(phi >= 0.0)) throw std::invalid_argument("phi must be >= 0");
  const double raw = mode == LambdaUpdateMode::incremental ? lambda - phi * g : -phi * g;
  return std::max(0.0, raw);
}

ThresholdUpdate generate_threshold(const EmbeddingNet& net, const FeatureBatch& main_batch,
                                   const MinedPairs& main_pairs, std::span<const FeatureBatch> meta_batches,
                                   const MiningConfig& mining, const LossParams& params, double lambda,
                                   const MetaConfig& cfg) {
  cfg.validate();
  if (meta_batches.empty()) throw std::invalid_argument("generate_threshold needs at least one meta batch");

  ThresholdUpdate out;
  const std::size_t used = cfg.meta_pass == MetaPass::single_batch ? 1 : meta_batches.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < used; ++i) {
    const MetaGradient mg = meta_gradient_fd(net, main_batch, main_pairs, meta_batches[i], mining, params, lambda, cfg);
    if (mg.starved_main) {
      out.starved_main = true;
      break;
    }
    sum += mg.g;
  }
  out.g = out.starved_main ? 0.0 : sum / static_cast<double>(used);
  out.lambda = update_lambda(lambda, out.g, cfg.phi, cfg.update_mode);
  return out;
}

std::vector<FeatureBatch> draw_meta_batches(const MetaSet& meta, const MetaConfig& cfg, int instances, Rng& rng) {
  const auto& data = meta.data;
  std::vector<FeatureBatch> out;
  if (cfg.meta_batch_size == 0 || static_cast<std::size_t>(cfg.meta_batch_size) >= data.size()) {
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    out.push_back(make_batch(data, all));
    return out;
  }
  const std::size_t count =
      cfg.meta_pass == MetaPass::single_batch ? 1 : data.size() / static_cast<std::size_t>(cfg.meta_batch_size);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(make_batch(data, pk_sample(data, cfg.meta_batch_size, instances, rng).rows));
  }
  return out;
}

}  // namespace ddtas
