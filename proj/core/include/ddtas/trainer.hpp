#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "ddtas/data.hpp"
#include "ddtas/eval.hpp"
#include "ddtas/loss.hpp"
#include "ddtas/mining.hpp"
#include "ddtas/model.hpp"
#include "ddtas/threshold_gen.hpp"

namespace ddtas {

enum class OptimizerKind { sgd, adam };
enum class LossKind { soft_contrastive, contrastive };

std::string to_string(OptimizerKind k);
std::string to_string(LossKind k);
OptimizerKind optimizer_from_string(const std::string& name);
LossKind loss_kind_from_string(const std::string& name);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 40;
  int instances = 5;

  std::vector<int> hidden_dims{64};
  int embedding_dim = 16;
  double norm_floor = 0.0;

  OptimizerKind optimizer = OptimizerKind::adam;
  AdamOptions adam{};  // adam.lr is also the SGD learning rate

  LossKind loss = LossKind::soft_contrastive;
  LossParams loss_params{};
  MiningConfig mining{};

  bool generator_enabled = true;
  MetaConfig meta{};
  int meta_per_class = 5;

  std::uint64_t seed = 1;

  int eval_every = 0;  // epochs; 0 disables in-loop evaluation
  EvalOptions eval{};

  std::filesystem::path checkpoint_dir;  // empty disables periodic state files
  int checkpoint_every = 0;             // epochs

  double learning_rate() const noexcept { return adam.lr; }
  void validate() const;
};

struct IterationRecord {
  std::int64_t iteration = 0;
  int epoch = 0;
  double loss = 0.0;
  std::int64_t first_n_pos = 0;
  std::int64_t first_n_neg = 0;
  std::int64_t n_pos = 0;
  std::int64_t n_neg = 0;
  double xi = 0.0;
  double gamma_pos_hat = 0.0;
  double gamma_neg_hat = 0.0;
  bool adjusted = false;
  double lambda = 0.0;
  double meta_grad = 0.0;
  int anchors_used = 0;
  bool skipped = false;       // starved batch, no update
  bool meta_starved = false;  // generator skipped, lambda unchanged
};

struct EvalRecord {
  int epoch = 0;
  std::int64_t iteration = 0;
  std::map<int, double> recall_at;
  double nmi = 0.0;
};

struct MetricsLog {
  std::vector<IterationRecord> iterations;
  std::vector<EvalRecord> evals;

  void write_jsonl(std::ostream& out) const;
  void write_jsonl(const std::filesystem::path& path) const;
};

std::string to_json_line(const IterationRecord& r);
std::string to_json_line(const EvalRecord& r);

// What the trainer saw in one iteration, for instrumentation.
struct IterationContext {
  const Batch& batch;
  const SimilarityMatrix& similarity;
  const MiningResult& mining;
  const IterationRecord& record;
};

using IterationObserver = std::function<void(const IterationContext&)>;

// Per iteration: P-K sample, forward, mine, optionally regenerate lambda
// (before the loss), loss, backward, optimizer step. Deterministic given
// (config, dataset).
class Trainer {
 public:
  Trainer(TrainConfig config, const LabeledDataset& train, const LabeledDataset* eval_set = nullptr);

  void set_observer(IterationObserver observer) { observer_ = std::move(observer); }
  // Each record is also written here as one JSON line when set.
  void set_metrics_stream(std::ostream* out) { stream_ = out; }

  void run();
  // Runs at most n further epochs.
  void run_epochs(int n);
  bool finished() const noexcept { return epoch_ >= config_.epochs; }

  const TrainConfig& config() const noexcept { return config_; }
  const EmbeddingNet& net() const noexcept { return net_; }
  double lambda() const noexcept { return lambda_; }
  const MetricsLog& log() const noexcept { return log_; }
  int epoch() const noexcept { return epoch_; }
  std::int64_t iteration() const noexcept { return iteration_; }
  std::int64_t iterations_per_epoch() const noexcept { return iters_per_epoch_; }
  const MetaSet& meta_set() const noexcept { return meta_; }

  EvalReport evaluate(const LabeledDataset& data) const;

  // Resumable state: parameters, lambda, optimizer moments, RNG and counters.
  void save_state(const std::filesystem::path& path) const;
  void load_state(const std::filesystem::path& path);

 private:
  void run_iteration();
  void record_eval();

  TrainConfig config_;
  const LabeledDataset& train_;
  const LabeledDataset* eval_set_;
  MetaSet meta_;
  EmbeddingNet net_;
  AdamState adam_;
  double lambda_;
  Rng rng_;
  int epoch_ = 0;
  std::int64_t iteration_ = 0;
  std::int64_t iters_per_epoch_ = 0;
  MetricsLog log_;
  IterationObserver observer_;
  std::ostream* stream_ = nullptr;
};

struct TrainResult {
  EmbeddingNet net;
  double lambda = 0.0;
  MetricsLog log;
};

TrainResult train(const TrainConfig& config, const LabeledDataset& dataset);

}  // namespace ddtas
