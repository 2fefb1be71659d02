#include "ddtas/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ddtas/errors.hpp"

namespace ddtas {

namespace {

constexpr const char* kStateMagic = "ddtas-train-state";
constexpr int kStateVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return splitmix64(seed ^ splitmix64(stream)); }

std::vector<int> layer_dims_for(const TrainConfig& cfg, int input_dim) {
  std::vector<int> dims{input_dim};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(cfg.embedding_dim);
  return dims;
}

// Moments share the parameter shapes, so they travel in checkpoint blocks.
EmbeddingNet as_net(const EmbeddingNet& shape, const ParamGrads& g) {
  EmbeddingNet n = shape;
  n.set_norm_floor(0.0);
  n.layers() = g.layers;
  return n;
}

std::string next_line(std::istream& in, const std::string& source, std::size_t& line_no) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source, line_no, "unexpected end of state file");
  ++line_no;
  return line;
}

}  // namespace

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adam"; }
std::string to_string(LossKind k) { return k == LossKind::contrastive ? "contrastive" : "soft_contrastive"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + name + "'");
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "soft_contrastive") return LossKind::soft_contrastive;
  if (name == "contrastive") return LossKind::contrastive;
  throw std::invalid_argument("unknown loss '" + name + "'");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (instances < 1 || batch_size < 1 || batch_size % instances != 0) {
    throw std::invalid_argument("batch_size must be a positive multiple of instances");
  }
  if (!(adam.lr > 0.0) || !std::isfinite(adam.lr)) throw std::invalid_argument("learning rate must be > 0");
  if (embedding_dim < 1) throw std::invalid_argument("embedding_dim must be >= 1");
  for (int h : hidden_dims) {
    if (h < 1) throw std::invalid_argument("hidden dims must be >= 1");
  }
  if (mining.mode == MiningMode::at_asms && instances < 2) {
    throw std::invalid_argument("at_asms mining needs instances >= 2 (no positive pairs otherwise)");
  }
  if (meta_per_class < 1) throw std::invalid_argument("meta_per_class must be >= 1");
  if (eval_every < 0 || checkpoint_every < 0) throw std::invalid_argument("cadences must be >= 0");
  loss_params.validate();
  mining.validate();
  meta.validate();
}

std::string to_json_line(const IterationRecord& r) {
  nlohmann::ordered_json j;
  j["type"] = "iteration";
  j["iteration"] = r.iteration;
  j["epoch"] = r.epoch;
  j["loss"] = r.loss;
  j["first_n_pos"] = r.first_n_pos;
  j["first_n_neg"] = r.first_n_neg;
  j["n_pos"] = r.n_pos;
  j["n_neg"] = r.n_neg;
  j["xi"] = r.xi;
  j["gamma_pos_hat"] = r.gamma_pos_hat;
  j["gamma_neg_hat"] = r.gamma_neg_hat;
  j["adjusted"] = r.adjusted;
  j["lambda"] = r.lambda;
  j["meta_grad"] = r.meta_grad;
  j["anchors_used"] = r.anchors_used;
  j["skipped"] = r.skipped;
  j["meta_starved"] = r.meta_starved;
  return j.dump();
}

std::string to_json_line(const EvalRecord& r) {
  nlohmann::ordered_json j;
  j["type"] = "eval";
  j["epoch"] = r.epoch;
  j["iteration"] = r.iteration;
  nlohmann::ordered_json recall = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.recall_at) recall[std::to_string(k)] = v;
  j["recall_at"] = recall;
  j["nmi"] = r.nmi;
  return j.dump();
}

void MetricsLog::write_jsonl(std::ostream& out) const {
  for (const auto& r : iterations) out << to_json_line(r) << '\n';
  for (const auto& r : evals) out << to_json_line(r) << '\n';
}

void MetricsLog::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  write_jsonl(out);
}

Trainer::Trainer(TrainConfig config, const LabeledDataset& train, const LabeledDataset* eval_set)
    : config_(std::move(config)), train_(train), eval_set_(eval_set), lambda_(config_.loss_params.lambda) {
  config_.validate();
  net_ = EmbeddingNet::he_uniform(layer_dims_for(config_, train_.dim()), derive_seed(config_.seed, 1));
  net_.set_norm_floor(config_.norm_floor);
  adam_ = AdamState::init(net_);
  rng_.seed(derive_seed(config_.seed, 3));
  iters_per_epoch_ = static_cast<std::int64_t>(train_.size()) / config_.batch_size;
  if (config_.epochs > 0 && iters_per_epoch_ == 0) {
    throw std::invalid_argument("training set is smaller than one batch");
  }
  if (config_.generator_enabled) {
    meta_ = build_meta_set(train_, config_.meta_per_class, derive_seed(config_.seed, 2));
  }
}

void Trainer::run() { run_epochs(config_.epochs - epoch_); }

void Trainer::run_epochs(int n) {
  for (int e = 0; e < n && !finished(); ++e) {
    for (std::int64_t i = 0; i < iters_per_epoch_; ++i) run_iteration();
    ++epoch_;
    if (config_.eval_every > 0 && epoch_ % config_.eval_every == 0) record_eval();
    if (!config_.checkpoint_dir.empty() && config_.checkpoint_every > 0 && epoch_ % config_.checkpoint_every == 0) {
      save_state(config_.checkpoint_dir / ("state_epoch_" + std::to_string(epoch_) + ".txt"));
    }
  }
}

void Trainer::run_iteration() {
  const Batch batch = pk_sample(train_, config_.batch_size, config_.instances, rng_);
  const FeatureBatch fb = make_batch(train_, batch.rows);
  const ForwardCache cache = forward_cached(net_, fb.inputs);
  const SimilarityMatrix s = similarity_matrix(cache.output, fb.labels);
  const std::int64_t total_pos = pair_counts(config_.batch_size, config_.instances).n_pos;
  const MiningResult mined = mine(s, config_.mining, total_pos);

  IterationRecord rec;
  rec.iteration = iteration_;
  rec.epoch = epoch_;
  rec.first_n_pos = mined.decision.first_n_pos;
  rec.first_n_neg = mined.decision.first_n_neg;
  rec.n_pos = mined.pairs.n_pos;
  rec.n_neg = mined.pairs.n_neg;
  rec.xi = mined.decision.xi;
  rec.gamma_pos_hat = mined.decision.gamma_pos_hat;
  rec.gamma_neg_hat = mined.decision.gamma_neg_hat;
  rec.adjusted = mined.decision.adjusted;

  auto finish = [&] {
    rec.lambda = lambda_;
    log_.iterations.push_back(rec);
    if (stream_) *stream_ << to_json_line(rec) << '\n';
    if (observer_) observer_(IterationContext{batch, s, mined, log_.iterations.back()});
    ++iteration_;
  };

  if (mined.pairs.empty()) {
    rec.skipped = true;
    finish();
    return;
  }

  if (config_.generator_enabled && iteration_ % config_.meta.generator_period == 0) {
    const auto meta_batches = draw_meta_batches(meta_, config_.meta, config_.instances, rng_);
    try {
      const ThresholdUpdate upd = generate_threshold(net_, fb, mined.pairs, meta_batches, config_.mining,
                                                     config_.loss_params, lambda_, config_.meta);
      lambda_ = upd.lambda;
      rec.meta_grad = upd.g;
    } catch (const StarvedBatchError&) {
      rec.meta_starved = true;
    }
  }

  LossParams params = config_.loss_params;
  params.lambda = lambda_;
  const LossOutput loss = config_.loss == LossKind::soft_contrastive ? soft_contrastive(s, mined.pairs, params)
                                                                    : contrastive(s, mined.pairs, params);
  if (!std::isfinite(loss.value)) {
    throw std::runtime_error("non-finite loss at iteration " + std::to_string(iteration_) + " (epoch " +
                             std::to_string(epoch_) + ", lambda " + std::to_string(lambda_) + ")");
  }
  rec.loss = loss.value;
  rec.anchors_used = loss.anchors_used;

  const ParamGrads grads = backward(net_, cache, embedding_grad(cache.output, loss.grad_s));
  if (config_.optimizer == OptimizerKind::adam) {
    AdamResult r = adam_step(adam_, net_, grads, config_.adam);
    net_ = std::move(r.net);
    adam_ = std::move(r.state);
  } else {
    net_ = sgd_step(net_, grads, config_.adam.lr);
  }
  finish();
}

EvalReport Trainer::evaluate(const LabeledDataset& data) const {
  return ddtas::evaluate(forward(net_, data.features()), data.labels(), config_.eval);
}

void Trainer::record_eval() {
  const EvalReport report = evaluate(eval_set_ ? *eval_set_ : train_);
  EvalRecord rec{epoch_, iteration_, report.recall_at, report.nmi};
  log_.evals.push_back(rec);
  if (stream_) *stream_ << to_json_line(rec) << '\n';
}

void Trainer::save_state(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open state file for writing: " + path.string());
  out << kStateMagic << ' ' << kStateVersion << '\n';
  out << "epoch " << epoch_ << '\n';
  out << "iteration " << iteration_ << '\n';
  out << "adam_step " << adam_.step << '\n';
  out << "rng " << rng_ << '\n';
  write_checkpoint(out, net_, lambda_);
  write_checkpoint(out, as_net(net_, adam_.first_moment), 0.0);
  write_checkpoint(out, as_net(net_, adam_.second_moment), 0.0);
  if (!out) throw std::runtime_error("failed writing state file: " + path.string());
}

void Trainer::load_state(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open state file: " + path.string());
  const std::string source = path.string();
  std::size_t line_no = 0;

  auto keyed = [&](const std::string& key) {
    std::istringstream ss(next_line(in, source, line_no));
    std::string k;
    ss >> k;
    if (k != key) throw ParseError(source, line_no, "expected '" + key + "'");
    std::string rest;
    std::getline(ss, rest);
    return rest;
  };
  auto as_int = [&](const std::string& text) {
    std::istringstream ss(text);
    long long v = 0;
    if (!(ss >> v)) throw ParseError(source, line_no, "expected integer");
    return v;
  };

  {
    std::istringstream ss(next_line(in, source, line_no));
    std::string magic;
    int version = 0;
    ss >> magic >> version;
    if (magic != kStateMagic || version != kStateVersion) throw ParseError(source, line_no, "not a ddtas train state v1");
  }
  const auto epoch = static_cast<int>(as_int(keyed("epoch")));
  const auto iteration = as_int(keyed("iteration"));
  const auto adam_step_count = as_int(keyed("adam_step"));
  Rng rng;
  {
    std::istringstream ss(keyed("rng"));
    if (!(ss >> rng)) throw ParseError(source, line_no, "bad rng state");
  }
  Checkpoint params = read_checkpoint(in, source);
  Checkpoint m1 = read_checkpoint(in, source);
  Checkpoint m2 = read_checkpoint(in, source);
  if (params.net.layer_dims() != net_.layer_dims() || m1.net.layer_dims() != net_.layer_dims() ||
      m2.net.layer_dims() != net_.layer_dims()) {
    throw ParseError(source, line_no, "state shapes do not match the configured network");
  }

  epoch_ = epoch;
  iteration_ = iteration;
  rng_ = rng;
  net_ = std::move(params.net);
  lambda_ = params.lambda;
  adam_.step = adam_step_count;
  adam_.first_moment.layers = m1.net.layers();
  adam_.second_moment.layers = m2.net.layers();
}

TrainResult train(const TrainConfig& config, const LabeledDataset& dataset) {
  Trainer t(config, dataset);
  t.run();
  return TrainResult{t.net(), t.lambda(), t.log()};
}

}  // namespace ddtas
