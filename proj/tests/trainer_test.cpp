#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "ddtas/trainer.hpp"

using namespace ddtas;

namespace {

LabeledDataset small_data() {
  ClusterSpec spec;
  spec.classes = 4;
  spec.per_class = 20;
  spec.dim = 8;
  spec.seed = 3;
  return gen_gaussian_clusters(spec);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 20;
  cfg.instances = 5;
  cfg.hidden_dims = {12};
  cfg.embedding_dim = 6;
  cfg.adam.lr = 1e-3;
  cfg.meta.psi = 1e-3;
  cfg.meta_per_class = 5;
  cfg.seed = 11;
  return cfg;
}

std::string log_text(const MetricsLog& log) {
  std::ostringstream out;
  log.write_jsonl(out);
  return out.str();
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "ddtas_trainer_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("zero epochs returns the initial net and an empty log") {
  const LabeledDataset data = small_data();
  TrainConfig cfg = small_config();
  cfg.epochs = 0;
  const TrainResult r = train(cfg, data);
  CHECK(r.log.iterations.empty());
  CHECK(r.lambda == cfg.loss_params.lambda);
  Trainer fresh(cfg, data);
  CHECK(flatten(r.net) == flatten(fresh.net()));
}

TEST_CASE("training is deterministic") {
  const LabeledDataset data = small_data();
  const TrainConfig cfg = small_config();
  const TrainResult a = train(cfg, data);
  const TrainResult b = train(cfg, data);
  REQUIRE(a.log.iterations.size() == 3 * (80 / 20));
  CHECK(log_text(a.log) == log_text(b.log));
  CHECK(flatten(a.net) == flatten(b.net));
  CHECK(a.lambda == b.lambda);

  TrainConfig other = cfg;
  other.seed = 12;
  CHECK(log_text(train(other, data).log) != log_text(a.log));
}

TEST_CASE("logged counts match the mined pairs and lambda stays clamped") {
  const LabeledDataset data = small_data();
  TrainConfig cfg = small_config();
  cfg.meta.phi = 50.0;  // push lambda hard enough to exercise the clamp
  Trainer t(cfg, data);
  int seen = 0;
  t.set_observer([&](const IterationContext& ctx) {
    ++seen;
    const MiningResult again = mine(ctx.similarity, cfg.mining, pair_counts(cfg.batch_size, cfg.instances).n_pos);
    CHECK(ctx.record.n_pos == ctx.mining.pairs.n_pos);
    CHECK(ctx.record.n_neg == ctx.mining.pairs.n_neg);
    CHECK(ctx.record.n_pos == again.pairs.n_pos);
    CHECK(ctx.record.n_neg == again.pairs.n_neg);
    CHECK(ctx.record.first_n_pos == again.decision.first_n_pos);
    CHECK(ctx.record.first_n_neg == again.decision.first_n_neg);
    CHECK(ctx.record.adjusted == again.decision.adjusted);
    CHECK(ctx.record.gamma_pos_hat == again.decision.gamma_pos_hat);
    CHECK(ctx.batch.size() == static_cast<std::size_t>(cfg.batch_size));
  });
  t.run();
  CHECK(seen == 12);
  for (const auto& r : t.log().iterations) CHECK(r.lambda >= 0.0);
  CHECK(t.lambda() >= 0.0);
}

TEST_CASE("generator disabled keeps lambda fixed") {
  const LabeledDataset data = small_data();
  TrainConfig cfg = small_config();
  cfg.generator_enabled = false;
  const TrainResult r = train(cfg, data);
  for (const auto& rec : r.log.iterations) CHECK(rec.lambda == cfg.loss_params.lambda);
}

TEST_CASE("resuming from saved state reproduces an uninterrupted run") {
  const LabeledDataset data = small_data();
  TrainConfig cfg = small_config();
  cfg.epochs = 4;
  for (auto opt : {OptimizerKind::adam, OptimizerKind::sgd}) {
    cfg.optimizer = opt;
    const TrainResult full = train(cfg, data);

    Trainer first(cfg, data);
    first.run_epochs(2);
    CHECK_FALSE(first.finished());
    const auto state = scratch("state.txt");
    first.save_state(state);

    Trainer second(cfg, data);
    second.load_state(state);
    CHECK(second.epoch() == 2);
    second.run();
    CHECK(second.finished());

    std::vector<IterationRecord> joined = first.log().iterations;
    joined.insert(joined.end(), second.log().iterations.begin(), second.log().iterations.end());
    MetricsLog stitched;
    stitched.iterations = joined;
    CHECK(log_text(stitched) == log_text(full.log));
    CHECK(flatten(second.net()) == flatten(full.net));
    CHECK(second.lambda() == full.lambda);
  }
}

TEST_CASE("checkpoint of a trained net reproduces forward outputs") {
  const LabeledDataset data = small_data();
  const TrainResult r = train(small_config(), data);
  const auto path = scratch("trained.txt");
  save_checkpoint(r.net, r.lambda, path);
  const Checkpoint c = load_checkpoint(path);
  CHECK(c.lambda == r.lambda);
  CHECK(forward(c.net, data.features()) == forward(r.net, data.features()));
}

TEST_CASE("in-loop evaluation records") {
  const LabeledDataset data = small_data();
  TrainConfig cfg = small_config();
  cfg.eval_every = 1;
  Trainer t(cfg, data, &data);
  t.run();
  REQUIRE(t.log().evals.size() == 3);
  CHECK(t.log().evals.back().recall_at.at(1) >= 0.0);
  CHECK(t.log().evals.back().epoch == 3);
}

TEST_CASE("config validation") {
  const LabeledDataset data = small_data();
  TrainConfig cfg = small_config();
  cfg.batch_size = 21;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.adam.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.batch_size = 100;  // more than the whole dataset: no iterations per epoch
  cfg.instances = 5;
  CHECK_THROWS(Trainer(cfg, data));
}
