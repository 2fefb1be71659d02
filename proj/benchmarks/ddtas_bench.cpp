#include <benchmark/benchmark.h>

#include "ddtas/data.hpp"
#include "ddtas/eval.hpp"
#include "ddtas/loss.hpp"
#include "ddtas/mining.hpp"
#include "ddtas/model.hpp"
#include "ddtas/threshold_gen.hpp"

namespace {

using namespace ddtas;

struct Fixture {
  LabeledDataset data;
  EmbeddingNet net;
  FeatureBatch batch;
  Eigen::MatrixXd embeddings;
  SimilarityMatrix s;

  explicit Fixture(int batch_size) {
    ClusterSpec spec;
    spec.classes = 32;
    data = gen_gaussian_clusters(spec);
    net = EmbeddingNet::he_uniform({spec.dim, 64, 16}, 3);
    Rng rng(5);
    batch = make_batch(data, pk_sample(data, batch_size, 5, rng).rows);
    embeddings = forward(net, batch.inputs);
    s = similarity_matrix(embeddings, batch.labels);
  }
};

void BM_Forward(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward(f.net, f.batch.inputs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(40)->Arg(80);

void BM_ForwardBackward(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  const Eigen::MatrixXd g = Eigen::MatrixXd::Ones(f.embeddings.rows(), f.embeddings.cols());
  for (auto _ : state) benchmark::DoNotOptimize(backward(f.net, f.batch.inputs, g));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(40)->Arg(80);

void BM_MineAsms(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(mine_asms(f.s, 0.1, 0.01));
}
BENCHMARK(BM_MineAsms)->Arg(40)->Arg(80)->Arg(160);

void BM_MineAtAsms(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  MiningConfig cfg;
  const auto total = pair_counts(state.range(0), 5).n_pos;
  for (auto _ : state) benchmark::DoNotOptimize(mine_at_asms(f.s, cfg, total));
}
BENCHMARK(BM_MineAtAsms)->Arg(40)->Arg(80)->Arg(160);

void BM_SoftContrastive(benchmark::State& state) {
  Fixture f(static_cast<int>(state.range(0)));
  const MinedPairs pairs = mine_asms(f.s, 0.1, 0.01);
  LossParams params;
  for (auto _ : state) benchmark::DoNotOptimize(soft_contrastive(f.s, pairs, params));
}
BENCHMARK(BM_SoftContrastive)->Arg(40)->Arg(80);

void BM_MetaGradientFd(benchmark::State& state) {
  Fixture f(40);
  const MinedPairs pairs = mine_asms(f.s, 0.1, 0.01);
  const MetaSet meta = build_meta_set(f.data, 5, 9);
  Rng rng(1);
  MetaConfig cfg;
  cfg.psi = 1e-2;
  cfg.meta_batch_size = 40;
  const auto meta_batches = draw_meta_batches(meta, cfg, 5, rng);
  MiningConfig mining;
  LossParams params;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        meta_gradient_fd(f.net, f.batch, pairs, meta_batches.front(), mining, params, params.lambda, cfg));
  }
}
BENCHMARK(BM_MetaGradientFd);

void BM_RecallAtK(benchmark::State& state) {
  Fixture f(40);
  const Eigen::MatrixXd emb = forward(f.net, f.data.features());
  for (auto _ : state) benchmark::DoNotOptimize(recall_at_k(emb, f.data.labels(), {1, 2, 4, 8}));
}
BENCHMARK(BM_RecallAtK);

}  // namespace

BENCHMARK_MAIN();
