#include "cli/commands.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cli/config.hpp"
#include "ddtas/data.hpp"
#include "ddtas/errors.hpp"
#include "ddtas/eval.hpp"
#include "ddtas/mining.hpp"
#include "ddtas/model.hpp"
#include "ddtas/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace ddtas::cli {

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
};

void report_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

Config resolve_config(const CommonArgs& a) {
  Config cfg = a.config_path.empty() ? Config() : Config::from_file(a.config_path);
  for (const auto& o : a.overrides) cfg.apply_override(o);
  return cfg;
}

fs::path resolve_out_dir(const CommonArgs& a, const std::string& subcommand) {
  if (!a.out_dir.empty()) return a.out_dir;
  const char* root = std::getenv("DDTAS_OUTPUT_ROOT");
  return fs::path(root && *root ? root : "runs") / subcommand;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << text;
}

// Wall-clock data lives in its own file so the other outputs stay byte-identical across runs.
void write_run_info(const fs::path& dir, const std::string& command, double wall_seconds) {
  const std::time_t now = std::time(nullptr);
  std::ostringstream ts;
  ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
  write_text(dir / "run_info.json",
             json{{"command", command}, {"finished_at", ts.str()}, {"wall_seconds", wall_seconds}}.dump(2) + "\n");
}

LabeledDataset load_dataset(const Config& cfg) {
  if (cfg.get_string("data.source") == "csv") {
    const std::string path = cfg.get_string("data.path");
    if (path.empty()) throw ConfigError("data.source = csv requires data.path");
    return load_features_csv(path);
  }
  try {
    return gen_gaussian_clusters(cluster_spec_from(cfg));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

const LabeledDataset& pick_split(const Config& cfg, const LabeledDataset& all, const Split& split) {
  const std::string& which = cfg.get_string("eval.split");
  if (which == "all") return all;
  return which == "train" ? split.train : split.test;
}

json report_summary(const EvalReport& r) {
  json recall = json::object();
  for (const auto& [k, v] : r.recall_at) recall[std::to_string(k)] = v;
  return json{{"recall_at", recall}, {"nmi", r.nmi}};
}

struct TrainOutcome {
  EvalReport report;
  double lambda = 0.0;
  std::int64_t iterations = 0;
  std::int64_t skipped = 0;
  double final_loss = 0.0;
};

TrainOutcome train_into(const Config& cfg, const fs::path& dir) {
  TrainConfig tc = train_config_from(cfg);
  const LabeledDataset all = load_dataset(cfg);
  const Split split = split_per_class(all, cfg.get_real("data.train_fraction"),
                                      static_cast<std::uint64_t>(cfg.get_int("data.split_seed")));
  fs::create_directories(dir);
  write_text(dir / "resolved_config.ini", cfg.to_ini());
  if (tc.checkpoint_every > 0) {
    tc.checkpoint_dir = dir / "checkpoints";
    fs::create_directories(tc.checkpoint_dir);
  }

  Trainer trainer(tc, split.train, &split.test);
  std::ofstream metrics(dir / "metrics.jsonl");
  if (!metrics) throw std::runtime_error("cannot open metrics log in " + dir.string());
  trainer.set_metrics_stream(&metrics);
  trainer.run();
  metrics.close();

  save_checkpoint(trainer.net(), trainer.lambda(), dir / "checkpoint.txt");
  TrainOutcome out;
  out.report = trainer.evaluate(pick_split(cfg, all, split));
  write_eval_report(out.report, dir / "eval_report.json");
  write_histogram_csv(out.report.histogram, dir / "histogram.csv");
  out.lambda = trainer.lambda();
  out.iterations = trainer.iteration();
  for (const auto& r : trainer.log().iterations) {
    if (r.skipped) ++out.skipped;
    else out.final_loss = r.loss;
  }
  return out;
}

int cmd_gen_data(const CommonArgs& a, std::ostream& out) {
  const Config cfg = resolve_config(a);
  const fs::path dir = resolve_out_dir(a, "gen-data");
  const LabeledDataset data = load_dataset(cfg);
  fs::create_directories(dir);
  write_text(dir / "resolved_config.ini", cfg.to_ini());
  write_features_csv(data, dir / "dataset.csv");
  out << json{{"dataset", (dir / "dataset.csv").string()}, {"rows", data.size()}, {"dim", data.dim()},
              {"classes", data.num_classes()}}
             .dump()
      << '\n';
  return kExitOk;
}

int cmd_train(const CommonArgs& a, std::ostream& out) {
  const Config cfg = resolve_config(a);
  const fs::path dir = resolve_out_dir(a, "train");
  const auto t0 = std::chrono::steady_clock::now();
  const TrainOutcome r = train_into(cfg, dir);
  write_run_info(dir, "train", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  json summary = report_summary(r.report);
  summary["lambda"] = r.lambda;
  summary["iterations"] = r.iterations;
  summary["skipped"] = r.skipped;
  summary["out"] = dir.string();
  out << summary.dump() << '\n';
  return kExitOk;
}

int cmd_eval(const CommonArgs& a, const std::string& checkpoint, std::ostream& out) {
  const Config cfg = resolve_config(a);
  const fs::path dir = resolve_out_dir(a, "eval");
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const LabeledDataset all = load_dataset(cfg);
  const Split split = split_per_class(all, cfg.get_real("data.train_fraction"),
                                      static_cast<std::uint64_t>(cfg.get_int("data.split_seed")));
  const LabeledDataset& data = pick_split(cfg, all, split);
  if (data.dim() != ckpt.net.input_dim()) {
    throw ConfigError("checkpoint expects input dim " + std::to_string(ckpt.net.input_dim()) + ", dataset has " +
                      std::to_string(data.dim()));
  }
  const TrainConfig tc = train_config_from(cfg);
  const EvalReport report = evaluate(forward(ckpt.net, data.features()), data.labels(), tc.eval);
  fs::create_directories(dir);
  write_text(dir / "resolved_config.ini", cfg.to_ini());
  write_eval_report(report, dir / "eval_report.json");
  write_histogram_csv(report.histogram, dir / "histogram.csv");
  json summary = report_summary(report);
  summary["lambda"] = ckpt.lambda;
  out << summary.dump() << '\n';
  return kExitOk;
}

json decision_json(const MiningDecision& d) {
  return json{{"first_n_pos", d.first_n_pos}, {"first_n_neg", d.first_n_neg}, {"xi", d.xi},
              {"sigma_xi", d.sigma_xi},       {"eps_pos", d.eps_pos},         {"eps_neg", d.eps_neg},
              {"gamma_pos_hat", d.gamma_pos_hat}, {"gamma_neg_hat", d.gamma_neg_hat}, {"adjusted", d.adjusted}};
}

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double n = out.row(i).norm();
    if (n == 0.0) throw DegenerateEmbeddingError(static_cast<std::size_t>(i));
    out.row(i) /= n;
  }
  return out;
}

int cmd_mine_sim(const CommonArgs& a, std::ostream& out) {
  const Config cfg = resolve_config(a);
  const TrainConfig tc = train_config_from(cfg);
  const fs::path dir = resolve_out_dir(a, "mine-sim");

  std::vector<std::pair<Eigen::MatrixXd, std::vector<int>>> batches;
  if (!cfg.get_string("mine_sim.embeddings").empty()) {
    const LabeledDataset emb = load_features_csv(cfg.get_string("mine_sim.embeddings"));
    batches.emplace_back(normalize_rows(emb.features()), emb.labels());
  } else {
    const LabeledDataset data = load_dataset(cfg);
    Rng rng(static_cast<std::uint64_t>(cfg.get_int("mine_sim.seed")));
    const long long n = cfg.get_int("mine_sim.batches");
    if (n < 1) throw ConfigError("mine_sim.batches must be >= 1");
    for (long long b = 0; b < n; ++b) {
      const Batch batch = pk_sample(data, tc.batch_size, tc.instances, rng);
      std::vector<int> labels = batch.labels;
      batches.emplace_back(normalize_rows(gather_rows(data, batch.rows)), std::move(labels));
    }
  }

  fs::create_directories(dir);
  write_text(dir / "resolved_config.ini", cfg.to_ini());
  std::ofstream log(dir / "mine_sim.jsonl");
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const SimilarityMatrix s = similarity_matrix(batches[b].first, batches[b].second);
    const PairCounts total = candidate_pair_counts(s.labels());
    json modes = json::object();
    for (MiningMode m : {MiningMode::base, MiningMode::symmetric, MiningMode::asms, MiningMode::at_asms}) {
      if (m == MiningMode::at_asms && total.n_pos == 0) continue;
      MiningConfig mc = tc.mining;
      mc.mode = m;
      const MiningResult r = mine(s, mc, total.n_pos);
      modes[to_string(m)] = json{{"n_pos", r.pairs.n_pos}, {"n_neg", r.pairs.n_neg},
                                 {"skipped_anchors", r.pairs.skipped_anchors.size()}};
    }
    const MiningResult selected = mine(s, tc.mining, total.n_pos);
    json line{{"batch", b},
              {"size", s.size()},
              {"total_pos", total.n_pos},
              {"total_neg", total.n_neg},
              {"mode", to_string(tc.mining.mode)},
              {"n_pos", selected.pairs.n_pos},
              {"n_neg", selected.pairs.n_neg},
              {"decision", decision_json(selected.decision)},
              {"modes", modes}};
    out << line.dump() << '\n';
    log << line.dump() << '\n';
  }
  return kExitOk;
}

struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

GridAxis parse_grid(const std::string& spec, const Config& base) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("grid '" + spec + "' is not key=v1,v2,...");
  GridAxis axis{spec.substr(0, eq), {}};
  std::istringstream ss(spec.substr(eq + 1));
  for (std::string v; std::getline(ss, v, ',');) {
    Config probe = base;
    probe.set(axis.key, v);  // type-check now, before any cell runs
    axis.values.push_back(v);
  }
  if (axis.values.empty()) throw ConfigError("grid '" + axis.key + "' has no values");
  return axis;
}

int cmd_sweep(const CommonArgs& a, const std::vector<std::string>& grid_specs, int jobs, std::ostream& out) {
  const Config base = resolve_config(a);
  const fs::path dir = resolve_out_dir(a, "sweep");
  if (grid_specs.empty()) throw ConfigError("sweep needs at least one --grid key=v1,v2,...");
  std::vector<GridAxis> axes;
  for (const auto& g : grid_specs) axes.push_back(parse_grid(g, base));

  // Cartesian product, first axis slowest.
  std::vector<std::vector<std::string>> cells{{}};
  for (const auto& axis : axes) {
    std::vector<std::vector<std::string>> next;
    for (const auto& c : cells) {
      for (const auto& v : axis.values) {
        auto e = c;
        e.push_back(v);
        next.push_back(std::move(e));
      }
    }
    cells = std::move(next);
  }

  std::vector<Config> configs;
  for (const auto& c : cells) {
    Config cfg = base;
    for (std::size_t i = 0; i < axes.size(); ++i) cfg.set(axes[i].key, c[i]);
    train_config_from(cfg);  // reject invalid combinations before running
    configs.push_back(std::move(cfg));
  }

  fs::create_directories(dir);
  write_text(dir / "resolved_config.ini", base.to_ini());
  std::vector<TrainOutcome> results(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cells.size();) {
      std::ostringstream name;
      name << "cell_" << std::setw(3) << std::setfill('0') << i;
      try {
        results[i] = train_into(configs[i], dir / name.str());
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!errors[i].empty()) throw std::runtime_error("sweep cell " + std::to_string(i) + ": " + errors[i]);
  }

  std::ofstream csv(dir / "summary.csv");
  csv << "cell";
  for (const auto& axis : axes) csv << ',' << axis.key;
  csv << ",recall_at_1,nmi,final_lambda,final_loss,iterations,skipped\n";
  csv << std::setprecision(17);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    csv << i;
    for (const auto& v : cells[i]) csv << ',' << v;
    const auto& r = results[i];
    csv << ',';
    if (auto it = r.report.recall_at.find(1); it != r.report.recall_at.end()) csv << it->second;
    csv << ',' << r.report.nmi << ',' << r.lambda << ',' << r.final_loss << ',' << r.iterations << ',' << r.skipped
        << '\n';
  }
  out << json{{"cells", cells.size()}, {"summary", (dir / "summary.csv").string()}}.dump() << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual dynamic threshold metric learning: data generation, training, evaluation, mining analysis"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string checkpoint;
  std::vector<std::string> grid;
  int jobs = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "INI config file");
    sub->add_option("-o,--out", common.out_dir, "output directory (default $DDTAS_OUTPUT_ROOT/<command>)");
    sub->add_option("overrides", common.overrides, "key=value overrides, e.g. train.epochs=10");
  };
  auto* gen = app.add_subcommand("gen-data", "write a synthetic Gaussian-cluster dataset as CSV");
  auto* trn = app.add_subcommand("train", "train an embedding net; writes metrics, checkpoint and eval report");
  auto* evl = app.add_subcommand("eval", "score a checkpoint against a dataset split");
  auto* mns = app.add_subcommand("mine-sim", "print per-mode mined pair counts, one JSON object per batch");
  auto* swp = app.add_subcommand("sweep", "train over a grid of config values; one summary row per cell");
  for (auto* s : {gen, trn, evl, mns, swp}) add_common(s);
  evl->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  swp->add_option("--grid", grid, "key=v1,v2,... (repeatable)");
  swp->add_option("-j,--jobs", jobs, "cells run in parallel")->check(CLI::PositiveNumber);

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, out);
    if (trn->parsed()) return cmd_train(common, out);
    if (evl->parsed()) return cmd_eval(common, checkpoint, out);
    if (mns->parsed()) return cmd_mine_sim(common, out);
    if (swp->parsed()) return cmd_sweep(common, grid, jobs, out);
  } catch (const ConfigError& e) {
    report_error(err, "config", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    report_error(err, "runtime", e.what());
    return kExitRuntime;
  }
  report_error(err, "usage", "no subcommand");
  return kExitUsage;
}

}  // namespace ddtas::cli
