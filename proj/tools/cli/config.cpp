#include "cli/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace ddtas::cli {

namespace {

using VT = ValueType;

const KeySpec* find_spec(const std::string& key) {
  for (const auto& s : schema()) {
    if (s.key == key) return &s;
  }
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool parse_ll(const std::string& v, long long& out) {
  if (v.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtoll(v.c_str(), &end, 10);
  return errno == 0 && *end == '\0';
}

bool parse_double(const std::string& v, double& out) {
  if (v.empty()) return false;
  char* end = nullptr;
  errno = 0;
  out = std::strtod(v.c_str(), &end);
  return errno == 0 && *end == '\0' && std::isfinite(out);
}

void check_value(const KeySpec& spec, const std::string& v) {
  auto bad = [&](const std::string& expected) {
    throw ConfigError("key '" + spec.key + "' expects " + expected + ", got '" + v + "'");
  };
  long long i = 0;
  double d = 0.0;
  switch (spec.type) {
    case VT::integer:
      if (!parse_ll(v, i)) bad("an integer");
      break;
    case VT::real:
      if (!parse_double(v, d)) bad("a real number");
      break;
    case VT::real_or_auto:
      if (v != "auto" && !parse_double(v, d)) bad("a real number or 'auto'");
      break;
    case VT::boolean:
      if (v != "true" && v != "false") bad("true or false");
      break;
    case VT::choice:
      if (std::find(spec.choices.begin(), spec.choices.end(), v) == spec.choices.end()) {
        std::string all;
        for (const auto& c : spec.choices) all += (all.empty() ? "" : "|") + c;
        bad("one of " + all);
      }
      break;
    case VT::int_list: {
      std::istringstream ss(v);
      std::string item;
      bool any = false;
      while (std::getline(ss, item, ',')) {
        if (!parse_ll(trim(item), i)) bad("a comma-separated integer list");
        any = true;
      }
      if (!any) bad("a non-empty integer list");
      break;
    }
    case VT::string: break;
  }
}

}  // namespace

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> specs = {
      {"data.source", VT::choice, "synthetic", {"synthetic", "csv"}, "dataset origin"},
      {"data.path", VT::string, "", {}, "CSV dataset path when data.source = csv"},
      {"data.classes", VT::integer, "8", {}, "synthetic: number of classes"},
      {"data.per_class", VT::integer, "100", {}, "synthetic: samples per class"},
      {"data.dim", VT::integer, "64", {}, "synthetic: input dimension"},
      {"data.spread", VT::real, "0.3", {}, "synthetic: per-coordinate stddev around a class mean"},
      {"data.radius", VT::real, "2.0", {}, "synthetic: radius of the sphere holding class means"},
      {"data.seed", VT::integer, "1", {}, "synthetic: generator seed"},
      {"data.train_fraction", VT::real, "0.7", {}, "per-class fraction used for training"},
      {"data.split_seed", VT::integer, "7", {}, "train/test split seed"},

      {"model.hidden", VT::int_list, "64", {}, "hidden layer widths"},
      {"model.embedding_dim", VT::integer, "16", {}, "embedding dimension"},
      {"model.norm_floor", VT::real, "0", {}, "L2-normalization floor; 0 = degenerate rows are errors"},

      {"train.epochs", VT::integer, "50", {}, "training epochs"},
      {"train.batch_size", VT::integer, "40", {}, "batch size B"},
      {"train.instances", VT::integer, "5", {}, "instances per class in a batch"},
      {"train.optimizer", VT::choice, "adam", {"adam", "sgd"}, "optimizer"},
      {"train.lr", VT::real, "1e-5", {}, "learning rate"},
      {"train.beta1", VT::real, "0.9", {}, "Adam beta1"},
      {"train.beta2", VT::real, "0.999", {}, "Adam beta2"},
      {"train.adam_eps", VT::real, "1e-8", {}, "Adam epsilon"},
      {"train.loss", VT::choice, "soft_contrastive", {"soft_contrastive", "contrastive"}, "loss function"},
      {"train.seed", VT::integer, "1", {}, "training seed (init, sampling, meta set)"},
      {"train.eval_every", VT::integer, "0", {}, "in-loop evaluation cadence in epochs; 0 = off"},
      {"train.checkpoint_every", VT::integer, "0", {}, "resumable state cadence in epochs; 0 = off"},

      {"loss.lambda", VT::real, "0.7", {}, "initial similarity threshold"},
      {"loss.mu", VT::real, "2", {}, "positive-branch scale"},
      {"loss.nu", VT::real, "40", {}, "negative-branch scale"},
      {"loss.alpha_pos", VT::real, "0.7", {}, "contrastive baseline positive margin"},
      {"loss.alpha_neg", VT::real, "0.7", {}, "contrastive baseline negative margin"},
      {"loss.normalization", VT::choice, "per_anchor", {"per_anchor", "global"}, "branch normalization"},

      {"mining.mode", VT::choice, "at_asms", {"base", "symmetric", "asms", "at_asms"}, "mining strategy"},
      {"mining.gamma", VT::real, "0.01", {}, "symmetric tolerance"},
      {"mining.gamma_pos", VT::real, "0.1", {}, "positive tolerance"},
      {"mining.gamma_neg", VT::real, "0.01", {}, "negative tolerance"},
      {"mining.kappa", VT::real, "0.5", {}, "adaptive tolerance scale"},

      {"meta.enabled", VT::boolean, "true", {}, "run the threshold generator"},
      {"meta.psi", VT::real_or_auto, "auto", {}, "lookahead step; auto = train.lr"},
      {"meta.phi", VT::real, "0.01", {}, "threshold descent step"},
      {"meta.fd_h", VT::real, "1e-3", {}, "finite-difference half-width on lambda"},
      {"meta.update_mode", VT::choice, "incremental", {"incremental", "literal"}, "lambda update rule"},
      {"meta.meta_pass", VT::choice, "single_batch", {"single_batch", "full_epoch"}, "meta batches per call"},
      {"meta.meta_batch_size", VT::integer, "0", {}, "meta batch size; 0 = whole meta set"},
      {"meta.generator_period", VT::integer, "1", {}, "run the generator every k iterations"},
      {"meta.per_class", VT::integer, "5", {}, "meta set samples per class"},

      {"eval.ks", VT::int_list, "1,2,4,8", {}, "Recall@K cut-offs"},
      {"eval.nmi_seed", VT::integer, "0", {}, "k-means seed"},
      {"eval.nmi_normalization", VT::choice, "geometric", {"geometric", "arithmetic"}, "NMI normalization"},
      {"eval.histogram_bins", VT::integer, "20", {}, "similarity histogram bins"},
      {"eval.split", VT::choice, "test", {"test", "train", "all"}, "split scored by eval and after train"},

      {"mine_sim.batches", VT::integer, "1", {}, "synthetic batches to mine"},
      {"mine_sim.seed", VT::integer, "1", {}, "batch sampling seed"},
      {"mine_sim.embeddings", VT::string, "", {}, "CSV of embeddings+labels mined as one batch"},
  };
  return specs;
}

Config::Config() {
  for (const auto& s : schema()) values_[s.key] = s.default_value;
}

Config Config::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  Config c;
  c.merge_ini(ss.str(), path.string());
  return c;
}

void Config::merge_ini(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of any [section]");
    try {
      set(section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_spec(key);
  if (!spec) throw ConfigError("unknown key '" + key + "'");
  check_value(*spec, value);
  values_[key] = value;
}

const std::string& Config::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second;
}

long long Config::get_int(const std::string& key) const {
  long long v = 0;
  if (!parse_ll(raw(key), v)) throw ConfigError("key '" + key + "' is not an integer");
  return v;
}

double Config::get_real(const std::string& key) const {
  double v = 0.0;
  if (!parse_double(raw(key), v)) throw ConfigError("key '" + key + "' is not a real number");
  return v;
}

bool Config::get_bool(const std::string& key) const { return raw(key) == "true"; }

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  std::istringstream ss(raw(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    long long v = 0;
    if (!parse_ll(trim(item), v)) throw ConfigError("key '" + key + "' is not an integer list");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::string Config::to_ini() const {
  std::ostringstream out;
  std::string section;
  for (const auto& s : schema()) {
    const auto dot = s.key.find('.');
    const std::string sec = s.key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << s.key.substr(dot + 1) << " = " << values_.at(s.key) << '\n';
  }
  return out.str();
}

ClusterSpec cluster_spec_from(const Config& cfg) {
  ClusterSpec s;
  s.classes = static_cast<int>(cfg.get_int("data.classes"));
  s.per_class = static_cast<int>(cfg.get_int("data.per_class"));
  s.dim = static_cast<int>(cfg.get_int("data.dim"));
  s.spread = cfg.get_real("data.spread");
  s.radius = cfg.get_real("data.radius");
  s.seed = static_cast<std::uint64_t>(cfg.get_int("data.seed"));
  return s;
}

TrainConfig train_config_from(const Config& cfg) {
  TrainConfig t;
  t.epochs = static_cast<int>(cfg.get_int("train.epochs"));
  t.batch_size = static_cast<int>(cfg.get_int("train.batch_size"));
  t.instances = static_cast<int>(cfg.get_int("train.instances"));
  t.hidden_dims = cfg.get_int_list("model.hidden");
  t.embedding_dim = static_cast<int>(cfg.get_int("model.embedding_dim"));
  t.norm_floor = cfg.get_real("model.norm_floor");
  t.optimizer = optimizer_from_string(cfg.get_string("train.optimizer"));
  t.adam.lr = cfg.get_real("train.lr");
  t.adam.beta1 = cfg.get_real("train.beta1");
  t.adam.beta2 = cfg.get_real("train.beta2");
  t.adam.epsilon = cfg.get_real("train.adam_eps");
  t.loss = loss_kind_from_string(cfg.get_string("train.loss"));
  t.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed"));
  t.eval_every = static_cast<int>(cfg.get_int("train.eval_every"));
  t.checkpoint_every = static_cast<int>(cfg.get_int("train.checkpoint_every"));

  t.loss_params.lambda = cfg.get_real("loss.lambda");
  t.loss_params.mu = cfg.get_real("loss.mu");
  t.loss_params.nu = cfg.get_real("loss.nu");
  t.loss_params.alpha_pos = cfg.get_real("loss.alpha_pos");
  t.loss_params.alpha_neg = cfg.get_real("loss.alpha_neg");
  t.loss_params.normalization = loss_normalization_from_string(cfg.get_string("loss.normalization"));

  t.mining.mode = mining_mode_from_string(cfg.get_string("mining.mode"));
  t.mining.gamma = cfg.get_real("mining.gamma");
  t.mining.gamma_pos = cfg.get_real("mining.gamma_pos");
  t.mining.gamma_neg = cfg.get_real("mining.gamma_neg");
  t.mining.kappa = cfg.get_real("mining.kappa");

  t.generator_enabled = cfg.get_bool("meta.enabled");
  t.meta.psi = cfg.raw("meta.psi") == "auto" ? t.adam.lr : cfg.get_real("meta.psi");
  t.meta.phi = cfg.get_real("meta.phi");
  t.meta.fd_h = cfg.get_real("meta.fd_h");
  t.meta.update_mode = lambda_update_mode_from_string(cfg.get_string("meta.update_mode"));
  t.meta.meta_pass = meta_pass_from_string(cfg.get_string("meta.meta_pass"));
  t.meta.meta_batch_size = static_cast<int>(cfg.get_int("meta.meta_batch_size"));
  t.meta.generator_period = static_cast<int>(cfg.get_int("meta.generator_period"));
  t.meta_per_class = static_cast<int>(cfg.get_int("meta.per_class"));

  t.eval.ks = cfg.get_int_list("eval.ks");
  t.eval.nmi_seed = static_cast<std::uint64_t>(cfg.get_int("eval.nmi_seed"));
  t.eval.nmi_normalization = nmi_normalization_from_string(cfg.get_string("eval.nmi_normalization"));
  t.eval.histogram_bins = static_cast<int>(cfg.get_int("eval.histogram_bins"));

  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return t;
}

}  // namespace ddtas::cli
