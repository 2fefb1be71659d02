#include "ddtas/data.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ddtas/errors.hpp"

namespace ddtas {

namespace {

// Partial Fisher-Yates: first k entries of `pool` become a uniform sample.
template <typename T>
void sample_prefix(std::vector<T>& pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) fields.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

LabeledDataset::LabeledDataset(Eigen::MatrixXd features, std::vector<int> labels)
    : features_(std::move(features)), labels_(std::move(labels)) {
  if (static_cast<std::size_t>(features_.rows()) != labels_.size()) {
    throw std::invalid_argument("feature rows and label count differ");
  }
  if (labels_.empty()) throw std::invalid_argument("dataset is empty");
  if (!features_.allFinite()) throw std::invalid_argument("dataset has non-finite features");
  const int max_label = *std::max_element(labels_.begin(), labels_.end());
  if (*std::min_element(labels_.begin(), labels_.end()) < 0) {
    throw std::invalid_argument("labels must be >= 0");
  }
  class_index_.assign(static_cast<std::size_t>(max_label) + 1, {});
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    class_index_[static_cast<std::size_t>(labels_[i])].push_back(i);
  }
  for (std::size_t c = 0; c < class_index_.size(); ++c) {
    if (class_index_[c].empty()) {
      throw std::invalid_argument("labels not dense: class " + std::to_string(c) + " is empty");
    }
  }
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& rows) const {
  std::vector<int> present;
  for (auto r : rows) present.push_back(labels_.at(r));
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());
  std::map<int, int> remap;
  for (std::size_t i = 0; i < present.size(); ++i) remap[present[i]] = static_cast<int>(i);

  Eigen::MatrixXd feats(static_cast<Eigen::Index>(rows.size()), features_.cols());
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    feats.row(static_cast<Eigen::Index>(i)) = features_.row(static_cast<Eigen::Index>(rows[i]));
    labels.push_back(remap[labels_[rows[i]]]);
  }
  return LabeledDataset(std::move(feats), std::move(labels));
}

LabeledDataset gen_gaussian_clusters(const ClusterSpec& spec) {
  if (spec.classes < 2 || spec.per_class < 2 || spec.dim < 2 || !(spec.spread > 0.0) ||
      !(spec.radius > 0.0) || !std::isfinite(spec.spread) || !std::isfinite(spec.radius)) {
    throw std::invalid_argument("gen_gaussian_clusters: need classes>=2, per_class>=2, dim>=2, spread>0, radius>0");
  }
  Rng rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Eigen::MatrixXd means(spec.classes, spec.dim);
  for (int c = 0; c < spec.classes; ++c) {
    Eigen::VectorXd v(spec.dim);
    do {
      for (int j = 0; j < spec.dim; ++j) v[j] = normal(rng);
    } while (v.norm() == 0.0);
    means.row(c) = spec.radius * v.normalized().transpose();
  }

  const Eigen::Index n = static_cast<Eigen::Index>(spec.classes) * spec.per_class;
  Eigen::MatrixXd feats(n, spec.dim);
  std::vector<int> labels(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (int c = 0; c < spec.classes; ++c) {
    for (int i = 0; i < spec.per_class; ++i, ++row) {
      for (int j = 0; j < spec.dim; ++j) feats(row, j) = means(c, j) + spec.spread * normal(rng);
      labels[static_cast<std::size_t>(row)] = c;
    }
  }
  return LabeledDataset(std::move(feats), std::move(labels));
}

LabeledDataset load_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset: " + path.string());
  const std::string source = path.string();

  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      columns = split_commas(line).size();
      break;
    }
  }
  if (columns == 0) throw ParseError(source, line_no, "empty file");
  if (columns < 2) throw ParseError(source, line_no, "header needs at least one feature and a label column");

  std::vector<std::vector<double>> rows;
  std::vector<long> raw_labels;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_commas(line);
    if (fields.size() != columns) {
      throw ParseError(source, line_no,
                       "expected " + std::to_string(columns) + " fields, got " + std::to_string(fields.size()));
    }
    std::vector<double> feats;
    feats.reserve(columns - 1);
    for (std::size_t j = 0; j + 1 < columns; ++j) {
      const std::string& f = fields[j];
      char* end = nullptr;
      errno = 0;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
        throw ParseError(source, line_no, "non-numeric feature in column " + std::to_string(j + 1) + ": '" + f + "'");
      }
      feats.push_back(v);
    }
    const std::string& lf = fields.back();
    char* end = nullptr;
    errno = 0;
    const long label = std::strtol(lf.c_str(), &end, 10);
    if (lf.empty() || *end != '\0' || errno == ERANGE) {
      throw ParseError(source, line_no, "label is not an integer: '" + lf + "'");
    }
    rows.push_back(std::move(feats));
    raw_labels.push_back(label);
  }
  if (rows.empty()) throw ParseError(source, line_no, "no data rows");

  std::vector<long> distinct = raw_labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  Eigen::MatrixXd feats(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns - 1));
  std::vector<int> labels(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j + 1 < columns; ++j) {
      feats(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    labels[i] = static_cast<int>(std::lower_bound(distinct.begin(), distinct.end(), raw_labels[i]) - distinct.begin());
  }
  return LabeledDataset(std::move(feats), std::move(labels));
}

void write_features_csv(const LabeledDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (int j = 0; j < data.dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  char buf[40];
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (int j = 0; j < data.dim(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", data.features()(static_cast<Eigen::Index>(i), j));
      out << buf << ',';
    }
    out << data.labels()[i] << '\n';
  }
  if (!out) throw std::runtime_error("failed writing dataset: " + path.string());
}

Split split_per_class(const LabeledDataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("train_fraction must be in (0, 1)");
  }
  Rng rng(seed);
  std::vector<std::size_t> train_rows, test_rows;
  for (int c = 0; c < data.num_classes(); ++c) {
    std::vector<std::size_t> rows = data.rows_of(c);
    if (rows.size() < 2) throw std::invalid_argument("class " + std::to_string(c) + " has fewer than 2 rows");
    auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(rows.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, rows.size() - 1);
    sample_prefix(rows, rows.size(), rng);
    std::sort(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::sort(rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
    train_rows.insert(train_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_rows.insert(test_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
  }
  return Split{data.subset(train_rows), data.subset(test_rows)};
}

Batch pk_sample(const LabeledDataset& data, int batch_size, int instances, Rng& rng) {
  if (instances < 1 || batch_size < 1) throw std::invalid_argument("batch size and instances must be >= 1");
  if (batch_size % instances != 0) {
    throw std::invalid_argument("batch size " + std::to_string(batch_size) + " is not divisible by instances " +
                                std::to_string(instances));
  }
  const auto n_classes = static_cast<std::size_t>(batch_size / instances);
  std::vector<int> eligible;
  for (int c = 0; c < data.num_classes(); ++c) {
    if (data.rows_of(c).size() >= static_cast<std::size_t>(instances)) eligible.push_back(c);
  }
  if (eligible.size() < n_classes) {
    throw std::invalid_argument("infeasible P-K batch: need " + std::to_string(n_classes) + " classes with >= " +
                                std::to_string(instances) + " rows, have " + std::to_string(eligible.size()));
  }
  sample_prefix(eligible, n_classes, rng);

  Batch batch;
  batch.instances = instances;
  batch.rows.reserve(static_cast<std::size_t>(batch_size));
  batch.labels.reserve(static_cast<std::size_t>(batch_size));
  for (std::size_t p = 0; p < n_classes; ++p) {
    const int c = eligible[p];
    std::vector<std::size_t> pool = data.rows_of(c);
    sample_prefix(pool, static_cast<std::size_t>(instances), rng);
    for (int k = 0; k < instances; ++k) {
      batch.rows.push_back(pool[static_cast<std::size_t>(k)]);
      batch.labels.push_back(c);
    }
  }
  return batch;
}

Eigen::MatrixXd gather_rows(const LabeledDataset& data, const std::vector<std::size_t>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), data.features().cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = data.features().row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

MetaSet build_meta_set(const LabeledDataset& data, int per_class, std::uint64_t seed) {
  if (per_class < 1) throw std::invalid_argument("meta set per_class must be >= 1");
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  for (int c = 0; c < data.num_classes(); ++c) {
    std::vector<std::size_t> pool = data.rows_of(c);
    if (pool.size() < static_cast<std::size_t>(per_class)) {
      throw std::invalid_argument("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                                  " rows, meta set needs " + std::to_string(per_class));
    }
    sample_prefix(pool, static_cast<std::size_t>(per_class), rng);
    std::sort(pool.begin(), pool.begin() + per_class);
    chosen.insert(chosen.end(), pool.begin(), pool.begin() + per_class);
  }
  MetaSet meta{data.subset(chosen), chosen};
  return meta;
}

}  // namespace ddtas
