#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace ddtas {

using Rng = std::mt19937_64;

// N x d features with dense labels in [0, C). Immutable after construction.
class LabeledDataset {
 public:
  LabeledDataset() = default;

  // Validates: rows == labels, finite features, labels dense in [0, C) with
  // every class nonempty.
  LabeledDataset(Eigen::MatrixXd features, std::vector<int> labels);

  const Eigen::MatrixXd& features() const noexcept { return features_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  std::size_t size() const noexcept { return labels_.size(); }
  int dim() const noexcept { return static_cast<int>(features_.cols()); }
  int num_classes() const noexcept { return static_cast<int>(class_index_.size()); }

  // Row indices of class c, ascending.
  const std::vector<std::size_t>& rows_of(int c) const { return class_index_.at(static_cast<std::size_t>(c)); }

  // Subset by row indices; labels are re-densified preserving their order.
  LabeledDataset subset(const std::vector<std::size_t>& rows) const;

 private:
  Eigen::MatrixXd features_;
  std::vector<int> labels_;
  std::vector<std::vector<std::size_t>> class_index_;
};

struct ClusterSpec {
  int classes = 8;
  int per_class = 100;
  int dim = 64;
  double spread = 0.3;
  // Class means are drawn uniformly on the sphere of this radius.
  double radius = 2.0;
  std::uint64_t seed = 1;
};

// Rows are ordered class-major: class 0's samples first.
LabeledDataset gen_gaussian_clusters(const ClusterSpec& spec);

// CSV with a header line; one sample per row; last column is an integer
// label. Labels are relabeled to dense [0, C) in ascending order of value.
LabeledDataset load_features_csv(const std::filesystem::path& path);
void write_features_csv(const LabeledDataset& data, const std::filesystem::path& path);

// Stratified split into (train, test); each class keeps
// round(train_fraction * n_c) rows (at least 1 on each side when n_c >= 2).
struct Split {
  LabeledDataset train;
  LabeledDataset test;
};
Split split_per_class(const LabeledDataset& data, double train_fraction, std::uint64_t seed);

// P-K batch: B / instances classes, `instances` rows each, grouped by class.
struct Batch {
  std::vector<std::size_t> rows;
  std::vector<int> labels;
  int instances = 0;

  std::size_t size() const noexcept { return rows.size(); }
};

// Classes drawn without replacement from those with >= instances rows; rows
// drawn without replacement within each class. Throws std::invalid_argument
// when B % instances != 0 or fewer than B / instances classes are eligible.
Batch pk_sample(const LabeledDataset& data, int batch_size, int instances, Rng& rng);

Eigen::MatrixXd gather_rows(const LabeledDataset& data, const std::vector<std::size_t>& rows);

// Exactly m rows per class, drawn uniformly without replacement.
struct MetaSet {
  LabeledDataset data;
  std::vector<std::size_t> source_rows;  // rows in the parent dataset
};
MetaSet build_meta_set(const LabeledDataset& data, int per_class, std::uint64_t seed);

}  // namespace ddtas
