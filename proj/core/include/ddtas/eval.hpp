#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddtas/mining.hpp"

namespace ddtas {

// Fraction of queries whose top-K cosine neighbours (self excluded, ties to
// the lower index) contain a same-label sample. Throws when K >= N or N < 2.
std::map<int, double> recall_at_k(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels,
                                  const std::vector<int>& ks);

enum class NmiNormalization { geometric, arithmetic };

std::string to_string(NmiNormalization n);
NmiNormalization nmi_normalization_from_string(const std::string& name);

// NMI between two partitions given as integer ids. 0 when either entropy is
// 0, except 1 when both are the same single-block partition.
double nmi_from_assignments(const std::vector<int>& a, const std::vector<int>& b,
                            NmiNormalization norm = NmiNormalization::geometric);

struct KMeansResult {
  std::vector<int> assignment;
  Eigen::MatrixXd centroids;
  int iterations = 0;
  double inertia = 0.0;
};

// k-means++ seeding then Lloyd iterations until the centroid shift is below
// tol (max abs coordinate) or max_iters is reached.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, double tol = 1e-6, int max_iters = 300);

double nmi(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels, int k_clusters, std::uint64_t seed,
           NmiNormalization norm = NmiNormalization::geometric);

// Counts of unordered (i < j) pairs over equal-width bins on [-1, 1]; the
// value 1 falls into the top bin.
struct SimilarityHistogram {
  int bins = 0;
  std::vector<std::int64_t> pos;
  std::vector<std::int64_t> neg;

  double bin_low(int b) const { return -1.0 + 2.0 * b / bins; }
  double bin_high(int b) const { return -1.0 + 2.0 * (b + 1) / bins; }
};

SimilarityHistogram similarity_histogram(const SimilarityMatrix& s, int bins);

struct EvalReport {
  std::map<int, double> recall_at;
  double nmi = 0.0;
  SimilarityHistogram histogram;
};

struct EvalOptions {
  std::vector<int> ks{1, 2, 4, 8};
  std::uint64_t nmi_seed = 0;
  NmiNormalization nmi_normalization = NmiNormalization::geometric;
  int histogram_bins = 20;
};

// Recall@K over ks smaller than N, NMI with k = number of distinct labels,
// and the pos/neg histogram over all sample pairs.
EvalReport evaluate(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels, const EvalOptions& opts);

std::string eval_report_json(const EvalReport& report);
void write_eval_report(const EvalReport& report, const std::filesystem::path& path);
// Columns: bin_low,bin_high,pos_count,neg_count
void write_histogram_csv(const SimilarityHistogram& h, const std::filesystem::path& path);

}  // namespace ddtas
