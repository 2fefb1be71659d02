#include "ddtas/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ddtas {

std::map<int, double> recall_at_k(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels,
                                  const std::vector<int>& ks) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (n != labels.size()) throw std::invalid_argument("recall_at_k: embeddings and labels differ in length");
  if (n < 2) throw std::invalid_argument("recall_at_k needs at least 2 samples");
  int max_k = 0;
  for (int k : ks) {
    if (k < 1 || static_cast<std::size_t>(k) >= n) {
      throw std::invalid_argument("recall_at_k: K=" + std::to_string(k) + " must be in [1, N)");
    }
    max_k = std::max(max_k, k);
  }

  const Eigen::MatrixXd sim = embeddings * embeddings.transpose();
  // first_hit[q]: 1-based rank of the first same-label neighbour, or n if none.
  std::vector<std::size_t> first_hit(n, n);
  std::vector<std::size_t> order(n - 1);
  for (std::size_t q = 0; q < n; ++q) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != q) order[m++] = j;
    }
    // sim is symmetric; the column is contiguous in memory
    const auto row = sim.col(static_cast<Eigen::Index>(q));
    auto better = [&](std::size_t a, std::size_t b) {
      const double sa = row[static_cast<Eigen::Index>(a)], sb = row[static_cast<Eigen::Index>(b)];
      return sa > sb || (sa == sb && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + max_k, order.end(), better);
    for (int r = 0; r < max_k; ++r) {
      if (labels[order[static_cast<std::size_t>(r)]] == labels[q]) {
        first_hit[q] = static_cast<std::size_t>(r) + 1;
        break;
      }
    }
  }

  std::map<int, double> out;
  for (int k : ks) {
    std::size_t hits = 0;
    for (auto r : first_hit) hits += r <= static_cast<std::size_t>(k) ? 1 : 0;
    out[k] = static_cast<double>(hits) / static_cast<double>(n);
  }
  return out;
}

std::string to_string(NmiNormalization n) { return n == NmiNormalization::arithmetic ? "arithmetic" : "geometric"; }

NmiNormalization nmi_normalization_from_string(const std::string& name) {
  if (name == "geometric") return NmiNormalization::geometric;
  if (name == "arithmetic") return NmiNormalization::arithmetic;
  throw std::invalid_argument("unknown NMI normalization '" + name + "'");
}

double nmi_from_assignments(const std::vector<int>& a, const std::vector<int>& b, NmiNormalization norm) {
  if (a.size() != b.size()) throw std::invalid_argument("nmi: partitions differ in length");
  if (a.empty()) throw std::invalid_argument("nmi: empty input");

  std::map<int, int> ia, ib;
  for (int x : a) ia.emplace(x, static_cast<int>(ia.size()));
  for (int x : b) ib.emplace(x, static_cast<int>(ib.size()));
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ia.size()), static_cast<Eigen::Index>(ib.size()));
  for (std::size_t i = 0; i < a.size(); ++i) table(ia[a[i]], ib[b[i]]) += 1.0;

  const double n = static_cast<double>(a.size());
  const Eigen::VectorXd ra = table.rowwise().sum() / n;
  const Eigen::VectorXd rb = table.colwise().sum().transpose() / n;
  auto entropy = [](const Eigen::VectorXd& p) {
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    }
    return h;
  };
  const double ha = entropy(ra), hb = entropy(rb);
  if (ha == 0.0 || hb == 0.0) return (ia.size() == 1 && ib.size() == 1) ? 1.0 : 0.0;

  double mi = 0.0;
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.cols(); ++j) {
      const double p = table(i, j) / n;
      if (p > 0.0) mi += p * std::log(p / (ra[i] * rb[j]));
    }
  }
  const double denom = norm == NmiNormalization::geometric ? std::sqrt(ha * hb) : 0.5 * (ha + hb);
  return std::clamp(mi / denom, 0.0, 1.0);
}

KMeansResult kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, double tol, int max_iters) {
  const Eigen::Index n = points.rows();
  if (n == 0) throw std::invalid_argument("kmeans: empty input");
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: k must be in [1, N]");

  std::mt19937_64 rng(seed);
  KMeansResult r;
  r.centroids.resize(k, points.cols());

  // k-means++ seeding.
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  r.centroids.row(0) = points.row(first(rng));
  Eigen::VectorXd d2 = (points.rowwise() - r.centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (pick = 0; pick < n - 1; ++pick) {
        target -= d2[pick];
        if (target < 0.0) break;
      }
    } else {
      pick = first(rng);
    }
    r.centroids.row(c) = points.row(pick);
    d2 = d2.cwiseMin((points.rowwise() - r.centroids.row(c)).rowwise().squaredNorm());
  }

  r.assignment.assign(static_cast<std::size_t>(n), 0);
  for (r.iterations = 1; r.iterations <= max_iters; ++r.iterations) {
    r.inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      const double dist = (r.centroids.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      r.assignment[static_cast<std::size_t>(i)] = static_cast<int>(best);
      r.inertia += dist;
    }
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, points.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(r.assignment[static_cast<std::size_t>(i)]) += points.row(i);
      counts[r.assignment[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0.0) {
        next.row(c) /= counts[c];
      } else {
        next.row(c) = r.centroids.row(c);  // empty cluster keeps its centroid
      }
    }
    const double shift = (next - r.centroids).cwiseAbs().maxCoeff();
    r.centroids = std::move(next);
    if (shift < tol) break;
  }
  r.iterations = std::min(r.iterations, max_iters);
  return r;
}

double nmi(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels, int k_clusters, std::uint64_t seed,
           NmiNormalization norm) {
  if (embeddings.rows() == 0) throw std::invalid_argument("nmi: empty input");
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) {
    throw std::invalid_argument("nmi: embeddings and labels differ in length");
  }
  return nmi_from_assignments(kmeans(embeddings, k_clusters, seed).assignment, labels, norm);
}

SimilarityHistogram similarity_histogram(const SimilarityMatrix& s, int bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  SimilarityHistogram h{bins, std::vector<std::int64_t>(static_cast<std::size_t>(bins), 0),
                        std::vector<std::int64_t>(static_cast<std::size_t>(bins), 0)};
  const auto& labels = s.labels();
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      const double v = std::clamp(s(i, j), -1.0, 1.0);
      int b = static_cast<int>(std::floor((v + 1.0) * 0.5 * bins));
      b = std::clamp(b, 0, bins - 1);
      (labels[i] == labels[j] ? h.pos : h.neg)[static_cast<std::size_t>(b)] += 1;
    }
  }
  return h;
}

EvalReport evaluate(const Eigen::MatrixXd& embeddings, const std::vector<int>& labels, const EvalOptions& opts) {
  EvalReport r;
  std::vector<int> ks;
  for (int k : opts.ks) {
    if (k >= 1 && static_cast<std::size_t>(k) < labels.size()) ks.push_back(k);
  }
  if (!ks.empty()) r.recall_at = recall_at_k(embeddings, labels, ks);
  std::vector<int> distinct = labels;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  r.nmi = nmi(embeddings, labels, static_cast<int>(distinct.size()), opts.nmi_seed, opts.nmi_normalization);
  r.histogram = similarity_histogram(similarity_matrix(embeddings, labels), opts.histogram_bins);
  return r;
}

std::string eval_report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json recall = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.recall_at) recall[std::to_string(k)] = v;
  j["recall_at"] = recall;
  j["nmi"] = report.nmi;
  j["histogram"] = {{"bins", report.histogram.bins}, {"pos", report.histogram.pos}, {"neg", report.histogram.neg}};
  return j.dump(2);
}

void write_eval_report(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << eval_report_json(report) << '\n';
}

void write_histogram_csv(const SimilarityHistogram& h, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "bin_low,bin_high,pos_count,neg_count\n";
  for (int b = 0; b < h.bins; ++b) {
    out << h.bin_low(b) << ',' << h.bin_high(b) << ',' << h.pos[static_cast<std::size_t>(b)] << ','
        << h.neg[static_cast<std::size_t>(b)] << '\n';
  }
}

}  // namespace ddtas
