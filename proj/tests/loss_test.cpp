#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "ddtas/loss.hpp"
#include "ddtas/mining.hpp"
#include "ddtas/model.hpp"
#include "test_util.hpp"

using namespace ddtas;
using ddtas::testing::all_pairs;
using ddtas::testing::central_diff;
using ddtas::testing::max_rel_err;
using ddtas::testing::perturbed;
using ddtas::testing::pk_labels;
using ddtas::testing::random_matrix;
using ddtas::testing::random_unit_rows;
using ddtas::testing::rel_err;
using ddtas::testing::unordered_grads;

namespace {

MinedPairs single_pair(int n, int anchor, int partner, bool positive) {
  MinedPairs m;
  m.positives.resize(n);
  m.negatives.resize(n);
  (positive ? m.positives : m.negatives)[anchor].push_back(partner);
  (positive ? m.n_pos : m.n_neg) = 1;
  return m;
}

SimilarityMatrix two_by_two(double s, std::vector<int> labels) {
  Eigen::Matrix2d v;
  v << 1.0, s, s, 1.0;
  return SimilarityMatrix(v, std::move(labels));
}

struct Instance {
  SimilarityMatrix s;
  MinedPairs pairs;
  LossParams params;
};

Instance random_instance(std::mt19937_64& rng, int trial) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int classes = 2 + trial % 3;
  const int inst = 2 + trial % 2;
  const auto labels = pk_labels(classes, inst);
  Instance in{similarity_matrix(random_unit_rows(classes * inst, 3 + trial % 4, rng), labels), {}, {}};
  in.params.lambda = 0.2 + 0.6 * u(rng);
  in.params.mu = 1.0 + 4.0 * u(rng);
  in.params.nu = 5.0 + 40.0 * u(rng);
  in.params.normalization = trial % 3 == 2 ? LossNormalization::global : LossNormalization::per_anchor;
  in.pairs = trial % 2 == 0 ? all_pairs(labels) : mine_asms(in.s, 0.3, 0.3);
  return in;
}

}  // namespace

TEST_CASE("softplus and sigmoid are stable and bounded above the hinge") {
  for (double mu : {2.0, 40.0, 1000.0}) {
    for (double x = -3.0; x <= 3.0; x += 0.01) {
      const double gap = softplus(mu * x) / mu - std::max(0.0, x);
      // strictly positive in exact arithmetic; rounds to 0 once e^{-mu|x|} is below an ulp
      CHECK(gap >= -8e-16 * std::max(1.0, std::abs(x)));  // (mu x) / mu can miss x by an ulp
      if (mu * std::abs(x) < 30.0) CHECK(gap > 0.0);
      CHECK(gap <= std::log(2.0) / mu + 1e-15);
    }
  }
  CHECK(softplus(1e4) == 1e4);
  CHECK(softplus(-1e4) >= 0.0);
  CHECK(std::isfinite(softplus(1e308)));
  CHECK(sigmoid(1e4) == 1.0);
  CHECK(sigmoid(-1e4) == 0.0);
  CHECK(sigmoid(0.0) == 0.5);
}

TEST_CASE("soft_contrastive of no pairs is zero") {
  const auto s = two_by_two(0.3, {0, 0});
  MinedPairs none;
  none.positives.resize(2);
  none.negatives.resize(2);
  const LossOutput out = soft_contrastive(s, none, LossParams{});
  CHECK(out.value == 0.0);
  CHECK(out.grad_s.empty());
  CHECK(out.grad_lambda == 0.0);
  CHECK(out.anchors_used == 0);
}

TEST_CASE("one positive at the threshold") {
  LossParams p;
  p.lambda = 0.7;
  p.mu = 2.0;
  const auto s = two_by_two(0.7, {0, 0});
  const LossOutput out = soft_contrastive(s, single_pair(2, 0, 1, true), p);
  CHECK(out.value == doctest::Approx(std::log(2.0) / 2.0).epsilon(1e-15));
  CHECK(out.anchors_used == 1);
  REQUIRE(out.grad_s.size() == 1);
  // d/dS of (1/mu) softplus(mu (lambda - S)) at S = lambda is -sigmoid(0)
  CHECK(out.grad_s[0].grad == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(out.grad_lambda == doctest::Approx(0.5).epsilon(1e-15));

  const double h = 1e-6;
  const double fd = (soft_contrastive(two_by_two(0.7 + h, {0, 0}), single_pair(2, 0, 1, true), p).value -
                     soft_contrastive(two_by_two(0.7 - h, {0, 0}), single_pair(2, 0, 1, true), p).value) /
                    (2 * h);
  CHECK(fd == doctest::Approx(-0.5).epsilon(1e-9));
}

TEST_CASE("soft_contrastive gradients match finite differences on 50 instances") {
  std::mt19937_64 rng(101);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    const Instance in = random_instance(rng, trial);
    const LossOutput out = soft_contrastive(in.s, in.pairs, in.params);
    CAPTURE(trial);
    REQUIRE(!out.grad_s.empty());

    for (const auto& [key, analytic] : unordered_grads(out)) {
      const auto [i, j] = key;
      const double fd = (soft_contrastive(perturbed(in.s, i, j, h), in.pairs, in.params).value -
                         soft_contrastive(perturbed(in.s, i, j, -h), in.pairs, in.params).value) /
                        (2 * h);
      CHECK(rel_err(analytic, fd) <= 1e-6);
    }

    LossParams up = in.params, down = in.params;
    up.lambda += h;
    down.lambda -= h;
    const double fd_lambda =
        (soft_contrastive(in.s, in.pairs, up).value - soft_contrastive(in.s, in.pairs, down).value) / (2 * h);
    CHECK(rel_err(out.grad_lambda, fd_lambda) <= 1e-6);
  }
}

TEST_CASE("gradient signs and monotonicity") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Instance in = random_instance(rng, trial);
    const LossOutput out = soft_contrastive(in.s, in.pairs, in.params);
    for (const auto& pg : out.grad_s) {
      if (pg.positive) {
        CHECK(pg.grad < 0.0);
      } else {
        CHECK(pg.grad > 0.0);
      }
    }
  }

  // raising a mined S_neg raises the loss, raising a mined S_pos lowers it
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(3, 3);
  v(0, 1) = v(1, 0) = 0.5;
  v(0, 2) = v(2, 0) = 0.4;
  const std::vector<int> labels{0, 0, 1};
  MinedPairs m;
  m.positives = {{1}, {}, {}};
  m.negatives = {{2}, {}, {}};
  m.n_pos = m.n_neg = 1;
  const LossParams p;
  const double base = soft_contrastive(SimilarityMatrix(v, labels), m, p).value;
  Eigen::MatrixXd w = v;
  w(0, 2) = w(2, 0) = 0.45;
  CHECK(soft_contrastive(SimilarityMatrix(w, labels), m, p).value > base);
  w = v;
  w(0, 1) = w(1, 0) = 0.55;
  CHECK(soft_contrastive(SimilarityMatrix(w, labels), m, p).value < base);
}

TEST_CASE("extreme scales stay finite") {
  LossParams p;
  p.lambda = 0.7;
  p.mu = 1e4;
  p.nu = 1e4;
  for (double s : {-0.3, 0.7, 1.0}) {
    const auto pos = soft_contrastive(two_by_two(s, {0, 0}), single_pair(2, 0, 1, true), p);
    const auto neg = soft_contrastive(two_by_two(s, {0, 1}), single_pair(2, 0, 1, false), p);
    for (const auto& o : {pos, neg}) {
      CHECK(std::isfinite(o.value));
      CHECK(std::isfinite(o.grad_lambda));
      CHECK(std::isfinite(o.grad_s[0].grad));
    }
  }
  // mu (lambda - S) = 1e4 exactly
  const auto big = soft_contrastive(two_by_two(-0.3, {0, 0}), single_pair(2, 0, 1, true), p);
  CHECK(big.value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(big.grad_s[0].grad == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("global normalization divides by batch-wide counts") {
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(4, 4);
  v(0, 1) = v(1, 0) = 0.5;
  v(2, 3) = v(3, 2) = 0.6;
  v(0, 2) = v(2, 0) = 0.3;
  v(0, 3) = v(3, 0) = 0.2;
  v(1, 2) = v(2, 1) = 0.1;
  v(1, 3) = v(3, 1) = 0.0;
  const SimilarityMatrix s(v, {0, 0, 1, 1});
  MinedPairs m;
  m.positives = {{1}, {}, {3}, {}};
  m.negatives = {{2, 3}, {}, {}, {}};
  m.n_pos = 2;
  m.n_neg = 2;
  LossParams p;
  p.normalization = LossNormalization::global;
  const double expected = (softplus(p.mu * (p.lambda - 0.5)) + softplus(p.mu * (p.lambda - 0.6))) / (p.mu * 2) +
                          (softplus(p.nu * (0.3 - p.lambda)) + softplus(p.nu * (0.2 - p.lambda))) / (p.nu * 2);
  CHECK(soft_contrastive(s, m, p).value == doctest::Approx(expected).epsilon(1e-14));

  p.normalization = LossNormalization::per_anchor;
  const double anchor0 = softplus(p.mu * (p.lambda - 0.5)) / p.mu +
                         (softplus(p.nu * (0.3 - p.lambda)) + softplus(p.nu * (0.2 - p.lambda))) / (p.nu * 2);
  const double anchor2 = softplus(p.mu * (p.lambda - 0.6)) / p.mu;
  CHECK(soft_contrastive(s, m, p).value == doctest::Approx((anchor0 + anchor2) / 2).epsilon(1e-14));
}

TEST_CASE("contrastive baseline") {
  LossParams p;
  p.alpha_neg = 0.5;
  p.alpha_pos = 0.8;

  const auto neg = contrastive(two_by_two(0.8, {0, 1}), single_pair(2, 0, 1, false), p);
  CHECK(neg.value == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(neg.grad_s[0].grad == 1.0);
  CHECK(neg.grad_lambda == 0.0);

  const auto inactive_neg = contrastive(two_by_two(0.4, {0, 1}), single_pair(2, 0, 1, false), p);
  const auto inactive_pos = contrastive(two_by_two(0.9, {0, 0}), single_pair(2, 0, 1, true), p);
  CHECK(inactive_neg.value == 0.0);
  CHECK(inactive_pos.value == 0.0);
  CHECK(inactive_neg.grad_s[0].grad == 0.0);

  // hinge corner
  CHECK(contrastive(two_by_two(0.5, {0, 1}), single_pair(2, 0, 1, false), p).grad_s[0].grad == 0.0);
}

TEST_CASE("soft contrastive approaches the hinge at large scale") {
  LossParams p;
  p.mu = p.nu = 1000.0;
  p.lambda = p.alpha_pos = p.alpha_neg = 0.7;
  for (double s = -0.95; s <= 0.95; s += 0.05) {
    for (bool positive : {true, false}) {
      const auto sm = two_by_two(s, {0, positive ? 0 : 1});
      const auto pairs = single_pair(2, 0, 1, positive);
      const double diff = soft_contrastive(sm, pairs, p).value - contrastive(sm, pairs, p).value;
      CHECK(diff >= 0.0);
      CHECK(diff <= std::log(2.0) / 1000.0 + 1e-15);
    }
  }
}

TEST_CASE("end-to-end parameter gradient through the normalized MLP") {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 5; ++trial) {
    EmbeddingNet net = EmbeddingNet::he_uniform({4, 6, 3}, 40 + trial);
    for (auto& l : net.layers()) l.bias = random_matrix(l.bias.size(), 1, rng, 0.1);
    const auto labels = pk_labels(3, 3);
    const Eigen::MatrixXd x = random_matrix(9, 4, rng);
    const Eigen::MatrixXd e = forward(net, x);
    const SimilarityMatrix s = similarity_matrix(e, labels);
    const MinedPairs pairs = all_pairs(labels);  // fixed mask
    LossParams p;
    p.nu = 10.0;

    const LossOutput out = soft_contrastive(s, pairs, p);
    const Eigen::VectorXd analytic = flatten(backward(net, x, embedding_grad(e, out.grad_s)));
    const Eigen::VectorXd numeric = central_diff(
        [&](const Eigen::VectorXd& flat) {
          const Eigen::MatrixXd ep = forward(unflatten(net, flat), x);
          return soft_contrastive(similarity_matrix(ep, labels), pairs, p).value;
        },
        flatten(net), 1e-5);
    CAPTURE(trial);
    CHECK(max_rel_err(analytic, numeric) <= 1e-5);
  }
}

TEST_CASE("parameter validation") {
  LossParams p;
  p.mu = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = LossParams{};
  p.nu = -1.0;
  CHECK_THROWS_AS(soft_contrastive(two_by_two(0.1, {0, 1}), single_pair(2, 0, 1, false), p), std::invalid_argument);
  p = LossParams{};
  p.lambda = std::nan("");
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  CHECK(loss_normalization_from_string(to_string(LossNormalization::global)) == LossNormalization::global);
}
