#include <doctest.h>

#include <cmath>
#include <vector>

#include "streamdf/objective.hpp"
#include "streamdf/util.hpp"

using namespace streamdf;

namespace {

// Wait-logit row whose softmax wait probability is q; saturated rows give
// exactly 0.0 / 1.0 in double precision.
void set_wait_prob(Matrix& wait_logits, int row, double q) {
  if (q <= 0.0) {
    wait_logits.at(row, 0) = 50.0;
    wait_logits.at(row, 1) = -50.0;
  } else if (q >= 1.0) {
    wait_logits.at(row, 0) = -50.0;
    wait_logits.at(row, 1) = 50.0;
  } else {
    wait_logits.at(row, 0) = 0.0;
    wait_logits.at(row, 1) = std::log(q / (1.0 - q));
  }
}

// Disfluency-logit row whose cross entropy against label 1 equals ce.
void set_ce_label1(Matrix& disf_logits, int row, double ce) {
  disf_logits.at(row, 0) = 0.0;
  disf_logits.at(row, 1) = -std::log(std::exp(ce) - 1.0);
}

PrefixOutputs make_prefix(const std::vector<double>& wait_probs,
                          const std::vector<double>& ce_label1) {
  int n = static_cast<int>(wait_probs.size());
  PrefixOutputs out;
  out.disfluency_logits = Matrix(n, 2);
  out.wait_logits = Matrix(n, 2);
  for (int j = 0; j < n; ++j) {
    set_wait_prob(out.wait_logits, j, wait_probs[static_cast<size_t>(j)]);
    set_ce_label1(out.disfluency_logits, j, ce_label1[static_cast<size_t>(j)]);
  }
  return out;
}

PrefixOutputs random_prefix(Rng& rng, int n, bool away_from_threshold) {
  PrefixOutputs out;
  out.disfluency_logits = Matrix(n, 2);
  out.wait_logits = Matrix(n, 2);
  for (double& v : out.disfluency_logits.data) v = rng.uniform(-2.0, 2.0);
  for (int j = 0; j < n; ++j) {
    double q = rng.uniform(0.02, 0.98);
    if (away_from_threshold && std::abs(q - 0.5) < 0.07) q = q < 0.5 ? 0.3 : 0.7;
    set_wait_prob(out.wait_logits, j, q);
  }
  return out;
}

std::vector<int> random_labels(Rng& rng, int n) {
  std::vector<int> y(static_cast<size_t>(n));
  for (int& v : y) v = rng.bernoulli(0.3) ? 1 : 0;
  return y;
}

}  // namespace

TEST_CASE("LossConfig validation") {
  LossConfig c;
  CHECK_NOTHROW(c.validate());
  c.gamma = -0.1;
  CHECK_THROWS(c.validate());
  c = LossConfig{};
  c.lambda = -1.0;
  CHECK_THROWS(c.validate());
  c = LossConfig{};
  c.wait_threshold = 0.0;
  CHECK_THROWS(c.validate());
  c.wait_threshold = 1.0;
  CHECK_THROWS(c.validate());
}

TEST_CASE("cross entropy per token matches closed forms") {
  Matrix logits(3, 2);
  logits.at(0, 0) = 0.0;
  logits.at(0, 1) = 0.0;
  logits.at(1, 0) = 0.0;
  logits.at(1, 1) = std::log(3.0);
  logits.at(2, 0) = -40.0;
  logits.at(2, 1) = 0.0;
  std::vector<int> labels{1, 1, 1};
  auto ce = cross_entropy_per_token(logits, labels);
  CHECK(ce[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(ce[1] == doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(ce[2] == doctest::Approx(0.0).epsilon(1e-9));
  for (double v : ce) CHECK(v >= 0.0);

  std::vector<int> wrong_len{1};
  CHECK_THROWS(cross_entropy_per_token(logits, wrong_len));
  std::vector<int> bad_label{0, 2, 1};
  CHECK_THROWS(cross_entropy_per_token(logits, bad_label));
}

TEST_CASE("full loss sums per-token cross entropy and ignores the wait head") {
  PrefixOutputs one = make_prefix({0.5}, {std::log(2.0)});
  one.disfluency_logits.at(0, 0) = 0.0;
  one.disfluency_logits.at(0, 1) = 0.0;
  std::vector<int> y1{0};
  CHECK(full_loss(one, y1) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Rng rng(2);
  PrefixOutputs two = random_prefix(rng, 2, false);
  std::vector<int> y2{1, 0};
  auto ce = cross_entropy_per_token(two.disfluency_logits, y2);
  CHECK(full_loss(two, y2) == ce[0] + ce[1]);

  PrefixOutputs altered = two;
  altered.wait_logits.at(0, 0) += 5.0;
  altered.wait_logits.at(1, 1) -= 3.0;
  CHECK(full_loss(altered, y2) == full_loss(two, y2));
}

TEST_CASE("compute_mask follows the strict-threshold first-wait rule") {
  std::vector<double> a{0.2, 0.7, 0.1};
  Mask ma = compute_mask(a, 0.5);
  CHECK(ma.first_wait_index == 1);
  CHECK(ma.m == std::vector<int>{1, 0, 0});

  std::vector<double> b{0.1, 0.2, 0.3};
  Mask mb = compute_mask(b, 0.5);
  CHECK_FALSE(mb.first_wait_index.has_value());
  CHECK(mb.m == std::vector<int>{1, 1, 1});

  std::vector<double> c{0.5};
  Mask mc = compute_mask(c, 0.5);
  CHECK_FALSE(mc.first_wait_index.has_value());  // > is strict
  CHECK(mc.m == std::vector<int>{1});
}

TEST_CASE("compute_mask is invariant to shifting both wait logits") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    PrefixOutputs p = random_prefix(rng, 5, true);
    Matrix shifted = p.wait_logits;
    double c = rng.uniform(-30.0, 30.0);
    for (int r = 0; r < shifted.rows; ++r) {
      shifted.at(r, 0) += c;
      shifted.at(r, 1) += c;
    }
    Mask m1 = compute_mask(wait_probabilities(p.wait_logits), 0.5);
    Mask m2 = compute_mask(wait_probabilities(shifted), 0.5);
    CHECK(m1.m == m2.m);
  }
}

TEST_CASE("soft mask weights are cumulative no-wait probabilities") {
  std::vector<double> zeros{0.0, 0.0, 0.0};
  CHECK(soft_mask_weights(zeros) == std::vector<double>{1.0, 1.0, 1.0});
  std::vector<double> halves{0.5, 0.5};
  CHECK(soft_mask_weights(halves) == std::vector<double>{0.5, 0.25});

  // Rounding probabilities to {0,1} collapses the relaxation onto the hard
  // mask; exhaustive over all binary vectors up to length 6.
  for (int n = 1; n <= 6; ++n) {
    for (int bits = 0; bits < (1 << n); ++bits) {
      std::vector<double> probs(static_cast<size_t>(n));
      for (int j = 0; j < n; ++j) probs[static_cast<size_t>(j)] = (bits >> j) & 1 ? 1.0 : 0.0;
      auto soft = soft_mask_weights(probs);
      Mask hard = compute_mask(probs, 0.5);
      for (int j = 0; j < n; ++j)
        CHECK(soft[static_cast<size_t>(j)] == static_cast<double>(hard.m[static_cast<size_t>(j)]));
    }
  }
}

TEST_CASE("prefix loss honors the always-wait and never-wait limits exactly") {
  // Utterance of length 4: proper prefixes have lengths 1..3.
  std::vector<int> labels{1, 0, 1, 0};
  Rng rng(4);
  std::vector<PrefixOutputs> always, never;
  for (int len = 1; len <= 3; ++len) {
    PrefixOutputs p = random_prefix(rng, len, false);
    for (int j = 0; j < len; ++j) set_wait_prob(p.wait_logits, j, 1.0);
    always.push_back(p);
    for (int j = 0; j < len; ++j) set_wait_prob(p.wait_logits, j, 0.0);
    never.push_back(p);
  }

  for (MaskMode mode : {MaskMode::SoftRelaxation, MaskMode::HardStopGradient}) {
    LossConfig config;
    config.mask_mode = mode;
    CHECK(prefix_loss(always, labels, config) == 0.0);
    double expect = 0.0;
    for (const PrefixOutputs& p : never) {
      auto ce = cross_entropy_per_token(
          p.disfluency_logits,
          std::span<const int>(labels).first(static_cast<size_t>(p.length())));
      double s = 0.0;
      for (double v : ce) s += v;
      expect += s;
    }
    CHECK(prefix_loss(never, labels, config) == expect);
  }
}

TEST_CASE("hard-mask prefix loss is the masked dot product") {
  // Prefix 1 fully masked by a saturated wait; prefix 2 carries CE [0.3, 0.9]
  // under mask [1, 0].
  std::vector<int> labels{1, 1, 1};
  std::vector<PrefixOutputs> prefixes;
  prefixes.push_back(make_prefix({1.0}, {0.42}));
  prefixes.push_back(make_prefix({0.3, 0.7}, {0.3, 0.9}));
  LossConfig config;
  config.mask_mode = MaskMode::HardStopGradient;
  CHECK(prefix_loss(prefixes, labels, config) == doctest::Approx(0.3).epsilon(1e-9));

  std::vector<int> single{1};
  CHECK(prefix_loss({}, single, config) == 0.0);  // |x| = 1: empty prefix set
  std::vector<int> too_long{1, 0, 1, 0};
  CHECK_THROWS(prefix_loss(prefixes, too_long, config));
}

TEST_CASE("prefix loss is nonincreasing in any wait probability under soft relaxation") {
  Rng rng(15);
  LossConfig config;
  for (int trial = 0; trial < 200; ++trial) {
    int n = rng.int_range(2, 6);
    std::vector<int> labels = random_labels(rng, n);
    std::vector<PrefixOutputs> prefixes;
    for (int len = 1; len < n; ++len) prefixes.push_back(random_prefix(rng, len, false));
    double base = prefix_loss(prefixes, labels, config);

    int p = rng.next_int(n - 1);
    int j = rng.next_int(p + 1);
    auto probs = wait_probabilities(prefixes[static_cast<size_t>(p)].wait_logits);
    double q = probs[static_cast<size_t>(j)];
    set_wait_prob(prefixes[static_cast<size_t>(p)].wait_logits, j,
                  q + (1.0 - q) * rng.uniform(0.1, 0.9));
    double bumped = prefix_loss(prefixes, labels, config);
    CHECK(bumped <= base + 1e-12);
  }
}

TEST_CASE("latency cost evaluates the (i-j) weighted double sum") {
  std::vector<std::vector<double>> zeros{{0.0}, {0.0, 0.0}, {0.0, 0.0, 0.0}};
  CHECK(latency_cost(zeros) == 0.0);

  // |x| = 4, all probabilities 1: sum of i(i-1)/2 for i = 1..3.
  std::vector<std::vector<double>> ones{{1.0}, {1.0, 1.0}, {1.0, 1.0, 1.0}};
  CHECK(latency_cost(ones) == 4.0);

  std::vector<std::vector<double>> mixed{{0.4}, {0.6, 0.2}};
  CHECK(latency_cost(mixed) == 0.6);

  std::vector<std::vector<double>> ragged{{0.4, 0.1}};
  CHECK_THROWS(latency_cost(ragged));
}

TEST_CASE("latency cost is linear in each probability with coefficient (i-j)") {
  Rng rng(8);
  std::vector<std::vector<double>> probs;
  for (int i = 1; i <= 5; ++i) {
    std::vector<double> row(static_cast<size_t>(i));
    for (double& v : row) v = rng.uniform(0.0, 0.7);
    probs.push_back(row);
  }
  double base = latency_cost(probs);
  for (size_t i = 0; i < probs.size(); ++i)
    for (size_t j = 0; j <= i; ++j) {
      auto bumped = probs;
      bumped[i][j] += 0.25;
      double coeff = static_cast<double>(i - j);  // (i+1) - (j+1)
      CHECK(latency_cost(bumped) - base == doctest::Approx(0.25 * coeff).epsilon(1e-12));
    }
}

TEST_CASE("total loss composes the three terms and honors the zero-weight ablations") {
  Rng rng(33);
  int n = 5;
  std::vector<int> labels = random_labels(rng, n);
  std::vector<PrefixOutputs> prefixes;
  for (int len = 1; len < n; ++len) prefixes.push_back(random_prefix(rng, len, false));
  PrefixOutputs full = random_prefix(rng, n, false);

  LossConfig off;
  off.gamma = 0.0;
  off.lambda = 0.0;
  LossBreakdown b0 = total_loss(prefixes, full, labels, off);
  CHECK(b0.total == b0.full);
  CHECK(b0.full == full_loss(full, labels));

  LossConfig g_only;
  g_only.gamma = 1.9;
  g_only.lambda = 0.0;
  std::vector<PrefixOutputs> never = prefixes;
  for (PrefixOutputs& p : never)
    for (int j = 0; j < p.length(); ++j) set_wait_prob(p.wait_logits, j, 0.0);
  LossBreakdown b1 = total_loss(never, full, labels, g_only);
  double strunc = 0.0;
  for (const PrefixOutputs& p : never) {
    auto ce = cross_entropy_per_token(
        p.disfluency_logits, std::span<const int>(labels).first(static_cast<size_t>(p.length())));
    double s = 0.0;
    for (double v : ce) s += v;
    strunc += s;
  }
  CHECK(b1.prefix == strunc);
  CHECK(b1.total == b1.full + 1.9 * strunc);

  LossConfig both;
  LossBreakdown b2 = total_loss(prefixes, full, labels, both);
  CHECK(b2.total == b2.full + both.gamma * b2.prefix + both.lambda * b2.latency);
  CHECK(b2.full >= 0.0);
  CHECK(b2.prefix >= 0.0);
  CHECK(b2.latency >= 0.0);
}

TEST_CASE("total_loss_with_logit_grads reproduces total_loss bitwise") {
  Rng rng(44);
  for (MaskMode mode : {MaskMode::SoftRelaxation, MaskMode::HardStopGradient, MaskMode::AllOnes}) {
    for (int trial = 0; trial < 20; ++trial) {
      int n = rng.int_range(1, 7);
      std::vector<int> labels = random_labels(rng, n);
      std::vector<PrefixOutputs> prefixes;
      for (int len = 1; len < n; ++len) prefixes.push_back(random_prefix(rng, len, true));
      PrefixOutputs full = random_prefix(rng, n, true);
      LossConfig config;
      config.mask_mode = mode;
      config.gamma = 1.3;
      config.lambda = 0.02;

      LossBreakdown plain = total_loss(prefixes, full, labels, config);
      LogitGrads lg;
      LossBreakdown graded = total_loss_with_logit_grads(prefixes, full, labels, config, lg);
      CHECK(plain.full == graded.full);
      CHECK(plain.prefix == graded.prefix);
      CHECK(plain.latency == graded.latency);
      CHECK(plain.total == graded.total);

      REQUIRE(lg.d_disfluency.size() == prefixes.size());
      REQUIRE(lg.d_wait.size() == prefixes.size());
      for (double v : lg.d_wait_full.data) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("objective logit gradients match finite differences") {
  Rng rng(55);
  const double step = 1e-6;
  for (MaskMode mode : {MaskMode::SoftRelaxation, MaskMode::HardStopGradient, MaskMode::AllOnes}) {
    int n = 5;
    std::vector<int> labels = random_labels(rng, n);
    std::vector<PrefixOutputs> prefixes;
    // Probabilities away from the threshold so the hard mask is locally
    // constant and differentiable almost everywhere.
    for (int len = 1; len < n; ++len) prefixes.push_back(random_prefix(rng, len, true));
    PrefixOutputs full = random_prefix(rng, n, true);
    LossConfig config;
    config.mask_mode = mode;
    config.gamma = 1.7;
    config.lambda = 0.05;

    LogitGrads lg;
    total_loss_with_logit_grads(prefixes, full, labels, config, lg);

    auto eval = [&]() { return total_loss(prefixes, full, labels, config).total; };
    auto check_entries = [&](Matrix& target, const Matrix& grad) {
      for (size_t i = 0; i < target.data.size(); ++i) {
        double saved = target.data[i];
        target.data[i] = saved + step;
        double up = eval();
        target.data[i] = saved - step;
        double down = eval();
        target.data[i] = saved;
        double fd = (up - down) / (2 * step);
        CHECK(grad.data[i] == doctest::Approx(fd).epsilon(5e-4));
      }
    };
    for (size_t p = 0; p < prefixes.size(); ++p) {
      check_entries(prefixes[p].disfluency_logits, lg.d_disfluency[p]);
      check_entries(prefixes[p].wait_logits, lg.d_wait[p]);
    }
    check_entries(full.disfluency_logits, lg.d_disfluency_full);
  }
}

TEST_CASE("hard mode sends no gradient to the wait head beyond latency") {
  Rng rng(66);
  int n = 5;
  std::vector<int> labels = random_labels(rng, n);
  std::vector<PrefixOutputs> prefixes;
  for (int len = 1; len < n; ++len) prefixes.push_back(random_prefix(rng, len, true));
  PrefixOutputs full = random_prefix(rng, n, true);

  LossConfig config;
  config.mask_mode = MaskMode::HardStopGradient;
  config.lambda = 0.0;  // isolate the prefix term
  LogitGrads lg;
  total_loss_with_logit_grads(prefixes, full, labels, config, lg);
  for (const Matrix& m : lg.d_wait)
    for (double v : m.data) CHECK(v == 0.0);

  config.mask_mode = MaskMode::SoftRelaxation;
  LogitGrads lg_soft;
  total_loss_with_logit_grads(prefixes, full, labels, config, lg_soft);
  double magnitude = 0.0;
  for (const Matrix& m : lg_soft.d_wait)
    for (double v : m.data) magnitude += std::abs(v);
  CHECK(magnitude > 0.0);
}
