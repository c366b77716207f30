#include "streamdf/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace streamdf {

namespace {

void check_two_cols(const Matrix& m, const char* what) {
  if (m.cols != 2) throw std::invalid_argument(std::string(what) + ": expected 2 logit columns");
}

// Stable softmax probability of class 1 for a two-logit row.
double class1_probability(const double* row) { return 1.0 / (1.0 + std::exp(row[0] - row[1])); }

double log_sum_exp2(const double* row) {
  double m = std::max(row[0], row[1]);
  return m + std::log(std::exp(row[0] - m) + std::exp(row[1] - m));
}

}  // namespace

std::string mask_mode_name(MaskMode mode) {
  switch (mode) {
    case MaskMode::HardStopGradient: return "hard_stop_gradient";
    case MaskMode::SoftRelaxation: return "soft_relaxation";
    case MaskMode::AllOnes: return "all_ones";
  }
  return "?";
}

std::optional<MaskMode> mask_mode_from_string(std::string_view name) {
  if (name == "hard_stop_gradient" || name == "hard") return MaskMode::HardStopGradient;
  if (name == "soft_relaxation" || name == "soft") return MaskMode::SoftRelaxation;
  if (name == "all_ones" || name == "all-ones") return MaskMode::AllOnes;
  return std::nullopt;
}

void LossConfig::validate() const {
  if (!(gamma >= 0.0)) throw std::invalid_argument("LossConfig: gamma must be >= 0");
  if (!(lambda >= 0.0)) throw std::invalid_argument("LossConfig: lambda must be >= 0");
  if (!(wait_threshold > 0.0 && wait_threshold < 1.0))
    throw std::invalid_argument("LossConfig: wait_threshold must be in (0, 1)");
}

std::vector<double> wait_probabilities(const Matrix& wait_logits) {
  check_two_cols(wait_logits, "wait_probabilities");
  std::vector<double> q(static_cast<size_t>(wait_logits.rows));
  for (int r = 0; r < wait_logits.rows; ++r) q[static_cast<size_t>(r)] = class1_probability(wait_logits.row(r));
  return q;
}

std::vector<double> cross_entropy_per_token(const Matrix& disfluency_logits,
                                            std::span<const int> labels) {
  check_two_cols(disfluency_logits, "cross_entropy_per_token");
  if (static_cast<size_t>(disfluency_logits.rows) != labels.size())
    throw std::invalid_argument("cross_entropy_per_token: length mismatch");
  std::vector<double> ce(labels.size());
  for (size_t j = 0; j < labels.size(); ++j) {
    int y = labels[j];
    if (y != 0 && y != 1)
      throw std::invalid_argument("cross_entropy_per_token: labels must be 0 or 1");
    const double* row = disfluency_logits.row(static_cast<int>(j));
    ce[j] = log_sum_exp2(row) - row[y];
  }
  return ce;
}

double full_loss(const PrefixOutputs& full_outputs, std::span<const int> labels) {
  std::vector<double> ce = cross_entropy_per_token(full_outputs.disfluency_logits, labels);
  double sum = 0.0;
  for (double v : ce) sum += v;
  return sum;
}

Mask compute_mask(std::span<const double> wait_probs, double threshold) {
  Mask mask;
  mask.m.assign(wait_probs.size(), 1);
  for (size_t j = 0; j < wait_probs.size(); ++j) {
    if (wait_probs[j] > threshold) {  // strict: a probability equal to the threshold predicts
      mask.first_wait_index = static_cast<int>(j);
      for (size_t l = j; l < wait_probs.size(); ++l) mask.m[l] = 0;
      break;
    }
  }
  return mask;
}

std::vector<double> soft_mask_weights(std::span<const double> wait_probs) {
  std::vector<double> w(wait_probs.size());
  double prod = 1.0;
  for (size_t j = 0; j < wait_probs.size(); ++j) {
    prod *= 1.0 - wait_probs[j];
    w[j] = prod;
  }
  return w;
}

namespace {

void check_prefix_shapes(std::span<const PrefixOutputs> prefixes, std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("prefix_loss: empty label sequence");
  if (prefixes.size() + 1 != labels.size())
    throw std::invalid_argument("prefix_loss: expected exactly |x|-1 proper prefixes");
  for (size_t p = 0; p < prefixes.size(); ++p) {
    if (prefixes[p].disfluency_logits.rows != static_cast<int>(p) + 1 ||
        prefixes[p].wait_logits.rows != static_cast<int>(p) + 1)
      throw std::invalid_argument("prefix_loss: prefix " + std::to_string(p + 1) +
                                  " has wrong row count");
  }
}

double one_prefix_masked_ce(const PrefixOutputs& outputs, std::span<const int> labels,
                            const LossConfig& config) {
  size_t len = static_cast<size_t>(outputs.length());
  std::vector<double> ce = cross_entropy_per_token(outputs.disfluency_logits, labels.first(len));
  double term = 0.0;
  switch (config.mask_mode) {
    case MaskMode::SoftRelaxation: {
      std::vector<double> q = wait_probabilities(outputs.wait_logits);
      std::vector<double> w = soft_mask_weights(q);
      for (size_t j = 0; j < len; ++j) term += w[j] * ce[j];
      break;
    }
    case MaskMode::HardStopGradient: {
      std::vector<double> q = wait_probabilities(outputs.wait_logits);
      Mask mask = compute_mask(q, config.wait_threshold);
      for (size_t j = 0; j < len; ++j) term += mask.m[j] * ce[j];
      break;
    }
    case MaskMode::AllOnes: {
      for (size_t j = 0; j < len; ++j) term += ce[j];
      break;
    }
  }
  return term;
}

}  // namespace

double prefix_loss(std::span<const PrefixOutputs> prefixes, std::span<const int> labels,
                   const LossConfig& config) {
  config.validate();
  check_prefix_shapes(prefixes, labels);
  double sum = 0.0;
  for (const PrefixOutputs& outputs : prefixes) sum += one_prefix_masked_ce(outputs, labels, config);
  return sum;
}

double latency_cost(const std::vector<std::vector<double>>& wait_probs_per_prefix) {
  double sum = 0.0;
  for (size_t p = 0; p < wait_probs_per_prefix.size(); ++p) {
    const auto& q = wait_probs_per_prefix[p];
    if (q.size() != p + 1)
      throw std::invalid_argument("latency_cost: prefix " + std::to_string(p + 1) +
                                  " must supply " + std::to_string(p + 1) + " probabilities");
    // 1-based prefix index i = p+1, token j = t+1; coefficient i-j = (p - t).
    for (size_t t = 0; t < q.size(); ++t)
      sum += static_cast<double>(p - t) * q[t];
  }
  return sum;
}

LossBreakdown total_loss(std::span<const PrefixOutputs> prefixes, const PrefixOutputs& full_outputs,
                         std::span<const int> labels, const LossConfig& config) {
  config.validate();
  LossBreakdown b;
  b.full = full_loss(full_outputs, labels);
  b.prefix = prefix_loss(prefixes, labels, config);
  std::vector<std::vector<double>> qs;
  qs.reserve(prefixes.size());
  for (const PrefixOutputs& outputs : prefixes) qs.push_back(wait_probabilities(outputs.wait_logits));
  b.latency = latency_cost(qs);
  b.total = b.full + config.gamma * b.prefix + config.lambda * b.latency;
  return b;
}

LossBreakdown total_loss_with_logit_grads(std::span<const PrefixOutputs> prefixes,
                                          const PrefixOutputs& full_outputs,
                                          std::span<const int> labels, const LossConfig& config,
                                          LogitGrads& grads) {
  config.validate();
  check_prefix_shapes(prefixes, labels);
  const int n = static_cast<int>(labels.size());
  if (full_outputs.length() != n)
    throw std::invalid_argument("total_loss_with_logit_grads: full outputs length mismatch");

  LossBreakdown b;
  grads.d_disfluency.assign(prefixes.size(), Matrix{});
  grads.d_wait.assign(prefixes.size(), Matrix{});

  for (size_t p = 0; p < prefixes.size(); ++p) {
    const PrefixOutputs& outputs = prefixes[p];
    const int len = outputs.length();
    std::vector<double> ce =
        cross_entropy_per_token(outputs.disfluency_logits, labels.first(static_cast<size_t>(len)));
    std::vector<double> q = wait_probabilities(outputs.wait_logits);

    Matrix d_disf(len, 2);
    Matrix d_wait(len, 2);
    std::vector<double> ce_weight(static_cast<size_t>(len), 0.0);
    std::vector<double> dq(static_cast<size_t>(len), 0.0);
    double prefix_term = 0.0;

    switch (config.mask_mode) {
      case MaskMode::SoftRelaxation: {
        std::vector<double> w = soft_mask_weights(q);
        for (int j = 0; j < len; ++j) {
          prefix_term += w[static_cast<size_t>(j)] * ce[static_cast<size_t>(j)];
          ce_weight[static_cast<size_t>(j)] = config.gamma * w[static_cast<size_t>(j)];
        }
        // dq_l = -A_l * S_l with A_l the product of (1-q) before l and S_l
        // the suffix recurrence S_l = ce_l + (1-q_{l+1}) S_{l+1}.
        std::vector<double> suffix(static_cast<size_t>(len), 0.0);
        suffix[static_cast<size_t>(len - 1)] = ce[static_cast<size_t>(len - 1)];
        for (int l = len - 2; l >= 0; --l)
          suffix[static_cast<size_t>(l)] =
              ce[static_cast<size_t>(l)] +
              (1.0 - q[static_cast<size_t>(l + 1)]) * suffix[static_cast<size_t>(l + 1)];
        double before = 1.0;
        for (int l = 0; l < len; ++l) {
          dq[static_cast<size_t>(l)] += config.gamma * (-before * suffix[static_cast<size_t>(l)]);
          before *= 1.0 - q[static_cast<size_t>(l)];
        }
        break;
      }
      case MaskMode::HardStopGradient: {
        Mask mask = compute_mask(q, config.wait_threshold);
        for (int j = 0; j < len; ++j) {
          prefix_term += mask.m[static_cast<size_t>(j)] * ce[static_cast<size_t>(j)];
          ce_weight[static_cast<size_t>(j)] = config.gamma * mask.m[static_cast<size_t>(j)];
        }
        break;  // piecewise-constant mask: no gradient into the wait head
      }
      case MaskMode::AllOnes: {
        for (int j = 0; j < len; ++j) {
          prefix_term += ce[static_cast<size_t>(j)];
          ce_weight[static_cast<size_t>(j)] = config.gamma;
        }
        break;
      }
    }
    b.prefix += prefix_term;

    for (int j = 0; j < len; ++j) {
      double coeff = static_cast<double>(len - 1 - j);  // (i - j), zero at the frontier
      b.latency += coeff * q[static_cast<size_t>(j)];
      dq[static_cast<size_t>(j)] += config.lambda * coeff;
    }

    for (int j = 0; j < len; ++j) {
      const double* row = outputs.disfluency_logits.row(j);
      double p1 = class1_probability(row);
      int y = labels[static_cast<size_t>(j)];
      double w = ce_weight[static_cast<size_t>(j)];
      d_disf.at(j, 0) = w * ((1.0 - p1) - (y == 0 ? 1.0 : 0.0));
      d_disf.at(j, 1) = w * (p1 - (y == 1 ? 1.0 : 0.0));

      double qj = q[static_cast<size_t>(j)];
      double sig = qj * (1.0 - qj);
      d_wait.at(j, 0) = -dq[static_cast<size_t>(j)] * sig;
      d_wait.at(j, 1) = dq[static_cast<size_t>(j)] * sig;
    }

    grads.d_disfluency[p] = std::move(d_disf);
    grads.d_wait[p] = std::move(d_wait);
  }

  grads.d_disfluency_full = Matrix(n, 2);
  grads.d_wait_full = Matrix(n, 2);
  std::vector<double> full_ce = cross_entropy_per_token(full_outputs.disfluency_logits, labels);
  for (int j = 0; j < n; ++j) {
    b.full += full_ce[static_cast<size_t>(j)];
    const double* row = full_outputs.disfluency_logits.row(j);
    double p1 = class1_probability(row);
    int y = labels[static_cast<size_t>(j)];
    grads.d_disfluency_full.at(j, 0) = (1.0 - p1) - (y == 0 ? 1.0 : 0.0);
    grads.d_disfluency_full.at(j, 1) = p1 - (y == 1 ? 1.0 : 0.0);
  }

  b.total = b.full + config.gamma * b.prefix + config.lambda * b.latency;
  return b;
}

}  // namespace streamdf
