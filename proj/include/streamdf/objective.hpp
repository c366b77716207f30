#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamdf/prefix_outputs.hpp"

namespace streamdf {

// How the wait-derived mask enters the prefix loss. The binary mask is not
// differentiable, so in hard_stop_gradient mode the wait head receives
// gradient only through the latency cost. soft_relaxation weights token j by
// the probability that no wait fired at or before j, which restores the
// opposing pressure between hiding hard tokens and paying latency. all_ones
// disables masking entirely, giving the plain all-prefixes training scheme.
enum class MaskMode { HardStopGradient, SoftRelaxation, AllOnes };

std::string mask_mode_name(MaskMode mode);
std::optional<MaskMode> mask_mode_from_string(std::string_view name);

struct LossConfig {
  double gamma = 1.9;       // weight of the prefix loss
  double lambda = 0.003;    // weight of the latency cost
  double wait_threshold = 0.5;
  MaskMode mask_mode = MaskMode::SoftRelaxation;

  void validate() const;  // throws std::invalid_argument
};

struct LossBreakdown {
  double full = 0.0;
  double prefix = 0.0;
  double latency = 0.0;
  double total = 0.0;

  LossBreakdown& operator+=(const LossBreakdown& o) {
    full += o.full;
    prefix += o.prefix;
    latency += o.latency;
    total += o.total;
    return *this;
  }
  LossBreakdown scaled(double s) const { return {full * s, prefix * s, latency * s, total * s}; }
};

// Binary mask over one prefix: entries before the first wait are 1, the rest
// 0; with no wait the mask is all ones.
struct Mask {
  std::vector<int> m;
  std::optional<int> first_wait_index;  // 0-based
};

// Probability of the wait class per token, row-wise softmax of the wait head.
std::vector<double> wait_probabilities(const Matrix& wait_logits);

// Element j is -log softmax(logits_j)[labels_j].
std::vector<double> cross_entropy_per_token(const Matrix& disfluency_logits,
                                            std::span<const int> labels);

// Cross-entropy summed over the complete utterance; ignores the wait head.
double full_loss(const PrefixOutputs& full_outputs, std::span<const int> labels);

Mask compute_mask(std::span<const double> wait_probs, double threshold);

// w_j = prod_{l<=j} (1 - wait_probs[l]); the differentiable stand-in for the
// hard mask.
std::vector<double> soft_mask_weights(std::span<const double> wait_probs);

// Masked cross-entropy summed over the proper prefixes (lengths 1..|x|-1).
double prefix_loss(std::span<const PrefixOutputs> prefixes, std::span<const int> labels,
                   const LossConfig& config);

// sum_i sum_j (i-j) * wait_prob, over proper prefixes; prefix i must supply
// exactly i probabilities.
double latency_cost(const std::vector<std::vector<double>>& wait_probs_per_prefix);

LossBreakdown total_loss(std::span<const PrefixOutputs> prefixes, const PrefixOutputs& full_outputs,
                         std::span<const int> labels, const LossConfig& config);

// Gradients of the weighted total loss with respect to every head logit.
struct LogitGrads {
  std::vector<Matrix> d_disfluency;  // per proper prefix, row counts 1..|x|-1
  std::vector<Matrix> d_wait;
  Matrix d_disfluency_full;
  Matrix d_wait_full;  // structurally zero: no loss term reads the full-prefix wait head
};

LossBreakdown total_loss_with_logit_grads(std::span<const PrefixOutputs> prefixes,
                                          const PrefixOutputs& full_outputs,
                                          std::span<const int> labels, const LossConfig& config,
                                          LogitGrads& grads);

}  // namespace streamdf
