#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "streamdf/objective.hpp"
#include "streamdf/prefix_outputs.hpp"
#include "streamdf/tensor.hpp"

namespace streamdf {

struct EncoderConfig {
  int vocab_size = 0;
  int max_len = 64;
  int d_model = 32;
  int n_layers = 2;
  int n_heads = 2;
  int d_ff = 64;
  double dropout_rate = 0.0;  // training only
  uint64_t seed = 1;          // parameter initialization stream
  bool use_start_marker = false;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;  // throws std::invalid_argument
};

struct LayerParams {
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln1_gain, ln1_bias;
  Matrix w1, b1, w2, b2;
  Matrix ln2_gain, ln2_bias;
};

// Full parameter set; also reused as the container for gradients and
// optimizer moments (same shapes, zero-initialized via `zeros`).
struct Parameters {
  Matrix token_embedding;     // vocab_size x d_model
  Matrix position_embedding;  // max_len x d_model
  std::vector<LayerParams> layers;
  Matrix head_disfluency_w, head_disfluency_b;  // d_model x 2, 1 x 2
  Matrix head_wait_w, head_wait_b;

  static Parameters zeros(const EncoderConfig& config);
  // Symmetric uniform +-1/sqrt(fan_in); layer-norm gains 1; all biases 0, so
  // the initial wait probability sits at ~0.5.
  static Parameters init(const EncoderConfig& config);

  // Fixed traversal order shared by checkpointing, optimizer state, and
  // gradient reduction.
  std::vector<std::pair<std::string, Matrix*>> named_tensors();
  std::vector<std::pair<std::string, const Matrix*>> named_tensors() const;

  void zero_all();
  void add_scaled(const Parameters& other, double scale);  // this += scale * other
  bool all_finite() const;
};

struct LayerCache {
  Matrix x_in;
  Matrix q, k, v;
  std::vector<Matrix> attn_probs;  // one n x n matrix per head
  Matrix ctx;
  Matrix attn_proj, attn_mask;  // projection output and its dropout mask
  Matrix sum1, ln1_out, ln1_xhat;
  std::vector<double> ln1_inv_std;
  Matrix ff_pre, ff_act, ff_proj, ff_mask;
  Matrix sum2, ln2_out, ln2_xhat;
  std::vector<double> ln2_inv_std;
};

struct ForwardCache {
  std::vector<int> ids;  // includes the start marker when enabled
  Matrix embedded;       // post-dropout embedding sum, input to layer 0
  Matrix embed_mask;
  std::vector<LayerCache> layers;
  const Matrix& hidden() const { return layers.empty() ? embedded : layers.back().ln2_out; }
};

class Encoder {
 public:
  explicit Encoder(const EncoderConfig& config);
  Encoder(const EncoderConfig& config, Parameters params);

  const EncoderConfig& config() const { return config_; }
  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }

  // Bidirectional self-attention over the given prefix only; deterministic
  // when train_mode is off. Throws on out-of-vocab ids or over-length input.
  PrefixOutputs forward(std::span<const int> token_ids) const;
  PrefixOutputs forward(std::span<const int> token_ids, bool train_mode, uint64_t dropout_seed,
                        ForwardCache* cache) const;

  // Accumulates into `grads` the parameter gradient implied by the given
  // d(loss)/d(logits); exact backpropagation through the cached forward.
  void backward(const ForwardCache& cache, const Matrix& d_disfluency_logits,
                const Matrix& d_wait_logits, Parameters& grads) const;

 private:
  EncoderConfig config_;
  Parameters params_;
};

// Softmax probability of the wait class per token.
std::vector<double> wait_probability(const PrefixOutputs& outputs);

// Restart-incremental evaluation of the Eq-7 objective for one utterance:
// one forward per prefix length 1..|x|, the last doubling as the full-input
// pass. Prefix passes are skipped when gamma == lambda == 0 (they would not
// contribute). Throws on a non-finite loss.
LossBreakdown example_loss(const Encoder& encoder, std::span<const int> token_ids,
                           std::span<const int> labels, const LossConfig& loss_config);
// Same evaluation, plus accumulation of d(total)/d(params) into `grads`.
LossBreakdown example_gradient(const Encoder& encoder, std::span<const int> token_ids,
                               std::span<const int> labels, const LossConfig& loss_config,
                               Parameters& grads, bool train_mode = false,
                               uint64_t dropout_seed = 0);

}  // namespace streamdf
