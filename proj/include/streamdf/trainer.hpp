#pragma once

#include <istream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamdf/corpus.hpp"
#include "streamdf/encoder.hpp"
#include "streamdf/metrics.hpp"
#include "streamdf/objective.hpp"

namespace streamdf {

enum class Optimizer { Adam, Sgd };

std::string optimizer_name(Optimizer optimizer);
std::optional<Optimizer> optimizer_from_string(std::string_view name);

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 8;
  int batch_size = 8;  // utterances per optimizer step
  Optimizer optimizer = Optimizer::Adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  LossConfig loss;
  uint64_t shuffle_seed = 1;
  int max_prefix_len = 60;  // training/evaluation length cap, in tokens

  void validate() const;  // throws std::invalid_argument
};

struct EpochStats {
  LossBreakdown train_mean;  // per-example means over the epoch
  LossBreakdown dev_mean;
  Flagged dev_streaming_f1;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;  // 1-based; epoch whose parameters were returned
  Flagged best_dev_f1;
  long truncated_train = 0;  // utterances cut to max_prefix_len
  long truncated_dev = 0;
  std::string checkpoint_path;  // filled by callers that save the result

  // Columns: epoch, full, prefix, latency, total, dev_streaming_f1.
  std::string to_csv() const;
};

struct TrainResult {
  Parameters params;  // best-dev-F1 snapshot
  Vocabulary vocab;
  TrainReport report;
};

// The restart-incremental prefix enumeration: prefix i is the first i ids.
std::vector<std::vector<int>> enumerate_prefixes(std::span<const int> token_ids);

// Mean per-utterance loss over a corpus; pure, no updates. Utterances longer
// than max_prefix_len are truncated, mirroring training.
LossBreakdown evaluate_loss(const Encoder& encoder, std::span<const Utterance> corpus,
                            const Vocabulary& vocab, const LossConfig& loss_config,
                            int max_prefix_len);

// Dev-set streaming F1 via the dynamic decoder and the metric suite.
Flagged evaluate_streaming_f1(const Encoder& encoder, std::span<const Utterance> corpus,
                              const Vocabulary& vocab, double threshold, int max_prefix_len);

// Full training run. Builds the vocabulary from the training corpus (the
// encoder config's vocab_size must be 0 = derive, or match it), shuffles per
// epoch, averages Eq-7 gradients over each batch of utterances, updates with
// the configured optimizer, and returns the parameters of the epoch with the
// best dev streaming F1. Deterministic: identical inputs and seeds give
// bit-identical results. Throws std::runtime_error naming epoch and batch if
// the loss or a parameter turns non-finite.
TrainResult train(std::span<const Utterance> train_corpus, std::span<const Utterance> dev_corpus,
                  EncoderConfig encoder_config, const TrainConfig& train_config);

// Everything a run needs: architecture plus optimization settings.
struct TrainSetup {
  EncoderConfig encoder;
  TrainConfig train;
};

// Named presets. "desk" is the tuned desk-scale configuration used by the
// acceptance runs; "paper" carries the published full-scale hyperparameters.
TrainSetup desk_preset();
TrainSetup paper_preset();
std::optional<TrainSetup> preset_by_name(std::string_view name);

// Flat key-value configuration file: `key = value` lines, `#` comments.
// Keys are exactly the EncoderConfig/LossConfig/TrainConfig field names;
// unknown keys are errors with line numbers. Starts from `base` so a file
// may override only some keys.
TrainSetup parse_train_setup(std::istream& in, const std::string& source_name,
                             const TrainSetup& base);
TrainSetup parse_train_setup_file(const std::string& path, const TrainSetup& base);
std::string train_setup_to_string(const TrainSetup& setup);

// Trains once per candidate lambda and returns the one whose model reaches
// the best dev streaming F1 (ties keep the earlier candidate).
double grid_search_lambda(std::span<const Utterance> train_corpus,
                          std::span<const Utterance> dev_corpus, const TrainSetup& setup,
                          std::span<const double> lambda_grid);

}  // namespace streamdf
