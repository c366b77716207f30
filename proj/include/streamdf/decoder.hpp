#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "streamdf/corpus.hpp"
#include "streamdf/encoder.hpp"

namespace streamdf {

enum class Decision : uint8_t { Fluent, Disfluent, Abstain };

char decision_char(Decision d);                         // 'F', 'D', '.'
std::optional<Decision> decision_from_char(char c);

// Lower-triangular record of per-prefix decisions: rows[i] holds one decision
// per consumed token after prefix i+1, so row i has i+1 entries. The gold
// labels ride along so metrics need only the log.
struct PredictionLog {
  std::string utterance_id;
  std::vector<std::vector<Decision>> rows;
  std::vector<int> gold;

  int length() const { return static_cast<int>(gold.size()); }
  bool operator==(const PredictionLog&) const = default;
};

// Throws std::invalid_argument when the triangular shape is wrong, the gold
// length disagrees, or the final row still abstains.
void validate_log(const PredictionLog& log);

// Dynamic-wait decoding: at each prefix, tokens left of the first wait get
// argmax disfluency decisions (ties resolve to Fluent), the rest abstain; the
// final prefix forces a decision everywhere.
PredictionLog stream_decode(const Encoder& encoder, std::span<const int> token_ids,
                            std::span<const int> gold, const std::string& utterance_id,
                            double threshold = 0.5);

// Fixed-lookahead baseline: at prefix i, tokens with index <= i - la are
// decided, the rest abstain; the final prefix forces a decision everywhere.
PredictionLog fixed_lookahead_decode(const Encoder& encoder, std::span<const int> token_ids,
                                     std::span<const int> gold, const std::string& utterance_id,
                                     int la);

// Count of (prefix, token) pairs where a previously decided token reverts to
// Abstain in the next prefix. A model property, not an error.
long count_reabstentions(const PredictionLog& log);

// One display line per log row: fluent tokens verbatim, <DIS> markers for
// suppressed tokens, one <WAIT> iff the row abstains anywhere.
std::string render_output(std::span<const Decision> row, std::span<const std::string> tokens);

// Decoder selection for CLIs and evaluation drivers.
struct DynamicDecoder {
  double threshold = 0.5;
};
struct FixedLookaheadDecoder {
  int la = 0;
};
using DecoderSpec = std::variant<DynamicDecoder, FixedLookaheadDecoder>;

// "dynamic", "dynamic:<threshold>", or "la:<n>".
DecoderSpec parse_decoder_spec(const std::string& text);
std::string decoder_spec_name(const DecoderSpec& spec);

PredictionLog decode_utterance(const Encoder& encoder, const Vocabulary& vocab,
                               const Utterance& utterance, const DecoderSpec& spec);
std::vector<PredictionLog> decode_corpus(const Encoder& encoder, const Vocabulary& vocab,
                                         std::span<const Utterance> corpus,
                                         const DecoderSpec& spec);

// Prediction-log file format (the decoder->metrics contract, bit-exact):
// per record a `<utterance_id>\t<|x|>` header line, |x| rows over {F, D, .}
// (row i of length i), one gold line over {0, 1}, then a blank line.
std::string logs_to_string(std::span<const PredictionLog> logs);
std::vector<PredictionLog> parse_logs(std::istream& in, const std::string& source_name);
std::vector<PredictionLog> parse_log_file(const std::string& path);
void write_log_file(std::span<const PredictionLog> logs, const std::string& path);

}  // namespace streamdf
