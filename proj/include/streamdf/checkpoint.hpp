#pragma once

#include <string>
#include <vector>

#include "streamdf/encoder.hpp"

namespace streamdf {

// Versioned binary checkpoint: encoder config, word vocabulary, and every
// named tensor. Explicit little-endian encoding; round-trips bit-exactly.
inline constexpr char kCheckpointMagic[8] = {'S', 'D', 'F', 'E', 'N', 'C', '0', '1'};

struct Checkpoint {
  EncoderConfig config;
  std::vector<std::string> vocab_words;
  Parameters params;
};

void save_checkpoint(const std::string& path, const EncoderConfig& config,
                     const Parameters& params, const std::vector<std::string>& vocab_words);
Checkpoint load_checkpoint(const std::string& path);  // throws std::runtime_error

}  // namespace streamdf
