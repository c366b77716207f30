#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace streamdf {

// Structural role of one token inside a disfluency annotation. A reparandum
// is the span the speaker replaces or abandons, the interregnum is filler
// between reparandum and repair, the repair onset is the first repair word,
// and edits are fillers outside any repair structure.
enum class TokenRole : uint8_t { Fluent, Reparandum, Interregnum, RepairOnset, Repair, Edit };

constexpr int kNumTokenRoles = 6;

// File codes: F, RM, IM, RO, RP, E.
std::string_view role_code(TokenRole role);
std::optional<TokenRole> role_from_code(std::string_view code);
std::string_view role_name(TokenRole role);

struct Utterance {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<TokenRole> roles;
  std::vector<int> labels;  // 1 = disfluent target, 0 = fluent target

  bool operator==(const Utterance&) const = default;
};

// labels[j] = 1 iff roles[j] is Reparandum or Interregnum; repairs and edits
// stay in the cleaned transcript and are fluent targets.
std::vector<int> derive_binary_labels(std::span<const TokenRole> roles);

struct GeneratorConfig {
  int base_vocab_size = 50;
  // Number of base fluent tokens per utterance, inclusive bounds; inserted
  // disfluency structures and edits come on top of these.
  int min_length = 6;
  int max_length = 14;
  double disfluency_rate = 0.15;  // per base position, chance of a structure
  double repetition_fraction = 0.5;
  double substitution_fraction = 0.3;
  double deletion_fraction = 0.2;  // reparandum with no repair
  double interregnum_probability = 0.6;
  std::vector<std::string> filler_lexicon{"uh", "um", "like", "well"};
  double edit_rate = 0.05;  // per base position, chance of a standalone edit
  uint64_t seed = 1;

  void validate() const;  // throws std::invalid_argument
};

// Generator span-length constants, exposed so tests can derive the expected
// disfluent-token fraction from the same arithmetic the generator uses.
inline constexpr int kMinReparandumLen = 1;
inline constexpr int kMaxReparandumLen = 2;
inline constexpr int kMinInterregnumLen = 1;
inline constexpr int kMaxInterregnumLen = 2;

std::vector<Utterance> generate_corpus(const GeneratorConfig& config, int n_utterances);

// TSV corpus format: one `surface<TAB>role_code` line per token, a blank
// line terminates an utterance, `#` starts a comment. Ids default to 0-based
// file order; a preceding `#id: <name>` comment overrides.
std::vector<Utterance> parse_corpus(std::istream& in, const std::string& source_name);
std::vector<Utterance> parse_corpus_file(const std::string& path);
std::string corpus_to_string(const std::vector<Utterance>& corpus);
void write_corpus_file(const std::vector<Utterance>& corpus, const std::string& path);

struct CorpusSplit {
  std::vector<Utterance> train;
  std::vector<Utterance> dev;
  std::vector<Utterance> test;
};

CorpusSplit split_corpus(const std::vector<Utterance>& corpus, const std::array<double, 3>& ratios,
                         uint64_t seed);

// Closed word vocabulary with reserved <unk> and <s> entries, built from the
// training corpus in first-occurrence order.
class Vocabulary {
 public:
  static constexpr int kUnkId = 0;
  static constexpr int kStartId = 1;

  static Vocabulary build(const std::vector<Utterance>& corpus);
  static Vocabulary from_words(std::vector<std::string> words);  // checkpoint load

  int lookup(const std::string& word) const;  // kUnkId when absent
  int size() const { return static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

std::vector<int> encode_tokens(const Vocabulary& vocab, const Utterance& utt);

}  // namespace streamdf
