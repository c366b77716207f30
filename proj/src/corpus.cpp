#include "streamdf/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "streamdf/util.hpp"

namespace streamdf {

namespace {

struct RoleCodeEntry {
  TokenRole role;
  std::string_view code;
  std::string_view name;
};

constexpr std::array<RoleCodeEntry, kNumTokenRoles> kRoleTable{{
    {TokenRole::Fluent, "F", "fluent"},
    {TokenRole::Reparandum, "RM", "reparandum"},
    {TokenRole::Interregnum, "IM", "interregnum"},
    {TokenRole::RepairOnset, "RO", "repair_onset"},
    {TokenRole::Repair, "RP", "repair"},
    {TokenRole::Edit, "E", "edit"},
}};

std::string base_word(int index) { return "w" + std::to_string(index); }

}  // namespace

std::string_view role_code(TokenRole role) { return kRoleTable[static_cast<size_t>(role)].code; }
std::string_view role_name(TokenRole role) { return kRoleTable[static_cast<size_t>(role)].name; }

std::optional<TokenRole> role_from_code(std::string_view code) {
  for (const auto& e : kRoleTable)
    if (e.code == code) return e.role;
  return std::nullopt;
}

std::vector<int> derive_binary_labels(std::span<const TokenRole> roles) {
  if (roles.empty()) throw std::invalid_argument("derive_binary_labels: empty role sequence");
  std::vector<int> labels(roles.size());
  for (size_t j = 0; j < roles.size(); ++j)
    labels[j] =
        (roles[j] == TokenRole::Reparandum || roles[j] == TokenRole::Interregnum) ? 1 : 0;
  return labels;
}

void GeneratorConfig::validate() const {
  if (base_vocab_size < 2)
    throw std::invalid_argument("GeneratorConfig: base_vocab_size must be >= 2");
  if (min_length < 1 || max_length < min_length)
    throw std::invalid_argument("GeneratorConfig: invalid utterance length range");
  auto check_prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument(std::string("GeneratorConfig: ") + name +
                                  " must be in [0, 1]");
  };
  check_prob(disfluency_rate, "disfluency_rate");
  check_prob(repetition_fraction, "repetition_fraction");
  check_prob(substitution_fraction, "substitution_fraction");
  check_prob(deletion_fraction, "deletion_fraction");
  check_prob(interregnum_probability, "interregnum_probability");
  check_prob(edit_rate, "edit_rate");
  double mix = repetition_fraction + substitution_fraction + deletion_fraction;
  if (std::abs(mix - 1.0) > 1e-9)
    throw std::invalid_argument("GeneratorConfig: repair-type fractions must sum to 1");
  if (filler_lexicon.empty())
    throw std::invalid_argument("GeneratorConfig: filler_lexicon must be non-empty");
}

std::vector<Utterance> generate_corpus(const GeneratorConfig& config, int n_utterances) {
  config.validate();
  if (n_utterances < 0) throw std::invalid_argument("generate_corpus: negative count");

  std::vector<Utterance> corpus;
  corpus.reserve(static_cast<size_t>(n_utterances));
  Rng rng(config.seed);

  auto sample_filler = [&](Utterance& utt, TokenRole role) {
    utt.tokens.push_back(config.filler_lexicon[static_cast<size_t>(
        rng.next_int(static_cast<int>(config.filler_lexicon.size())))]);
    utt.roles.push_back(role);
  };

  for (int u = 0; u < n_utterances; ++u) {
    Utterance utt;
    utt.id = std::to_string(u);
    int base_len = rng.int_range(config.min_length, config.max_length);

    for (int pos = 0; pos < base_len; ++pos) {
      if (rng.bernoulli(config.edit_rate)) sample_filler(utt, TokenRole::Edit);

      if (rng.bernoulli(config.disfluency_rate)) {
        int r = rng.int_range(kMinReparandumLen, kMaxReparandumLen);
        std::vector<int> reparandum(static_cast<size_t>(r));
        for (int& w : reparandum) w = rng.next_int(config.base_vocab_size);

        // Repair type by mixture weight.
        double t = rng.next_double();
        bool is_repetition = t < config.repetition_fraction;
        bool is_substitution =
            !is_repetition && t < config.repetition_fraction + config.substitution_fraction;
        bool is_deletion = !is_repetition && !is_substitution;

        for (int w : reparandum) {
          utt.tokens.push_back(base_word(w));
          utt.roles.push_back(TokenRole::Reparandum);
        }

        if (!is_deletion) {
          if (rng.bernoulli(config.interregnum_probability)) {
            int g = rng.int_range(kMinInterregnumLen, kMaxInterregnumLen);
            for (int k = 0; k < g; ++k) sample_filler(utt, TokenRole::Interregnum);
          }
          std::vector<int> repair = reparandum;
          if (is_substitution) {
            int slot = rng.next_int(r);
            int replacement = rng.next_int(config.base_vocab_size);
            while (replacement == repair[static_cast<size_t>(slot)])
              replacement = rng.next_int(config.base_vocab_size);
            repair[static_cast<size_t>(slot)] = replacement;
          }
          for (size_t k = 0; k < repair.size(); ++k) {
            utt.tokens.push_back(base_word(repair[k]));
            utt.roles.push_back(k == 0 ? TokenRole::RepairOnset : TokenRole::Repair);
          }
        }
      }

      utt.tokens.push_back(base_word(rng.next_int(config.base_vocab_size)));
      utt.roles.push_back(TokenRole::Fluent);
    }

    utt.labels = derive_binary_labels(utt.roles);
    corpus.push_back(std::move(utt));
  }
  return corpus;
}

std::vector<Utterance> parse_corpus(std::istream& in, const std::string& source_name) {
  std::vector<Utterance> corpus;
  std::string line;
  int line_no = 0;
  std::optional<std::string> pending_id;
  std::optional<int> pending_id_line;
  Utterance current;
  bool in_utterance = false;

  auto fail = [&](int at_line, const std::string& what) {
    throw std::runtime_error(source_name + ":" + std::to_string(at_line) + ": " + what);
  };

  auto finalize = [&](int at_line) {
    if (!in_utterance) {
      if (pending_id) fail(*pending_id_line, "length-zero utterance (id '" + *pending_id + "')");
      return;
    }
    current.id = pending_id ? *pending_id : std::to_string(corpus.size());
    current.labels = derive_binary_labels(current.roles);
    corpus.push_back(std::move(current));
    current = Utterance{};
    in_utterance = false;
    pending_id.reset();
    pending_id_line.reset();
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      finalize(line_no);
      continue;
    }
    if (line[0] == '#') {
      constexpr std::string_view kIdTag = "#id:";
      if (line.rfind(kIdTag, 0) == 0) {
        std::string id = line.substr(kIdTag.size());
        size_t start = id.find_first_not_of(' ');
        id = (start == std::string::npos) ? std::string{} : id.substr(start);
        if (id.empty()) fail(line_no, "empty #id: comment");
        pending_id = id;
        pending_id_line = line_no;
      }
      continue;
    }
    size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 >= line.size() ||
        line.find('\t', tab + 1) != std::string::npos)
      fail(line_no, "malformed line, expected 'surface<TAB>role_code'");
    std::string surface = line.substr(0, tab);
    std::string code = line.substr(tab + 1);
    auto role = role_from_code(code);
    if (!role) fail(line_no, "unknown role code '" + code + "'");
    current.tokens.push_back(std::move(surface));
    current.roles.push_back(*role);
    in_utterance = true;
  }
  finalize(line_no + 1);
  return corpus;
}

std::vector<Utterance> parse_corpus_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return parse_corpus(in, path);
}

std::string corpus_to_string(const std::vector<Utterance>& corpus) {
  std::string out;
  for (size_t i = 0; i < corpus.size(); ++i) {
    const Utterance& utt = corpus[i];
    if (utt.tokens.empty())
      throw std::invalid_argument("corpus_to_string: empty utterance '" + utt.id + "'");
    if (utt.id != std::to_string(i)) {
      out += "#id: ";
      out += utt.id;
      out += '\n';
    }
    for (size_t j = 0; j < utt.tokens.size(); ++j) {
      out += utt.tokens[j];
      out += '\t';
      out += role_code(utt.roles[j]);
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

void write_corpus_file(const std::vector<Utterance>& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  out << corpus_to_string(corpus);
  if (!out) throw std::runtime_error("write failed: " + path);
}

CorpusSplit split_corpus(const std::vector<Utterance>& corpus, const std::array<double, 3>& ratios,
                         uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  for (double r : ratios)
    if (!(r > 0.0)) throw std::invalid_argument("split_corpus: ratios must be positive");
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split_corpus: ratios must sum to 1");

  const size_t n = corpus.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  // Largest-remainder apportionment so the sizes are exact when the ratios
  // divide the corpus evenly.
  std::array<size_t, 3> counts{};
  std::array<double, 3> remainders{};
  size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = ratios[static_cast<size_t>(i)] * static_cast<double>(n);
    counts[static_cast<size_t>(i)] = static_cast<size_t>(std::floor(exact + 1e-9));
    remainders[static_cast<size_t>(i)] = exact - std::floor(exact + 1e-9);
    assigned += counts[static_cast<size_t>(i)];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (remainders[static_cast<size_t>(i)] > remainders[static_cast<size_t>(best)]) best = i;
    counts[static_cast<size_t>(best)]++;
    remainders[static_cast<size_t>(best)] = -1.0;
    ++assigned;
  }

  auto take = [&](size_t begin, size_t count) {
    std::vector<size_t> idx(order.begin() + static_cast<long>(begin),
                            order.begin() + static_cast<long>(begin + count));
    std::sort(idx.begin(), idx.end());
    std::vector<Utterance> part;
    part.reserve(count);
    for (size_t i : idx) part.push_back(corpus[i]);
    return part;
  };

  CorpusSplit split;
  split.train = take(0, counts[0]);
  split.dev = take(counts[0], counts[1]);
  split.test = take(counts[0] + counts[1], counts[2]);
  return split;
}

Vocabulary Vocabulary::build(const std::vector<Utterance>& corpus) {
  Vocabulary v;
  v.words_ = {"<unk>", "<s>"};
  v.index_ = {{"<unk>", kUnkId}, {"<s>", kStartId}};
  for (const Utterance& utt : corpus)
    for (const std::string& tok : utt.tokens)
      if (v.index_.emplace(tok, static_cast<int>(v.words_.size())).second)
        v.words_.push_back(tok);
  return v;
}

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  if (words.size() < 2 || words[0] != "<unk>" || words[1] != "<s>")
    throw std::runtime_error("Vocabulary::from_words: missing reserved entries");
  Vocabulary v;
  v.words_ = std::move(words);
  for (size_t i = 0; i < v.words_.size(); ++i) v.index_[v.words_[i]] = static_cast<int>(i);
  return v;
}

int Vocabulary::lookup(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnkId : it->second;
}

std::vector<int> encode_tokens(const Vocabulary& vocab, const Utterance& utt) {
  std::vector<int> ids;
  ids.reserve(utt.tokens.size());
  for (const std::string& tok : utt.tokens) ids.push_back(vocab.lookup(tok));
  return ids;
}

}  // namespace streamdf
