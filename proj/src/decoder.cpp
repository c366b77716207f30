#include "streamdf/decoder.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "streamdf/objective.hpp"

namespace streamdf {

namespace {

Decision argmax_decision(const Matrix& disfluency_logits, int row) {
  // Strict inequality: an exact tie favors Fluent (never delete user speech
  // on a coin flip).
  return disfluency_logits.at(row, 1) > disfluency_logits.at(row, 0) ? Decision::Disfluent
                                                                     : Decision::Fluent;
}

std::vector<int> checked_gold(std::span<const int> gold, std::span<const int> token_ids) {
  if (gold.size() != token_ids.size())
    throw std::invalid_argument("decode: gold/token length mismatch");
  std::vector<int> out(gold.begin(), gold.end());
  for (int y : out)
    if (y != 0 && y != 1) throw std::invalid_argument("decode: gold labels must be 0/1");
  return out;
}

}  // namespace

char decision_char(Decision d) {
  switch (d) {
    case Decision::Fluent: return 'F';
    case Decision::Disfluent: return 'D';
    case Decision::Abstain: return '.';
  }
  return '?';
}

std::optional<Decision> decision_from_char(char c) {
  switch (c) {
    case 'F': return Decision::Fluent;
    case 'D': return Decision::Disfluent;
    case '.': return Decision::Abstain;
    default: return std::nullopt;
  }
}

void validate_log(const PredictionLog& log) {
  const size_t n = log.gold.size();
  if (n == 0) throw std::invalid_argument("prediction log '" + log.utterance_id + "' is empty");
  if (log.rows.size() != n)
    throw std::invalid_argument("prediction log '" + log.utterance_id + "' has " +
                                std::to_string(log.rows.size()) + " rows for " +
                                std::to_string(n) + " tokens");
  for (size_t i = 0; i < n; ++i)
    if (log.rows[i].size() != i + 1)
      throw std::invalid_argument("prediction log '" + log.utterance_id + "' row " +
                                  std::to_string(i + 1) + " is not prefix-shaped");
  for (Decision d : log.rows.back())
    if (d == Decision::Abstain)
      throw std::invalid_argument("prediction log '" + log.utterance_id +
                                  "' abstains in its final row");
  for (int y : log.gold)
    if (y != 0 && y != 1)
      throw std::invalid_argument("prediction log '" + log.utterance_id + "' has non-binary gold");
}

PredictionLog stream_decode(const Encoder& encoder, std::span<const int> token_ids,
                            std::span<const int> gold, const std::string& utterance_id,
                            double threshold) {
  PredictionLog log;
  log.utterance_id = utterance_id;
  log.gold = checked_gold(gold, token_ids);
  const int n = static_cast<int>(token_ids.size());
  log.rows.reserve(static_cast<size_t>(n));
  for (int i = 1; i <= n; ++i) {
    PrefixOutputs out = encoder.forward(token_ids.first(static_cast<size_t>(i)));
    std::vector<Decision> row(static_cast<size_t>(i), Decision::Abstain);
    int k = i;  // exclusive cutoff: number of decided tokens
    if (i < n) {
      Mask mask = compute_mask(wait_probabilities(out.wait_logits), threshold);
      if (mask.first_wait_index) k = *mask.first_wait_index;
    }  // the final prefix forces a decision on every token
    for (int j = 0; j < k; ++j) row[static_cast<size_t>(j)] = argmax_decision(out.disfluency_logits, j);
    log.rows.push_back(std::move(row));
  }
  return log;
}

PredictionLog fixed_lookahead_decode(const Encoder& encoder, std::span<const int> token_ids,
                                     std::span<const int> gold, const std::string& utterance_id,
                                     int la) {
  if (la < 0) throw std::invalid_argument("fixed_lookahead_decode: la must be >= 0");
  PredictionLog log;
  log.utterance_id = utterance_id;
  log.gold = checked_gold(gold, token_ids);
  const int n = static_cast<int>(token_ids.size());
  log.rows.reserve(static_cast<size_t>(n));
  for (int i = 1; i <= n; ++i) {
    PrefixOutputs out = encoder.forward(token_ids.first(static_cast<size_t>(i)));
    std::vector<Decision> row(static_cast<size_t>(i), Decision::Abstain);
    int decided = (i == n) ? i : std::max(0, i - la);
    for (int j = 0; j < decided; ++j)
      row[static_cast<size_t>(j)] = argmax_decision(out.disfluency_logits, j);
    log.rows.push_back(std::move(row));
  }
  return log;
}

long count_reabstentions(const PredictionLog& log) {
  long count = 0;
  for (size_t i = 1; i < log.rows.size(); ++i)
    for (size_t j = 0; j < log.rows[i - 1].size(); ++j)
      if (log.rows[i - 1][j] != Decision::Abstain && log.rows[i][j] == Decision::Abstain) ++count;
  return count;
}

std::string render_output(std::span<const Decision> row, std::span<const std::string> tokens) {
  if (row.size() > tokens.size())
    throw std::invalid_argument("render_output: more decisions than tokens");
  std::string out;
  bool abstained = false;
  for (size_t j = 0; j < row.size(); ++j) {
    if (row[j] == Decision::Abstain) {
      abstained = true;
      continue;
    }
    if (!out.empty()) out += ' ';
    out += row[j] == Decision::Fluent ? tokens[j] : "⟨DIS⟩";
  }
  if (abstained) {
    if (!out.empty()) out += ' ';
    out += "⟨WAIT⟩";
  }
  return out;
}

DecoderSpec parse_decoder_spec(const std::string& text) {
  if (text == "dynamic") return DynamicDecoder{};
  auto parse_tail = [&](size_t off) {
    return std::string_view(text).substr(off);
  };
  if (text.rfind("dynamic:", 0) == 0) {
    std::string tail(parse_tail(8));
    try {
      size_t used = 0;
      double threshold = std::stod(tail, &used);
      if (used != tail.size() || !(threshold > 0.0 && threshold < 1.0)) throw std::exception();
      return DecoderSpec{DynamicDecoder{threshold}};
    } catch (...) {
      throw std::invalid_argument("bad decoder spec '" + text +
                                  "': threshold must be a real in (0, 1)");
    }
  }
  if (text.rfind("la:", 0) == 0) {
    std::string_view tail = parse_tail(3);
    int la = -1;
    auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), la);
    if (ec != std::errc{} || ptr != tail.data() + tail.size() || la < 0)
      throw std::invalid_argument("bad decoder spec '" + text + "': la must be an integer >= 0");
    return DecoderSpec{FixedLookaheadDecoder{la}};
  }
  throw std::invalid_argument("bad decoder spec '" + text +
                              "', expected 'dynamic', 'dynamic:<t>' or 'la:<n>'");
}

std::string decoder_spec_name(const DecoderSpec& spec) {
  if (std::holds_alternative<DynamicDecoder>(spec)) {
    double t = std::get<DynamicDecoder>(spec).threshold;
    return t == 0.5 ? "dynamic" : "dynamic:" + std::to_string(t);
  }
  return "la:" + std::to_string(std::get<FixedLookaheadDecoder>(spec).la);
}

PredictionLog decode_utterance(const Encoder& encoder, const Vocabulary& vocab,
                               const Utterance& utterance, const DecoderSpec& spec) {
  std::vector<int> ids = encode_tokens(vocab, utterance);
  if (std::holds_alternative<DynamicDecoder>(spec))
    return stream_decode(encoder, ids, utterance.labels, utterance.id,
                         std::get<DynamicDecoder>(spec).threshold);
  return fixed_lookahead_decode(encoder, ids, utterance.labels, utterance.id,
                                std::get<FixedLookaheadDecoder>(spec).la);
}

std::vector<PredictionLog> decode_corpus(const Encoder& encoder, const Vocabulary& vocab,
                                         std::span<const Utterance> corpus,
                                         const DecoderSpec& spec) {
  std::vector<PredictionLog> logs;
  logs.reserve(corpus.size());
  for (const Utterance& utt : corpus) logs.push_back(decode_utterance(encoder, vocab, utt, spec));
  return logs;
}

std::string logs_to_string(std::span<const PredictionLog> logs) {
  std::string out;
  for (const PredictionLog& log : logs) {
    validate_log(log);
    out += log.utterance_id;
    out += '\t';
    out += std::to_string(log.gold.size());
    out += '\n';
    for (const auto& row : log.rows) {
      for (Decision d : row) out += decision_char(d);
      out += '\n';
    }
    for (int y : log.gold) out += static_cast<char>('0' + y);
    out += '\n';
    out += '\n';
  }
  return out;
}

std::vector<PredictionLog> parse_logs(std::istream& in, const std::string& source_name) {
  std::vector<PredictionLog> logs;
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) {
    throw std::runtime_error(source_name + ":" + std::to_string(line_no) + ": " + what);
  };
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  while (next_line()) {
    if (line.empty()) continue;
    size_t tab = line.find('\t');
    if (tab == std::string::npos) fail("expected '<id>\\t<length>' header");
    PredictionLog log;
    log.utterance_id = line.substr(0, tab);
    std::string_view len_text = std::string_view(line).substr(tab + 1);
    int n = 0;
    auto [ptr, ec] = std::from_chars(len_text.data(), len_text.data() + len_text.size(), n);
    if (ec != std::errc{} || ptr != len_text.data() + len_text.size() || n <= 0)
      fail("bad utterance length '" + std::string(len_text) + "'");

    for (int i = 1; i <= n; ++i) {
      if (!next_line()) fail("unexpected end of file inside record");
      if (line.size() != static_cast<size_t>(i))
        fail("row " + std::to_string(i) + " has length " + std::to_string(line.size()) +
             ", expected " + std::to_string(i));
      std::vector<Decision> row;
      row.reserve(line.size());
      for (char c : line) {
        auto d = decision_from_char(c);
        if (!d) fail(std::string("unknown decision symbol '") + c + "'");
        row.push_back(*d);
      }
      log.rows.push_back(std::move(row));
    }
    if (!next_line()) fail("missing gold line");
    if (line.size() != static_cast<size_t>(n)) fail("gold line length mismatch");
    for (char c : line) {
      if (c != '0' && c != '1') fail(std::string("gold symbols must be 0/1, got '") + c + "'");
      log.gold.push_back(c - '0');
    }
    try {
      validate_log(log);
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    logs.push_back(std::move(log));
  }
  return logs;
}

std::vector<PredictionLog> parse_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prediction log: " + path);
  return parse_logs(in, path);
}

void write_log_file(std::span<const PredictionLog> logs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write prediction log: " + path);
  out << logs_to_string(logs);
  if (!out) throw std::runtime_error("prediction log write failed: " + path);
}

}  // namespace streamdf
