#include "streamdf/metrics.hpp"

#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "streamdf/util.hpp"

namespace streamdf {
namespace {

Flagged ratio(long numerator, long denominator) {
  if (denominator <= 0) return {};
  return {static_cast<double>(numerator) / static_cast<double>(denominator), true};
}

Flagged f1_from(const Flagged& precision, const Flagged& recall) {
  if (!precision.defined || !recall.defined) return {};
  const double sum = precision.value + recall.value;
  if (sum <= 0.0) return {};
  return {2.0 * precision.value * recall.value / sum, true};
}

void validate_logs(std::span<const PredictionLog> logs) {
  for (const PredictionLog& log : logs) validate_log(log);
}

// Logs and corpus must be parallel: same order, same utterances. The gold
// labels ride in both, so a mispairing is detectable rather than silent.
void check_aligned(std::span<const PredictionLog> logs, std::span<const Utterance> corpus) {
  if (logs.size() != corpus.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(logs.size()) + " logs but " +
                                std::to_string(corpus.size()) + " utterances");
  }
  for (size_t i = 0; i < logs.size(); ++i) {
    const PredictionLog& log = logs[i];
    const Utterance& utt = corpus[i];
    if (log.utterance_id != utt.id) {
      throw std::invalid_argument("metrics: log " + std::to_string(i) + " is for utterance '" +
                                  log.utterance_id + "' but the corpus has '" + utt.id + "'");
    }
    if (log.gold != utt.labels) {
      throw std::invalid_argument("metrics: gold labels in log '" + log.utterance_id +
                                  "' disagree with the corpus annotation");
    }
  }
}

void tally(StreamingCounts& counts, Decision decision, int gold) {
  if (decision == Decision::Disfluent) {
    (gold == 1 ? counts.tp : counts.fp) += 1;
  } else {
    (gold == 1 ? counts.fn : counts.tn) += 1;
  }
}

// First prefix (0-based row) at which token j is decided Disfluent, or -1.
int first_detection_row(const PredictionLog& log, int j) {
  for (size_t r = static_cast<size_t>(j); r < log.rows.size(); ++r) {
    if (log.rows[r][static_cast<size_t>(j)] == Decision::Disfluent) return static_cast<int>(r);
  }
  return -1;
}

// First prefix at which token j has any defined decision; the complete final
// row guarantees one exists.
int first_prediction_row(const PredictionLog& log, int j) {
  for (size_t r = static_cast<size_t>(j); r < log.rows.size(); ++r) {
    if (log.rows[r][static_cast<size_t>(j)] != Decision::Abstain) return static_cast<int>(r);
  }
  throw std::logic_error("metrics: validated log has no defined decision for token " +
                         std::to_string(j));
}

// Index of the first repair-onset token of the structure containing the
// disfluent token at j: the nearest RepairOnset to the right reachable
// through Reparandum/Interregnum tokens only. -1 when the structure has no
// repair (a deletion) or j's role is not disfluent.
int repair_onset_index(std::span<const TokenRole> roles, int j) {
  TokenRole role = roles[static_cast<size_t>(j)];
  if (role != TokenRole::Reparandum && role != TokenRole::Interregnum) return -1;
  for (size_t r = static_cast<size_t>(j) + 1; r < roles.size(); ++r) {
    if (roles[r] == TokenRole::RepairOnset) return static_cast<int>(r);
    if (roles[r] != TokenRole::Reparandum && roles[r] != TokenRole::Interregnum) return -1;
  }
  return -1;
}

std::string flagged_csv(const Flagged& f) { return f.defined ? format_double(f.value) : "NA"; }

nlohmann::ordered_json flagged_json(const Flagged& f) {
  if (!f.defined) return nullptr;
  return f.value;
}

nlohmann::ordered_json counts_json(const StreamingCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

}  // namespace

PrfResult streaming_prf(std::span<const PredictionLog> logs) {
  validate_logs(logs);
  PrfResult result;
  for (const PredictionLog& log : logs) {
    for (size_t r = 0; r < log.rows.size(); ++r) {
      for (size_t j = 0; j <= r; ++j) {
        Decision decision = log.rows[r][j];
        if (decision == Decision::Abstain) continue;
        tally(result.counts, decision, log.gold[j]);
      }
    }
  }
  result.precision = ratio(result.counts.tp, result.counts.tp + result.counts.fp);
  result.recall = ratio(result.counts.tp, result.counts.tp + result.counts.fn);
  result.f1 = f1_from(result.precision, result.recall);
  return result;
}

double edit_overhead(std::span<const PredictionLog> logs) {
  validate_logs(logs);
  double sum = 0.0;
  for (const PredictionLog& log : logs) {
    long edits = 0;
    for (size_t r = 1; r < log.rows.size(); ++r) {
      for (size_t j = 0; j < r; ++j) {  // token r itself has no previous decision
        Decision now = log.rows[r][j];
        Decision before = log.rows[r - 1][j];
        if (now != Decision::Abstain && before != Decision::Abstain && now != before) ++edits;
      }
    }
    sum += static_cast<double>(edits) / static_cast<double>(log.length());
  }
  return logs.empty() ? 0.0 : sum / static_cast<double>(logs.size());
}

Flagged time_to_detection(std::span<const PredictionLog> logs) {
  validate_logs(logs);
  long total_delay = 0;
  long detected = 0;
  for (const PredictionLog& log : logs) {
    for (int j = 0; j < log.length(); ++j) {
      if (log.gold[static_cast<size_t>(j)] != 1) continue;
      int row = first_detection_row(log, j);
      if (row < 0) continue;
      total_delay += row - j;
      ++detected;
    }
  }
  return ratio(total_delay, detected);
}

Flagged first_time_to_detection(std::span<const PredictionLog> logs,
                                std::span<const Utterance> corpus) {
  validate_logs(logs);
  check_aligned(logs, corpus);
  long total_delay = 0;
  long qualifying = 0;
  for (size_t i = 0; i < logs.size(); ++i) {
    const PredictionLog& log = logs[i];
    std::span<const TokenRole> roles = corpus[i].roles;
    for (int j = 0; j < log.length(); ++j) {
      if (log.gold[static_cast<size_t>(j)] != 1) continue;
      int onset = repair_onset_index(roles, j);
      if (onset < 0) continue;  // deletion: no repair to measure from
      int row = first_detection_row(log, j);
      if (row < 0) continue;
      total_delay += row - onset;  // may be negative: detected before the onset
      ++qualifying;
    }
  }
  return ratio(total_delay, qualifying);
}

double average_waiting_time(std::span<const PredictionLog> logs) {
  validate_logs(logs);
  long total_wait = 0;
  long total_tokens = 0;
  for (const PredictionLog& log : logs) {
    for (int j = 0; j < log.length(); ++j) total_wait += first_prediction_row(log, j) - j;
    total_tokens += log.length();
  }
  if (total_tokens == 0) return 0.0;
  return static_cast<double>(total_wait) / static_cast<double>(total_tokens);
}

PrfResult final_prf(std::span<const PredictionLog> logs) {
  validate_logs(logs);
  PrfResult result;
  for (const PredictionLog& log : logs) {
    const std::vector<Decision>& last = log.rows.back();
    for (size_t j = 0; j < last.size(); ++j) tally(result.counts, last[j], log.gold[j]);
  }
  result.precision = ratio(result.counts.tp, result.counts.tp + result.counts.fp);
  result.recall = ratio(result.counts.tp, result.counts.tp + result.counts.fn);
  result.f1 = f1_from(result.precision, result.recall);
  return result;
}

RoleBreakdown awt_by_role(std::span<const PredictionLog> logs, std::span<const Utterance> corpus) {
  validate_logs(logs);
  check_aligned(logs, corpus);
  std::array<long, kNumTokenRoles> wait{};
  RoleBreakdown breakdown;
  for (size_t i = 0; i < logs.size(); ++i) {
    const PredictionLog& log = logs[i];
    for (int j = 0; j < log.length(); ++j) {
      auto role = static_cast<size_t>(corpus[i].roles[static_cast<size_t>(j)]);
      wait[role] += first_prediction_row(log, j) - j;
      breakdown.roles[role].awt_tokens += 1;
    }
  }
  for (size_t role = 0; role < breakdown.roles.size(); ++role) {
    RoleBreakdown::Entry& entry = breakdown.roles[role];
    if (entry.awt_tokens > 0) {
      entry.awt = static_cast<double>(wait[role]) / static_cast<double>(entry.awt_tokens);
    }
  }
  return breakdown;
}

RoleBreakdown misclassification_by_role(std::span<const PredictionLog> logs,
                                        std::span<const Utterance> corpus) {
  validate_logs(logs);
  check_aligned(logs, corpus);
  RoleBreakdown breakdown;
  for (size_t i = 0; i < logs.size(); ++i) {
    const PredictionLog& log = logs[i];
    for (size_t r = 0; r < log.rows.size(); ++r) {
      for (size_t j = 0; j <= r; ++j) {
        Decision decision = log.rows[r][j];
        if (decision == Decision::Abstain) continue;  // abstentions are not errors
        auto role = static_cast<size_t>(corpus[i].roles[j]);
        RoleBreakdown::Entry& entry = breakdown.roles[role];
        entry.judged_pairs += 1;
        bool predicted_disfluent = decision == Decision::Disfluent;
        if (predicted_disfluent != (log.gold[j] == 1)) entry.mistakes += 1;
      }
    }
  }
  for (RoleBreakdown::Entry& entry : breakdown.roles) {
    if (entry.judged_pairs > 0) {
      entry.misclassification =
          static_cast<double>(entry.mistakes) / static_cast<double>(entry.judged_pairs);
    }
  }
  return breakdown;
}

MetricReport compute_report(std::span<const PredictionLog> logs) {
  if (logs.empty()) throw std::invalid_argument("metrics: cannot evaluate an empty log set");
  validate_logs(logs);
  MetricReport report;
  report.n_utterances = static_cast<long>(logs.size());
  for (const PredictionLog& log : logs) report.n_tokens += log.length();

  PrfResult streaming = streaming_prf(logs);
  report.streaming = streaming.counts;
  report.streaming_precision = streaming.precision;
  report.streaming_recall = streaming.recall;
  report.streaming_f1 = streaming.f1;

  report.edit_overhead = edit_overhead(logs);
  report.ttd = time_to_detection(logs);
  report.awt = average_waiting_time(logs);
  for (const PredictionLog& log : logs) report.reabstentions += count_reabstentions(log);

  PrfResult final_result = final_prf(logs);
  report.final_counts = final_result.counts;
  report.final_precision = final_result.precision;
  report.final_recall = final_result.recall;
  report.final_f1 = final_result.f1;
  return report;
}

MetricReport compute_report(std::span<const PredictionLog> logs,
                            std::span<const Utterance> corpus) {
  MetricReport report = compute_report(logs);
  report.ftd = first_time_to_detection(logs, corpus);
  return report;
}

std::string report_to_csv(const MetricReport& report) {
  std::ostringstream out;
  out << "n_utterances,n_tokens,streaming_precision,streaming_recall,streaming_f1,"
         "edit_overhead,ttd,ftd,awt,reabstentions,final_precision,final_recall,final_f1,"
         "streaming_tp,streaming_fp,streaming_tn,streaming_fn,"
         "final_tp,final_fp,final_tn,final_fn\n";
  out << report.n_utterances << ',' << report.n_tokens << ','
      << flagged_csv(report.streaming_precision) << ',' << flagged_csv(report.streaming_recall)
      << ',' << flagged_csv(report.streaming_f1) << ',' << format_double(report.edit_overhead)
      << ',' << flagged_csv(report.ttd) << ',' << flagged_csv(report.ftd) << ','
      << format_double(report.awt) << ',' << report.reabstentions << ','
      << flagged_csv(report.final_precision) << ',' << flagged_csv(report.final_recall) << ','
      << flagged_csv(report.final_f1) << ',' << report.streaming.tp << ',' << report.streaming.fp
      << ',' << report.streaming.tn << ',' << report.streaming.fn << ',' << report.final_counts.tp
      << ',' << report.final_counts.fp << ',' << report.final_counts.tn << ','
      << report.final_counts.fn << '\n';
  return out.str();
}

std::string report_to_json(const MetricReport& report) {
  nlohmann::ordered_json j{
      {"n_utterances", report.n_utterances},
      {"n_tokens", report.n_tokens},
      {"streaming",
       {{"precision", flagged_json(report.streaming_precision)},
        {"recall", flagged_json(report.streaming_recall)},
        {"f1", flagged_json(report.streaming_f1)},
        {"counts", counts_json(report.streaming)}}},
      {"edit_overhead", report.edit_overhead},
      {"ttd", flagged_json(report.ttd)},
      {"ftd", flagged_json(report.ftd)},
      {"awt", report.awt},
      {"reabstentions", report.reabstentions},
      {"final",
       {{"precision", flagged_json(report.final_precision)},
        {"recall", flagged_json(report.final_recall)},
        {"f1", flagged_json(report.final_f1)},
        {"counts", counts_json(report.final_counts)}}},
  };
  return j.dump(2) + "\n";
}

std::string role_breakdown_to_csv(const RoleBreakdown& awt, const RoleBreakdown& mis) {
  std::ostringstream out;
  out << "role,awt,awt_tokens,misclassification,judged_pairs\n";
  for (int r = 0; r < kNumTokenRoles; ++r) {
    const RoleBreakdown::Entry& a = awt.roles[static_cast<size_t>(r)];
    const RoleBreakdown::Entry& m = mis.roles[static_cast<size_t>(r)];
    out << role_code(static_cast<TokenRole>(r)) << ','
        << (a.awt_tokens > 0 ? format_double(a.awt) : "NA") << ',' << a.awt_tokens << ','
        << (m.judged_pairs > 0 ? format_double(m.misclassification) : "NA") << ','
        << m.judged_pairs << '\n';
  }
  return out.str();
}

std::string role_breakdown_to_json(const RoleBreakdown& awt, const RoleBreakdown& mis) {
  nlohmann::ordered_json roles = nlohmann::ordered_json::array();
  for (int r = 0; r < kNumTokenRoles; ++r) {
    const RoleBreakdown::Entry& a = awt.roles[static_cast<size_t>(r)];
    const RoleBreakdown::Entry& m = mis.roles[static_cast<size_t>(r)];
    nlohmann::ordered_json entry{
        {"role", std::string(role_code(static_cast<TokenRole>(r)))},
        {"awt", a.awt_tokens > 0 ? nlohmann::ordered_json(a.awt) : nlohmann::ordered_json(nullptr)},
        {"awt_tokens", a.awt_tokens},
        {"misclassification", m.judged_pairs > 0 ? nlohmann::ordered_json(m.misclassification)
                                                 : nlohmann::ordered_json(nullptr)},
        {"judged_pairs", m.judged_pairs},
    };
    roles.push_back(std::move(entry));
  }
  return nlohmann::ordered_json{{"roles", std::move(roles)}}.dump(2) + "\n";
}

}  // namespace streamdf
