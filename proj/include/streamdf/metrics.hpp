#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "streamdf/corpus.hpp"
#include "streamdf/decoder.hpp"

namespace streamdf {

// A metric whose denominator can vanish: reported as 0 with defined=false
// rather than NaN, so downstream formatting stays deterministic.
struct Flagged {
  double value = 0.0;
  bool defined = false;
};

struct StreamingCounts {
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;
  bool operator==(const StreamingCounts&) const = default;
};

struct MetricReport {
  long n_utterances = 0;
  long n_tokens = 0;

  StreamingCounts streaming;  // pooled over all non-Abstain (prefix, token) pairs
  Flagged streaming_precision, streaming_recall, streaming_f1;

  double edit_overhead = 0.0;  // mean over utterances of E(x)/|x|
  Flagged ttd;                 // mean detection delay over detected disfluent tokens
  Flagged ftd;                 // repair-onset-relative delay; needs role annotations
  double awt = 0.0;            // mean first-prediction wait over all tokens
  long reabstentions = 0;      // decided-then-abstained pairs (model property)

  StreamingCounts final_counts;  // last row only
  Flagged final_precision, final_recall, final_f1;
};

struct RoleBreakdown {
  struct Entry {
    long awt_tokens = 0;   // tokens of this role
    double awt = 0.0;      // mean wait, defined iff awt_tokens > 0
    long judged_pairs = 0; // non-Abstain (prefix, token) pairs of this role
    long mistakes = 0;
    double misclassification = 0.0;  // defined iff judged_pairs > 0
  };
  std::array<Entry, kNumTokenRoles> roles{};

  const Entry& at(TokenRole role) const { return roles[static_cast<size_t>(role)]; }
  Entry& at(TokenRole role) { return roles[static_cast<size_t>(role)]; }
};

// Individual metric operations. All are pure functions of the logs (plus
// role annotations where stated); logs must pass validate_log.
struct PrfResult {
  StreamingCounts counts;
  Flagged precision, recall, f1;
};
PrfResult streaming_prf(std::span<const PredictionLog> logs);
double edit_overhead(std::span<const PredictionLog> logs);
Flagged time_to_detection(std::span<const PredictionLog> logs);
Flagged first_time_to_detection(std::span<const PredictionLog> logs,
                                std::span<const Utterance> corpus);
double average_waiting_time(std::span<const PredictionLog> logs);
PrfResult final_prf(std::span<const PredictionLog> logs);

RoleBreakdown awt_by_role(std::span<const PredictionLog> logs, std::span<const Utterance> corpus);
RoleBreakdown misclassification_by_role(std::span<const PredictionLog> logs,
                                        std::span<const Utterance> corpus);

// Everything except FTD (which needs roles); the overload with the corpus
// fills it in. Throws on an empty log set or invalid logs.
MetricReport compute_report(std::span<const PredictionLog> logs);
MetricReport compute_report(std::span<const PredictionLog> logs,
                            std::span<const Utterance> corpus);

// Deterministic emission (%.17g reals; "NA" / null for undefined values).
std::string report_to_csv(const MetricReport& report);
std::string report_to_json(const MetricReport& report);
std::string role_breakdown_to_csv(const RoleBreakdown& awt, const RoleBreakdown& mis);
std::string role_breakdown_to_json(const RoleBreakdown& awt, const RoleBreakdown& mis);

}  // namespace streamdf
