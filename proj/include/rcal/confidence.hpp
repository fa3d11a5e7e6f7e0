#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Extraction of verbalized confidence scores ("Confidence: 7") and short
// answers ("Answer: 540") from response text, plus the batch-level default
// policy for responses where no score could be parsed.

namespace rcal {

struct ParsedResponse {
  std::string answer;  // text after the last "Answer:" marker; empty when absent
  std::optional<double> confidence_raw;  // on the stated 0..10 scale

  // Normalized to [0, 1] by dividing by 10.
  std::optional<double> confidence() const {
    if (!confidence_raw) return std::nullopt;
    return *confidence_raw / 10.0;
  }
};

enum class DefaultRule {
  MostFrequentObserved,  // mode of the scores seen in the batch
  FixedValue,            // a constant, e.g. 5 -> normalized 0.5
};

struct ParsePolicy {
  DefaultRule default_rule = DefaultRule::MostFrequentObserved;
  double fixed_value = 5.0;         // used by FixedValue; must lie in [0, 10]
  bool clamp_out_of_range = true;   // 15 -> 10 when set, else treated as missing
};

// Pulls the first number (integer or decimal) after the LAST "Confidence:"
// marker -- responses sometimes quote the instruction, and the score is
// specified to follow the response -- and the text after the last "Answer:"
// marker up to the end of its line.  A missing marker or missing digits is a
// valid state: confidence_raw stays empty and apply_default resolves it later.
ParsedResponse parse_confidence(std::string_view text, const ParsePolicy& policy = {});

// Fills every missing confidence according to the policy.  For
// MostFrequentObserved the fill value is the mode of the present
// confidence_raw values, ties broken toward the lower value; a batch with no
// present value at all falls back to 5.0.  Idempotent.
std::vector<ParsedResponse> apply_default(std::vector<ParsedResponse> batch,
                                          const ParsePolicy& policy);

// Exact answer comparison used when a response log carries gold answers but no
// correctness flags: trim, ASCII case-fold, and retry with a trailing
// alphabetic unit word stripped from the answer ("540 meters" matches "540").
bool answers_match(std::string_view answer, std::string_view gold);

// One line of a response-log file.
struct ResponseLogEntry {
  std::string id;
  std::string question;
  std::string response;
  std::optional<std::string> gold;
  std::optional<bool> correct;
};

}  // namespace rcal
