#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Builders for the three derived dataset families used throughout the
// pipeline:
//   - probe items: four-mode paired comparisons that expose whether a scorer
//     prefers high verbalized confidence regardless of response quality;
//   - calibration quadruples: chosen/rejected responses each duplicated with a
//     random high and a random low appended confidence score, the training
//     unit of the calibrated ranking losses;
//   - prompt mixtures: a prompt set where a fixed fraction of single-turn
//     prompts carries the confidence-query system prompt.
//
// High scores are random integers in {7..10}, low scores in {0..3}, appended
// as the exact suffix "\nConfidence: {score}." -- see prompts.hpp.

namespace rcal {

struct PreferencePair {
  std::string id;
  std::string prompt;
  std::string chosen;
  std::string rejected;
  std::optional<double> chosen_score;    // annotation score; also doubles as the
  std::optional<double> rejected_score;  // synthetic quality label in [0,1] corpora
  int turns = 1;
};

enum class ProbeMode { AnswerOnly, ConfidenceReversed, ChosenWithConf, RejectedWithConf };

const char* to_string(ProbeMode mode);                       // "answer_only", ...
std::optional<ProbeMode> probe_mode_from_string(std::string_view name);

enum class Winner { A, B };

struct ProbeItem {
  std::string id;
  ProbeMode mode = ProbeMode::AnswerOnly;
  std::string prompt;
  std::string response_a;
  std::string response_b;
  Winner expected_winner = Winner::A;  // winner under a CALIBRATED scorer
  // Synthetic quality labels carried from the source pair's scores; toy scorer
  // bindings need them, remote bindings ignore them.
  std::optional<double> quality_a;
  std::optional<double> quality_b;
};

struct CalibrationQuadruple {
  std::string id;
  std::string prompt_aug;  // prompt with the confidence-query system prompt prepended
  std::string chosen_high;
  std::string chosen_low;
  std::string rejected_high;
  std::string rejected_low;
  int h_c = 0, l_c = 0, h_r = 0, l_r = 0;  // the four appended scores
  std::optional<double> quality_chosen;
  std::optional<double> quality_rejected;
};

struct PromptEntry {
  std::string prompt;
  int turns = 1;
};

struct MixedPrompt {
  std::string prompt;  // system prompt already prepended when flagged
  bool has_confidence_query = false;
};

// Preference-strength / length / turn filtering.  Keeps a pair when
//   - both scores are present and chosen_score - rejected_score >= min_strength,
//     or the pair lacks a score and min_strength is 0;
//   - the whitespace-token count of prompt+chosen+rejected is <= max_len;
//   - turns == 1, when single_turn_only is set.
std::vector<PreferencePair> filter_pairs(std::span<const PreferencePair> pairs,
                                         double min_strength, std::int64_t max_len,
                                         bool single_turn_only);

// One probe item per pair.  AnswerOnly leaves prompt and responses untouched;
// every other mode prepends the system prompt and appends mode-specific
// confidence suffixes:
//   ConfidenceReversed: chosen gets a LOW score (slot A), rejected a HIGH one
//     (slot B); a calibrated scorer should still pick A.
//   ChosenWithConf:     both slots are the chosen response, high in A, low in
//     B; expected winner A.
//   RejectedWithConf:   both slots are the rejected response, high in A, low
//     in B; expected winner B -- low confidence on a bad response is right.
std::vector<ProbeItem> make_probe_items(std::span<const PreferencePair> pairs,
                                        ProbeMode mode, std::uint64_t seed);

// One quadruple per pair; the four scores are drawn independently per slot.
std::vector<CalibrationQuadruple> make_quadruples(std::span<const PreferencePair> pairs,
                                                  std::uint64_t seed);

// Flags exactly round(fraction * n_single_turn) single-turn prompts, chosen
// uniformly per seed, and prepends the system prompt to the flagged ones.
// Multi-turn prompts are never flagged.
std::vector<MixedPrompt> mix_confidence_prompts(std::span<const PromptEntry> prompts,
                                                double fraction, std::uint64_t seed);

// Whitespace-token count (length proxy used by filter_pairs).
std::int64_t whitespace_token_count(std::string_view text);

}  // namespace rcal
