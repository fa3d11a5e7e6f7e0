#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rcal/forge.hpp"
#include "rcal/scorer.hpp"

// Four-mode bias probe: feed each probe item's two responses to a scorer and
// count how often the scorer picks the winner a CALIBRATED scorer should pick.
// A confidence-biased scorer shows a characteristic signature -- perfect on
// answer-only items, at or near zero on rejected-with-confidence items --
// which is exactly what the acceptance run asserts.
//
// The scorer behind the probe is either an in-process toy scorer or a remote
// scoring endpoint speaking a minimal JSON-over-HTTP contract.

namespace rcal {

// Name of the environment variable holding an optional bearer token that is
// passed through to remote endpoints as "Authorization: Bearer <token>".
inline constexpr const char* kBearerTokenEnv = "RCAL_BEARER_TOKEN";

struct RemoteEndpoint {
  std::string url;                // http://host[:port][/path]
  double timeout_seconds = 5.0;   // must be > 0
  int max_retries = 2;            // extra attempts after the first failure
};

struct ScorerBinding {
  enum class Kind { ToyLinear, ToyMlp, Remote };

  static ScorerBinding toy(DifferentiableScorer scorer);
  static ScorerBinding remote(RemoteEndpoint endpoint);

  Kind kind = Kind::ToyLinear;
  std::optional<DifferentiableScorer> scorer;  // toy kinds
  RemoteEndpoint endpoint;                     // remote kind
};

struct ProbeItemResult {
  std::string id;
  double score_a = 0.0;
  double score_b = 0.0;
  char winner = 'T';  // 'A', 'B', or 'T' for an exact tie
};

struct ProbeStats {
  ProbeMode mode = ProbeMode::AnswerOnly;
  std::size_t n_items = 0;   // successfully scored items
  std::size_t n_failed = 0;  // excluded remote failures
  // (#items where the expected winner scored strictly higher + 0.5 * #ties)
  // / n_items; 0 when n_items is 0.
  double expected_winner_rate = 0.0;
  // mean of score(expected winner) - score(other side); 0 when n_items is 0.
  double mean_margin = 0.0;
  std::vector<ProbeItemResult> per_item;  // sorted by id
};

struct ProbeOptions {
  // Concurrent scoring bound; 0 means "library default" (OpenMP's thread count
  // for toy bindings, 4 connections for remote endpoints).
  int parallelism = 0;
};

// Scores one (prompt, response) pair.  Toy kinds ignore the prompt text: they
// build features from the quality label carried in the probe item's metadata
// and the confidence suffix parsed out of the response (absent suffix means a
// zero confidence feature).  The remote kind POSTs {"prompt", "response"} and
// expects {"score": number}; transport failures and malformed replies raise
// std::runtime_error after max_retries (run_probe turns that into exclusion).
double score_item(const ScorerBinding& binding, std::string_view prompt,
                  std::string_view response, std::optional<double> quality);

// Runs the probe over all items and aggregates one ProbeStats per mode present
// in the input, in mode declaration order.  Deterministic for toy bindings.
// Throws std::runtime_error when every single item failed.
std::vector<ProbeStats> run_probe(const ScorerBinding& binding,
                                  std::span<const ProbeItem> items,
                                  const ProbeOptions& options = {});

}  // namespace rcal
