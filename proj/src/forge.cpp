#include "rcal/forge.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rcal/prompts.hpp"
#include "rcal/rng.hpp"

namespace rcal {
namespace {

// Stream labels keeping each builder's draws independent of the others even
// under a shared seed.
constexpr std::uint64_t kProbeStream = 0x70726f6265ULL;   // "probe"
constexpr std::uint64_t kQuadStream = 0x71756164ULL;      // "quad"
constexpr std::uint64_t kMixStream = 0x6d6978ULL;         // "mix"

int draw_high(Rng& rng) { return static_cast<int>(rng.uniform_int(7, 10)); }
int draw_low(Rng& rng) { return static_cast<int>(rng.uniform_int(0, 3)); }

}  // namespace

const char* to_string(ProbeMode mode) {
  switch (mode) {
    case ProbeMode::AnswerOnly: return "answer_only";
    case ProbeMode::ConfidenceReversed: return "confidence_reversed";
    case ProbeMode::ChosenWithConf: return "chosen_with_conf";
    case ProbeMode::RejectedWithConf: return "rejected_with_conf";
  }
  return "answer_only";
}

std::optional<ProbeMode> probe_mode_from_string(std::string_view name) {
  if (name == "answer_only") return ProbeMode::AnswerOnly;
  if (name == "confidence_reversed") return ProbeMode::ConfidenceReversed;
  if (name == "chosen_with_conf") return ProbeMode::ChosenWithConf;
  if (name == "rejected_with_conf") return ProbeMode::RejectedWithConf;
  return std::nullopt;
}

std::int64_t whitespace_token_count(std::string_view text) {
  std::int64_t count = 0;
  bool in_token = false;
  for (char c : text) {
    const bool space = (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v');
    if (!space && !in_token) ++count;
    in_token = !space;
  }
  return count;
}

std::vector<PreferencePair> filter_pairs(std::span<const PreferencePair> pairs,
                                         double min_strength, std::int64_t max_len,
                                         bool single_turn_only) {
  if (min_strength < 0.0) throw std::invalid_argument("filter_pairs: min_strength must be >= 0");
  std::vector<PreferencePair> kept;
  for (const auto& pair : pairs) {
    if (single_turn_only && pair.turns != 1) continue;
    if (pair.chosen_score && pair.rejected_score) {
      if (*pair.chosen_score - *pair.rejected_score < min_strength) continue;
    } else if (min_strength > 0.0) {
      continue;  // unscored pairs pass only a zero threshold
    }
    const std::int64_t tokens = whitespace_token_count(pair.prompt) +
                                whitespace_token_count(pair.chosen) +
                                whitespace_token_count(pair.rejected);
    if (tokens > max_len) continue;
    kept.push_back(pair);
  }
  return kept;
}

std::vector<ProbeItem> make_probe_items(std::span<const PreferencePair> pairs,
                                        ProbeMode mode, std::uint64_t seed) {
  std::vector<ProbeItem> items;
  items.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    // Per-item stream: items stay independent no matter how many precede them,
    // and a given (seed, mode, index) always yields the same scores.
    Rng rng(seed, mix_key({kProbeStream, static_cast<std::uint64_t>(mode)}), i);

    ProbeItem item;
    item.id = pair.id;
    item.mode = mode;
    switch (mode) {
      case ProbeMode::AnswerOnly:
        item.prompt = pair.prompt;
        item.response_a = pair.chosen;
        item.response_b = pair.rejected;
        item.expected_winner = Winner::A;
        item.quality_a = pair.chosen_score;
        item.quality_b = pair.rejected_score;
        break;
      case ProbeMode::ConfidenceReversed: {
        const int low = draw_low(rng);
        const int high = draw_high(rng);
        item.prompt = with_confidence_query(pair.prompt);
        item.response_a = append_confidence(pair.chosen, low);
        item.response_b = append_confidence(pair.rejected, high);
        item.expected_winner = Winner::A;
        item.quality_a = pair.chosen_score;
        item.quality_b = pair.rejected_score;
        break;
      }
      case ProbeMode::ChosenWithConf: {
        const int high = draw_high(rng);
        const int low = draw_low(rng);
        item.prompt = with_confidence_query(pair.prompt);
        item.response_a = append_confidence(pair.chosen, high);
        item.response_b = append_confidence(pair.chosen, low);
        item.expected_winner = Winner::A;
        item.quality_a = pair.chosen_score;
        item.quality_b = pair.chosen_score;
        break;
      }
      case ProbeMode::RejectedWithConf: {
        const int high = draw_high(rng);
        const int low = draw_low(rng);
        item.prompt = with_confidence_query(pair.prompt);
        item.response_a = append_confidence(pair.rejected, high);
        item.response_b = append_confidence(pair.rejected, low);
        item.expected_winner = Winner::B;
        item.quality_a = pair.rejected_score;
        item.quality_b = pair.rejected_score;
        break;
      }
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<CalibrationQuadruple> make_quadruples(std::span<const PreferencePair> pairs,
                                                  std::uint64_t seed) {
  std::vector<CalibrationQuadruple> quads;
  quads.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    Rng rng(seed, kQuadStream, i);

    CalibrationQuadruple quad;
    quad.id = pair.id;
    quad.prompt_aug = with_confidence_query(pair.prompt);
    quad.h_c = draw_high(rng);
    quad.l_c = draw_low(rng);
    quad.h_r = draw_high(rng);
    quad.l_r = draw_low(rng);
    quad.chosen_high = append_confidence(pair.chosen, quad.h_c);
    quad.chosen_low = append_confidence(pair.chosen, quad.l_c);
    quad.rejected_high = append_confidence(pair.rejected, quad.h_r);
    quad.rejected_low = append_confidence(pair.rejected, quad.l_r);
    quad.quality_chosen = pair.chosen_score;
    quad.quality_rejected = pair.rejected_score;
    quads.push_back(std::move(quad));
  }
  return quads;
}

std::vector<MixedPrompt> mix_confidence_prompts(std::span<const PromptEntry> prompts,
                                                double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("mix_confidence_prompts: fraction must lie in [0, 1]");
  }
  std::vector<std::size_t> single_turn;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (prompts[i].turns == 1) single_turn.push_back(i);
  }
  const auto n_flag = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(single_turn.size())));

  // Partial Fisher-Yates: the first n_flag entries form a uniform sample.
  Rng rng(seed, kMixStream);
  for (std::size_t i = 0; i + 1 < single_turn.size() && i < n_flag; ++i) {
    const auto j = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(i),
                        static_cast<std::int64_t>(single_turn.size()) - 1));
    std::swap(single_turn[i], single_turn[j]);
  }
  std::vector<bool> flagged(prompts.size(), false);
  for (std::size_t i = 0; i < n_flag && i < single_turn.size(); ++i) {
    flagged[single_turn[i]] = true;
  }

  std::vector<MixedPrompt> out;
  out.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    MixedPrompt m;
    m.has_confidence_query = flagged[i];
    m.prompt = flagged[i] ? with_confidence_query(prompts[i].prompt) : prompts[i].prompt;
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace rcal
