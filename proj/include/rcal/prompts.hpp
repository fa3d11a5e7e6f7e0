#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

// The canonical confidence-query system prompt and the response-suffix grammar.
// Both are load-bearing byte sequences: forged artifacts embed them, manifests
// record the prompt's hash, and round-trip tests rely on the suffix being
// strippable byte-exactly.  Change nothing here without updating the frozen
// hashes in the tests.

namespace rcal {

// Instructs a responder to append a 0-10 confidence rating in a fixed format.
inline constexpr std::string_view kConfidenceSystemPrompt =
    R"(For the following question, provide your best response first, followed by your confidence in the accuracy or helpfulness of your response. Rate your confidence on a scale from 0 to 10.
```Example Format:
<Your responses>
Confidence: <Insert your numerical confidence level from 0 to 10, reflecting how certain you are that your answer is accurate or helpful.>```

Ensure that your response strictly adheres to this format. Explicitly include the word 'Confidence:' in your response.)";

// System prompt goes in front of the user prompt, separated by a blank line.
inline std::string with_confidence_query(std::string_view prompt) {
  std::string out;
  out.reserve(kConfidenceSystemPrompt.size() + 2 + prompt.size());
  out.append(kConfidenceSystemPrompt);
  out.append("\n\n");
  out.append(prompt);
  return out;
}

// Verbalized-confidence suffix appended to a response: "\nConfidence: {k}."
inline std::string append_confidence(std::string_view response, int score) {
  std::string out(response);
  out.append("\nConfidence: ");
  out.append(std::to_string(score));
  out.push_back('.');
  return out;
}

// Inverse of append_confidence: removes a trailing "\nConfidence: {k}." suffix
// and reports the score.  Returns nullopt (text unchanged) when the text does
// not end in exactly that shape.
inline std::optional<int> strip_confidence_suffix(std::string& text) {
  if (text.empty() || text.back() != '.') return std::nullopt;
  const std::size_t dot = text.size() - 1;
  std::size_t digits = dot;
  while (digits > 0 && text[digits - 1] >= '0' && text[digits - 1] <= '9') --digits;
  if (digits == dot) return std::nullopt;  // no digits before the period
  constexpr std::string_view marker = "\nConfidence: ";
  if (digits < marker.size() ||
      std::string_view(text).substr(digits - marker.size(), marker.size()) != marker) {
    return std::nullopt;
  }
  const int score = std::stoi(text.substr(digits, dot - digits));
  text.resize(digits - marker.size());
  return score;
}

// FNV-1a 64-bit hash, used to fingerprint the canonical prompt in manifests.
inline std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace rcal
