#include "rcal/confidence.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>
#include <stdexcept>

namespace rcal {
namespace {

constexpr std::string_view kConfidenceMarker = "Confidence:";
constexpr std::string_view kAnswerMarker = "Answer:";

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string fold(std::string_view s) {
  std::string out(trim(s));
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Number starting at position i: digits with an optional fractional part.
// Returns the value and advances nothing; nullopt when no digit is there.
std::optional<double> read_number(std::string_view text, std::size_t i) {
  std::size_t end = i;
  while (end < text.size() && is_digit(text[end])) ++end;
  if (end == i) return std::nullopt;
  if (end < text.size() && text[end] == '.' && end + 1 < text.size() && is_digit(text[end + 1])) {
    ++end;
    while (end < text.size() && is_digit(text[end])) ++end;
  }
  try {
    return std::stod(std::string(text.substr(i, end - i)));
  } catch (const std::out_of_range&) {
    // Hundreds of digits: past any double. Downstream range handling applies.
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

ParsedResponse parse_confidence(std::string_view text, const ParsePolicy& policy) {
  ParsedResponse out;

  const std::size_t conf_pos = text.rfind(kConfidenceMarker);
  if (conf_pos != std::string_view::npos) {
    std::size_t i = conf_pos + kConfidenceMarker.size();
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
    if (auto value = read_number(text, i)) {
      if (*value >= 0.0 && *value <= 10.0) {
        out.confidence_raw = *value;
      } else if (policy.clamp_out_of_range) {
        out.confidence_raw = std::clamp(*value, 0.0, 10.0);
      }
      // else: out of range stays missing
    }
  }

  const std::size_t ans_pos = text.rfind(kAnswerMarker);
  if (ans_pos != std::string_view::npos) {
    std::size_t begin = ans_pos + kAnswerMarker.size();
    std::size_t end = text.find('\n', begin);
    if (end == std::string_view::npos) end = text.size();
    out.answer = std::string(trim(text.substr(begin, end - begin)));
  }
  return out;
}

std::vector<ParsedResponse> apply_default(std::vector<ParsedResponse> batch,
                                          const ParsePolicy& policy) {
  double fill = 5.0;
  if (policy.default_rule == DefaultRule::FixedValue) {
    if (!(policy.fixed_value >= 0.0 && policy.fixed_value <= 10.0)) {
      throw std::invalid_argument("apply_default: FixedValue outside [0, 10]");
    }
    fill = policy.fixed_value;
  } else {
    // Mode of the present values; std::map iterates keys in ascending order,
    // so keeping the first maximum breaks ties toward the lower value.
    std::map<double, std::size_t> counts;
    for (const auto& r : batch) {
      if (r.confidence_raw) ++counts[*r.confidence_raw];
    }
    std::size_t best = 0;
    for (const auto& [value, count] : counts) {
      if (count > best) {
        best = count;
        fill = value;
      }
    }
  }
  for (auto& r : batch) {
    if (!r.confidence_raw) r.confidence_raw = fill;
  }
  return batch;
}

bool answers_match(std::string_view answer, std::string_view gold) {
  const std::string g = fold(gold);
  std::string a = fold(answer);
  if (a == g) return true;

  // "540 meters" vs gold "540": drop one trailing alphabetic word and retry.
  const std::size_t cut = a.find_last_of(" \t");
  if (cut == std::string::npos) return false;
  const std::string_view tail = std::string_view(a).substr(cut + 1);
  if (tail.empty() ||
      !std::all_of(tail.begin(), tail.end(),
                   [](unsigned char c) { return std::isalpha(c); })) {
    return false;
  }
  return std::string(trim(std::string_view(a).substr(0, cut))) == g;
}

}  // namespace rcal
