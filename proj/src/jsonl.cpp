#include "rcal/jsonl.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "rcal/prompts.hpp"

namespace rcal {
namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& context, const std::string& message) {
  throw std::runtime_error(context + ": " + message);
}

const json& require(const json& obj, const char* key, const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(context, std::string("missing required field \"") + key + "\"");
  return *it;
}

std::string get_string(const json& obj, const char* key, const std::string& context) {
  const json& value = require(obj, key, context);
  if (!value.is_string()) fail(context, std::string("field \"") + key + "\" must be a string");
  return value.get<std::string>();
}

double get_number(const json& obj, const char* key, const std::string& context) {
  const json& value = require(obj, key, context);
  if (!value.is_number()) fail(context, std::string("field \"") + key + "\" must be a number");
  return value.get<double>();
}

int get_positive_int(const json& obj, const char* key, const std::string& context,
                     int fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_number_integer() || it->get<long long>() < 1) {
    fail(context, std::string("field \"") + key + "\" must be a positive integer");
  }
  return static_cast<int>(it->get<long long>());
}

int get_int(const json& obj, const char* key, const std::string& context) {
  const json& value = require(obj, key, context);
  if (!value.is_number_integer()) {
    fail(context, std::string("field \"") + key + "\" must be an integer");
  }
  return static_cast<int>(value.get<long long>());
}

std::optional<double> get_optional_number(const json& obj, const char* key,
                                          const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_number()) fail(context, std::string("field \"") + key + "\" must be a number");
  return it->get<double>();
}

// Streams a JSONL file line by line; per_line receives the parsed object and
// a context string "path line N" for error messages.
template <typename Fn>
void for_each_line(const std::string& path, Fn&& per_line) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string context = path + " line " + std::to_string(lineno);
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      fail(context, std::string("malformed JSON (") + e.what() + ")");
    }
    if (!obj.is_object()) fail(context, "expected a JSON object");
    per_line(obj, context);
  }
}

template <typename Fn>
std::string to_jsonl(std::size_t n, Fn&& emit_line) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    out += emit_line(i).dump();
    out += '\n';
  }
  return out;
}

json reliability_json(const ReliabilityReport& report) {
  json j;
  j["n_bins"] = report.n_bins;
  j["n_samples"] = report.n_samples;
  j["ece"] = report.ece;
  if (report.auroc) {
    j["auroc"] = *report.auroc;
  } else {
    j["auroc"] = nullptr;
  }
  j["accuracy"] = report.accuracy;
  j["bins"] = json::array();
  for (const auto& bin : report.bins) {
    json b;
    b["lower"] = bin.lower;
    b["upper"] = bin.upper;
    b["count"] = bin.count;
    b["mean_confidence"] = bin.mean_confidence;
    b["mean_accuracy"] = bin.mean_accuracy;
    j["bins"].push_back(std::move(b));
  }
  return j;
}

}  // namespace

// ---- JSONL datasets -------------------------------------------------------

std::vector<PreferencePair> read_pairs(const std::string& path) {
  std::vector<PreferencePair> pairs;
  for_each_line(path, [&](const json& obj, const std::string& context) {
    PreferencePair pair;
    pair.id = get_string(obj, "id", context);
    pair.prompt = get_string(obj, "prompt", context);
    pair.chosen = get_string(obj, "chosen", context);
    pair.rejected = get_string(obj, "rejected", context);
    pair.chosen_score = get_optional_number(obj, "chosen_score", context);
    pair.rejected_score = get_optional_number(obj, "rejected_score", context);
    pair.turns = get_positive_int(obj, "turns", context, 1);
    pairs.push_back(std::move(pair));
  });
  return pairs;
}

void write_pairs(const std::string& path, std::span<const PreferencePair> pairs) {
  write_text_file(path, to_jsonl(pairs.size(), [&](std::size_t i) {
    const PreferencePair& pair = pairs[i];
    json j;
    j["id"] = pair.id;
    j["prompt"] = pair.prompt;
    j["chosen"] = pair.chosen;
    j["rejected"] = pair.rejected;
    if (pair.chosen_score) j["chosen_score"] = *pair.chosen_score;
    if (pair.rejected_score) j["rejected_score"] = *pair.rejected_score;
    j["turns"] = pair.turns;
    return j;
  }));
}

std::vector<ProbeItem> read_probe_items(const std::string& path) {
  std::vector<ProbeItem> items;
  for_each_line(path, [&](const json& obj, const std::string& context) {
    ProbeItem item;
    item.id = get_string(obj, "id", context);
    const std::string mode = get_string(obj, "mode", context);
    const auto parsed = probe_mode_from_string(mode);
    if (!parsed) fail(context, "field \"mode\" has unknown value \"" + mode + "\"");
    item.mode = *parsed;
    item.prompt = get_string(obj, "prompt", context);
    item.response_a = get_string(obj, "response_a", context);
    item.response_b = get_string(obj, "response_b", context);
    const std::string winner = get_string(obj, "expected_winner", context);
    if (winner == "A") {
      item.expected_winner = Winner::A;
    } else if (winner == "B") {
      item.expected_winner = Winner::B;
    } else {
      fail(context, "field \"expected_winner\" must be \"A\" or \"B\"");
    }
    item.quality_a = get_optional_number(obj, "quality_a", context);
    item.quality_b = get_optional_number(obj, "quality_b", context);
    items.push_back(std::move(item));
  });
  return items;
}

void write_probe_items(const std::string& path, std::span<const ProbeItem> items) {
  write_text_file(path, to_jsonl(items.size(), [&](std::size_t i) {
    const ProbeItem& item = items[i];
    json j;
    j["id"] = item.id;
    j["mode"] = to_string(item.mode);
    j["prompt"] = item.prompt;
    j["response_a"] = item.response_a;
    j["response_b"] = item.response_b;
    j["expected_winner"] = item.expected_winner == Winner::A ? "A" : "B";
    if (item.quality_a) j["quality_a"] = *item.quality_a;
    if (item.quality_b) j["quality_b"] = *item.quality_b;
    return j;
  }));
}

std::vector<CalibrationQuadruple> read_quadruples(const std::string& path) {
  std::vector<CalibrationQuadruple> quadruples;
  for_each_line(path, [&](const json& obj, const std::string& context) {
    CalibrationQuadruple quad;
    quad.id = get_string(obj, "id", context);
    quad.prompt_aug = get_string(obj, "prompt_aug", context);
    quad.chosen_high = get_string(obj, "chosen_high", context);
    quad.chosen_low = get_string(obj, "chosen_low", context);
    quad.rejected_high = get_string(obj, "rejected_high", context);
    quad.rejected_low = get_string(obj, "rejected_low", context);
    quad.h_c = get_int(obj, "h_c", context);
    quad.l_c = get_int(obj, "l_c", context);
    quad.h_r = get_int(obj, "h_r", context);
    quad.l_r = get_int(obj, "l_r", context);
    quad.quality_chosen = get_optional_number(obj, "quality_chosen", context);
    quad.quality_rejected = get_optional_number(obj, "quality_rejected", context);
    quadruples.push_back(std::move(quad));
  });
  return quadruples;
}

void write_quadruples(const std::string& path,
                      std::span<const CalibrationQuadruple> quadruples) {
  write_text_file(path, to_jsonl(quadruples.size(), [&](std::size_t i) {
    const CalibrationQuadruple& quad = quadruples[i];
    json j;
    j["id"] = quad.id;
    j["prompt_aug"] = quad.prompt_aug;
    j["chosen_high"] = quad.chosen_high;
    j["chosen_low"] = quad.chosen_low;
    j["rejected_high"] = quad.rejected_high;
    j["rejected_low"] = quad.rejected_low;
    j["h_c"] = quad.h_c;
    j["l_c"] = quad.l_c;
    j["h_r"] = quad.h_r;
    j["l_r"] = quad.l_r;
    if (quad.quality_chosen) j["quality_chosen"] = *quad.quality_chosen;
    if (quad.quality_rejected) j["quality_rejected"] = *quad.quality_rejected;
    return j;
  }));
}

std::vector<PromptEntry> read_prompt_entries(const std::string& path) {
  std::vector<PromptEntry> entries;
  for_each_line(path, [&](const json& obj, const std::string& context) {
    PromptEntry entry;
    entry.prompt = get_string(obj, "prompt", context);
    entry.turns = get_positive_int(obj, "turns", context, 1);
    entries.push_back(std::move(entry));
  });
  return entries;
}

std::vector<MixedPrompt> read_prompt_mix(const std::string& path) {
  std::vector<MixedPrompt> prompts;
  for_each_line(path, [&](const json& obj, const std::string& context) {
    MixedPrompt entry;
    entry.prompt = get_string(obj, "prompt", context);
    const json& flag = require(obj, "has_confidence_query", context);
    if (!flag.is_boolean()) {
      fail(context, "field \"has_confidence_query\" must be a boolean");
    }
    entry.has_confidence_query = flag.get<bool>();
    prompts.push_back(std::move(entry));
  });
  return prompts;
}

void write_prompt_mix(const std::string& path, std::span<const MixedPrompt> prompts) {
  write_text_file(path, to_jsonl(prompts.size(), [&](std::size_t i) {
    json j;
    j["prompt"] = prompts[i].prompt;
    j["has_confidence_query"] = prompts[i].has_confidence_query;
    return j;
  }));
}

std::vector<ResponseLogEntry> read_response_log(const std::string& path) {
  std::vector<ResponseLogEntry> entries;
  for_each_line(path, [&](const json& obj, const std::string& context) {
    ResponseLogEntry entry;
    entry.id = get_string(obj, "id", context);
    entry.question = get_string(obj, "question", context);
    entry.response = get_string(obj, "response", context);
    if (auto it = obj.find("gold"); it != obj.end() && !it->is_null()) {
      if (!it->is_string()) fail(context, "field \"gold\" must be a string");
      entry.gold = it->get<std::string>();
    }
    if (auto it = obj.find("correct"); it != obj.end() && !it->is_null()) {
      if (!it->is_boolean()) fail(context, "field \"correct\" must be a boolean");
      entry.correct = it->get<bool>();
    }
    entries.push_back(std::move(entry));
  });
  return entries;
}

// ---- Parameter snapshots --------------------------------------------------

std::string scorer_to_json(const DifferentiableScorer& scorer) {
  json j;
  j["architecture"] = scorer.architecture() == Architecture::Linear ? "linear" : "mlp";
  if (scorer.architecture() == Architecture::Mlp) j["hidden"] = scorer.hidden();
  j["theta"] = std::vector<double>(scorer.parameters().begin(), scorer.parameters().end());
  return j.dump(2) + "\n";
}

DifferentiableScorer scorer_from_json_text(const std::string& text,
                                           const std::string& context) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(context, std::string("malformed JSON (") + e.what() + ")");
  }
  if (!obj.is_object()) fail(context, "expected a JSON object");
  const std::string arch = get_string(obj, "architecture", context);
  const json& theta_json = require(obj, "theta", context);
  if (!theta_json.is_array()) fail(context, "field \"theta\" must be an array of numbers");
  std::vector<double> theta;
  for (const auto& v : theta_json) {
    if (!v.is_number()) fail(context, "field \"theta\" must be an array of numbers");
    theta.push_back(v.get<double>());
  }
  std::vector<int> hidden;
  if (auto it = obj.find("hidden"); it != obj.end() && !it->is_null()) {
    if (!it->is_array()) fail(context, "field \"hidden\" must be an array of integers");
    for (const auto& v : *it) {
      if (!v.is_number_integer()) {
        fail(context, "field \"hidden\" must be an array of integers");
      }
      hidden.push_back(static_cast<int>(v.get<long long>()));
    }
  }
  Architecture architecture;
  if (arch == "linear") {
    architecture = Architecture::Linear;
  } else if (arch == "mlp") {
    architecture = Architecture::Mlp;
  } else {
    fail(context, "field \"architecture\" has unknown value \"" + arch + "\"");
  }
  try {
    return DifferentiableScorer::from_parameters(architecture, std::move(hidden),
                                                 std::move(theta));
  } catch (const std::exception& e) {
    fail(context, e.what());
  }
}

DifferentiableScorer read_scorer(const std::string& path) {
  return scorer_from_json_text(read_text_file(path), path);
}

void write_scorer(const std::string& path, const DifferentiableScorer& scorer) {
  write_text_file(path, scorer_to_json(scorer));
}

std::string candidate_policy_to_json(const CandidatePolicy& policy) {
  json j;
  j["architecture"] = "candidate_policy";
  j["beta"] = policy.beta();
  j["n_prompts"] = policy.n_prompts();
  j["n_candidates"] = policy.n_candidates();
  j["logits"] = std::vector<double>(policy.logits().begin(), policy.logits().end());
  j["reference_logits"] = std::vector<double>(policy.reference_logits().begin(),
                                              policy.reference_logits().end());
  return j.dump(2) + "\n";
}

CandidatePolicy candidate_policy_from_json_text(const std::string& text,
                                                const std::string& context) {
  json obj;
  try {
    obj = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(context, std::string("malformed JSON (") + e.what() + ")");
  }
  if (!obj.is_object()) fail(context, "expected a JSON object");
  const std::string arch = get_string(obj, "architecture", context);
  if (arch != "candidate_policy") {
    fail(context, "field \"architecture\" must be \"candidate_policy\"");
  }
  const double beta = get_number(obj, "beta", context);
  const json& np = require(obj, "n_prompts", context);
  const json& nc = require(obj, "n_candidates", context);
  if (!np.is_number_integer() || np.get<long long>() < 1) {
    fail(context, "field \"n_prompts\" must be a positive integer");
  }
  if (!nc.is_number_integer() || nc.get<long long>() < 1) {
    fail(context, "field \"n_candidates\" must be a positive integer");
  }
  auto read_array = [&](const char* key) {
    const json& arr = require(obj, key, context);
    if (!arr.is_array()) {
      fail(context, std::string("field \"") + key + "\" must be an array of numbers");
    }
    std::vector<double> values;
    for (const auto& v : arr) {
      if (!v.is_number()) {
        fail(context, std::string("field \"") + key + "\" must be an array of numbers");
      }
      values.push_back(v.get<double>());
    }
    return values;
  };
  const auto logits = read_array("logits");
  const auto reference = read_array("reference_logits");
  const auto n_prompts = static_cast<std::size_t>(np.get<long long>());
  const auto n_candidates = static_cast<std::size_t>(nc.get<long long>());
  const std::size_t expected = n_prompts * n_candidates;
  if (logits.size() != expected || reference.size() != expected) {
    fail(context, "fields \"logits\" and \"reference_logits\" must each hold n_prompts * n_candidates numbers");
  }
  CandidatePolicy policy(n_prompts, n_candidates, beta);
  std::copy(logits.begin(), logits.end(), policy.logits().begin());
  std::copy(reference.begin(), reference.end(), policy.reference_logits().begin());
  return policy;
}

CandidatePolicy read_candidate_policy(const std::string& path) {
  return candidate_policy_from_json_text(read_text_file(path), path);
}

void write_candidate_policy(const std::string& path, const CandidatePolicy& policy) {
  write_text_file(path, candidate_policy_to_json(policy));
}

// ---- Reports --------------------------------------------------------------

std::string reliability_to_json(const ReliabilityReport& report) {
  return reliability_json(report).dump(2) + "\n";
}

std::string reliability_bins_csv(const ReliabilityReport& report) {
  std::string out = "lower,upper,count,mean_confidence,mean_accuracy\n";
  for (const auto& bin : report.bins) {
    out += format_double(bin.lower) + "," + format_double(bin.upper) + "," +
           std::to_string(bin.count) + "," + format_double(bin.mean_confidence) + "," +
           format_double(bin.mean_accuracy) + "\n";
  }
  return out;
}

std::string probe_stats_to_json(std::span<const ProbeStats> stats) {
  json j = json::array();
  for (const auto& stat : stats) {
    json s;
    s["mode"] = to_string(stat.mode);
    s["n_items"] = stat.n_items;
    s["n_failed"] = stat.n_failed;
    s["expected_winner_rate"] = stat.expected_winner_rate;
    s["mean_margin"] = stat.mean_margin;
    j.push_back(std::move(s));
  }
  return j.dump(2) + "\n";
}

std::string probe_items_csv(std::span<const ProbeStats> stats) {
  std::string out = "mode,id,score_a,score_b,winner\n";
  for (const auto& stat : stats) {
    for (const auto& item : stat.per_item) {
      out += std::string(to_string(stat.mode)) + "," + item.id + "," +
             format_double(item.score_a) + "," + format_double(item.score_b) + "," +
             std::string(1, item.winner) + "\n";
    }
  }
  return out;
}

std::string run_report_to_json(const RunReport& report) {
  json j;
  j["method"] = to_string(report.method);
  j["seed"] = report.seed;
  j["n_batches"] = report.series.size();
  j["final_report"] = reliability_json(report.final_report);
  json policy;
  policy["n_archetypes"] = report.final_policy.n_archetypes;
  policy["logits"] = report.final_policy.logits;
  j["final_policy"] = std::move(policy);
  return j.dump(2) + "\n";
}

std::string run_series_csv(const RunReport& report) {
  std::string out = "batch,mean_reward,mean_confidence,ece,accuracy\n";
  for (std::size_t t = 0; t < report.series.size(); ++t) {
    const BatchPoint& point = report.series[t];
    out += std::to_string(t) + "," + format_double(point.mean_reward) + "," +
           format_double(point.mean_confidence) + "," + format_double(point.ece) + "," +
           format_double(point.accuracy) + "\n";
  }
  return out;
}

std::string loss_trace_csv(std::span<const double> losses) {
  std::string out = "step,loss\n";
  for (std::size_t t = 0; t < losses.size(); ++t) {
    out += std::to_string(t + 1) + "," + format_double(losses[t]) + "\n";
  }
  return out;
}

std::string manifest_json(const std::string& command, std::uint64_t seed,
                          std::span<const std::string> outputs) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a64(kConfidenceSystemPrompt)));
  json j;
  j["command"] = command;
  j["seed"] = seed;
  j["system_prompt_fnv1a64"] = hash;
  j["outputs"] = std::vector<std::string>(outputs.begin(), outputs.end());
  return j.dump(2) + "\n";
}

// ---- Plumbing -------------------------------------------------------------

void write_text_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(tmp + ": cannot open for writing");
    out << content;
    out.flush();
    if (!out) {
      out.close();
      std::remove(tmp.c_str());
      throw std::runtime_error(tmp + ": write failed");
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw std::runtime_error(path + ": rename from staging file failed");
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string format_double(double value) { return json(value).dump(); }

}  // namespace rcal
