#include "rcal/cli.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rcal/confidence.hpp"
#include "rcal/forge.hpp"
#include "rcal/jsonl.hpp"
#include "rcal/metrics.hpp"
#include "rcal/probe.hpp"
#include "rcal/prompts.hpp"
#include "rcal/scorer.hpp"
#include "rcal/shaping.hpp"
#include "rcal/sim.hpp"

namespace rcal::cli {
namespace {

using json = nlohmann::ordered_json;

// Configuration problem: wrong domain, unknown key, missing required flag.
// Mapped to exit code 1, as opposed to runtime failures (exit code 2).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Every key the config file may carry, across all subcommands.  A config file
// is one shared settings object; each command reads the subset it understands.
const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "seed",        "out",           "input",          "pairs",
      "quadruples",  "scorer",        "init_scorer",    "n_bins",
      "variant",     "w",             "alpha",          "mode",
      "fraction",    "min_strength",  "max_len",        "single_turn_only",
      "binding",     "endpoint",      "timeout",        "max_retries",
      "parallelism", "bias_b",        "architecture",   "hidden",
      "learning_rate", "steps",       "cosine_decay",   "beta",
      "cdpo_w",      "loss",          "method",         "n_archetypes",
      "accuracies",  "quality_model", "graded_noise",   "episodes_per_batch",
      "n_batches",   "clip_epsilon",  "kl_coefficient", "default_rule",
      "fixed_value", "clamp_out_of_range",
  };
  return keys;
}

json load_config(const std::string& path) {
  json config;
  try {
    config = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw UsageError(path + ": malformed JSON config (" + e.what() + ")");
  }
  if (!config.is_object()) throw UsageError(path + ": config must be a JSON object");
  for (const auto& [key, value] : config.items()) {
    (void)value;
    if (!known_config_keys().count(key)) {
      throw UsageError(path + ": unknown config key \"" + key + "\"");
    }
  }
  return config;
}

// ---- flag/config merge ("flags win") --------------------------------------

[[noreturn]] void bad_key(const std::string& key, const char* expected) {
  throw UsageError("config key \"" + key + "\" must be " + expected);
}

void merge_from_config(const json& value, const std::string& key, double& out) {
  if (!value.is_number()) bad_key(key, "a number");
  out = value.get<double>();
}

void merge_from_config(const json& value, const std::string& key, std::int64_t& out) {
  if (!value.is_number_integer()) bad_key(key, "an integer");
  out = value.get<std::int64_t>();
}

void merge_from_config(const json& value, const std::string& key, std::uint64_t& out) {
  if (!value.is_number_unsigned() && !value.is_number_integer()) bad_key(key, "an integer");
  out = value.get<std::uint64_t>();
}

void merge_from_config(const json& value, const std::string& key, bool& out) {
  if (!value.is_boolean()) bad_key(key, "a boolean");
  out = value.get<bool>();
}

void merge_from_config(const json& value, const std::string& key, std::string& out) {
  if (!value.is_string()) bad_key(key, "a string");
  out = value.get<std::string>();
}

void merge_from_config(const json& value, const std::string& key,
                       std::vector<double>& out) {
  if (!value.is_array()) bad_key(key, "an array of numbers");
  out.clear();
  for (const auto& v : value) {
    if (!v.is_number()) bad_key(key, "an array of numbers");
    out.push_back(v.get<double>());
  }
}

void merge_from_config(const json& value, const std::string& key,
                       std::vector<int>& out) {
  if (!value.is_array()) bad_key(key, "an array of integers");
  out.clear();
  for (const auto& v : value) {
    if (!v.is_number_integer()) bad_key(key, "an array of integers");
    out.push_back(static_cast<int>(v.get<std::int64_t>()));
  }
}

void merge_from_config(const json& value, const std::string& key,
                       std::vector<std::string>& out) {
  if (!value.is_array()) bad_key(key, "an array of strings");
  out.clear();
  for (const auto& v : value) {
    if (!v.is_string()) bad_key(key, "an array of strings");
    out.push_back(v.get<std::string>());
  }
}

// Applies the merge rule for one setting: a flag given on the command line
// wins; otherwise a config-file value replaces the built-in default.
template <typename T>
void merge(const CLI::App& cmd, const json& config, const std::string& flag,
           const std::string& key, T& out) {
  if (cmd.count(flag) > 0) return;
  auto it = config.find(key);
  if (it == config.end() || it->is_null()) return;
  merge_from_config(*it, key, out);
}

// ---- domain validation (messages name the field) --------------------------

void require_domain(bool ok, const std::string& field, const char* domain) {
  if (!ok) throw UsageError("field \"" + field + "\" must be " + domain);
}

template <typename T>
T parse_enum(const std::string& value, const std::string& field,
             std::initializer_list<std::pair<const char*, T>> table) {
  for (const auto& [name, parsed] : table) {
    if (value == name) return parsed;
  }
  std::string allowed;
  for (const auto& [name, parsed] : table) {
    (void)parsed;
    if (!allowed.empty()) allowed += ", ";
    allowed += name;
  }
  throw UsageError("field \"" + field + "\" has unknown value \"" + value +
                   "\" (allowed: " + allowed + ")");
}

// ---- shared option bundles ------------------------------------------------

struct CommonOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out_dir = ".";

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config_path, "JSON config file; flags override its values");
    cmd.add_option("--seed", seed, "RNG seed (reruns with one seed are byte-identical)");
    cmd.add_option("--out", out_dir, "output directory (created if absent)");
  }

  json resolve(const CLI::App& cmd) {
    json config = config_path.empty() ? json::object() : load_config(config_path);
    merge(cmd, config, "--seed", "seed", seed);
    merge(cmd, config, "--out", "out", out_dir);
    return config;
  }

  std::string path(const std::string& filename) const {
    return (std::filesystem::path(out_dir) / filename).string();
  }

  void ensure_out_dir() const {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) {
      throw std::runtime_error(out_dir + ": cannot create output directory (" +
                               ec.message() + ")");
    }
  }
};

void write_manifest(const CommonOptions& common, const std::string& command,
                    std::vector<std::string> outputs) {
  const std::string manifest_path = common.path(command + "_manifest.json");
  outputs.push_back(manifest_path);
  write_text_file(manifest_path, manifest_json(command, common.seed, outputs));
}

// ---- forge ----------------------------------------------------------------

struct ForgeOptions {
  CommonOptions common;
  std::string input;
  std::string mode;  // probe mode name or "all"; empty when not probing
  bool quadruples = false;
  bool mix = false;
  double fraction = 0.25;
  double min_strength = 0.0;
  std::int64_t max_len = 1000000;
  bool single_turn_only = false;
};

int cmd_forge(ForgeOptions& opt, const CLI::App& cmd) {
  const json config = opt.common.resolve(cmd);
  merge(cmd, config, "--input", "input", opt.input);
  merge(cmd, config, "--mode", "mode", opt.mode);
  merge(cmd, config, "--quadruples", "quadruples", opt.quadruples);
  merge(cmd, config, "--mix", "mix", opt.mix);
  merge(cmd, config, "--fraction", "fraction", opt.fraction);
  merge(cmd, config, "--min-strength", "min_strength", opt.min_strength);
  merge(cmd, config, "--max-len", "max_len", opt.max_len);
  merge(cmd, config, "--single-turn-only", "single_turn_only", opt.single_turn_only);

  const int chosen_outputs = (opt.mode.empty() ? 0 : 1) + (opt.quadruples ? 1 : 0) +
                             (opt.mix ? 1 : 0);
  if (chosen_outputs != 1) {
    throw UsageError("forge needs exactly one of --mode, --quadruples, --mix");
  }
  if (opt.input.empty()) throw UsageError("field \"input\" must be a readable file path");
  require_domain(opt.fraction >= 0.0 && opt.fraction <= 1.0, "fraction", "in [0,1]");
  require_domain(opt.min_strength >= 0.0, "min_strength", ">= 0");
  require_domain(opt.max_len >= 0, "max_len", ">= 0");

  opt.common.ensure_out_dir();

  if (opt.mix) {
    const auto prompts = read_prompt_entries(opt.input);
    const auto mixed = mix_confidence_prompts(prompts, opt.fraction, opt.common.seed);
    std::size_t flagged = 0;
    for (const auto& entry : mixed) flagged += entry.has_confidence_query ? 1 : 0;
    const std::string out_path = opt.common.path("prompt_mix.jsonl");
    write_prompt_mix(out_path, mixed);
    write_manifest(opt.common, "forge", {out_path});
    std::cout << "forge: read " << prompts.size() << " prompts, flagged " << flagged
              << " with the confidence query -> " << out_path << "\n";
    return 0;
  }

  const auto pairs = read_pairs(opt.input);
  const auto kept =
      filter_pairs(pairs, opt.min_strength, opt.max_len, opt.single_turn_only);

  if (opt.quadruples) {
    const auto quads = make_quadruples(kept, opt.common.seed);
    const std::string out_path = opt.common.path("quadruples.jsonl");
    write_quadruples(out_path, quads);
    write_manifest(opt.common, "forge", {out_path});
    std::cout << "forge: read " << pairs.size() << " pairs, kept " << kept.size()
              << ", wrote " << quads.size() << " quadruples -> " << out_path << "\n";
    return 0;
  }

  std::vector<ProbeMode> modes;
  if (opt.mode == "all") {
    modes = {ProbeMode::AnswerOnly, ProbeMode::ConfidenceReversed,
             ProbeMode::ChosenWithConf, ProbeMode::RejectedWithConf};
  } else {
    const auto parsed = probe_mode_from_string(opt.mode);
    if (!parsed) {
      throw UsageError("field \"mode\" has unknown value \"" + opt.mode +
                       "\" (allowed: answer_only, confidence_reversed, "
                       "chosen_with_conf, rejected_with_conf, all)");
    }
    modes = {*parsed};
  }
  std::vector<ProbeItem> items;
  for (ProbeMode mode : modes) {
    auto batch = make_probe_items(kept, mode, opt.common.seed);
    items.insert(items.end(), std::make_move_iterator(batch.begin()),
                 std::make_move_iterator(batch.end()));
  }
  const std::string out_path = opt.common.path("probe_items.jsonl");
  write_probe_items(out_path, items);
  write_manifest(opt.common, "forge", {out_path});
  std::cout << "forge: read " << pairs.size() << " pairs, kept " << kept.size()
            << ", wrote " << items.size() << " probe items -> " << out_path << "\n";
  return 0;
}

// ---- probe ----------------------------------------------------------------

struct ProbeCmdOptions {
  CommonOptions common;
  std::string input;
  std::string binding = "toy";
  std::string scorer_path;
  double bias_b = 1.0;
  std::string endpoint;
  double timeout = 5.0;
  std::int64_t max_retries = 2;
  std::int64_t parallelism = 0;
};

int cmd_probe(ProbeCmdOptions& opt, const CLI::App& cmd) {
  const json config = opt.common.resolve(cmd);
  merge(cmd, config, "--input", "input", opt.input);
  merge(cmd, config, "--binding", "binding", opt.binding);
  merge(cmd, config, "--scorer", "scorer", opt.scorer_path);
  merge(cmd, config, "--bias-b", "bias_b", opt.bias_b);
  merge(cmd, config, "--endpoint", "endpoint", opt.endpoint);
  merge(cmd, config, "--timeout", "timeout", opt.timeout);
  merge(cmd, config, "--max-retries", "max_retries", opt.max_retries);
  merge(cmd, config, "--parallelism", "parallelism", opt.parallelism);

  if (opt.input.empty()) throw UsageError("field \"input\" must be a readable file path");
  require_domain(opt.timeout > 0.0, "timeout", "> 0");
  require_domain(opt.max_retries >= 0, "max_retries", ">= 0");
  require_domain(opt.parallelism >= 0, "parallelism", ">= 0");

  ScorerBinding binding;
  if (opt.binding == "toy") {
    binding = ScorerBinding::toy(opt.scorer_path.empty()
                                     ? DifferentiableScorer::linear_biased(opt.bias_b)
                                     : read_scorer(opt.scorer_path));
  } else if (opt.binding == "remote") {
    if (opt.endpoint.empty()) {
      throw UsageError("field \"endpoint\" must be set for the remote binding");
    }
    binding = ScorerBinding::remote(
        RemoteEndpoint{opt.endpoint, opt.timeout, static_cast<int>(opt.max_retries)});
  } else {
    throw UsageError("field \"binding\" has unknown value \"" + opt.binding +
                     "\" (allowed: toy, remote)");
  }

  const auto items = read_probe_items(opt.input);
  ProbeOptions probe_options;
  probe_options.parallelism = static_cast<int>(opt.parallelism);
  const auto stats = run_probe(binding, items, probe_options);

  opt.common.ensure_out_dir();
  const std::string stats_path = opt.common.path("probe_stats.json");
  const std::string csv_path = opt.common.path("probe_per_item.csv");
  write_text_file(stats_path, probe_stats_to_json(stats));
  write_text_file(csv_path, probe_items_csv(stats));
  write_manifest(opt.common, "probe", {stats_path, csv_path});
  for (const auto& stat : stats) {
    std::cout << "probe " << to_string(stat.mode)
              << ": expected_winner_rate=" << format_double(stat.expected_winner_rate)
              << " mean_margin=" << format_double(stat.mean_margin) << " ("
              << stat.n_items << " items, " << stat.n_failed << " failed)\n";
  }
  return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainOptions {
  CommonOptions common;
  std::string loss = "pref";
  std::string pairs_path;
  std::string quadruples_path;
  std::string init_scorer;
  std::string architecture = "linear";
  std::vector<int> hidden = {8};
  double bias_b = 0.0;
  double learning_rate = 1e-2;
  std::int64_t steps = 100;
  bool cosine_decay = false;
  double beta = 0.01;
  double cdpo_w = 1.0;
};

FeatureVector response_features(double quality, const std::string& response) {
  const ParsedResponse parsed = parse_confidence(response);
  return FeatureVector{quality, parsed.confidence().value_or(0.0)};
}

double require_quality(const std::optional<double>& quality, const std::string& id,
                       const char* field) {
  if (!quality) {
    throw std::runtime_error("item \"" + id + "\" lacks the \"" + field +
                             "\" label needed to build scorer features");
  }
  if (!(*quality >= 0.0 && *quality <= 1.0)) {
    throw std::runtime_error("item \"" + id + "\": field \"" + field +
                             "\" must lie in [0,1]");
  }
  return *quality;
}

std::vector<PreferenceExample> pairs_to_examples(std::span<const PreferencePair> pairs) {
  std::vector<PreferenceExample> examples;
  examples.reserve(pairs.size());
  for (const auto& pair : pairs) {
    PreferenceExample ex;
    ex.chosen = response_features(
        require_quality(pair.chosen_score, pair.id, "chosen_score"), pair.chosen);
    ex.rejected = response_features(
        require_quality(pair.rejected_score, pair.id, "rejected_score"), pair.rejected);
    examples.push_back(ex);
  }
  return examples;
}

std::vector<QuadrupleExample> quadruples_to_examples(
    std::span<const CalibrationQuadruple> quadruples) {
  std::vector<QuadrupleExample> examples;
  examples.reserve(quadruples.size());
  for (const auto& quad : quadruples) {
    const double q_c = require_quality(quad.quality_chosen, quad.id, "quality_chosen");
    const double q_r = require_quality(quad.quality_rejected, quad.id, "quality_rejected");
    QuadrupleExample ex;
    ex.chosen_high = FeatureVector{q_c, quad.h_c / 10.0};
    ex.chosen_low = FeatureVector{q_c, quad.l_c / 10.0};
    ex.rejected_high = FeatureVector{q_r, quad.h_r / 10.0};
    ex.rejected_low = FeatureVector{q_r, quad.l_r / 10.0};
    examples.push_back(ex);
  }
  return examples;
}

// The confidence-free base comparison underlying each quadruple: chosen vs
// rejected at their quality labels, zero confidence feature.
std::vector<PreferenceExample> quadruples_to_base_pairs(
    std::span<const CalibrationQuadruple> quadruples) {
  std::vector<PreferenceExample> examples;
  examples.reserve(quadruples.size());
  for (const auto& quad : quadruples) {
    PreferenceExample ex;
    ex.chosen =
        FeatureVector{require_quality(quad.quality_chosen, quad.id, "quality_chosen"), 0.0};
    ex.rejected = FeatureVector{
        require_quality(quad.quality_rejected, quad.id, "quality_rejected"), 0.0};
    examples.push_back(ex);
  }
  return examples;
}

int cmd_train(TrainOptions& opt, const CLI::App& cmd) {
  const json config = opt.common.resolve(cmd);
  merge(cmd, config, "--loss", "loss", opt.loss);
  merge(cmd, config, "--pairs", "pairs", opt.pairs_path);
  merge(cmd, config, "--quadruples", "quadruples", opt.quadruples_path);
  merge(cmd, config, "--init-scorer", "init_scorer", opt.init_scorer);
  merge(cmd, config, "--architecture", "architecture", opt.architecture);
  merge(cmd, config, "--hidden", "hidden", opt.hidden);
  merge(cmd, config, "--bias-b", "bias_b", opt.bias_b);
  merge(cmd, config, "--learning-rate", "learning_rate", opt.learning_rate);
  merge(cmd, config, "--steps", "steps", opt.steps);
  merge(cmd, config, "--cosine-decay", "cosine_decay", opt.cosine_decay);
  merge(cmd, config, "--beta", "beta", opt.beta);
  merge(cmd, config, "--cdpo-w", "cdpo_w", opt.cdpo_w);

  require_domain(opt.learning_rate > 0.0, "learning_rate", "> 0");
  require_domain(opt.steps >= 0, "steps", ">= 0");
  require_domain(opt.beta > 0.0, "beta", "> 0");
  require_domain(opt.cdpo_w >= 0.0, "cdpo_w", ">= 0");
  for (int width : opt.hidden) require_domain(width >= 1, "hidden", "widths >= 1");

  FitOptions fit_options;
  fit_options.steps = static_cast<int>(opt.steps);
  fit_options.learning_rate = opt.learning_rate;
  fit_options.seed = opt.common.seed;
  fit_options.cosine_decay = opt.cosine_decay;

  opt.common.ensure_out_dir();

  if (opt.loss == "cdpo") {
    if (opt.quadruples_path.empty()) {
      throw UsageError("field \"quadruples\" must be set for the cdpo loss");
    }
    const auto quadruples = read_quadruples(opt.quadruples_path);
    if (quadruples.empty()) {
      throw std::runtime_error(opt.quadruples_path + ": no quadruples to train on");
    }
    // One prompt per quadruple; its candidate set is the six response variants
    // in a fixed slot order.
    CandidatePolicy policy(quadruples.size(), 6, opt.beta);
    std::vector<CdpoExample> examples(quadruples.size());
    for (std::size_t i = 0; i < quadruples.size(); ++i) {
      examples[i] = CdpoExample{i, 0, 1, 2, 3, 4, 5};
    }
    const auto trace = fit(
        policy.logits(),
        [&] { return cdpo_loss(policy, examples, opt.cdpo_w); }, fit_options);
    const std::string snapshot_path = opt.common.path("policy.json");
    const std::string trace_path = opt.common.path("loss_trace.csv");
    write_candidate_policy(snapshot_path, policy);
    write_text_file(trace_path, loss_trace_csv(trace));
    write_manifest(opt.common, "train", {snapshot_path, trace_path});
    std::cout << "train cdpo: " << examples.size() << " items, " << opt.steps
              << " steps, final loss "
              << format_double(trace.empty() ? cdpo_loss(policy, examples, opt.cdpo_w).value
                                             : trace.back())
              << " -> " << snapshot_path << "\n";
    return 0;
  }

  DifferentiableScorer scorer = [&] {
    if (!opt.init_scorer.empty()) return read_scorer(opt.init_scorer);
    const Architecture arch = parse_enum<Architecture>(
        opt.architecture, "architecture",
        {{"linear", Architecture::Linear}, {"mlp", Architecture::Mlp}});
    if (arch == Architecture::Mlp) {
      return DifferentiableScorer::mlp(opt.hidden, opt.common.seed);
    }
    return DifferentiableScorer::linear_biased(opt.bias_b);
  }();

  std::vector<PreferenceExample> pref_examples;
  std::vector<QuadrupleExample> quad_examples;
  std::size_t n_items = 0;
  std::function<LossValue()> evaluate;

  if (opt.loss == "pref") {
    if (opt.pairs_path.empty()) {
      throw UsageError("field \"pairs\" must be set for the pref loss");
    }
    pref_examples = pairs_to_examples(read_pairs(opt.pairs_path));
    if (pref_examples.empty()) {
      throw std::runtime_error(opt.pairs_path + ": no pairs to train on");
    }
    n_items = pref_examples.size();
    evaluate = [&] { return preference_loss(scorer, pref_examples); };
  } else if (opt.loss == "crm" || opt.loss == "crm+pref") {
    if (opt.quadruples_path.empty()) {
      throw UsageError("field \"quadruples\" must be set for the crm losses");
    }
    const auto quadruples = read_quadruples(opt.quadruples_path);
    if (quadruples.empty()) {
      throw std::runtime_error(opt.quadruples_path + ": no quadruples to train on");
    }
    quad_examples = quadruples_to_examples(quadruples);
    n_items = quad_examples.size();
    if (opt.loss == "crm+pref") {
      pref_examples = quadruples_to_base_pairs(quadruples);
      evaluate = [&] {
        LossValue crm = crm_loss(scorer, quad_examples);
        const LossValue pref = preference_loss(scorer, pref_examples);
        crm.value += pref.value;
        for (std::size_t p = 0; p < crm.gradient.size(); ++p) {
          crm.gradient[p] += pref.gradient[p];
        }
        return crm;
      };
    } else {
      evaluate = [&] { return crm_loss(scorer, quad_examples); };
    }
  } else {
    throw UsageError("field \"loss\" has unknown value \"" + opt.loss +
                     "\" (allowed: pref, crm, cdpo, crm+pref)");
  }

  const auto trace = fit(scorer.parameters(), evaluate, fit_options);
  const std::string snapshot_path = opt.common.path("scorer.json");
  const std::string trace_path = opt.common.path("loss_trace.csv");
  write_scorer(snapshot_path, scorer);
  write_text_file(trace_path, loss_trace_csv(trace));
  write_manifest(opt.common, "train", {snapshot_path, trace_path});
  std::cout << "train " << opt.loss << ": " << n_items << " items, " << opt.steps
            << " steps, final loss "
            << format_double(trace.empty() ? evaluate().value : trace.back()) << " -> "
            << snapshot_path << "\n";
  return 0;
}

// ---- simulate -------------------------------------------------------------

struct SimulateOptions {
  CommonOptions common;
  std::vector<std::string> methods = {"vanilla"};
  std::int64_t n_archetypes = 5;
  std::vector<double> accuracies = {0.2, 0.35, 0.5, 0.65, 0.8};
  std::string quality_model = "binary";
  double graded_noise = 0.0;
  std::int64_t episodes_per_batch = 512;
  std::int64_t n_batches = 200;
  double bias_b = 1.0;
  double clip_epsilon = 0.2;
  double learning_rate = 2.0;
  double kl_coefficient = 0.01;
  std::string variant = "difference";
  double w = 0.0;  // 0 means "variant default" (2.0 difference / 0.5 threshold)
  double alpha = 0.1;
  std::string scorer_path;
  std::int64_t n_bins = 10;
};

int cmd_simulate(SimulateOptions& opt, const CLI::App& cmd) {
  const json config = opt.common.resolve(cmd);
  merge(cmd, config, "--method", "method", opt.methods);
  merge(cmd, config, "--n-archetypes", "n_archetypes", opt.n_archetypes);
  merge(cmd, config, "--accuracies", "accuracies", opt.accuracies);
  merge(cmd, config, "--quality-model", "quality_model", opt.quality_model);
  merge(cmd, config, "--graded-noise", "graded_noise", opt.graded_noise);
  merge(cmd, config, "--episodes-per-batch", "episodes_per_batch",
        opt.episodes_per_batch);
  merge(cmd, config, "--n-batches", "n_batches", opt.n_batches);
  merge(cmd, config, "--bias-b", "bias_b", opt.bias_b);
  merge(cmd, config, "--clip-epsilon", "clip_epsilon", opt.clip_epsilon);
  merge(cmd, config, "--learning-rate", "learning_rate", opt.learning_rate);
  merge(cmd, config, "--kl-coefficient", "kl_coefficient", opt.kl_coefficient);
  merge(cmd, config, "--variant", "variant", opt.variant);
  merge(cmd, config, "--w", "w", opt.w);
  merge(cmd, config, "--alpha", "alpha", opt.alpha);
  merge(cmd, config, "--scorer", "scorer", opt.scorer_path);
  merge(cmd, config, "--n-bins", "n_bins", opt.n_bins);

  if (opt.methods.empty()) throw UsageError("field \"method\" must name at least one method");
  require_domain(opt.n_archetypes >= 1, "n_archetypes", ">= 1");
  require_domain(opt.accuracies.size() == static_cast<std::size_t>(opt.n_archetypes),
                 "accuracies", "one value per archetype");
  for (double p : opt.accuracies) {
    require_domain(p > 0.0 && p < 1.0, "accuracies", "each in (0,1)");
  }
  require_domain(opt.graded_noise >= 0.0 && opt.graded_noise <= 1.0, "graded_noise",
                 "in [0,1]");
  require_domain(opt.episodes_per_batch >= 1, "episodes_per_batch", ">= 1");
  require_domain(opt.n_batches >= 1, "n_batches", ">= 1");
  require_domain(opt.clip_epsilon > 0.0 && opt.clip_epsilon < 1.0, "clip_epsilon",
                 "in (0,1)");
  require_domain(opt.learning_rate > 0.0, "learning_rate", "> 0");
  require_domain(opt.kl_coefficient >= 0.0, "kl_coefficient", ">= 0");
  require_domain(opt.alpha >= 0.0 && opt.alpha <= 1.0, "alpha", "in [0,1]");
  require_domain(opt.w >= 0.0, "w", "> 0 (or 0 for the variant default)");
  require_domain(opt.n_bins >= 1, "n_bins", ">= 1");

  EnvironmentSpec env;
  env.n_archetypes = static_cast<int>(opt.n_archetypes);
  env.accuracies = opt.accuracies;
  env.quality_model = parse_enum<QualityModel>(
      opt.quality_model, "quality_model",
      {{"binary", QualityModel::Binary}, {"graded", QualityModel::Graded}});
  env.graded_noise = opt.graded_noise;
  env.episodes_per_batch = static_cast<int>(opt.episodes_per_batch);
  env.seed = opt.common.seed;

  ShapingConfig shaping;
  shaping.variant = parse_enum<ShapingVariant>(
      opt.variant, "variant",
      {{"difference", ShapingVariant::Difference}, {"threshold", ShapingVariant::Threshold}});
  shaping.w = opt.w > 0.0 ? opt.w : ShapingConfig::default_w(shaping.variant);
  shaping.alpha = opt.alpha;

  std::vector<std::pair<SimMethod, RunReport>> reports;
  std::vector<std::string> outputs;
  opt.common.ensure_out_dir();
  for (const auto& name : opt.methods) {
    const SimMethod method = parse_enum<SimMethod>(
        name, "method",
        {{"vanilla", SimMethod::Vanilla}, {"ppoc", SimMethod::PpoC}, {"ppom", SimMethod::PpoM}});
    TrainerConfig trainer;
    trainer.method = method;
    trainer.shaping = shaping;
    trainer.bias_b = opt.bias_b;
    trainer.clip_epsilon = opt.clip_epsilon;
    trainer.learning_rate = opt.learning_rate;
    trainer.kl_coefficient = opt.kl_coefficient;
    trainer.n_batches = static_cast<int>(opt.n_batches);
    trainer.seed = opt.common.seed;
    if (method == SimMethod::PpoM) {
      if (opt.scorer_path.empty()) {
        throw UsageError("field \"scorer\" must point to calibrated scorer parameters "
                         "for the ppom method");
      }
      trainer.calibrated_scorer = read_scorer(opt.scorer_path);
    }
    RunReport report = simulate(env, trainer, static_cast<int>(opt.n_bins));
    const std::string report_path =
        opt.common.path(std::string("run_") + to_string(method) + ".json");
    const std::string series_path =
        opt.common.path(std::string("series_") + to_string(method) + ".csv");
    write_text_file(report_path, run_report_to_json(report));
    write_text_file(series_path, run_series_csv(report));
    outputs.push_back(report_path);
    outputs.push_back(series_path);
    reports.emplace_back(method, std::move(report));
  }
  write_manifest(opt.common, "simulate", outputs);
  for (const auto& [method, report] : reports) {
    std::cout << "simulate " << to_string(method)
              << ": final ece=" << format_double(report.final_report.ece)
              << " accuracy=" << format_double(report.final_report.accuracy) << "\n";
  }
  return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalOptions {
  CommonOptions common;
  std::string input;
  std::int64_t n_bins = 10;
  std::string default_rule = "most-frequent";
  double fixed_value = 5.0;
  bool no_clamp = false;
};

int cmd_eval(EvalOptions& opt, const CLI::App& cmd) {
  const json config = opt.common.resolve(cmd);
  merge(cmd, config, "--input", "input", opt.input);
  merge(cmd, config, "--n-bins", "n_bins", opt.n_bins);
  merge(cmd, config, "--default-rule", "default_rule", opt.default_rule);
  merge(cmd, config, "--fixed-value", "fixed_value", opt.fixed_value);
  if (cmd.count("--no-clamp") == 0) {
    if (auto it = config.find("clamp_out_of_range"); it != config.end()) {
      bool clamp = true;
      merge_from_config(*it, "clamp_out_of_range", clamp);
      opt.no_clamp = !clamp;
    }
  }

  if (opt.input.empty()) throw UsageError("field \"input\" must be a readable file path");
  require_domain(opt.n_bins >= 1, "n_bins", ">= 1");
  require_domain(opt.fixed_value >= 0.0 && opt.fixed_value <= 10.0, "fixed_value",
                 "in [0,10]");

  ParsePolicy policy;
  policy.default_rule = parse_enum<DefaultRule>(
      opt.default_rule, "default_rule",
      {{"most-frequent", DefaultRule::MostFrequentObserved},
       {"fixed", DefaultRule::FixedValue}});
  policy.fixed_value = opt.fixed_value;
  policy.clamp_out_of_range = !opt.no_clamp;

  const auto entries = read_response_log(opt.input);
  if (entries.empty()) throw std::runtime_error(opt.input + ": response log is empty");

  std::vector<ParsedResponse> parsed;
  parsed.reserve(entries.size());
  for (const auto& entry : entries) parsed.push_back(parse_confidence(entry.response, policy));
  parsed = apply_default(std::move(parsed), policy);

  std::vector<ConfidenceSample> samples;
  samples.reserve(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    bool correct;
    if (entries[i].correct) {
      correct = *entries[i].correct;
    } else if (entries[i].gold) {
      correct = answers_match(parsed[i].answer, *entries[i].gold);
    } else {
      throw std::runtime_error("entry \"" + entries[i].id +
                               "\" carries neither \"correct\" nor \"gold\"");
    }
    samples.push_back(ConfidenceSample{parsed[i].confidence().value_or(0.5), correct});
  }

  const ReliabilityReport report =
      reliability_report(samples, static_cast<int>(opt.n_bins));
  opt.common.ensure_out_dir();
  const std::string report_path = opt.common.path("reliability.json");
  const std::string csv_path = opt.common.path("reliability_bins.csv");
  write_text_file(report_path, reliability_to_json(report));
  write_text_file(csv_path, reliability_bins_csv(report));
  write_manifest(opt.common, "eval", {report_path, csv_path});
  std::cout << "eval: n=" << report.n_samples << " ece=" << format_double(report.ece)
            << " accuracy=" << format_double(report.accuracy) << " auroc="
            << (report.auroc ? format_double(*report.auroc) : std::string("undefined"))
            << "\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{
      "Reward-calibration toolkit: probe reward scorers for verbalized-confidence "
      "bias, build calibration datasets, train calibrated ranking losses, and run "
      "a desk-scale RLHF confidence simulator."};
  app.require_subcommand(1);
  app.fallthrough(false);

  ForgeOptions forge_opt;
  CLI::App* forge_cmd = app.add_subcommand(
      "forge", "derive probe items, calibration quadruples, or a prompt mixture "
               "from a preference-pair JSONL file");
  forge_opt.common.attach(*forge_cmd);
  forge_cmd->add_option("--input", forge_opt.input, "input JSONL (pairs, or prompts for --mix)");
  forge_cmd->add_option("--mode", forge_opt.mode,
                        "probe mode to emit: answer_only, confidence_reversed, "
                        "chosen_with_conf, rejected_with_conf, all");
  forge_cmd->add_flag("--quadruples", forge_opt.quadruples,
                      "emit calibration quadruples instead of probe items");
  forge_cmd->add_flag("--mix", forge_opt.mix,
                      "emit a prompt mixture with a confidence-query fraction");
  forge_cmd->add_option("--fraction", forge_opt.fraction,
                        "fraction of single-turn prompts given the confidence query");
  forge_cmd->add_option("--min-strength", forge_opt.min_strength,
                        "minimum chosen-minus-rejected score to keep a pair");
  forge_cmd->add_option("--max-len", forge_opt.max_len,
                        "maximum whitespace-token count of prompt+chosen+rejected");
  forge_cmd->add_flag("--single-turn-only", forge_opt.single_turn_only,
                      "drop multi-turn pairs before forging");

  ProbeCmdOptions probe_opt;
  CLI::App* probe_cmd = app.add_subcommand(
      "probe", "score probe items with a toy or remote scorer and report "
               "per-mode expected-winner rates");
  probe_opt.common.attach(*probe_cmd);
  probe_cmd->add_option("--input", probe_opt.input, "probe-item JSONL file");
  probe_cmd->add_option("--binding", probe_opt.binding, "scorer binding: toy or remote");
  probe_cmd->add_option("--scorer", probe_opt.scorer_path,
                        "scorer snapshot JSON for the toy binding");
  probe_cmd->add_option("--bias-b", probe_opt.bias_b,
                        "confidence-bias coefficient of the default toy scorer");
  probe_cmd->add_option("--endpoint", probe_opt.endpoint,
                        "http://host[:port][/path] scoring endpoint (remote binding)");
  probe_cmd->add_option("--timeout", probe_opt.timeout, "remote timeout in seconds");
  probe_cmd->add_option("--max-retries", probe_opt.max_retries,
                        "extra attempts per item after the first failure");
  probe_cmd->add_option("--parallelism", probe_opt.parallelism,
                        "scoring concurrency; 0 = library default");

  TrainOptions train_opt;
  CLI::App* train_cmd = app.add_subcommand(
      "train", "fit a scorer (or candidate policy) with a ranking loss and emit "
               "its parameter snapshot plus loss trace");
  train_opt.common.attach(*train_cmd);
  train_cmd->add_option("--loss", train_opt.loss,
                        "training loss: pref, crm, cdpo, crm+pref");
  train_cmd->add_option("--pairs", train_opt.pairs_path, "preference-pair JSONL (pref)");
  train_cmd->add_option("--quadruples", train_opt.quadruples_path,
                        "calibration-quadruple JSONL (crm, cdpo, crm+pref)");
  train_cmd->add_option("--init-scorer", train_opt.init_scorer,
                        "scorer snapshot to start from (overrides --architecture)");
  train_cmd->add_option("--architecture", train_opt.architecture,
                        "fresh scorer architecture: linear or mlp");
  train_cmd->add_option("--hidden", train_opt.hidden, "mlp hidden layer widths");
  train_cmd->add_option("--bias-b", train_opt.bias_b,
                        "confidence-bias coefficient of the fresh linear scorer");
  train_cmd->add_option("--learning-rate", train_opt.learning_rate, "Adam step size");
  train_cmd->add_option("--steps", train_opt.steps, "number of optimization steps");
  train_cmd->add_flag("--cosine-decay", train_opt.cosine_decay,
                      "decay the learning rate on a half cosine");
  train_cmd->add_option("--beta", train_opt.beta,
                        "implicit-reward temperature of the candidate policy (cdpo)");
  train_cmd->add_option("--cdpo-w", train_opt.cdpo_w,
                        "weight of the calibration terms in the cdpo loss");

  SimulateOptions simulate_opt;
  CLI::App* simulate_cmd = app.add_subcommand(
      "simulate", "run the desk-scale RLHF confidence simulator and emit run "
                  "reports plus per-batch series");
  simulate_opt.common.attach(*simulate_cmd);
  simulate_cmd->add_option("--method", simulate_opt.methods,
                           "methods to run (repeatable): vanilla, ppoc, ppom");
  simulate_cmd->add_option("--n-archetypes", simulate_opt.n_archetypes,
                           "number of answer archetypes");
  simulate_cmd->add_option("--accuracies", simulate_opt.accuracies,
                           "per-archetype correctness probabilities, each in (0,1)");
  simulate_cmd->add_option("--quality-model", simulate_opt.quality_model,
                           "episode quality model: binary or graded");
  simulate_cmd->add_option("--graded-noise", simulate_opt.graded_noise,
                           "noise width of the graded quality model, in [0,1]");
  simulate_cmd->add_option("--episodes-per-batch", simulate_opt.episodes_per_batch,
                           "episodes per training batch");
  simulate_cmd->add_option("--n-batches", simulate_opt.n_batches, "training batches");
  simulate_cmd->add_option("--bias-b", simulate_opt.bias_b,
                           "confidence-bias coefficient of the vanilla reward");
  simulate_cmd->add_option("--clip-epsilon", simulate_opt.clip_epsilon,
                           "PPO clip radius, in (0,1)");
  simulate_cmd->add_option("--learning-rate", simulate_opt.learning_rate,
                           "policy-logit ascent step size");
  simulate_cmd->add_option("--kl-coefficient", simulate_opt.kl_coefficient,
                           "KL penalty coefficient against the batch snapshot");
  simulate_cmd->add_option("--variant", simulate_opt.variant,
                           "reward-shaping variant for ppoc: difference or threshold");
  simulate_cmd->add_option("--w", simulate_opt.w,
                           "shaping coefficient (default: 2.0 difference, 0.5 threshold)");
  simulate_cmd->add_option("--alpha", simulate_opt.alpha,
                           "EMA decay of the shaping reference, in [0,1]");
  simulate_cmd->add_option("--scorer", simulate_opt.scorer_path,
                           "calibrated scorer snapshot (required for ppom)");
  simulate_cmd->add_option("--n-bins", simulate_opt.n_bins, "calibration bins");

  EvalOptions eval_opt;
  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "parse verbalized confidences out of a response log and report "
              "calibration metrics");
  eval_opt.common.attach(*eval_cmd);
  eval_cmd->add_option("--input", eval_opt.input, "response-log JSONL file");
  eval_cmd->add_option("--n-bins", eval_opt.n_bins, "calibration bins");
  eval_cmd->add_option("--default-rule", eval_opt.default_rule,
                       "fill rule for missing confidences: most-frequent or fixed");
  eval_cmd->add_option("--fixed-value", eval_opt.fixed_value,
                       "fill value on the 0..10 scale for --default-rule fixed");
  eval_cmd->add_flag("--no-clamp", eval_opt.no_clamp,
                     "treat out-of-range confidences as missing instead of clamping");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (forge_cmd->parsed()) return cmd_forge(forge_opt, *forge_cmd);
    if (probe_cmd->parsed()) return cmd_probe(probe_opt, *probe_cmd);
    if (train_cmd->parsed()) return cmd_train(train_opt, *train_cmd);
    if (simulate_cmd->parsed()) return cmd_simulate(simulate_opt, *simulate_cmd);
    if (eval_cmd->parsed()) return cmd_eval(eval_opt, *eval_cmd);
    std::cerr << "error: no subcommand selected\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace rcal::cli
