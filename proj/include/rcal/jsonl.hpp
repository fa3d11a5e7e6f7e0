#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rcal/confidence.hpp"
#include "rcal/forge.hpp"
#include "rcal/metrics.hpp"
#include "rcal/probe.hpp"
#include "rcal/scorer.hpp"
#include "rcal/sim.hpp"

// File I/O for every artifact the pipeline produces or consumes:
//   - JSONL datasets (one object per line): preference pairs, probe items,
//     calibration quadruples, prompt mixtures, response logs;
//   - JSON snapshots: scorer parameters, candidate-policy parameters;
//   - JSON reports + CSV companions: reliability reports, probe statistics,
//     simulator run reports, loss traces, run manifests.
//
// Readers throw std::runtime_error whose message carries the file path and
// the 1-based line number of the offending line plus the field at fault.
// Writers are all-or-nothing: content is staged to "<path>.tmp" and renamed
// into place, so a failed write never leaves a partial file behind.
// Serialization is deterministic -- fixed key order, shortest round-trip
// number formatting -- which is what makes seeded reruns byte-identical.

namespace rcal {

// ---- JSONL datasets -------------------------------------------------------

std::vector<PreferencePair> read_pairs(const std::string& path);
void write_pairs(const std::string& path, std::span<const PreferencePair> pairs);

std::vector<ProbeItem> read_probe_items(const std::string& path);
void write_probe_items(const std::string& path, std::span<const ProbeItem> items);

std::vector<CalibrationQuadruple> read_quadruples(const std::string& path);
void write_quadruples(const std::string& path,
                      std::span<const CalibrationQuadruple> quadruples);

// {"prompt": text, "turns": positive int (default 1)} per line.
std::vector<PromptEntry> read_prompt_entries(const std::string& path);

std::vector<MixedPrompt> read_prompt_mix(const std::string& path);
void write_prompt_mix(const std::string& path, std::span<const MixedPrompt> prompts);

std::vector<ResponseLogEntry> read_response_log(const std::string& path);

// ---- Parameter snapshots --------------------------------------------------

// {"architecture": "linear"|"mlp", "hidden": [...] (mlp only), "theta": [...]}
std::string scorer_to_json(const DifferentiableScorer& scorer);
DifferentiableScorer scorer_from_json_text(const std::string& text,
                                           const std::string& context);
DifferentiableScorer read_scorer(const std::string& path);
void write_scorer(const std::string& path, const DifferentiableScorer& scorer);

// {"architecture": "candidate_policy", "beta", "n_prompts", "n_candidates",
//  "logits": [...], "reference_logits": [...]}
std::string candidate_policy_to_json(const CandidatePolicy& policy);
CandidatePolicy candidate_policy_from_json_text(const std::string& text,
                                                const std::string& context);
CandidatePolicy read_candidate_policy(const std::string& path);
void write_candidate_policy(const std::string& path, const CandidatePolicy& policy);

// ---- Reports --------------------------------------------------------------

std::string reliability_to_json(const ReliabilityReport& report);
// lower,upper,count,mean_confidence,mean_accuracy
std::string reliability_bins_csv(const ReliabilityReport& report);

std::string probe_stats_to_json(std::span<const ProbeStats> stats);
// mode,id,score_a,score_b,winner
std::string probe_items_csv(std::span<const ProbeStats> stats);

std::string run_report_to_json(const RunReport& report);
// batch,mean_reward,mean_confidence,ece,accuracy
std::string run_series_csv(const RunReport& report);

// step,loss
std::string loss_trace_csv(std::span<const double> losses);

// Provenance record emitted next to every randomized artifact: the command
// that produced it, the seed, the canonical system prompt's FNV-1a 64-bit
// hash, and the output files written.
std::string manifest_json(const std::string& command, std::uint64_t seed,
                          std::span<const std::string> outputs);

// ---- Plumbing -------------------------------------------------------------

// Stage-and-rename text write; throws std::runtime_error on failure.
void write_text_file(const std::string& path, const std::string& content);

std::string read_text_file(const std::string& path);

// Shortest round-trip decimal representation (the same one used inside the
// JSON and CSV emitters).
std::string format_double(double value);

}  // namespace rcal
