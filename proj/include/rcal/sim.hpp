#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "rcal/metrics.hpp"
#include "rcal/scorer.hpp"
#include "rcal/shaping.hpp"

// Desk-scale synthetic RLHF loop.  K answer archetypes with fixed accuracies
// p_k stand in for a task distribution; the policy controls only the
// verbalized confidence bin (0..10) it states per archetype.  Training the
// policy against a confidence-biased reward (quality + b * confidence)
// reproduces reward-hacked overconfidence; swapping in the shaped reward or a
// calibration-trained scorer removes it.  Correctness is environment-
// determined, so accuracy is identical across methods run under one seed --
// only the confidence behavior differs.

namespace rcal {

enum class QualityModel { Binary, Graded };

struct EnvironmentSpec {
  int n_archetypes = 5;
  std::vector<double> accuracies = {0.2, 0.35, 0.5, 0.65, 0.8};  // each in (0,1)
  QualityModel quality_model = QualityModel::Binary;
  double graded_noise = 0.0;  // quality = c * (1 - u * noise) under Graded
  int episodes_per_batch = 512;
  std::uint64_t seed = 0;
};

struct Episode {
  int archetype = 0;
  bool correct = false;
  std::optional<int> confidence_bin;  // 0..10; rollouts always set it
  double quality = 0.0;
};

// Tabular softmax policy: one row of 11 confidence-bin logits per archetype.
struct ConfidencePolicy {
  static constexpr int kBins = 11;

  explicit ConfidencePolicy(int n_archetypes_ = 1)
      : n_archetypes(n_archetypes_),
        logits(static_cast<std::size_t>(n_archetypes_) * kBins, 0.0) {}

  int n_archetypes = 1;
  std::vector<double> logits;  // flat, archetype-major

  std::vector<double> probabilities(int archetype) const;  // softmax row, sums to 1
  double mean_confidence(int archetype) const;             // sum_j pi_j * j/10
};

enum class SimMethod { Vanilla, PpoC, PpoM };

const char* to_string(SimMethod method);

struct TrainerConfig {
  SimMethod method = SimMethod::Vanilla;
  ShapingConfig shaping;  // PpoC reward adjustment + EMA decay
  std::optional<DifferentiableScorer> calibrated_scorer;  // required for PpoM
  double bias_b = 1.0;          // vanilla scorer's confidence-bias coefficient
  double clip_epsilon = 0.2;    // in (0,1) for valid configs
  double learning_rate = 2.0;   // plain ascent step size on the logits
  double kl_coefficient = 0.01; // >= 0
  int n_batches = 200;
  std::uint64_t seed = 0;
};

struct BatchPoint {
  double mean_reward = 0.0;
  double mean_confidence = 0.0;
  double ece = 0.0;
  double accuracy = 0.0;
};

struct RunReport {
  SimMethod method = SimMethod::Vanilla;
  std::uint64_t seed = 0;
  std::vector<BatchPoint> series;  // one point per batch
  ReliabilityReport final_report;  // from a fresh evaluation rollout
  ConfidencePolicy final_policy{1};
};

// One batch of episodes.  Episode i of batch t draws from its own counter-
// based streams keyed by (env.seed, t, i): a correctness/quality stream and a
// confidence-bin stream.  Policy changes never touch the correctness stream,
// which is what makes accuracy method-independent.  The OpenMP version fills
// episode slots in parallel; the serial twin is the reference loop.
std::vector<Episode> rollout(const EnvironmentSpec& env, const ConfidencePolicy& policy,
                             std::uint64_t batch_index);
std::vector<Episode> rollout_serial(const EnvironmentSpec& env, const ConfidencePolicy& policy,
                                    std::uint64_t batch_index);

// Per-episode scalar rewards under the configured method:
//   Vanilla: quality + bias_b * bin/10            (scores the full response)
//   PpoC:    quality, then shape_batch(...)       (EMA evolves, only here)
//   PpoM:    calibrated_scorer on (quality, bin/10)
std::pair<std::vector<double>, EmaState> reward_pipeline(std::span<const Episode> episodes,
                                                         const TrainerConfig& config,
                                                         EmaState ema);

// One gradient ascent step on the clipped-surrogate objective
//   mean_i min(rho_i * A_i, clip(rho_i, 1 +- eps) * A_i) - kl * KL(pi || pi_old)
// with A_i = reward_i - batch mean reward and rho_i the taken bin's
// probability ratio against the entry snapshot.  Evaluated at the snapshot,
// rho is 1 and the KL gradient vanishes, so the update is the advantage-
// weighted policy gradient -- unless the trust region is degenerate: the clip
// test is boundary-inclusive, so clip_epsilon = 0 clips everything and the
// surrogate update is exactly zero.
void ppo_step(ConfidencePolicy& policy, std::span<const Episode> episodes,
              std::span<const double> rewards, const TrainerConfig& config);

// n_batches iterations of rollout -> reward_pipeline -> ppo_step, then a final
// evaluation rollout for the reliability report.  Bit-deterministic for a
// given (env, config): all reductions run serially in index order.
RunReport simulate(const EnvironmentSpec& env, const TrainerConfig& config, int n_bins = 10);

// (bin/10, correct) calibration samples of a batch.
std::vector<ConfidenceSample> confidence_samples(std::span<const Episode> episodes);

}  // namespace rcal
