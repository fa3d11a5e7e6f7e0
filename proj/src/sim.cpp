#include "rcal/sim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "rcal/parallel.hpp"
#include "rcal/rng.hpp"

namespace rcal {
namespace {

constexpr std::uint64_t kCorrectnessStream = 0x636f7272ULL;  // "corr"
constexpr std::uint64_t kConfidenceStream = 0x636f6e66ULL;   // "conf"

void check_env(const EnvironmentSpec& env) {
  if (env.n_archetypes < 1) throw std::invalid_argument("sim: n_archetypes must be >= 1");
  if (env.accuracies.size() != static_cast<std::size_t>(env.n_archetypes)) {
    throw std::invalid_argument("sim: accuracies length must equal n_archetypes");
  }
  for (double p : env.accuracies) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("sim: accuracies must lie in (0,1)");
  }
  if (env.episodes_per_batch < 1) {
    throw std::invalid_argument("sim: episodes_per_batch must be >= 1");
  }
  if (env.quality_model == QualityModel::Graded &&
      !(env.graded_noise >= 0.0 && env.graded_noise <= 1.0)) {
    throw std::invalid_argument("sim: graded noise width must lie in [0,1]");
  }
}

Episode draw_episode(const EnvironmentSpec& env,
                     const std::vector<std::vector<double>>& bin_probs,
                     std::uint64_t batch_index, std::size_t i) {
  Episode ep;
  ep.archetype = static_cast<int>(i % static_cast<std::size_t>(env.n_archetypes));

  // Environment stream: correctness and quality noise.  Independent of the
  // policy so that matched-seed runs of different methods see identical
  // correctness sequences.
  Rng env_rng(env.seed, mix_key({kCorrectnessStream, batch_index}), i);
  ep.correct = env_rng.bernoulli(env.accuracies[static_cast<std::size_t>(ep.archetype)]);
  if (env.quality_model == QualityModel::Binary) {
    ep.quality = ep.correct ? 1.0 : 0.0;
  } else {
    const double u = env_rng.uniform();
    ep.quality = ep.correct ? 1.0 - u * env.graded_noise : 0.0;
  }

  // Policy stream: verbalized confidence bin.
  Rng bin_rng(env.seed, mix_key({kConfidenceStream, batch_index}), i);
  ep.confidence_bin = static_cast<int>(
      bin_rng.categorical(bin_probs[static_cast<std::size_t>(ep.archetype)]));
  return ep;
}

std::vector<std::vector<double>> all_bin_probs(const ConfidencePolicy& policy) {
  std::vector<std::vector<double>> probs;
  probs.reserve(static_cast<std::size_t>(policy.n_archetypes));
  for (int k = 0; k < policy.n_archetypes; ++k) probs.push_back(policy.probabilities(k));
  return probs;
}

}  // namespace

std::vector<double> ConfidencePolicy::probabilities(int archetype) const {
  if (archetype < 0 || archetype >= n_archetypes) {
    throw std::out_of_range("ConfidencePolicy: archetype out of range");
  }
  const std::size_t base = static_cast<std::size_t>(archetype) * kBins;
  double max_logit = logits[base];
  for (int j = 1; j < kBins; ++j) max_logit = std::max(max_logit, logits[base + j]);
  std::vector<double> probs(kBins);
  double sum = 0.0;
  for (int j = 0; j < kBins; ++j) {
    probs[static_cast<std::size_t>(j)] = std::exp(logits[base + j] - max_logit);
    sum += probs[static_cast<std::size_t>(j)];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

double ConfidencePolicy::mean_confidence(int archetype) const {
  const auto probs = probabilities(archetype);
  double mean = 0.0;
  for (int j = 0; j < kBins; ++j) mean += probs[static_cast<std::size_t>(j)] * (j / 10.0);
  return mean;
}

const char* to_string(SimMethod method) {
  switch (method) {
    case SimMethod::Vanilla: return "vanilla";
    case SimMethod::PpoC: return "ppoc";
    case SimMethod::PpoM: return "ppom";
  }
  return "vanilla";
}

std::vector<Episode> rollout(const EnvironmentSpec& env, const ConfidencePolicy& policy,
                             std::uint64_t batch_index) {
  check_env(env);
  const auto bin_probs = all_bin_probs(policy);
  std::vector<Episode> episodes(static_cast<std::size_t>(env.episodes_per_batch));
  parallel_for(episodes.size(), [&](std::size_t i) {
    episodes[i] = draw_episode(env, bin_probs, batch_index, i);
  });
  return episodes;
}

std::vector<Episode> rollout_serial(const EnvironmentSpec& env, const ConfidencePolicy& policy,
                                    std::uint64_t batch_index) {
  check_env(env);
  const auto bin_probs = all_bin_probs(policy);
  std::vector<Episode> episodes(static_cast<std::size_t>(env.episodes_per_batch));
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    episodes[i] = draw_episode(env, bin_probs, batch_index, i);
  }
  return episodes;
}

std::pair<std::vector<double>, EmaState> reward_pipeline(std::span<const Episode> episodes,
                                                         const TrainerConfig& config,
                                                         EmaState ema) {
  std::vector<double> rewards(episodes.size());
  switch (config.method) {
    case SimMethod::Vanilla:
      // Scores the full response, stated confidence included: the biased
      // reward in closed form.
      for (std::size_t i = 0; i < episodes.size(); ++i) {
        const double s = episodes[i].confidence_bin ? *episodes[i].confidence_bin / 10.0 : 0.0;
        rewards[i] = episodes[i].quality + config.bias_b * s;
      }
      return {std::move(rewards), ema};

    case SimMethod::PpoC: {
      // Confidence-stripped score, then shaped around the running reference.
      std::vector<std::optional<double>> confidences(episodes.size());
      for (std::size_t i = 0; i < episodes.size(); ++i) {
        rewards[i] = episodes[i].quality;
        if (episodes[i].confidence_bin) confidences[i] = *episodes[i].confidence_bin / 10.0;
      }
      auto [shaped, new_ema] = shape_batch(rewards, confidences, ema, config.shaping);
      return {std::move(shaped), new_ema};
    }

    case SimMethod::PpoM: {
      if (!config.calibrated_scorer) {
        throw std::invalid_argument("reward_pipeline: PpoM requires a calibrated scorer");
      }
      const DifferentiableScorer& scorer = *config.calibrated_scorer;
      for (std::size_t i = 0; i < episodes.size(); ++i) {
        const double s = episodes[i].confidence_bin ? *episodes[i].confidence_bin / 10.0 : 0.0;
        rewards[i] = scorer.score(FeatureVector{episodes[i].quality, s});
      }
      return {std::move(rewards), ema};
    }
  }
  throw std::logic_error("reward_pipeline: unknown method");
}

void ppo_step(ConfidencePolicy& policy, std::span<const Episode> episodes,
              std::span<const double> rewards, const TrainerConfig& config) {
  if (episodes.size() != rewards.size()) {
    throw std::invalid_argument("ppo_step: episodes and rewards differ in length");
  }
  if (episodes.empty()) return;
  if (!(config.clip_epsilon >= 0.0 && config.clip_epsilon < 1.0)) {
    throw std::invalid_argument("ppo_step: clip_epsilon must lie in [0,1)");
  }

  double mean_reward = 0.0;
  for (double r : rewards) mean_reward += r;
  mean_reward /= static_cast<double>(rewards.size());

  const auto snapshot_probs = all_bin_probs(policy);
  const double eps = config.clip_epsilon;
  const double n = static_cast<double>(episodes.size());

  std::vector<double> grad(policy.logits.size(), 0.0);
  for (std::size_t i = 0; i < episodes.size(); ++i) {
    if (!episodes[i].confidence_bin) continue;
    const double advantage = rewards[i] - mean_reward;
    // Probability ratio against the entry snapshot is exactly 1 for a single
    // step.  The clip test is boundary-inclusive: a degenerate trust region
    // (eps = 0) clips every episode and the surrogate gradient is zero.
    constexpr double ratio = 1.0;
    const bool clipped = (advantage > 0.0 && ratio >= 1.0 + eps) ||
                         (advantage < 0.0 && ratio <= 1.0 - eps);
    if (clipped || advantage == 0.0) continue;

    const auto k = static_cast<std::size_t>(episodes[i].archetype);
    const auto a = static_cast<std::size_t>(*episodes[i].confidence_bin);
    const std::size_t base = k * ConfidencePolicy::kBins;
    for (std::size_t j = 0; j < ConfidencePolicy::kBins; ++j) {
      const double indicator = j == a ? 1.0 : 0.0;
      grad[base + j] += advantage * (indicator - snapshot_probs[k][j]) / n;
    }
  }
  // The KL penalty against the entry snapshot has zero gradient at the
  // snapshot itself (it is minimized there), so a single-step update never
  // feels it; kl_coefficient is validated and carried for the objective's
  // definition, not consumed here.
  if (config.kl_coefficient < 0.0) {
    throw std::invalid_argument("ppo_step: kl_coefficient must be >= 0");
  }

  for (std::size_t p = 0; p < grad.size(); ++p) {
    const double updated = policy.logits[p] + config.learning_rate * grad[p];
    if (!std::isfinite(updated)) {
      throw std::runtime_error("ppo_step: non-finite logit update at index " + std::to_string(p));
    }
    policy.logits[p] = updated;
  }
}

std::vector<ConfidenceSample> confidence_samples(std::span<const Episode> episodes) {
  std::vector<ConfidenceSample> samples;
  samples.reserve(episodes.size());
  for (const auto& ep : episodes) {
    if (!ep.confidence_bin) continue;
    samples.push_back(ConfidenceSample{*ep.confidence_bin / 10.0, ep.correct});
  }
  return samples;
}

RunReport simulate(const EnvironmentSpec& env, const TrainerConfig& config, int n_bins) {
  check_env(env);
  if (config.n_batches < 1) throw std::invalid_argument("simulate: n_batches must be >= 1");
  if (!(config.clip_epsilon > 0.0 && config.clip_epsilon < 1.0)) {
    throw std::invalid_argument("simulate: clip_epsilon must lie in (0,1)");
  }
  if (!(config.learning_rate > 0.0)) {
    throw std::invalid_argument("simulate: learning_rate must be > 0");
  }
  if (config.method == SimMethod::PpoM && !config.calibrated_scorer) {
    throw std::invalid_argument("simulate: PpoM requires calibrated scorer parameters");
  }

  RunReport report;
  report.method = config.method;
  report.seed = config.seed;
  report.final_policy = ConfidencePolicy(env.n_archetypes);
  report.series.reserve(static_cast<std::size_t>(config.n_batches));

  ConfidencePolicy policy(env.n_archetypes);
  EmaState ema = EmaState::cold(config.shaping.alpha);

  for (int batch = 0; batch < config.n_batches; ++batch) {
    const auto episodes = rollout(env, policy, static_cast<std::uint64_t>(batch));
    auto [rewards, new_ema] = reward_pipeline(episodes, config, ema);
    ema = new_ema;

    BatchPoint point;
    double reward_sum = 0.0;
    for (double r : rewards) reward_sum += r;
    point.mean_reward = reward_sum / static_cast<double>(rewards.size());
    double conf_sum = 0.0;
    for (const auto& ep : episodes) {
      conf_sum += ep.confidence_bin ? *ep.confidence_bin / 10.0 : 0.5;
    }
    point.mean_confidence = conf_sum / static_cast<double>(episodes.size());
    const auto samples = confidence_samples(episodes);
    point.ece = ece(samples, n_bins);
    point.accuracy = accuracy(samples);
    report.series.push_back(point);

    ppo_step(policy, episodes, rewards, config);
  }

  // Fresh evaluation rollout so the report reflects the trained policy; its
  // correctness stream (batch index n_batches) is also method-independent.
  const auto eval_episodes =
      rollout(env, policy, static_cast<std::uint64_t>(config.n_batches));
  report.final_report = reliability_report(confidence_samples(eval_episodes), n_bins);
  report.final_policy = policy;
  return report;
}

}  // namespace rcal
