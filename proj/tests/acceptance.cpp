// Acceptance gate: ten end-to-end criteria, printed one PASS/FAIL line each,
// nonzero exit when any fail.  Run with --pin to print the measured values
// behind the frozen seeded-run regression targets; those were pinned once
// from a --pin run and are kept fixed thereafter.

#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "oracles.hpp"
#include "rcal/cli.hpp"
#include "rcal/forge.hpp"
#include "rcal/metrics.hpp"
#include "rcal/probe.hpp"
#include "rcal/rng.hpp"
#include "rcal/scorer.hpp"
#include "rcal/shaping.hpp"
#include "rcal/sim.hpp"

namespace {

bool g_pin = false;

// Regression targets for the seeded simulator runs (criteria 8 and 9),
// measured by this binary's --pin mode on the reference configuration.
constexpr double kPinnedVanillaEce = 0.51132812499999991;
constexpr double kPinnedVanillaAccuracy = 0.48828125;
constexpr double kPinnedVanillaMeanConfidence = 0.98339843750000011;
constexpr double kPinnedDifferenceEce = 0.22343749999999996;
constexpr double kPinnedCalibratedScorerEce = 0.26718749999999991;
constexpr double kPinnedThresholdEce = 0.2712890624999999;

struct Checker {
  bool ok = true;
  std::string detail;

  void expect(bool condition, const std::string& what) {
    if (condition) return;
    ok = false;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }

  void expect_near(double got, double want, double tol, const std::string& what) {
    if (std::fabs(got - want) <= tol) return;
    char buffer[192];
    std::snprintf(buffer, sizeof buffer, "%s: got %.17g, want %.17g (tol %g)",
                  what.c_str(), got, want, tol);
    expect(false, buffer);
  }
};

// ---- shared fixtures ------------------------------------------------------

// Pairs with a clearly good chosen response (quality 0.9) and a clearly bad
// rejected one (quality 0.1); ids sort in construction order.
std::vector<rcal::PreferencePair> synthetic_pairs(std::size_t n) {
  std::vector<rcal::PreferencePair> pairs(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "p%05zu", i);
    pairs[i].id = id;
    pairs[i].prompt = "Question " + std::to_string(i) + "?";
    pairs[i].chosen = "A correct answer " + std::to_string(i);
    pairs[i].rejected = "A wrong answer " + std::to_string(i);
    pairs[i].chosen_score = 0.9;
    pairs[i].rejected_score = 0.1;
  }
  return pairs;
}

std::vector<rcal::QuadrupleExample> quadruples_to_examples(
    const std::vector<rcal::CalibrationQuadruple>& quadruples) {
  std::vector<rcal::QuadrupleExample> examples;
  examples.reserve(quadruples.size());
  for (const auto& quad : quadruples) {
    const double q_c = *quad.quality_chosen;
    const double q_r = *quad.quality_rejected;
    examples.push_back({{q_c, quad.h_c / 10.0},
                        {q_c, quad.l_c / 10.0},
                        {q_r, quad.h_r / 10.0},
                        {q_r, quad.l_r / 10.0}});
  }
  return examples;
}

// The calibrated-scorer recipe shared by criteria 7 and 9: start from the
// confidence-biased linear scorer and fine-tune it on forged quadruples with
// the calibrated ranking loss.  Fully deterministic.
rcal::DifferentiableScorer train_calibrated_scorer() {
  const auto pairs = synthetic_pairs(2000);
  const auto examples = quadruples_to_examples(rcal::make_quadruples(pairs, 11));
  auto scorer = rcal::DifferentiableScorer::linear({1.0, 1.0, 0.0, 0.0});
  rcal::FitOptions options;
  options.steps = 500;
  options.learning_rate = 1e-2;
  rcal::fit(scorer.parameters(), [&] { return rcal::crm_loss(scorer, examples); },
            options);
  return scorer;
}

rcal::FeatureVector random_features(rcal::Rng& rng) {
  return {rng.uniform(), rng.uniform()};
}

// ---- criterion 1: reward adjustment ---------------------------------------

void criterion_shaping(Checker& c) {
  c.expect_near(rcal::adjust_reward_difference(1.0, 0.5, 1.0, 2.0), 1.5, 1e-12,
                "difference(1.0, 0.5, s=1, w=2)");
  c.expect_near(rcal::adjust_reward_difference(0.0, 0.5, 0.0, 2.0), 0.5, 1e-12,
                "difference(0.0, 0.5, s=0, w=2)");
  c.expect_near(rcal::adjust_reward_threshold(1.0, 0.5, 1.0, 0.5), 1.25, 1e-12,
                "threshold(1.0, 0.5, s=1, w=0.5)");
  c.expect_near(rcal::adjust_reward_threshold(-1.0, 0.5, 1.0, 0.5), -1.25, 1e-12,
                "threshold(-1.0, 0.5, s=1, w=0.5)");

  rcal::Rng rng(2024, 0x61636331);
  std::size_t broken = 0;
  for (int t = 0; t < 10000; ++t) {
    const double r_hat = rng.uniform() * 10.0 - 5.0;
    const double delta_r = rng.uniform() * 10.0 - 5.0;
    const double w = rng.uniform() * 4.0 + 1e-9;
    if (rcal::adjust_reward_difference(r_hat, delta_r, 0.5, w) != r_hat) ++broken;
    if (rcal::adjust_reward_threshold(r_hat, delta_r, 0.5, w) != r_hat) ++broken;
  }
  c.expect(broken == 0,
           "neutral confidence changed the reward in " + std::to_string(broken) +
               " of 20000 draws");
}

// ---- criterion 2: EMA reference -------------------------------------------

void criterion_ema(Checker& c) {
  c.expect(rcal::ema_update(rcal::EmaState::warmed(0.7, 1.0), 3.2).delta_r == 3.2,
           "alpha=1 must replace the reference with the batch mean");
  c.expect(rcal::ema_update(rcal::EmaState::warmed(0.7, 0.0), 123.0).delta_r == 0.7,
           "alpha=0 must freeze the reference");
  c.expect(rcal::ema_update(rcal::EmaState::warmed(0.0, 0.1), 1.0).delta_r == 0.1,
           "alpha=0.1 hand case 0 -> 0.1 must be exact");
  const rcal::EmaState seeded = rcal::ema_update(rcal::EmaState::cold(0.1), 2.5);
  c.expect(seeded.delta_r == 2.5 && seeded.initialized,
           "a cold state must seed itself with the first batch mean");

  rcal::Rng rng(2024, 0x61636332);
  std::size_t broken = 0;
  for (int t = 0; t < 10000; ++t) {
    const double old_ref = rng.uniform() * 20.0 - 10.0;
    const double mean = rng.uniform() * 20.0 - 10.0;
    const double alpha = rng.uniform();
    const double next =
        rcal::ema_update(rcal::EmaState::warmed(old_ref, alpha), mean).delta_r;
    const double lo = std::min(old_ref, mean);
    const double hi = std::max(old_ref, mean);
    if (!(next >= lo - 1e-12 && next <= hi + 1e-12)) ++broken;
  }
  c.expect(broken == 0, "EMA update left the [old, batch mean] interval " +
                            std::to_string(broken) + " times");
}

// ---- criterion 3: metrics vs oracles --------------------------------------

void criterion_metrics(Checker& c) {
  rcal::Rng rng(2024, 0x61636333);
  std::size_t ece_mismatches = 0;
  std::size_t auroc_mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(1, 20));
    const int n_bins = static_cast<int>(rng.uniform_int(1, 15));
    std::vector<rcal::ConfidenceSample> samples(n);
    for (auto& s : samples) {
      // Mix smooth draws with the 0..10 grid so exact ties and bin edges occur.
      s.confidence = rng.bernoulli(0.2)
                         ? static_cast<double>(rng.uniform_int(0, 10)) / 10.0
                         : rng.uniform();
      s.correct = rng.bernoulli(0.5);
    }
    if (std::fabs(rcal::ece(samples, n_bins) - oracle::ece(samples, n_bins)) > 1e-12) {
      ++ece_mismatches;
    }
    const auto got = rcal::auroc(samples);
    const auto want = oracle::auroc(samples);
    if (got.has_value() != want.has_value() ||
        (got && std::fabs(*got - *want) > 1e-12)) {
      ++auroc_mismatches;
    }
  }
  c.expect(ece_mismatches == 0, std::to_string(ece_mismatches) +
                                    " of 1000 sample sets disagreed with the "
                                    "brute-force calibration error");
  c.expect(auroc_mismatches == 0, std::to_string(auroc_mismatches) +
                                      " of 1000 sample sets disagreed with the "
                                      "pair-counting rank statistic");
}

// ---- criterion 4: gradient checks -----------------------------------------

void criterion_gradients(Checker& c) {
  rcal::Rng rng(2024, 0x61636334);

  auto make_scorer = [&](int t) {
    if (t % 2 == 0) {
      std::array<double, 4> theta;
      for (double& v : theta) v = rng.uniform() * 2.0 - 1.0;
      return rcal::DifferentiableScorer::linear(theta);
    }
    auto scorer = rcal::DifferentiableScorer::mlp({3}, 1000 + static_cast<unsigned>(t));
    for (double& p : scorer.parameters()) p += rng.uniform() * 0.5 - 0.25;
    return scorer;
  };

  double worst_pref = 0.0;
  for (int t = 0; t < 100; ++t) {
    auto scorer = make_scorer(t);
    std::vector<rcal::PreferenceExample> batch(1 + t % 8);
    for (auto& ex : batch) ex = {random_features(rng), random_features(rng)};
    const auto loss = rcal::preference_loss(scorer, batch);
    const auto fd = oracle::finite_difference(
        scorer.parameters(), [&] { return rcal::preference_loss(scorer, batch).value; });
    worst_pref = std::max(worst_pref, oracle::max_relative_error(loss.gradient, fd));
  }
  c.expect(worst_pref <= 1e-4, "preference-loss gradient error " +
                                   std::to_string(worst_pref) + " exceeds 1e-4");

  double worst_crm = 0.0;
  for (int t = 0; t < 100; ++t) {
    auto scorer = make_scorer(t);
    std::vector<rcal::QuadrupleExample> batch(1 + t % 8);
    for (auto& ex : batch) {
      ex = {random_features(rng), random_features(rng), random_features(rng),
            random_features(rng)};
    }
    const auto loss = rcal::crm_loss(scorer, batch);
    const auto fd = oracle::finite_difference(
        scorer.parameters(), [&] { return rcal::crm_loss(scorer, batch).value; });
    worst_crm = std::max(worst_crm, oracle::max_relative_error(loss.gradient, fd));
  }
  c.expect(worst_crm <= 1e-4, "calibrated-loss gradient error " +
                                  std::to_string(worst_crm) + " exceeds 1e-4");

  double worst_cdpo = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n_prompts = 3 + t % 3;
    rcal::CandidatePolicy policy(n_prompts, 6, 0.05);
    for (double& v : policy.logits()) v = rng.uniform() * 2.0 - 1.0;
    for (double& v : policy.reference_logits()) v = rng.uniform() * 2.0 - 1.0;
    std::vector<rcal::CdpoExample> batch(1 + t % 6);
    for (auto& ex : batch) {
      ex.prompt = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n_prompts) - 1));
      ex.chosen = static_cast<std::size_t>(rng.uniform_int(0, 5));
      ex.rejected = static_cast<std::size_t>(rng.uniform_int(0, 5));
      ex.chosen_high = static_cast<std::size_t>(rng.uniform_int(0, 5));
      ex.chosen_low = static_cast<std::size_t>(rng.uniform_int(0, 5));
      ex.rejected_high = static_cast<std::size_t>(rng.uniform_int(0, 5));
      ex.rejected_low = static_cast<std::size_t>(rng.uniform_int(0, 5));
    }
    const double w = rng.uniform() * 2.0;
    const auto loss = rcal::cdpo_loss(policy, batch, w);
    const auto fd = oracle::finite_difference(
        policy.logits(), [&] { return rcal::cdpo_loss(policy, batch, w).value; });
    worst_cdpo = std::max(worst_cdpo, oracle::max_relative_error(loss.gradient, fd));
  }
  c.expect(worst_cdpo <= 1e-4, "policy-loss gradient error " +
                                   std::to_string(worst_cdpo) + " exceeds 1e-4");
}

// ---- criterion 5: anchors, symmetry, reduction ----------------------------

void criterion_anchors(Checker& c) {
  rcal::Rng rng(2024, 0x61636335);
  const double ln2 = std::log(2.0);

  const auto zero = rcal::DifferentiableScorer::linear({0.0, 0.0, 0.0, 0.0});
  std::vector<rcal::PreferenceExample> pref_batch(32);
  for (auto& ex : pref_batch) ex = {random_features(rng), random_features(rng)};
  c.expect_near(rcal::preference_loss(zero, pref_batch).value, ln2, 1e-12,
                "zero scorer preference loss");

  std::vector<rcal::QuadrupleExample> quad_batch(32);
  for (auto& ex : quad_batch) {
    ex = {random_features(rng), random_features(rng), random_features(rng),
          random_features(rng)};
  }
  c.expect_near(rcal::crm_loss(zero, quad_batch).value, 2.0 * ln2, 1e-12,
                "zero scorer calibrated loss");

  rcal::CandidatePolicy uniform(4, 6, 0.01);
  std::vector<rcal::CdpoExample> cdpo_batch(8);
  for (auto& ex : cdpo_batch) {
    ex.prompt = static_cast<std::size_t>(rng.uniform_int(0, 3));
    ex.chosen = static_cast<std::size_t>(rng.uniform_int(0, 5));
    ex.rejected = static_cast<std::size_t>(rng.uniform_int(0, 5));
    ex.chosen_high = static_cast<std::size_t>(rng.uniform_int(0, 5));
    ex.chosen_low = static_cast<std::size_t>(rng.uniform_int(0, 5));
    ex.rejected_high = static_cast<std::size_t>(rng.uniform_int(0, 5));
    ex.rejected_low = static_cast<std::size_t>(rng.uniform_int(0, 5));
  }
  for (double w : {1.0, 0.5, 0.0, 1.7}) {
    c.expect_near(rcal::cdpo_loss(uniform, cdpo_batch, w).value, (1.0 + 2.0 * w) * ln2,
                  1e-12, "uniform policy loss at w=" + std::to_string(w));
  }

  // Relabeling the quadruple (swap the chosen/rejected roles along with their
  // high/low slots) must not change the loss value at all.
  auto scorer = rcal::DifferentiableScorer::mlp({3}, 99);
  std::vector<rcal::QuadrupleExample> batch(16), relabeled(16);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    batch[i] = {random_features(rng), random_features(rng), random_features(rng),
                random_features(rng)};
    relabeled[i] = {batch[i].rejected_low, batch[i].rejected_high,
                    batch[i].chosen_low, batch[i].chosen_high};
  }
  const auto original = rcal::crm_loss(scorer, batch);
  const auto swapped = rcal::crm_loss(scorer, relabeled);
  c.expect(original.value == swapped.value,
           "relabeling symmetry: loss values are not bit-identical");
  double worst_grad_gap = 0.0;
  for (std::size_t p = 0; p < original.gradient.size(); ++p) {
    worst_grad_gap =
        std::max(worst_grad_gap, std::fabs(original.gradient[p] - swapped.gradient[p]));
  }
  c.expect(worst_grad_gap <= 1e-15,
           "relabeling symmetry: gradient gap " + std::to_string(worst_grad_gap));

  // With zero calibration weight the policy loss must equal the plain
  // preference term alone, computed here with the same margin expression.
  rcal::CandidatePolicy policy(5, 6, 0.03);
  for (double& v : policy.logits()) v = rng.uniform() * 2.0 - 1.0;
  for (double& v : policy.reference_logits()) v = rng.uniform() * 2.0 - 1.0;
  std::vector<rcal::CdpoExample> examples(12);
  for (auto& ex : examples) {
    ex.prompt = static_cast<std::size_t>(rng.uniform_int(0, 4));
    ex.chosen = static_cast<std::size_t>(rng.uniform_int(0, 5));
    ex.rejected = static_cast<std::size_t>(rng.uniform_int(0, 5));
    ex.chosen_high = static_cast<std::size_t>(rng.uniform_int(0, 5));
    ex.chosen_low = static_cast<std::size_t>(rng.uniform_int(0, 5));
    ex.rejected_high = static_cast<std::size_t>(rng.uniform_int(0, 5));
    ex.rejected_low = static_cast<std::size_t>(rng.uniform_int(0, 5));
  }
  const auto at_zero = rcal::cdpo_loss(policy, examples, 0.0);
  const auto logits = policy.logits();
  const auto ref = policy.reference_logits();
  double sum = 0.0;
  for (const auto& ex : examples) {
    const std::size_t base = ex.prompt * policy.n_candidates();
    const double margin = policy.beta() * ((logits[base + ex.chosen] - logits[base + ex.rejected]) -
                                           (ref[base + ex.chosen] - ref[base + ex.rejected]));
    sum += rcal::neg_log_sigmoid(margin);
  }
  const double plain_term = sum * (1.0 / static_cast<double>(examples.size()));
  c.expect(at_zero.value == plain_term,
           "w=0 does not reduce bit-identically to the plain preference term");
}

// ---- criterion 6: biased probe signature ----------------------------------

void criterion_probe_signature(Checker& c) {
  const auto pairs = synthetic_pairs(600);
  std::vector<rcal::ProbeItem> items;
  for (auto mode : {rcal::ProbeMode::AnswerOnly, rcal::ProbeMode::ConfidenceReversed,
                    rcal::ProbeMode::ChosenWithConf, rcal::ProbeMode::RejectedWithConf}) {
    auto batch = rcal::make_probe_items(pairs, mode, 7);
    items.insert(items.end(), batch.begin(), batch.end());
  }
  const auto binding =
      rcal::ScorerBinding::toy(rcal::DifferentiableScorer::linear_biased(1.0));
  const auto stats = rcal::run_probe(binding, items);
  c.expect(stats.size() == 4, "expected one aggregate per probe mode");
  if (stats.size() != 4) return;

  c.expect(stats[0].expected_winner_rate == 1.0,
           "answer-only rate " + std::to_string(stats[0].expected_winner_rate) +
               " (the biased scorer still ranks plain responses perfectly)");
  c.expect(stats[3].expected_winner_rate == 0.0,
           "rejected-with-confidence rate " +
               std::to_string(stats[3].expected_winner_rate) +
               " (the biased scorer must always take the high-confidence bait)");
  c.expect(stats[1].expected_winner_rate < 1.0,
           "confidence-reversed rate must degrade below 1.0");

  const auto again = rcal::run_probe(binding, items);
  bool identical = again.size() == stats.size();
  for (std::size_t m = 0; identical && m < stats.size(); ++m) {
    identical = again[m].expected_winner_rate == stats[m].expected_winner_rate &&
                again[m].mean_margin == stats[m].mean_margin;
  }
  c.expect(identical, "probe rates changed between identical runs");
}

// ---- criterion 7: calibration flip ----------------------------------------

void criterion_calibration_flip(Checker& c) {
  const auto scorer = train_calibrated_scorer();
  const auto pairs = synthetic_pairs(2000);
  std::vector<rcal::ProbeItem> items;
  for (auto mode : {rcal::ProbeMode::AnswerOnly, rcal::ProbeMode::ConfidenceReversed,
                    rcal::ProbeMode::ChosenWithConf, rcal::ProbeMode::RejectedWithConf}) {
    auto batch = rcal::make_probe_items(pairs, mode, 13);
    items.insert(items.end(), batch.begin(), batch.end());
  }
  const auto stats = rcal::run_probe(rcal::ScorerBinding::toy(scorer), items);
  c.expect(stats.size() == 4, "expected one aggregate per probe mode");
  if (stats.size() != 4) return;

  c.expect(stats[3].expected_winner_rate >= 0.9,
           "rejected-with-confidence rate " +
               std::to_string(stats[3].expected_winner_rate) +
               " < 0.9 (low confidence on bad responses)");
  c.expect(stats[2].expected_winner_rate >= 0.9,
           "chosen-with-confidence rate " +
               std::to_string(stats[2].expected_winner_rate) +
               " < 0.9 (high confidence on good responses)");
  c.expect(stats[0].expected_winner_rate >= 0.95,
           "answer-only rate " + std::to_string(stats[0].expected_winner_rate) +
               " < 0.95 (plain ranking must survive the fine-tune)");
}

// ---- criteria 8 and 9: seeded simulator runs ------------------------------

rcal::RunReport run_simulation(rcal::SimMethod method, rcal::ShapingVariant variant,
                               double w,
                               std::optional<rcal::DifferentiableScorer> scorer) {
  rcal::EnvironmentSpec env;
  env.seed = 42;
  rcal::TrainerConfig trainer;
  trainer.method = method;
  trainer.seed = 42;
  trainer.shaping.variant = variant;
  trainer.shaping.w = w;
  trainer.shaping.alpha = 0.1;
  trainer.calibrated_scorer = std::move(scorer);
  return rcal::simulate(env, trainer, 10);
}

void criterion_overconfidence(Checker& c) {
  const auto run = run_simulation(rcal::SimMethod::Vanilla,
                                  rcal::ShapingVariant::Difference, 2.0, std::nullopt);
  for (int k = 0; k < run.final_policy.n_archetypes; ++k) {
    const auto p = run.final_policy.probabilities(k);
    const double top_mass = p[9] + p[10];
    c.expect(top_mass >= 0.8, "archetype " + std::to_string(k) +
                                  " holds only " + std::to_string(top_mass) +
                                  " mass on the top two confidence bins");
  }
  const double ece = run.final_report.ece;
  const double accuracy = run.final_report.accuracy;
  c.expect_near(ece, 1.0 - accuracy, 0.05,
                "final calibration error vs (1 - accuracy)");

  if (g_pin) {
    std::printf("PIN vanilla_ece=%.17g vanilla_accuracy=%.17g "
                "vanilla_mean_confidence=%.17g\n",
                ece, accuracy, run.series.back().mean_confidence);
    return;
  }
  c.expect_near(ece, kPinnedVanillaEce, 1e-9, "pinned final calibration error");
  c.expect_near(accuracy, kPinnedVanillaAccuracy, 1e-9, "pinned final accuracy");
  c.expect_near(run.series.back().mean_confidence, kPinnedVanillaMeanConfidence, 1e-9,
                "pinned final mean confidence");
}

void criterion_correction(Checker& c) {
  const auto vanilla = run_simulation(rcal::SimMethod::Vanilla,
                                      rcal::ShapingVariant::Difference, 2.0, std::nullopt);
  const auto difference = run_simulation(rcal::SimMethod::PpoC,
                                         rcal::ShapingVariant::Difference, 2.0, std::nullopt);
  const auto calibrated = run_simulation(rcal::SimMethod::PpoM,
                                         rcal::ShapingVariant::Difference, 2.0,
                                         train_calibrated_scorer());
  const auto threshold = run_simulation(rcal::SimMethod::PpoC,
                                        rcal::ShapingVariant::Threshold, 0.5, std::nullopt);

  const double base = vanilla.final_report.ece;
  c.expect(difference.final_report.ece < base,
           "difference-shaped run did not end below the vanilla calibration error");
  c.expect(calibrated.final_report.ece < base,
           "calibrated-scorer run did not end below the vanilla calibration error");
  c.expect(threshold.final_report.ece < base,
           "threshold-shaped run did not end below the vanilla calibration error");

  for (const auto* run : {&difference, &calibrated, &threshold}) {
    bool same = run->final_report.accuracy == vanilla.final_report.accuracy &&
                run->series.size() == vanilla.series.size();
    for (std::size_t t = 0; same && t < run->series.size(); ++t) {
      same = run->series[t].accuracy == vanilla.series[t].accuracy;
    }
    c.expect(same, "accuracy must be environment-determined, identical to vanilla");
  }

  if (g_pin) {
    std::printf("PIN difference_ece=%.17g calibrated_scorer_ece=%.17g "
                "threshold_ece=%.17g\n",
                difference.final_report.ece, calibrated.final_report.ece,
                threshold.final_report.ece);
    return;
  }
  c.expect_near(difference.final_report.ece, kPinnedDifferenceEce, 1e-9,
                "pinned difference-shaped calibration error");
  c.expect_near(calibrated.final_report.ece, kPinnedCalibratedScorerEce, 1e-9,
                "pinned calibrated-scorer calibration error");
  c.expect_near(threshold.final_report.ece, kPinnedThresholdEce, 1e-9,
                "pinned threshold-shaped calibration error");
}

// ---- criterion 10: CLI determinism ----------------------------------------

int run_cli_quiet(const std::vector<std::string>& args) {
  std::ostringstream sink;
  auto* old_out = std::cout.rdbuf(sink.rdbuf());
  auto* old_err = std::cerr.rdbuf(sink.rdbuf());
  const int code = rcal::cli::run(args);
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  return code;
}

std::map<std::string, std::string> snapshot_directory(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    files[entry.path().string()] = buffer.str();
  }
  return files;
}

void criterion_cli_determinism(Checker& c) {
  namespace fs = std::filesystem;
  const fs::path scratch =
      fs::temp_directory_path() / ("rcal_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(scratch);

  const std::string pairs_path = (scratch / "pairs.jsonl").string();
  {
    std::ofstream out(pairs_path);
    for (int i = 0; i < 6; ++i) {
      out << "{\"id\":\"p" << i << "\",\"prompt\":\"Q" << i
          << "?\",\"chosen\":\"good " << i << "\",\"rejected\":\"bad " << i
          << "\",\"chosen_score\":0.9,\"rejected_score\":0.1}\n";
    }
  }
  const std::string log_path = (scratch / "log.jsonl").string();
  {
    std::ofstream out(log_path);
    out << "{\"id\":\"1\",\"question\":\"Q\",\"response\":\"Answer: 4\\n"
           "Confidence: 9\",\"gold\":\"4\"}\n";
    out << "{\"id\":\"2\",\"question\":\"Q\",\"response\":\"Answer: 5\\n"
           "Confidence: 8\",\"gold\":\"4\"}\n";
    out << "{\"id\":\"3\",\"question\":\"Q\",\"response\":\"Answer: 4\",\"correct\":true}\n";
  }

  const std::string forge_dir = (scratch / "forge").string();
  const std::string probe_dir = (scratch / "probe").string();
  const std::string train_dir = (scratch / "train").string();
  const std::string sim_dir = (scratch / "sim").string();
  const std::string eval_dir = (scratch / "eval").string();
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands = {
      {"forge", {"forge", "--input", pairs_path, "--mode", "all", "--seed", "5",
                 "--out", forge_dir}},
      {"probe", {"probe", "--input", forge_dir + "/probe_items.jsonl", "--out",
                 probe_dir}},
      {"train", {"train", "--loss", "pref", "--pairs", pairs_path, "--steps", "5",
                 "--out", train_dir}},
      {"simulate", {"simulate", "--method", "vanilla", "--episodes-per-batch", "32",
                    "--n-batches", "2", "--seed", "3", "--out", sim_dir}},
      {"eval", {"eval", "--input", log_path, "--out", eval_dir}},
  };

  for (const auto& [name, args] : commands) {
    const fs::path out_dir = args.back();
    if (run_cli_quiet(args) != 0) {
      c.expect(false, name + ": first run failed");
      continue;
    }
    const auto first = snapshot_directory(out_dir);
    if (run_cli_quiet(args) != 0) {
      c.expect(false, name + ": second run failed");
      continue;
    }
    const auto second = snapshot_directory(out_dir);
    c.expect(first == second && !first.empty(),
             name + ": rerun outputs are not byte-identical");
  }

  std::error_code ec;
  fs::remove_all(scratch, ec);
}

// ---- harness --------------------------------------------------------------

struct Criterion {
  const char* label;
  double budget_seconds;
  void (*run)(Checker&);
};

}  // namespace

int main(int argc, char** argv) {
  g_pin = argc > 1 && std::string_view(argv[1]) == "--pin";

  const Criterion criteria[] = {
      {"reward adjustment hand cases and the neutral-confidence identity", 1.0,
       criterion_shaping},
      {"reference EMA semantics and convexity", 1.0, criterion_ema},
      {"calibration metrics match brute-force oracles", 5.0, criterion_metrics},
      {"analytic loss gradients match central finite differences", 30.0,
       criterion_gradients},
      {"loss anchors, relabeling symmetry, and the plain-preference reduction", 30.0,
       criterion_anchors},
      {"confidence-biased scorer shows the four-mode probe signature", 5.0,
       criterion_probe_signature},
      {"calibrated fine-tuning flips the confidence preference", 30.0,
       criterion_calibration_flip},
      {"vanilla simulation drifts into pinned overconfidence", 60.0,
       criterion_overconfidence},
      {"calibrated rewards end below the vanilla calibration error", 180.0,
       criterion_correction},
      {"every CLI command reruns byte-identically", 30.0, criterion_cli_determinism},
  };

  int failures = 0;
  int index = 1;
  for (const auto& criterion : criteria) {
    Checker checker;
    const auto start = std::chrono::steady_clock::now();
    criterion.run(checker);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > criterion.budget_seconds) {
      char buffer[64];
      std::snprintf(buffer, sizeof buffer, "exceeded the %.0fs budget",
                    criterion.budget_seconds);
      checker.expect(false, buffer);
    }
    std::printf("%s %2d: %s (%.2fs)%s%s\n", checker.ok ? "PASS" : "FAIL", index,
                criterion.label, elapsed, checker.ok ? "" : " -- ",
                checker.ok ? "" : checker.detail.c_str());
    failures += checker.ok ? 0 : 1;
    ++index;
  }
  if (failures == 0) {
    std::printf("all 10 criteria passed\n");
  } else {
    std::printf("%d of 10 criteria failed\n", failures);
  }
  return failures == 0 ? 0 : 1;
}
