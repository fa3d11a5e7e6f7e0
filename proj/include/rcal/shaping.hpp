#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

// Confidence-aware reward adjustment around a running reference.
//
// A policy's raw reward r comes from scoring the confidence-stripped response.
// Given the verbalized confidence s in [0, 1] and the exponential average dr
// of recent batch-mean rewards, the adjusted reward is
//
//   difference variant:  r + w * (r - dr) * (s - 0.5)
//   threshold variant:   r + g   if r >= dr,  r - g   otherwise,
//                        with g = w * |r| * (s - 0.5)
//
// Both leave r unchanged at s = 0.5, reward high confidence on above-reference
// responses, and reward low confidence on below-reference ones.

namespace rcal {

enum class ShapingVariant { Difference, Threshold };

struct ShapingConfig {
  ShapingVariant variant = ShapingVariant::Difference;
  double w = 2.0;                   // scaling coefficient, > 0
  double alpha = 0.1;               // EMA decay factor, in [0, 1]
  double default_confidence = 0.5;  // substituted when confidence is missing

  // Conventional coefficient per variant: 2.0 for difference, 0.5 for threshold.
  static double default_w(ShapingVariant variant) {
    return variant == ShapingVariant::Difference ? 2.0 : 0.5;
  }
};

// Exponential average of batch-mean rewards.  Starts cold: the first observed
// batch mean becomes the initial reference (and that batch goes unadjusted in
// shape_batch), unless a warm-up value is supplied up front.
struct EmaState {
  double delta_r = 0.0;
  double alpha = 0.1;
  bool initialized = false;

  static EmaState warmed(double delta_r, double alpha);  // e.g. eval-set reward mean
  static EmaState cold(double alpha);
};

// delta_r' = alpha * batch_mean_reward + (1 - alpha) * delta_r.
// A cold state is seeded directly with the batch mean.
EmaState ema_update(EmaState state, double batch_mean_reward);

// The two adjustment formulas.  s outside [0, 1] is an error: normalization is
// the parser's job, and silently accepting a raw 0..10 score here would skew
// every reward.
double adjust_reward_difference(double r_hat, double delta_r, double s, double w);

// Tie r_hat == delta_r takes the positive branch.
double adjust_reward_threshold(double r_hat, double delta_r, double s, double w);

// Adjusts a whole batch against the PRE-update reference, then folds the mean
// of the unadjusted rewards into the EMA.  Missing confidences use
// cfg.default_confidence.  With a cold state the batch is returned unadjusted
// and only seeds the reference.
std::pair<std::vector<double>, EmaState> shape_batch(
    std::span<const double> rewards,
    std::span<const std::optional<double>> confidences, EmaState state,
    const ShapingConfig& cfg);

}  // namespace rcal
