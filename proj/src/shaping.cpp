#include "rcal/shaping.hpp"

#include <cmath>
#include <stdexcept>

namespace rcal {
namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("EmaState: alpha must lie in [0, 1]");
  }
}

void check_confidence(double s) {
  if (!(s >= 0.0 && s <= 1.0)) {
    throw std::invalid_argument("adjust_reward: confidence must lie in [0, 1]");
  }
}

}  // namespace

EmaState EmaState::warmed(double delta_r, double alpha) {
  check_alpha(alpha);
  return EmaState{delta_r, alpha, true};
}

EmaState EmaState::cold(double alpha) {
  check_alpha(alpha);
  return EmaState{0.0, alpha, false};
}

EmaState ema_update(EmaState state, double batch_mean_reward) {
  check_alpha(state.alpha);
  if (!state.initialized) {
    state.delta_r = batch_mean_reward;
    state.initialized = true;
    return state;
  }
  state.delta_r = state.alpha * batch_mean_reward + (1.0 - state.alpha) * state.delta_r;
  return state;
}

double adjust_reward_difference(double r_hat, double delta_r, double s, double w) {
  check_confidence(s);
  return r_hat + w * (r_hat - delta_r) * (s - 0.5);
}

double adjust_reward_threshold(double r_hat, double delta_r, double s, double w) {
  check_confidence(s);
  const double gamma = w * std::fabs(r_hat) * (s - 0.5);
  return r_hat >= delta_r ? r_hat + gamma : r_hat - gamma;
}

std::pair<std::vector<double>, EmaState> shape_batch(
    std::span<const double> rewards,
    std::span<const std::optional<double>> confidences, EmaState state,
    const ShapingConfig& cfg) {
  if (rewards.size() != confidences.size()) {
    throw std::invalid_argument("shape_batch: rewards and confidences differ in length");
  }
  if (!(cfg.w > 0.0)) throw std::invalid_argument("shape_batch: w must be > 0");
  if (rewards.empty()) return {std::vector<double>{}, state};

  double sum = 0.0;
  for (double r : rewards) sum += r;
  const double batch_mean = sum / static_cast<double>(rewards.size());

  std::vector<double> adjusted(rewards.size());
  if (!state.initialized) {
    // No reference yet: this batch seeds it and passes through unadjusted.
    for (std::size_t i = 0; i < rewards.size(); ++i) adjusted[i] = rewards[i];
    return {std::move(adjusted), ema_update(state, batch_mean)};
  }

  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const double s = confidences[i] ? *confidences[i] : cfg.default_confidence;
    adjusted[i] = cfg.variant == ShapingVariant::Difference
                      ? adjust_reward_difference(rewards[i], state.delta_r, s, cfg.w)
                      : adjust_reward_threshold(rewards[i], state.delta_r, s, cfg.w);
  }
  // Reference update uses the unadjusted mean, after this batch was adjusted
  // against the previous reference.
  return {std::move(adjusted), ema_update(state, batch_mean)};
}

}  // namespace rcal
