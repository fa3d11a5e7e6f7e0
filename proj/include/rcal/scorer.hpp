#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

// Differentiable toy scorers and policies plus the three ranking losses used
// in this project, all with analytic gradients:
//
//   preference loss   -E[ log s(R(chosen) - R(rejected)) ]
//   calibrated loss   -E[ log s(R(chosen,high) - R(chosen,low))
//                        + log s(R(rejected,low) - R(rejected,high)) ]
//   calibrated DPO    the same idea on a policy's implicit reward
//                     r = beta * log(pi/pi_ref), plus the plain DPO term
//
// (s denotes the logistic sigmoid.)  A response is represented by the feature
// vector (quality, confidence, quality*confidence, 1): small enough for exact
// finite-difference checking, rich enough that the calibrated optimum --
// "high confidence is good exactly when quality is high" -- is expressible.

namespace rcal {

struct FeatureVector {
  double quality = 0.0;     // synthetic ground-truth quality q, in [0, 1]
  double confidence = 0.0;  // normalized verbalized confidence s; 0 when absent

  std::array<double, 4> values() const {
    return {quality, confidence, quality * confidence, 1.0};
  }
  static constexpr std::size_t kDim = 4;
};

enum class Architecture { Linear, Mlp };

class DifferentiableScorer {
 public:
  // Linear: score = theta . (q, s, q*s, 1).
  static DifferentiableScorer linear(const std::array<double, 4>& theta);
  // The confidence-biased preset theta = (1, b, 0, 0): quality plus b times
  // confidence, the closed-form analogue of a reward model that likes high
  // stated confidence no matter the response.
  static DifferentiableScorer linear_biased(double bias_b);
  // Mlp: tanh hidden layers, linear scalar output, weights drawn U(-r, r)
  // with r = 1/sqrt(fan_in).
  static DifferentiableScorer mlp(std::vector<int> hidden, std::uint64_t seed);
  // Rebuild either architecture from serialized parameters.
  static DifferentiableScorer from_parameters(Architecture arch, std::vector<int> hidden,
                                              std::vector<double> theta);

  double score(const FeatureVector& features) const;
  // grad += coeff * d(score)/d(parameters); grad.size() must equal
  // parameter_count().
  void add_score_gradient(const FeatureVector& features, double coeff,
                          std::span<double> grad) const;

  Architecture architecture() const { return arch_; }
  const std::vector<int>& hidden() const { return hidden_; }
  std::span<const double> parameters() const { return theta_; }
  std::span<double> parameters() { return theta_; }
  std::size_t parameter_count() const { return theta_.size(); }

 private:
  DifferentiableScorer(Architecture arch, std::vector<int> hidden, std::vector<double> theta);

  Architecture arch_ = Architecture::Linear;
  std::vector<int> hidden_;     // hidden layer widths; empty for Linear
  std::vector<double> theta_;   // flat: per layer, row-major weights then biases
};

// A scalar loss and its gradient with respect to the trained parameters.
struct LossValue {
  double value = 0.0;
  std::vector<double> gradient;
};

struct PreferenceExample {
  FeatureVector chosen;
  FeatureVector rejected;
};

struct QuadrupleExample {
  FeatureVector chosen_high;
  FeatureVector chosen_low;
  FeatureVector rejected_high;
  FeatureVector rejected_low;
};

// Batch means; gradients are analytic.  The *_serial twins are the plain
// fused-loop reference implementations; the unsuffixed versions map per-item
// work across OpenMP threads and reduce in index order, so both must agree to
// the last bit (tested).
LossValue preference_loss(const DifferentiableScorer& scorer,
                          std::span<const PreferenceExample> batch);
LossValue preference_loss_serial(const DifferentiableScorer& scorer,
                                 std::span<const PreferenceExample> batch);
LossValue crm_loss(const DifferentiableScorer& scorer,
                   std::span<const QuadrupleExample> batch);
LossValue crm_loss_serial(const DifferentiableScorer& scorer,
                          std::span<const QuadrupleExample> batch);

// Tabular policy over a fixed candidate set per prompt, carrying its frozen
// reference.  The implicit reward of candidate y is
// beta * (log pi(y) - log pi_ref(y)); margins between candidates of one
// prompt reduce to logit differences, which is why adding a constant to all
// of a prompt's logits changes nothing.
class CandidatePolicy {
 public:
  CandidatePolicy(std::size_t n_prompts, std::size_t n_candidates, double beta);

  std::size_t n_prompts() const { return n_prompts_; }
  std::size_t n_candidates() const { return n_candidates_; }
  double beta() const { return beta_; }

  std::span<double> logits() { return logits_; }
  std::span<const double> logits() const { return logits_; }
  std::span<double> reference_logits() { return reference_logits_; }
  std::span<const double> reference_logits() const { return reference_logits_; }

  double logit(std::size_t prompt, std::size_t candidate) const;
  double implicit_reward(std::size_t prompt, std::size_t candidate) const;
  // Softmax over one prompt's candidates (sums to 1).
  std::vector<double> probabilities(std::size_t prompt) const;

 private:
  std::size_t index(std::size_t prompt, std::size_t candidate) const;

  std::size_t n_prompts_ = 0;
  std::size_t n_candidates_ = 0;
  double beta_ = 0.01;
  std::vector<double> logits_;            // flat, prompt-major
  std::vector<double> reference_logits_;  // fixed; zero (uniform) by default
};

// Candidate indices of one training item within its prompt's candidate set.
struct CdpoExample {
  std::size_t prompt = 0;
  std::size_t chosen = 0, rejected = 0;            // plain responses
  std::size_t chosen_high = 0, chosen_low = 0;     // confidence-augmented
  std::size_t rejected_high = 0, rejected_low = 0;
};

// value = mean of -[log s(m1) + w*(log s(m2) + log s(m3))] with margins
// m1 = r(chosen)-r(rejected), m2 = r(chosen_high)-r(chosen_low),
// m3 = r(rejected_low)-r(rejected_high); gradient w.r.t. policy logits.
LossValue cdpo_loss(const CandidatePolicy& policy, std::span<const CdpoExample> batch,
                    double w);
LossValue cdpo_loss_serial(const CandidatePolicy& policy,
                           std::span<const CdpoExample> batch, double w);

// First-order fit: adaptive-moment (Adam-style) updates applied in place to
// `params`, driven by `eval`, which must return the loss and gradient at the
// current parameter values.  Returns the per-step loss trace.  Deterministic;
// throws on a non-finite loss or gradient with the failing step in the
// message.  steps = 0 leaves the parameters untouched.
struct FitOptions {
  int steps = 100;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;     // reserved for stochastic extensions; fit is full-batch
  bool cosine_decay = false;  // lr_t = lr * 0.5 * (1 + cos(pi * t / steps))
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

std::vector<double> fit(std::span<double> params, const std::function<LossValue()>& eval,
                        const FitOptions& options);

// Numerically stable -log(sigmoid(margin)) and sigmoid; shared by the losses
// and by tests that build finite-difference oracles.
double neg_log_sigmoid(double margin);
double sigmoid(double x);

}  // namespace rcal
