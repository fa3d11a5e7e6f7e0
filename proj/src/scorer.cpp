#include "rcal/scorer.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

#include "rcal/parallel.hpp"
#include "rcal/rng.hpp"

namespace rcal {

// ============================================================ numerics

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// -log(sigmoid(m)) = softplus(-m), computed without overflow on either side.
double neg_log_sigmoid(double margin) {
  if (margin >= 0.0) return std::log1p(std::exp(-margin));
  return -margin + std::log1p(std::exp(margin));
}

// ============================================================ scorer

DifferentiableScorer::DifferentiableScorer(Architecture arch, std::vector<int> hidden,
                                           std::vector<double> theta)
    : arch_(arch), hidden_(std::move(hidden)), theta_(std::move(theta)) {}

DifferentiableScorer DifferentiableScorer::linear(const std::array<double, 4>& theta) {
  return DifferentiableScorer(Architecture::Linear, {},
                              std::vector<double>(theta.begin(), theta.end()));
}

DifferentiableScorer DifferentiableScorer::linear_biased(double bias_b) {
  return linear({1.0, bias_b, 0.0, 0.0});
}

namespace {

std::size_t mlp_parameter_count(const std::vector<int>& hidden) {
  std::size_t count = 0;
  std::size_t in = FeatureVector::kDim;
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("mlp: hidden layer width must be >= 1");
    count += (in + 1) * static_cast<std::size_t>(h);
    in = static_cast<std::size_t>(h);
  }
  count += in + 1;  // final linear unit
  return count;
}

}  // namespace

DifferentiableScorer DifferentiableScorer::mlp(std::vector<int> hidden, std::uint64_t seed) {
  const std::size_t count = mlp_parameter_count(hidden);
  std::vector<double> theta(count);
  Rng rng(seed, 0x6d6c70ULL);  // "mlp"
  std::size_t pos = 0;
  std::size_t in = FeatureVector::kDim;
  auto fill_layer = [&](std::size_t out) {
    const double radius = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < out * in; ++i) theta[pos++] = (2.0 * rng.uniform() - 1.0) * radius;
    for (std::size_t i = 0; i < out; ++i) theta[pos++] = 0.0;  // biases start at zero
    in = out;
  };
  for (int h : hidden) fill_layer(static_cast<std::size_t>(h));
  fill_layer(1);
  return DifferentiableScorer(Architecture::Mlp, std::move(hidden), std::move(theta));
}

DifferentiableScorer DifferentiableScorer::from_parameters(Architecture arch,
                                                           std::vector<int> hidden,
                                                           std::vector<double> theta) {
  const std::size_t expected =
      arch == Architecture::Linear ? FeatureVector::kDim : mlp_parameter_count(hidden);
  if (theta.size() != expected) {
    throw std::invalid_argument("scorer: parameter vector has wrong length for architecture");
  }
  if (arch == Architecture::Linear) hidden.clear();
  return DifferentiableScorer(arch, std::move(hidden), std::move(theta));
}

double DifferentiableScorer::score(const FeatureVector& features) const {
  const auto x = features.values();
  if (arch_ == Architecture::Linear) {
    return theta_[0] * x[0] + theta_[1] * x[1] + theta_[2] * x[2] + theta_[3] * x[3];
  }
  // Feed-forward with tanh hidden activations and a linear output unit.
  std::vector<double> act(x.begin(), x.end());
  std::size_t pos = 0;
  std::size_t in = FeatureVector::kDim;
  for (int h : hidden_) {
    const auto out = static_cast<std::size_t>(h);
    std::vector<double> next(out);
    for (std::size_t o = 0; o < out; ++o) {
      double z = theta_[pos + out * in + o];  // bias
      for (std::size_t j = 0; j < in; ++j) z += theta_[pos + o * in + j] * act[j];
      next[o] = std::tanh(z);
    }
    pos += (in + 1) * out;
    act = std::move(next);
    in = out;
  }
  double z = theta_[pos + in];  // output bias
  for (std::size_t j = 0; j < in; ++j) z += theta_[pos + j] * act[j];
  return z;
}

void DifferentiableScorer::add_score_gradient(const FeatureVector& features, double coeff,
                                              std::span<double> grad) const {
  if (grad.size() != theta_.size()) {
    throw std::invalid_argument("add_score_gradient: gradient buffer has wrong length");
  }
  const auto x = features.values();
  if (arch_ == Architecture::Linear) {
    for (std::size_t j = 0; j < FeatureVector::kDim; ++j) grad[j] += coeff * x[j];
    return;
  }

  // Forward pass storing every layer's activations...
  std::vector<std::vector<double>> acts;
  acts.emplace_back(x.begin(), x.end());
  std::vector<std::size_t> offsets;
  std::size_t pos = 0;
  std::size_t in = FeatureVector::kDim;
  for (int h : hidden_) {
    const auto out = static_cast<std::size_t>(h);
    offsets.push_back(pos);
    std::vector<double> next(out);
    for (std::size_t o = 0; o < out; ++o) {
      double z = theta_[pos + out * in + o];
      for (std::size_t j = 0; j < in; ++j) z += theta_[pos + o * in + j] * acts.back()[j];
      next[o] = std::tanh(z);
    }
    pos += (in + 1) * out;
    acts.push_back(std::move(next));
    in = out;
  }
  const std::size_t out_pos = pos;

  // ...then backpropagate a unit sensitivity from the scalar output.
  const auto& last = acts.back();
  for (std::size_t j = 0; j < in; ++j) grad[out_pos + j] += coeff * last[j];
  grad[out_pos + in] += coeff;

  std::vector<double> delta(in);
  for (std::size_t j = 0; j < in; ++j) {
    delta[j] = coeff * theta_[out_pos + j] * (1.0 - last[j] * last[j]);
  }
  for (std::size_t layer = hidden_.size(); layer-- > 0;) {
    const auto out = static_cast<std::size_t>(hidden_[layer]);
    const std::size_t lin = acts[layer].size();
    const std::size_t base = offsets[layer];
    for (std::size_t o = 0; o < out; ++o) {
      for (std::size_t j = 0; j < lin; ++j) grad[base + o * lin + j] += delta[o] * acts[layer][j];
      grad[base + out * lin + o] += delta[o];
    }
    if (layer == 0) break;
    std::vector<double> prev(lin);
    for (std::size_t j = 0; j < lin; ++j) {
      double s = 0.0;
      for (std::size_t o = 0; o < out; ++o) s += theta_[base + o * lin + j] * delta[o];
      prev[j] = s * (1.0 - acts[layer][j] * acts[layer][j]);
    }
    delta = std::move(prev);
  }
}

// ============================================================ pairwise losses
//
// Each item's contribution (value and gradient) is computed into item-local
// storage first and only then folded into the totals, in index order.  The
// parallel kernels and the serial references therefore perform identical
// floating-point operations in an identical order, making them bit-equal.

namespace {

double preference_item(const DifferentiableScorer& scorer, const PreferenceExample& ex,
                       std::span<double> grad) {
  const double margin = scorer.score(ex.chosen) - scorer.score(ex.rejected);
  const double coeff = sigmoid(margin) - 1.0;  // d(-log sigmoid(m))/dm
  scorer.add_score_gradient(ex.chosen, coeff, grad);
  scorer.add_score_gradient(ex.rejected, -coeff, grad);
  return neg_log_sigmoid(margin);
}

double crm_item(const DifferentiableScorer& scorer, const QuadrupleExample& ex,
                std::span<double> grad) {
  // High beats low on the chosen response; low beats high on the rejected one.
  const double margin_c = scorer.score(ex.chosen_high) - scorer.score(ex.chosen_low);
  const double margin_r = scorer.score(ex.rejected_low) - scorer.score(ex.rejected_high);
  const double coeff_c = sigmoid(margin_c) - 1.0;
  const double coeff_r = sigmoid(margin_r) - 1.0;
  scorer.add_score_gradient(ex.chosen_high, coeff_c, grad);
  scorer.add_score_gradient(ex.chosen_low, -coeff_c, grad);
  scorer.add_score_gradient(ex.rejected_low, coeff_r, grad);
  scorer.add_score_gradient(ex.rejected_high, -coeff_r, grad);
  return neg_log_sigmoid(margin_c) + neg_log_sigmoid(margin_r);
}

template <typename Example, typename ItemFn>
LossValue map_reduce_loss(const DifferentiableScorer& scorer, std::span<const Example> batch,
                          ItemFn item, const char* name, bool parallel) {
  if (batch.empty()) throw std::invalid_argument(std::string(name) + ": empty batch");
  const std::size_t n = batch.size();
  const std::size_t P = scorer.parameter_count();

  LossValue total;
  total.gradient.assign(P, 0.0);
  double value_sum = 0.0;

  if (parallel) {
    std::vector<double> values(n);
    std::vector<double> grads(n * P, 0.0);
    parallel_for(n, [&](std::size_t i) {
      values[i] = item(scorer, batch[i], std::span<double>(grads.data() + i * P, P));
    });
    for (std::size_t i = 0; i < n; ++i) {
      value_sum += values[i];
      for (std::size_t p = 0; p < P; ++p) total.gradient[p] += grads[i * P + p];
    }
  } else {
    std::vector<double> item_grad(P);
    for (std::size_t i = 0; i < n; ++i) {
      item_grad.assign(P, 0.0);
      value_sum += item(scorer, batch[i], std::span<double>(item_grad));
      for (std::size_t p = 0; p < P; ++p) total.gradient[p] += item_grad[p];
    }
  }

  const double inv = 1.0 / static_cast<double>(n);
  total.value = value_sum * inv;
  for (double& g : total.gradient) g *= inv;
  return total;
}

}  // namespace

LossValue preference_loss(const DifferentiableScorer& scorer,
                          std::span<const PreferenceExample> batch) {
  return map_reduce_loss(scorer, batch, preference_item, "preference_loss", true);
}

LossValue preference_loss_serial(const DifferentiableScorer& scorer,
                                 std::span<const PreferenceExample> batch) {
  return map_reduce_loss(scorer, batch, preference_item, "preference_loss", false);
}

LossValue crm_loss(const DifferentiableScorer& scorer, std::span<const QuadrupleExample> batch) {
  return map_reduce_loss(scorer, batch, crm_item, "crm_loss", true);
}

LossValue crm_loss_serial(const DifferentiableScorer& scorer,
                          std::span<const QuadrupleExample> batch) {
  return map_reduce_loss(scorer, batch, crm_item, "crm_loss", false);
}

// ============================================================ candidate policy

CandidatePolicy::CandidatePolicy(std::size_t n_prompts, std::size_t n_candidates, double beta)
    : n_prompts_(n_prompts),
      n_candidates_(n_candidates),
      beta_(beta),
      logits_(n_prompts * n_candidates, 0.0),
      reference_logits_(n_prompts * n_candidates, 0.0) {
  if (n_prompts == 0 || n_candidates == 0) {
    throw std::invalid_argument("CandidatePolicy: empty prompt or candidate set");
  }
  if (!(beta > 0.0)) throw std::invalid_argument("CandidatePolicy: beta must be > 0");
}

std::size_t CandidatePolicy::index(std::size_t prompt, std::size_t candidate) const {
  if (prompt >= n_prompts_ || candidate >= n_candidates_) {
    throw std::out_of_range("CandidatePolicy: prompt or candidate index out of range");
  }
  return prompt * n_candidates_ + candidate;
}

double CandidatePolicy::logit(std::size_t prompt, std::size_t candidate) const {
  return logits_[index(prompt, candidate)];
}

double CandidatePolicy::implicit_reward(std::size_t prompt, std::size_t candidate) const {
  // beta * (log pi(y) - log pi_ref(y)); the two log-normalizers are constants
  // of the prompt and cancel in every margin, but not here, so compute them.
  const std::size_t base = prompt * n_candidates_;
  double max_l = logits_[base], max_r = reference_logits_[base];
  for (std::size_t c = 1; c < n_candidates_; ++c) {
    max_l = std::max(max_l, logits_[base + c]);
    max_r = std::max(max_r, reference_logits_[base + c]);
  }
  double lse_l = 0.0, lse_r = 0.0;
  for (std::size_t c = 0; c < n_candidates_; ++c) {
    lse_l += std::exp(logits_[base + c] - max_l);
    lse_r += std::exp(reference_logits_[base + c] - max_r);
  }
  const double log_pi = logits_[index(prompt, candidate)] - max_l - std::log(lse_l);
  const double log_ref = reference_logits_[index(prompt, candidate)] - max_r - std::log(lse_r);
  return beta_ * (log_pi - log_ref);
}

std::vector<double> CandidatePolicy::probabilities(std::size_t prompt) const {
  const std::size_t base = index(prompt, 0);
  std::vector<double> probs(n_candidates_);
  double max_l = logits_[base];
  for (std::size_t c = 1; c < n_candidates_; ++c) max_l = std::max(max_l, logits_[base + c]);
  double sum = 0.0;
  for (std::size_t c = 0; c < n_candidates_; ++c) {
    probs[c] = std::exp(logits_[base + c] - max_l);
    sum += probs[c];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

// ============================================================ calibrated DPO

namespace {

// One example touches at most six logits; its contribution is kept sparse and
// folded into the dense gradient afterwards, in index order.
struct SparseContribution {
  std::array<std::pair<std::size_t, double>, 6> entries{};
  std::size_t count = 0;
  void add(std::size_t index, double value) { entries[count++] = {index, value}; }
};

double cdpo_item(const CandidatePolicy& policy, const CdpoExample& ex, double w,
                 SparseContribution& contribution) {
  const std::size_t base = ex.prompt * policy.n_candidates();
  const auto logits = policy.logits();
  const auto ref = policy.reference_logits();
  const double beta = policy.beta();

  // Implicit-reward margins within one prompt reduce to logit differences:
  // the softmax normalizers cancel.
  auto margin = [&](std::size_t hi, std::size_t lo) {
    return beta * ((logits[base + hi] - logits[base + lo]) - (ref[base + hi] - ref[base + lo]));
  };
  const double m_pref = margin(ex.chosen, ex.rejected);
  const double m_chosen = margin(ex.chosen_high, ex.chosen_low);
  const double m_rejected = margin(ex.rejected_low, ex.rejected_high);

  const double c_pref = (sigmoid(m_pref) - 1.0) * beta;
  const double c_chosen = (sigmoid(m_chosen) - 1.0) * beta * w;
  const double c_rejected = (sigmoid(m_rejected) - 1.0) * beta * w;
  contribution.add(base + ex.chosen, c_pref);
  contribution.add(base + ex.rejected, -c_pref);
  contribution.add(base + ex.chosen_high, c_chosen);
  contribution.add(base + ex.chosen_low, -c_chosen);
  contribution.add(base + ex.rejected_low, c_rejected);
  contribution.add(base + ex.rejected_high, -c_rejected);

  return neg_log_sigmoid(m_pref) +
         w * (neg_log_sigmoid(m_chosen) + neg_log_sigmoid(m_rejected));
}

LossValue cdpo_map_reduce(const CandidatePolicy& policy, std::span<const CdpoExample> batch,
                          double w, bool parallel) {
  if (batch.empty()) throw std::invalid_argument("cdpo_loss: empty batch");
  if (w < 0.0) throw std::invalid_argument("cdpo_loss: w must be >= 0");
  const std::size_t n = batch.size();

  LossValue total;
  total.gradient.assign(policy.logits().size(), 0.0);
  double value_sum = 0.0;

  if (parallel) {
    std::vector<double> values(n);
    std::vector<SparseContribution> contributions(n);
    parallel_for(n, [&](std::size_t i) {
      values[i] = cdpo_item(policy, batch[i], w, contributions[i]);
    });
    for (std::size_t i = 0; i < n; ++i) {
      value_sum += values[i];
      for (std::size_t e = 0; e < contributions[i].count; ++e) {
        total.gradient[contributions[i].entries[e].first] += contributions[i].entries[e].second;
      }
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      SparseContribution contribution;
      value_sum += cdpo_item(policy, batch[i], w, contribution);
      for (std::size_t e = 0; e < contribution.count; ++e) {
        total.gradient[contribution.entries[e].first] += contribution.entries[e].second;
      }
    }
  }

  const double inv = 1.0 / static_cast<double>(n);
  total.value = value_sum * inv;
  for (double& g : total.gradient) g *= inv;
  return total;
}

}  // namespace

LossValue cdpo_loss(const CandidatePolicy& policy, std::span<const CdpoExample> batch, double w) {
  return cdpo_map_reduce(policy, batch, w, true);
}

LossValue cdpo_loss_serial(const CandidatePolicy& policy, std::span<const CdpoExample> batch,
                           double w) {
  return cdpo_map_reduce(policy, batch, w, false);
}

// ============================================================ optimizer

std::vector<double> fit(std::span<double> params, const std::function<LossValue()>& eval,
                        const FitOptions& options) {
  if (options.steps < 0) throw std::invalid_argument("fit: steps must be >= 0");
  if (options.steps > 0 && !(options.learning_rate > 0.0)) {
    throw std::invalid_argument("fit: learning rate must be > 0");
  }
  const std::size_t P = params.size();
  std::vector<double> m(P, 0.0), v(P, 0.0);
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(options.steps));

  for (int step = 0; step < options.steps; ++step) {
    const LossValue loss = eval();
    if (loss.gradient.size() != P) {
      throw std::invalid_argument("fit: gradient length does not match parameters");
    }
    bool finite = std::isfinite(loss.value);
    for (double g : loss.gradient) finite = finite && std::isfinite(g);
    if (!finite) {
      throw std::runtime_error("fit: non-finite loss or gradient at step " +
                               std::to_string(step) + " (diverged)");
    }
    trace.push_back(loss.value);

    double lr = options.learning_rate;
    if (options.cosine_decay) {
      lr *= 0.5 * (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(step) /
                                  static_cast<double>(options.steps)));
    }
    const double bc1 = 1.0 - std::pow(options.beta1, step + 1);
    const double bc2 = 1.0 - std::pow(options.beta2, step + 1);
    for (std::size_t p = 0; p < P; ++p) {
      const double g = loss.gradient[p];
      m[p] = options.beta1 * m[p] + (1.0 - options.beta1) * g;
      v[p] = options.beta2 * v[p] + (1.0 - options.beta2) * g * g;
      params[p] -= lr * (m[p] / bc1) / (std::sqrt(v[p] / bc2) + options.epsilon);
    }
  }
  return trace;
}

}  // namespace rcal
