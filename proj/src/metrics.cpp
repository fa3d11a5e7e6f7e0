#include "rcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rcal {
namespace {

void check_samples(std::span<const ConfidenceSample> samples) {
  if (samples.empty()) {
    throw std::invalid_argument("metrics: sample list is empty");
  }
  for (const auto& s : samples) {
    if (!(s.confidence >= 0.0 && s.confidence <= 1.0)) {
      throw std::invalid_argument("metrics: confidence outside [0, 1]");
    }
  }
}

// Canonical processing order.  Accumulating in sorted order makes every metric
// bit-identical under any permutation of the input.
std::vector<ConfidenceSample> sorted_copy(std::span<const ConfidenceSample> samples) {
  std::vector<ConfidenceSample> out(samples.begin(), samples.end());
  std::sort(out.begin(), out.end(), [](const ConfidenceSample& a, const ConfidenceSample& b) {
    if (a.confidence != b.confidence) return a.confidence < b.confidence;
    return a.correct < b.correct;
  });
  return out;
}

}  // namespace

int bin_index(double confidence, int n_bins) {
  const int raw = static_cast<int>(std::floor(confidence * n_bins));
  return std::min(raw, n_bins - 1);
}

double ece(std::span<const ConfidenceSample> samples, int n_bins) {
  if (n_bins < 1) throw std::invalid_argument("ece: n_bins must be >= 1");
  check_samples(samples);
  const auto ordered = sorted_copy(samples);

  std::vector<double> conf_sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> correct_sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(n_bins), 0);
  for (const auto& s : ordered) {
    const auto b = static_cast<std::size_t>(bin_index(s.confidence, n_bins));
    conf_sum[b] += s.confidence;
    correct_sum[b] += s.correct ? 1.0 : 0.0;
    ++count[b];
  }

  const double n = static_cast<double>(ordered.size());
  double total = 0.0;
  for (std::size_t b = 0; b < static_cast<std::size_t>(n_bins); ++b) {
    if (count[b] == 0) continue;  // empty bins contribute nothing
    const double c = static_cast<double>(count[b]);
    total += (c / n) * std::fabs(correct_sum[b] / c - conf_sum[b] / c);
  }
  return total;
}

std::optional<double> auroc(std::span<const ConfidenceSample> samples) {
  for (const auto& s : samples) {
    if (!(s.confidence >= 0.0 && s.confidence <= 1.0)) {
      throw std::invalid_argument("metrics: confidence outside [0, 1]");
    }
  }
  const auto ordered = sorted_copy(samples);
  std::size_t n_pos = 0;
  for (const auto& s : ordered) n_pos += s.correct ? 1 : 0;
  const std::size_t n_neg = ordered.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  // Sum of average ranks (1-based) over the correct samples.  Tied confidences
  // share the mean of the ranks they span, which is exactly the "ties count
  // one half" pair-counting convention.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < ordered.size()) {
    std::size_t j = i;
    while (j < ordered.size() && ordered[j].confidence == ordered[i].confidence) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (ordered[k].correct) rank_sum_pos += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

double accuracy(std::span<const ConfidenceSample> samples) {
  check_samples(samples);
  std::size_t n_correct = 0;
  for (const auto& s : samples) n_correct += s.correct ? 1 : 0;
  return static_cast<double>(n_correct) / static_cast<double>(samples.size());
}

ReliabilityReport reliability_report(std::span<const ConfidenceSample> samples,
                                     int n_bins) {
  if (n_bins < 1) throw std::invalid_argument("reliability_report: n_bins must be >= 1");
  check_samples(samples);
  const auto ordered = sorted_copy(samples);

  ReliabilityReport report;
  report.n_bins = n_bins;
  report.n_samples = ordered.size();
  report.bins.resize(static_cast<std::size_t>(n_bins));

  std::vector<double> conf_sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> correct_sum(static_cast<std::size_t>(n_bins), 0.0);
  for (const auto& s : ordered) {
    const auto b = static_cast<std::size_t>(bin_index(s.confidence, n_bins));
    conf_sum[b] += s.confidence;
    correct_sum[b] += s.correct ? 1.0 : 0.0;
    ++report.bins[b].count;
  }

  const double n = static_cast<double>(ordered.size());
  double total_correct = 0.0;
  double ece_total = 0.0;
  for (std::size_t b = 0; b < static_cast<std::size_t>(n_bins); ++b) {
    auto& bin = report.bins[b];
    bin.lower = static_cast<double>(b) / n_bins;
    bin.upper = static_cast<double>(b + 1) / n_bins;
    total_correct += correct_sum[b];
    if (bin.count == 0) continue;
    const double c = static_cast<double>(bin.count);
    bin.mean_confidence = conf_sum[b] / c;
    bin.mean_accuracy = correct_sum[b] / c;
    ece_total += (c / n) * std::fabs(bin.mean_accuracy - bin.mean_confidence);
  }
  report.ece = ece_total;
  report.accuracy = total_correct / n;
  report.auroc = auroc(ordered);
  return report;
}

}  // namespace rcal
