#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

// Calibration metrics over (confidence, correct) samples: expected calibration
// error, area under the ROC curve, accuracy, and a combined reliability
// report.  All functions are pure; none of them mutate their inputs.
//
// Binning convention (shared by ece and reliability_report): n_bins equal-width
// bins over [0, 1].  A confidence lying exactly on an interior edge belongs to
// the higher bin, and confidence 1.0 belongs to the last bin, so the bins
// partition [0, 1] with no gaps.

namespace rcal {

struct ConfidenceSample {
  double confidence = 0.0;  // in [0, 1]
  bool correct = false;
};

struct ReliabilityBin {
  double lower = 0.0;  // inclusive
  double upper = 0.0;  // exclusive, except the last bin which includes 1.0
  std::size_t count = 0;
  double mean_confidence = 0.0;  // 0 when the bin is empty
  double mean_accuracy = 0.0;    // 0 when the bin is empty
};

struct ReliabilityReport {
  int n_bins = 0;
  std::size_t n_samples = 0;
  std::vector<ReliabilityBin> bins;
  double ece = 0.0;
  std::optional<double> auroc;  // empty when only one class is present
  double accuracy = 0.0;
};

// Which bin a confidence value falls in under the convention above.
int bin_index(double confidence, int n_bins);

// Expected calibration error: sum over bins of (bin weight) * |accuracy gap|.
// Throws std::invalid_argument on an empty sample list, n_bins < 1, or a
// confidence outside [0, 1].
double ece(std::span<const ConfidenceSample> samples, int n_bins);

// Probability that a uniformly random correct sample outranks a uniformly
// random incorrect one, ties counting one half (rank formulation with average
// ranks).  Undefined -- and reported as nullopt -- when either class is empty.
std::optional<double> auroc(std::span<const ConfidenceSample> samples);

// Fraction of samples marked correct.  Throws on an empty list.
double accuracy(std::span<const ConfidenceSample> samples);

// All of the above plus the per-bin breakdown in one pass.
ReliabilityReport reliability_report(std::span<const ConfidenceSample> samples,
                                     int n_bins);

}  // namespace rcal
