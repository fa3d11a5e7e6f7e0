#include <algorithm>
#include <cmath>
#include <vector>

#include <doctest.h>

#include "oracles.hpp"
#include "rcal/metrics.hpp"
#include "rcal/rng.hpp"

using rcal::ConfidenceSample;

namespace {

std::vector<ConfidenceSample> random_samples(rcal::Rng& rng, std::size_t n) {
  std::vector<ConfidenceSample> samples(n);
  for (auto& s : samples) {
    // Mix smooth values with exact bin edges to stress the edge convention.
    if (rng.bernoulli(0.25)) {
      s.confidence = rng.uniform_int(0, 10) / 10.0;
    } else {
      s.confidence = rng.uniform();
    }
    s.correct = rng.bernoulli(0.5);
  }
  return samples;
}

}  // namespace

TEST_CASE("bin_index follows the edge-to-higher-bin convention") {
  CHECK(rcal::bin_index(0.0, 10) == 0);
  CHECK(rcal::bin_index(0.05, 10) == 0);
  CHECK(rcal::bin_index(0.1, 10) == 1);   // interior edge -> higher bin
  CHECK(rcal::bin_index(0.65, 10) == 6);
  CHECK(rcal::bin_index(0.9999, 10) == 9);
  CHECK(rcal::bin_index(1.0, 10) == 9);   // 1.0 belongs to the last bin
  CHECK(rcal::bin_index(0.5, 2) == 1);
}

TEST_CASE("ece hand cases") {
  SUBCASE("perfect calibration at confidence 1.0") {
    std::vector<ConfidenceSample> samples(5, {1.0, true});
    CHECK(rcal::ece(samples, 10) == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("maximal miscalibration") {
    std::vector<ConfidenceSample> samples = {{1.0, false}};
    CHECK(rcal::ece(samples, 10) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("two occupied bins") {
    // bin [0.9,1.0]: conf 0.95, acc 0.5, gap 0.45, weight 0.5;
    // bin [0.1,0.2): conf 0.15, acc 0.5, gap 0.35, weight 0.5;
    // total 0.5*0.45 + 0.5*0.35 = 0.40.
    const std::vector<ConfidenceSample> samples = {
        {0.95, true}, {0.95, false}, {0.15, false}, {0.15, true}};
    CHECK(rcal::ece(samples, 10) == doctest::Approx(0.40).epsilon(1e-12));
    CHECK(rcal::ece(samples, 10) == doctest::Approx(oracle::ece(samples, 10)).epsilon(1e-15));
  }
  SUBCASE("single bin, half correct") {
    const std::vector<ConfidenceSample> samples = {{1.0, true}, {1.0, false}};
    CHECK(rcal::ece(samples, 10) == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("ece input validation") {
  const std::vector<ConfidenceSample> empty;
  CHECK_THROWS_AS((void)rcal::ece(empty, 10), std::invalid_argument);
  const std::vector<ConfidenceSample> one = {{0.5, true}};
  CHECK_THROWS_AS((void)rcal::ece(one, 0), std::invalid_argument);
  const std::vector<ConfidenceSample> bad = {{1.5, true}};
  CHECK_THROWS_AS((void)rcal::ece(bad, 10), std::invalid_argument);
  const std::vector<ConfidenceSample> negative = {{-0.1, true}};
  CHECK_THROWS_AS((void)rcal::ece(negative, 10), std::invalid_argument);
}

TEST_CASE("ece stays within [0,1] and matches the oracle on random sets") {
  rcal::Rng rng(11, 0x6d657472);
  for (int trial = 0; trial < 200; ++trial) {
    const auto samples = random_samples(rng, 1 + rng.uniform_int(0, 19));
    const int n_bins = 1 + static_cast<int>(rng.uniform_int(0, 14));
    const double value = rcal::ece(samples, n_bins);
    CHECK(value >= 0.0);
    CHECK(value <= 1.0);
    CHECK(value == doctest::Approx(oracle::ece(samples, n_bins)).epsilon(1e-12));
  }
}

TEST_CASE("auroc hand cases") {
  CHECK(*rcal::auroc(std::vector<ConfidenceSample>{{0.9, true}, {0.1, false}}) ==
        doctest::Approx(1.0).epsilon(1e-12));
  CHECK(*rcal::auroc(std::vector<ConfidenceSample>{{0.5, true}, {0.5, false}}) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // 3 of the 4 (positive, negative) pairs ordered correctly.
  const std::vector<ConfidenceSample> four = {
      {0.9, true}, {0.7, false}, {0.6, true}, {0.2, false}};
  CHECK(*rcal::auroc(four) == doctest::Approx(0.75).epsilon(1e-12));
  // Reversed separation.
  CHECK(*rcal::auroc(std::vector<ConfidenceSample>{{0.1, true}, {0.9, false}}) ==
        doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("auroc is undefined on single-class input") {
  CHECK_FALSE(rcal::auroc(std::vector<ConfidenceSample>{{0.4, true}, {0.9, true}}).has_value());
  CHECK_FALSE(rcal::auroc(std::vector<ConfidenceSample>{{0.4, false}}).has_value());
  CHECK_FALSE(rcal::auroc(std::vector<ConfidenceSample>{}).has_value());
}

TEST_CASE("auroc matches the pair-enumeration oracle on random sets") {
  rcal::Rng rng(12, 0x6d657472);
  for (int trial = 0; trial < 200; ++trial) {
    const auto samples = random_samples(rng, 1 + rng.uniform_int(0, 19));
    const auto expected = oracle::auroc(samples);
    const auto actual = rcal::auroc(samples);
    REQUIRE(actual.has_value() == expected.has_value());
    if (expected) CHECK(*actual == doctest::Approx(*expected).epsilon(1e-12));
  }
}

TEST_CASE("auroc invariances") {
  rcal::Rng rng(13, 0x6d657472);
  for (int trial = 0; trial < 50; ++trial) {
    const auto samples = random_samples(rng, 2 + rng.uniform_int(0, 18));
    const auto base = rcal::auroc(samples);
    // Strictly increasing transform of all confidences.
    auto transformed = samples;
    for (auto& s : transformed) s.confidence = s.confidence * 0.5 + 0.1;
    const auto mapped = rcal::auroc(transformed);
    REQUIRE(base.has_value() == mapped.has_value());
    if (base) CHECK(*mapped == doctest::Approx(*base).epsilon(1e-12));
    // Complement under label flip.
    auto flipped = samples;
    for (auto& s : flipped) s.correct = !s.correct;
    const auto complement = rcal::auroc(flipped);
    REQUIRE(base.has_value() == complement.has_value());
    if (base) CHECK(*complement == doctest::Approx(1.0 - *base).epsilon(1e-12));
  }
}

TEST_CASE("accuracy") {
  const std::vector<ConfidenceSample> samples = {{0.1, true}, {0.2, false}, {0.3, true}};
  CHECK(rcal::accuracy(samples) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS((void)rcal::accuracy(std::vector<ConfidenceSample>{}),
                  std::invalid_argument);
}

TEST_CASE("reliability_report hand case and structural invariants") {
  const std::vector<ConfidenceSample> samples = {{1.0, true}, {0.0, false}};
  const auto report = rcal::reliability_report(samples, 2);
  CHECK(report.n_bins == 2);
  CHECK(report.n_samples == 2);
  CHECK(report.ece == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(report.accuracy == doctest::Approx(0.5).epsilon(1e-12));
  REQUIRE(report.auroc.has_value());
  CHECK(*report.auroc == doctest::Approx(1.0).epsilon(1e-12));
  REQUIRE(report.bins.size() == 2);
  CHECK(report.bins[0].lower == doctest::Approx(0.0));
  CHECK(report.bins[0].upper == doctest::Approx(0.5));
  CHECK(report.bins[1].lower == doctest::Approx(0.5));
  CHECK(report.bins[1].upper == doctest::Approx(1.0));
  CHECK(report.bins[0].count + report.bins[1].count == 2);
  CHECK(report.bins[0].mean_confidence == doctest::Approx(0.0));
  CHECK(report.bins[1].mean_confidence == doctest::Approx(1.0));
}

TEST_CASE("reliability_report on all-correct input has undefined auroc") {
  const std::vector<ConfidenceSample> samples = {{0.9, true}, {0.8, true}};
  const auto report = rcal::reliability_report(samples, 10);
  CHECK(report.accuracy == doctest::Approx(1.0));
  CHECK_FALSE(report.auroc.has_value());
}

TEST_CASE("reports are bit-identical under permutation of samples") {
  rcal::Rng rng(14, 0x6d657472);
  for (int trial = 0; trial < 20; ++trial) {
    auto samples = random_samples(rng, 3 + rng.uniform_int(0, 17));
    const auto base = rcal::reliability_report(samples, 10);
    // Deterministic shuffle.
    for (std::size_t i = samples.size(); i > 1; --i) {
      std::swap(samples[i - 1], samples[rng.uniform_int(0, static_cast<int>(i) - 1)]);
    }
    const auto shuffled = rcal::reliability_report(samples, 10);
    CHECK(base.ece == shuffled.ece);  // bitwise
    CHECK(base.accuracy == shuffled.accuracy);
    REQUIRE(base.auroc.has_value() == shuffled.auroc.has_value());
    if (base.auroc) CHECK(*base.auroc == *shuffled.auroc);
    REQUIRE(base.bins.size() == shuffled.bins.size());
    for (std::size_t b = 0; b < base.bins.size(); ++b) {
      CHECK(base.bins[b].count == shuffled.bins[b].count);
      CHECK(base.bins[b].mean_confidence == shuffled.bins[b].mean_confidence);
      CHECK(base.bins[b].mean_accuracy == shuffled.bins[b].mean_accuracy);
    }
  }
}

TEST_CASE("reliability bin counts sum to the sample count") {
  rcal::Rng rng(15, 0x6d657472);
  for (int trial = 0; trial < 50; ++trial) {
    const auto samples = random_samples(rng, 1 + rng.uniform_int(0, 30));
    const int n_bins = 1 + static_cast<int>(rng.uniform_int(0, 11));
    const auto report = rcal::reliability_report(samples, n_bins);
    std::size_t total = 0;
    for (const auto& bin : report.bins) total += bin.count;
    CHECK(total == samples.size());
  }
}
