// Timing comparison between the OpenMP kernels and their serial reference
// twins: batch loss gradients, rollout generation, and probe scoring.  The
// parallel and serial paths are bit-identical by construction (verified in the
// unit tests); this target only reports throughput.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "rcal/forge.hpp"
#include "rcal/parallel.hpp"
#include "rcal/probe.hpp"
#include "rcal/rng.hpp"
#include "rcal/scorer.hpp"
#include "rcal/sim.hpp"

namespace {

using Clock = std::chrono::steady_clock;

template <typename Fn>
double time_best_of(int repeats, Fn&& body) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto start = Clock::now();
    body();
    const auto stop = Clock::now();
    best = std::min(best, std::chrono::duration<double>(stop - start).count());
  }
  return best;
}

void report(const char* name, double serial_s, double parallel_s) {
  std::printf("%-24s %10.3f ms %10.3f ms %8.2fx\n", name, serial_s * 1e3, parallel_s * 1e3,
              serial_s / parallel_s);
}

}  // namespace

int main() {
  using namespace rcal;
  constexpr int kRepeats = 5;
  const int threads = max_threads();
  std::printf("threads available: %d\n", threads);
  std::printf("%-24s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

  // Batch loss gradients on an MLP scorer (heaviest per-item work).
  {
    const auto scorer = DifferentiableScorer::mlp({16, 16}, 7);
    Rng rng(7, 0x62656e63);
    std::vector<PreferenceExample> pref(20000);
    std::vector<QuadrupleExample> quad(10000);
    for (auto& ex : pref) {
      ex.chosen = FeatureVector{rng.uniform(), rng.uniform()};
      ex.rejected = FeatureVector{rng.uniform(), rng.uniform()};
    }
    for (auto& ex : quad) {
      ex.chosen_high = FeatureVector{rng.uniform(), rng.uniform()};
      ex.chosen_low = FeatureVector{rng.uniform(), rng.uniform()};
      ex.rejected_high = FeatureVector{rng.uniform(), rng.uniform()};
      ex.rejected_low = FeatureVector{rng.uniform(), rng.uniform()};
    }
    double checksum = 0.0;
    const double pref_serial =
        time_best_of(kRepeats, [&] { checksum += preference_loss_serial(scorer, pref).value; });
    const double pref_parallel =
        time_best_of(kRepeats, [&] { checksum += preference_loss(scorer, pref).value; });
    report("preference_loss", pref_serial, pref_parallel);
    const double crm_serial =
        time_best_of(kRepeats, [&] { checksum += crm_loss_serial(scorer, quad).value; });
    const double crm_parallel =
        time_best_of(kRepeats, [&] { checksum += crm_loss(scorer, quad).value; });
    report("crm_loss", crm_serial, crm_parallel);
    if (checksum == 1e300) std::printf("unreachable\n");
  }

  // Rollout generation at 64x the default batch size.
  {
    EnvironmentSpec env;
    env.episodes_per_batch = 32768;
    ConfidencePolicy policy(env.n_archetypes);
    std::size_t checksum = 0;
    const double serial = time_best_of(kRepeats, [&] {
      checksum += rollout_serial(env, policy, 1).size();
    });
    const double parallel = time_best_of(kRepeats, [&] {
      checksum += rollout(env, policy, 1).size();
    });
    report("rollout", serial, parallel);
    if (checksum == 0) std::printf("unreachable\n");
  }

  // Probe scoring with a toy MLP binding.
  {
    std::vector<PreferencePair> pairs(5000);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      pairs[i].id = "p" + std::to_string(i);
      pairs[i].prompt = "prompt body " + std::to_string(i);
      pairs[i].chosen = "chosen response";
      pairs[i].rejected = "rejected response";
      pairs[i].chosen_score = 0.9;
      pairs[i].rejected_score = 0.1;
    }
    const auto items = make_probe_items(pairs, ProbeMode::ConfidenceReversed, 7);
    const auto binding = ScorerBinding::toy(DifferentiableScorer::mlp({16, 16}, 7));
    ProbeOptions serial_opts;
    serial_opts.parallelism = 1;
    ProbeOptions parallel_opts;
    parallel_opts.parallelism = threads;
    std::size_t checksum = 0;
    const double serial = time_best_of(kRepeats, [&] {
      checksum += run_probe(binding, items, serial_opts).front().n_items;
    });
    const double parallel = time_best_of(kRepeats, [&] {
      checksum += run_probe(binding, items, parallel_opts).front().n_items;
    });
    report("probe_scoring", serial, parallel);
    if (checksum == 0) std::printf("unreachable\n");
  }

  return 0;
}
