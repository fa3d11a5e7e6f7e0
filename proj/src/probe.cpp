#include "rcal/probe.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "rcal/confidence.hpp"
#include "rcal/parallel.hpp"

namespace rcal {
namespace {

struct ParsedUrl {
  std::string host;
  int port = 80;
  std::string path = "/";
};

ParsedUrl parse_http_url(const std::string& url) {
  constexpr std::string_view scheme = "http://";
  if (url.rfind(scheme, 0) != 0) {
    throw std::invalid_argument("remote endpoint: only http:// URLs are supported, got " + url);
  }
  ParsedUrl out;
  std::string rest = url.substr(scheme.size());
  const std::size_t slash = rest.find('/');
  std::string authority = slash == std::string::npos ? rest : rest.substr(0, slash);
  if (slash != std::string::npos) out.path = rest.substr(slash);
  const std::size_t colon = authority.find(':');
  if (colon == std::string::npos) {
    out.host = authority;
  } else {
    out.host = authority.substr(0, colon);
    out.port = std::stoi(authority.substr(colon + 1));
  }
  if (out.host.empty()) throw std::invalid_argument("remote endpoint: URL has no host: " + url);
  return out;
}

// One worker's connection to the scoring endpoint.
class RemoteScorer {
 public:
  explicit RemoteScorer(const RemoteEndpoint& endpoint)
      : endpoint_(endpoint), url_(parse_http_url(endpoint.url)), client_(url_.host, url_.port) {
    if (!(endpoint.timeout_seconds > 0.0)) {
      throw std::invalid_argument("remote endpoint: timeout must be > 0");
    }
    const auto whole = static_cast<time_t>(endpoint.timeout_seconds);
    const auto micros =
        static_cast<long>((endpoint.timeout_seconds - static_cast<double>(whole)) * 1e6);
    client_.set_connection_timeout(whole, micros);
    client_.set_read_timeout(whole, micros);
    client_.set_write_timeout(whole, micros);
    if (const char* token = std::getenv(kBearerTokenEnv); token != nullptr && *token != '\0') {
      client_.set_default_headers({{"Authorization", std::string("Bearer ") + token}});
    }
  }

  double score(std::string_view prompt, std::string_view response_text) {
    nlohmann::json body;
    body["prompt"] = prompt;
    body["response"] = response_text;
    const std::string payload = body.dump();

    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
      auto res = client_.Post(url_.path, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status < 200 || res->status >= 300) {
        last_error = "HTTP status " + std::to_string(res->status);
        continue;
      }
      try {
        const auto reply = nlohmann::json::parse(res->body);
        if (!reply.contains("score") || !reply["score"].is_number()) {
          last_error = "reply missing numeric \"score\"";
          continue;
        }
        return reply["score"].get<double>();
      } catch (const nlohmann::json::exception& e) {
        last_error = std::string("malformed reply: ") + e.what();
        continue;
      }
    }
    throw std::runtime_error("remote scoring failed after " +
                             std::to_string(endpoint_.max_retries + 1) + " attempts (" +
                             last_error + ")");
  }

 private:
  RemoteEndpoint endpoint_;
  ParsedUrl url_;
  httplib::Client client_;
};

double toy_score(const DifferentiableScorer& scorer, std::string_view response,
                 std::optional<double> quality) {
  if (!quality) {
    throw std::invalid_argument(
        "toy scorer binding requires a quality label on the probe item "
        "(source pairs need chosen_score/rejected_score)");
  }
  if (!(*quality >= 0.0 && *quality <= 1.0)) {
    throw std::invalid_argument("probe item quality label outside [0, 1]");
  }
  const ParsedResponse parsed = parse_confidence(response);
  const FeatureVector features{*quality, parsed.confidence().value_or(0.0)};
  return scorer.score(features);
}

struct ScoredItem {
  double score_a = 0.0;
  double score_b = 0.0;
  bool failed = false;
};

}  // namespace

ScorerBinding ScorerBinding::toy(DifferentiableScorer scorer) {
  ScorerBinding binding;
  binding.kind = scorer.architecture() == Architecture::Linear ? Kind::ToyLinear : Kind::ToyMlp;
  binding.scorer = std::move(scorer);
  return binding;
}

ScorerBinding ScorerBinding::remote(RemoteEndpoint endpoint) {
  ScorerBinding binding;
  binding.kind = Kind::Remote;
  binding.endpoint = std::move(endpoint);
  return binding;
}

double score_item(const ScorerBinding& binding, std::string_view prompt,
                  std::string_view response, std::optional<double> quality) {
  if (binding.kind == ScorerBinding::Kind::Remote) {
    RemoteScorer remote(binding.endpoint);
    return remote.score(prompt, response);
  }
  return toy_score(*binding.scorer, response, quality);
}

std::vector<ProbeStats> run_probe(const ScorerBinding& binding,
                                  std::span<const ProbeItem> items,
                                  const ProbeOptions& options) {
  std::vector<ScoredItem> scored(items.size());

  if (binding.kind == ScorerBinding::Kind::Remote) {
    // Slot-per-item writes keep the aggregation independent of completion
    // order; each worker owns one connection.
    const int bound = options.parallelism > 0 ? options.parallelism : 4;
    const auto n_workers =
        static_cast<std::size_t>(std::min<std::size_t>(static_cast<std::size_t>(bound),
                                                       std::max<std::size_t>(items.size(), 1)));
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (std::size_t t = 0; t < n_workers; ++t) {
      workers.emplace_back([&]() {
        RemoteScorer remote(binding.endpoint);
        for (std::size_t i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1)) {
          try {
            scored[i].score_a = remote.score(items[i].prompt, items[i].response_a);
            scored[i].score_b = remote.score(items[i].prompt, items[i].response_b);
          } catch (const std::exception&) {
            scored[i].failed = true;
          }
        }
      });
    }
    for (auto& w : workers) w.join();
  } else {
    const DifferentiableScorer& scorer = *binding.scorer;
    // Validate before entering the parallel region: an exception thrown from
    // inside it would terminate instead of propagating.
    for (const ProbeItem& item : items) {
      for (const auto* quality : {&item.quality_a, &item.quality_b}) {
        if (!quality->has_value()) {
          throw std::invalid_argument("toy scorer binding requires quality labels; item \"" +
                                      item.id + "\" has none (source pairs need "
                                      "chosen_score/rejected_score)");
        }
        if (!(**quality >= 0.0 && **quality <= 1.0)) {
          throw std::invalid_argument("probe item \"" + item.id +
                                      "\" has a quality label outside [0, 1]");
        }
      }
    }
    if (options.parallelism > 0) set_threads(options.parallelism);
    parallel_for(items.size(), [&](std::size_t i) {
      scored[i].score_a = toy_score(scorer, items[i].response_a, items[i].quality_a);
      scored[i].score_b = toy_score(scorer, items[i].response_b, items[i].quality_b);
    });
  }

  std::size_t n_scored_total = 0;
  for (const auto& s : scored) n_scored_total += s.failed ? 0 : 1;
  if (!items.empty() && n_scored_total == 0) {
    throw std::runtime_error("run_probe: every item failed to score");
  }

  constexpr ProbeMode kModes[] = {ProbeMode::AnswerOnly, ProbeMode::ConfidenceReversed,
                                  ProbeMode::ChosenWithConf, ProbeMode::RejectedWithConf};
  std::vector<ProbeStats> stats;
  for (ProbeMode mode : kModes) {
    ProbeStats st;
    st.mode = mode;
    double wins = 0.0;
    double margin_sum = 0.0;
    bool mode_present = false;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].mode != mode) continue;
      mode_present = true;
      if (scored[i].failed) {
        ++st.n_failed;
        continue;
      }
      ++st.n_items;
      const double a = scored[i].score_a;
      const double b = scored[i].score_b;
      ProbeItemResult r;
      r.id = items[i].id;
      r.score_a = a;
      r.score_b = b;
      r.winner = a > b ? 'A' : (b > a ? 'B' : 'T');
      st.per_item.push_back(std::move(r));

      const bool expect_a = items[i].expected_winner == Winner::A;
      const double margin = expect_a ? a - b : b - a;
      margin_sum += margin;
      if (margin > 0.0) {
        wins += 1.0;
      } else if (margin == 0.0) {
        wins += 0.5;
      }
    }
    if (!mode_present) continue;
    if (st.n_items > 0) {
      st.expected_winner_rate = wins / static_cast<double>(st.n_items);
      st.mean_margin = margin_sum / static_cast<double>(st.n_items);
    }
    std::stable_sort(st.per_item.begin(), st.per_item.end(),
                     [](const ProbeItemResult& x, const ProbeItemResult& y) { return x.id < y.id; });
    stats.push_back(std::move(st));
  }
  return stats;
}

}  // namespace rcal
