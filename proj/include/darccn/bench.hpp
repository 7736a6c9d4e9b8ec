#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "darccn/common.hpp"
#include "darccn/model.hpp"

namespace darccn::bench {

struct BenchConfig {
  long utterances = 500;
  long trials = 5;
  double utt_seconds = 1.0;
  std::uint64_t seed = 99;
};

struct LatencyReport {
  long utterances = 0;
  long trials = 0;
  long frames_per_utterance = 0;
  double frame_budget_ms = 0.0;  // hop duration, the real-time deadline
  double mean_ms = 0.0;          // per-trial means, averaged
  double p50_ms = 0.0;           // pooled across all trials
  double p95_ms = 0.0;
  double p99_ms = 0.0;
  std::string hardware;
};

inline std::string hardware_descriptor() {
  std::ifstream in("/proc/cpuinfo");
  std::string line, model;
  long cores = 0;
  while (std::getline(in, line)) {
    if (line.rfind("processor", 0) == 0) ++cores;
    if (model.empty() && line.rfind("model name", 0) == 0) {
      const auto pos = line.find(':');
      if (pos != std::string::npos) {
        model = line.substr(pos + 1);
        const auto first = model.find_first_not_of(" \t");
        model = first == std::string::npos ? "" : model.substr(first);
      }
    }
  }
  if (model.empty()) model = "unknown cpu";
  if (cores == 0) cores = static_cast<long>(std::thread::hardware_concurrency());
  return model + " (" + std::to_string(cores) + " logical cores)";
}

inline double percentile(std::vector<double>& sorted_pool, double p) {
  if (sorted_pool.empty()) return 0.0;
  const auto idx = static_cast<std::size_t>(
      std::llround(p * static_cast<double>(sorted_pool.size() - 1)));
  return sorted_pool[std::min(idx, sorted_pool.size() - 1)];
}

// Streams seeded noise utterances hop by hop through fresh sessions, timing
// each feed call that produces a frame. The same utterances are replayed in
// every trial.
inline LatencyReport bench_frames(const std::function<nn::EnhanceSession()>& make_session,
                                  const signal::StftConfig& sc, const BenchConfig& bc) {
  if (bc.utterances < 1 || bc.trials < 1)
    throw std::invalid_argument("bench: utterances and trials must be positive");
  const long n_samples = std::lround(bc.utt_seconds * sc.sample_rate);
  if (n_samples < sc.win_len)
    throw std::invalid_argument("bench: utterance shorter than one analysis window");
  const long frames = 1 + (n_samples - sc.win_len) / sc.hop;
  const long prefill = sc.win_len - sc.hop;

  std::vector<std::vector<double>> utts(static_cast<std::size_t>(bc.utterances));
  for (long u = 0; u < bc.utterances; ++u) {
    Rng rng(derive_seed(bc.seed, static_cast<std::uint64_t>(u)));
    auto& w = utts[static_cast<std::size_t>(u)];
    w.resize(static_cast<std::size_t>(n_samples));
    for (auto& v : w) v = rng.uniform(-0.5, 0.5);
  }

  using clock = std::chrono::steady_clock;
  std::vector<double> pooled;
  pooled.reserve(static_cast<std::size_t>(bc.trials * bc.utterances * frames));
  std::vector<double> trial_means;
  for (long trial = 0; trial < bc.trials; ++trial) {
    double sum = 0.0;
    long count = 0;
    for (long u = 0; u < bc.utterances; ++u) {
      const double* x = utts[static_cast<std::size_t>(u)].data();
      nn::EnhanceSession session = make_session();
      session.feed(x, static_cast<std::size_t>(prefill));
      long off = prefill;
      for (long f = 0; f < frames; ++f) {
        const auto t0 = clock::now();
        session.feed(x + off, static_cast<std::size_t>(sc.hop));
        const auto t1 = clock::now();
        const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        pooled.push_back(ms);
        sum += ms;
        ++count;
        off += sc.hop;
      }
    }
    trial_means.push_back(sum / static_cast<double>(count));
  }

  LatencyReport rep;
  rep.utterances = bc.utterances;
  rep.trials = bc.trials;
  rep.frames_per_utterance = frames;
  rep.frame_budget_ms = 1000.0 * static_cast<double>(sc.hop) / sc.sample_rate;
  for (double m : trial_means) rep.mean_ms += m;
  rep.mean_ms /= static_cast<double>(trial_means.size());
  std::sort(pooled.begin(), pooled.end());
  rep.p50_ms = percentile(pooled, 0.50);
  rep.p95_ms = percentile(pooled, 0.95);
  rep.p99_ms = percentile(pooled, 0.99);
  rep.hardware = hardware_descriptor();
  return rep;
}

inline LatencyReport bench_latency(nn::Darccn& model, const BenchConfig& bc) {
  return bench_frames([&model] { return nn::EnhanceSession(model); }, model.stft_config(), bc);
}

}  // namespace darccn::bench
