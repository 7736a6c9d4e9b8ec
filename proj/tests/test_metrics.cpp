#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "darccn/bench.hpp"
#include "darccn/data.hpp"
#include "darccn/metrics.hpp"
#include "darccn/model.hpp"

using namespace darccn;
using namespace darccn::metrics;

namespace {

// deterministic speech surrogate: harmonic stack under a slow envelope plus
// a little wideband excitation
std::vector<double> speech_like(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / 16000.0;
    const double env = 0.55 + 0.45 * std::sin(2.0 * M_PI * 2.5 * t);
    const double tone = 0.6 * std::sin(2.0 * M_PI * 220.0 * t) +
                        0.3 * std::sin(2.0 * M_PI * 440.0 * t + 0.7) +
                        0.15 * std::sin(2.0 * M_PI * 880.0 * t + 1.3);
    x[i] = 0.25 * env * (tone + 0.4 * rng.uniform(-1.0, 1.0));
  }
  return x;
}

std::vector<double> random_noise(std::size_t n, std::uint64_t seed, double amp = 0.3) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform(-amp, amp);
  return x;
}

}  // namespace

TEST_CASE("rational resampler") {
  SECTION("output length") {
    CHECK(resample_poly(std::vector<double>(4000, 0.0), 5, 8).size() == 2500);
    CHECK(resample_poly(std::vector<double>(16000, 0.0), 5, 8).size() == 10000);
    CHECK(resample_poly(std::vector<double>(7, 0.0), 5, 8).size() == 5);
  }
  SECTION("passes dc") {
    auto y = resample_poly(std::vector<double>(4000, 1.0), 5, 8);
    CHECK(y[y.size() / 2] == Catch::Approx(1.0).margin(1e-3));
  }
  SECTION("preserves an in-band tone at the right phase") {
    std::vector<double> tone(16000);
    for (std::size_t i = 0; i < tone.size(); ++i)
      tone[i] = std::sin(2.0 * M_PI * 1000.0 * static_cast<double>(i) / 16000.0);
    auto y = resample_poly(tone, 5, 8);
    double err = 0.0;
    for (std::size_t i = 400; i + 400 < y.size(); ++i) {
      const double want = std::sin(2.0 * M_PI * 1000.0 * static_cast<double>(i) / 10000.0);
      err = std::max(err, std::fabs(y[i] - want));
    }
    CHECK(err < 1e-3);
    auto sharp = resample_poly(tone, 5, 8, 641, 8.0);
    double err2 = 0.0;
    for (std::size_t i = 1000; i + 1000 < sharp.size(); ++i) {
      const double want = std::sin(2.0 * M_PI * 1000.0 * static_cast<double>(i) / 10000.0);
      err2 = std::max(err2, std::fabs(sharp[i] - want));
    }
    CHECK(err2 < 5e-5);
  }
  SECTION("group delay is compensated") {
    std::vector<double> x(4000, 0.0);
    x[800] = 1.0;
    auto y = resample_poly(x, 5, 8);
    std::size_t peak = 0;
    for (std::size_t i = 1; i < y.size(); ++i)
      if (std::fabs(y[i]) > std::fabs(y[peak])) peak = i;
    CHECK(peak == 500);
  }
  SECTION("bad arguments") {
    std::vector<double> x(100, 0.0);
    CHECK_THROWS_AS(resample_poly(x, 0, 8), std::invalid_argument);
    CHECK_THROWS_AS(resample_poly(x, 5, 0), std::invalid_argument);
    CHECK_THROWS_AS(resample_poly(x, 5, 8, 160), std::invalid_argument);
  }
}

TEST_CASE("intelligibility metric") {
  auto clean = speech_like(32000, 61);
  SECTION("perfect signal scores one") {
    CHECK(stoi(clean, clean) == Catch::Approx(1.0).margin(1e-6));
  }
  SECTION("invariant to polarity and gain") {
    auto flipped = clean;
    for (auto& v : flipped) v = -v;
    CHECK(stoi(clean, flipped) == Catch::Approx(1.0).margin(1e-6));
    auto loud = clean;
    for (auto& v : loud) v *= 3.7;
    CHECK(stoi(clean, loud) == Catch::Approx(1.0).margin(1e-6));
    CHECK(stoi(loud, clean) == Catch::Approx(1.0).margin(1e-6));
  }
  SECTION("tracks snr monotonically") {
    auto noise = random_noise(32000, 62);
    const double expected[] = {0.407534, 0.598862, 0.805299, 0.932006, 0.993829};
    const double snrs[] = {-5.0, 0.0, 5.0, 10.0, 20.0};
    double prev = -1.0;
    for (int i = 0; i < 5; ++i) {
      auto mix = data::mix_pair(clean, noise, snrs[i]);
      const double score = stoi(mix.clean, mix.noisy);
      CHECK(score > prev);
      CHECK(score == Catch::Approx(expected[i]).margin(1e-5));
      CHECK(score >= 0.0);
      CHECK(score <= 1.0);
      prev = score;
    }
  }
  SECTION("bad inputs") {
    CHECK_THROWS_AS(stoi(clean, random_noise(100, 1)), std::invalid_argument);
    std::vector<double> silent(32000, 0.0);
    CHECK_THROWS_AS(stoi(silent, clean), std::invalid_argument);
    auto brief = speech_like(6000, 61);
    CHECK_THROWS_AS(stoi(brief, brief), std::invalid_argument);
  }
  SECTION("too little active speech") {
    // one loud burst in an otherwise near-silent signal leaves the energy
    // gate with fewer frames than a correlation segment needs
    auto x = random_noise(16000, 63, 1e-6);
    for (std::size_t i = 2000; i < 2600; ++i)
      x[i] = 0.5 * std::sin(2.0 * M_PI * 300.0 * static_cast<double>(i) / 16000.0);
    CHECK_THROWS_AS(stoi(x, x), std::invalid_argument);
  }
}

TEST_CASE("scale invariant sdr") {
  SECTION("hand worked example") {
    // estimate = reference + orthogonal error of half the reference norm
    std::vector<double> ref = {3.0, 4.0};
    std::vector<double> est = {3.0 - 2.0, 4.0 + 1.5};
    CHECK(si_sdr(est, ref) == Catch::Approx(10.0 * std::log10(4.0)).margin(1e-12));
  }
  SECTION("perfect estimate is capped") {
    auto x = random_noise(1000, 64);
    CHECK(si_sdr(x, x) == kMetricCapDb);
    auto scaled = x;
    for (auto& v : scaled) v *= 0.01;
    CHECK(si_sdr(scaled, x) == kMetricCapDb);
  }
  SECTION("invariant to scaling either argument") {
    auto ref = random_noise(2000, 65);
    auto est = ref;
    Rng rng(66);
    for (auto& v : est) v += rng.uniform(-0.05, 0.05);
    const double base = si_sdr(est, ref);
    auto est2 = est;
    for (auto& v : est2) v *= 12.5;
    CHECK(std::fabs(si_sdr(est2, ref) - base) < 1e-9);
    auto ref2 = ref;
    for (auto& v : ref2) v *= 0.03;
    CHECK(std::fabs(si_sdr(est, ref2) - base) < 1e-9);
  }
  SECTION("near orthogonal estimate scores very low") {
    std::vector<double> ref(1000), est(1000);
    for (std::size_t i = 0; i < ref.size(); ++i) {
      ref[i] = std::sin(2.0 * M_PI * 50.0 * static_cast<double>(i) / 1000.0);
      est[i] = std::cos(2.0 * M_PI * 50.0 * static_cast<double>(i) / 1000.0) + 1e-9 * ref[i];
    }
    CHECK(si_sdr(est, ref) < -80.0);
  }
  SECTION("bad inputs") {
    std::vector<double> a(10, 0.1), b(11, 0.1), empty;
    CHECK_THROWS_AS(si_sdr(a, b), std::invalid_argument);
    CHECK_THROWS_AS(si_sdr(empty, empty), std::invalid_argument);
    std::vector<double> silent(10, 0.0);
    CHECK_THROWS_AS(si_sdr(a, silent), std::invalid_argument);
  }
}

TEST_CASE("snr measurement") {
  SECTION("identical signals are capped") {
    auto x = random_noise(500, 67);
    CHECK(measure_snr(x, x) == kMetricCapDb);
  }
  SECTION("known rms ratio") {
    std::vector<double> clean(400), noisy(400);
    for (std::size_t i = 0; i < clean.size(); ++i) {
      clean[i] = (i % 2 == 0) ? 0.5 : -0.5;
      noisy[i] = clean[i] + ((i % 2 == 0) ? 0.05 : -0.05);
    }
    CHECK(measure_snr(clean, noisy) == Catch::Approx(20.0).margin(1e-12));
  }
  SECTION("agrees with the mixer's bookkeeping") {
    auto clean = speech_like(8000, 68);
    auto noise = random_noise(8000, 69);
    for (double snr : {0.0, 12.0, 30.0}) {
      auto mix = data::mix_pair(clean, noise, snr);
      CHECK(measure_snr(mix.clean, mix.noisy) == Catch::Approx(mix.measured_snr).margin(1e-9));
      CHECK(measure_snr(mix.clean, mix.noisy) == Catch::Approx(snr).margin(1e-9));
    }
  }
  SECTION("bad inputs") {
    std::vector<double> a(10, 0.1), b(11, 0.1), empty;
    CHECK_THROWS_AS(measure_snr(a, b), std::invalid_argument);
    CHECK_THROWS_AS(measure_snr(empty, empty), std::invalid_argument);
    std::vector<double> silent(10, 0.0);
    CHECK_THROWS_AS(measure_snr(silent, a), std::invalid_argument);
  }
}

TEST_CASE("latency benchmark") {
  SECTION("percentile picks the nearest rank") {
    std::vector<double> pool(100);
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<double>(i + 1);
    CHECK(bench::percentile(pool, 0.0) == 1.0);
    CHECK(bench::percentile(pool, 0.5) == 51.0);
    CHECK(bench::percentile(pool, 0.95) == 95.0);
    CHECK(bench::percentile(pool, 0.99) == 99.0);
    CHECK(bench::percentile(pool, 1.0) == 100.0);
    std::vector<double> empty;
    CHECK(bench::percentile(empty, 0.5) == 0.0);
  }
  SECTION("report geometry and ordering") {
    nn::Darccn model(nn::ModelConfig::desk());
    bench::BenchConfig bc;
    bc.utterances = 3;
    bc.trials = 2;
    bc.utt_seconds = 0.1;
    bench::LatencyReport rep = bench::bench_latency(model, bc);
    CHECK(rep.utterances == 3);
    CHECK(rep.trials == 2);
    CHECK(rep.frames_per_utterance == 49);
    CHECK(rep.frame_budget_ms == Catch::Approx(2.0).margin(1e-12));
    CHECK(rep.mean_ms > 0.0);
    CHECK(rep.p50_ms > 0.0);
    CHECK(rep.p50_ms <= rep.p95_ms);
    CHECK(rep.p95_ms <= rep.p99_ms);
    CHECK_FALSE(rep.hardware.empty());
    CHECK(rep.hardware.find("cores") != std::string::npos);

    bc.utt_seconds = 0.2;
    CHECK(bench::bench_latency(model, bc).frames_per_utterance == 99);
  }
  SECTION("model inference dominates the harness") {
    nn::Darccn model(nn::ModelConfig::desk());
    const signal::StftConfig& sc = model.stft_config();
    bench::BenchConfig bc;
    bc.utterances = 4;
    bc.trials = 2;
    bc.utt_seconds = 0.1;
    auto with_model = bench::bench_latency(model, bc);
    auto passthrough =
        bench::bench_frames([&sc] { return nn::EnhanceSession(sc); }, sc, bc);
    CHECK(passthrough.mean_ms < with_model.mean_ms);
  }
  SECTION("bad configuration") {
    nn::Darccn model(nn::ModelConfig::desk());
    bench::BenchConfig bc;
    bc.utterances = 0;
    CHECK_THROWS_AS(bench::bench_latency(model, bc), std::invalid_argument);
    bc.utterances = 1;
    bc.trials = 0;
    CHECK_THROWS_AS(bench::bench_latency(model, bc), std::invalid_argument);
    bc.trials = 1;
    bc.utt_seconds = 0.003;
    CHECK_THROWS_AS(bench::bench_latency(model, bc), std::invalid_argument);
  }
}
