#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "darccn/model.hpp"
#include "support/oracles.hpp"

using namespace darccn;
using namespace darccn::nn;

namespace {

std::vector<double> random_signal(std::size_t n, Rng& rng, double amp = 0.5) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform(-amp, amp);
  return x;
}

Tensor random_spectrum(long T, long bins, Rng& rng, double amp = 1.0) {
  Tensor x({2, T, bins});
  for (long i = 0; i < x.numel(); ++i) x[static_cast<std::size_t>(i)] = rng.uniform(-amp, amp);
  return x;
}

double rel_l2(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += a[i] * a[i];
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

}  // namespace

TEST_CASE("model configuration") {
  SECTION("presets") {
    ModelConfig p = ModelConfig::full_scale();
    CHECK(p.win_len == 320);
    CHECK(p.bins() == 161);
    CHECK(p.stages == 3);
    CHECK(p.ch(16) == 16);
    ModelConfig d = ModelConfig::desk();
    CHECK(d.bins() == 33);
    CHECK(d.ch(16) == 4);
    CHECK(d.ch(64) == 16);
    CHECK(d.glu_width == 24);
    ModelConfig m = ModelConfig::micro();
    CHECK(m.ch(16) == 1);
    CHECK(m.stages == 2);
    CHECK(m.glu_blocks == 2);
  }
  SECTION("validation") {
    ModelConfig c;
    c.win_len = 30;
    CHECK_THROWS_AS(validate(c), shape_error);
    c = ModelConfig();
    c.win_len = 65;
    CHECK_THROWS_AS(validate(c), shape_error);
    c = ModelConfig();
    c.stages = 0;
    CHECK_THROWS_AS(validate(c), shape_error);
    c = ModelConfig();
    c.scale = 0;
    CHECK_THROWS_AS(validate(c), shape_error);
    c = ModelConfig();
    c.glu_blocks = 0;
    CHECK_THROWS_AS(validate(c), shape_error);
    CHECK_THROWS_AS(Darccn(c), shape_error);
  }
  SECTION("serialized entries round trip") {
    ModelConfig d = ModelConfig::desk();
    ModelConfig back = config_from_entries(config_entries(d));
    CHECK(back.win_len == d.win_len);
    CHECK(back.scale == d.scale);
    CHECK(back.glu_width == d.glu_width);
    CHECK(back.sample_rate == d.sample_rate);

    auto entries = config_entries(d);
    entries.pop_back();
    CHECK_THROWS_AS(config_from_entries(entries), protocol_error);
    entries = config_entries(d);
    entries.emplace_back("mystery", 3);
    CHECK_THROWS_AS(config_from_entries(entries), protocol_error);
  }
}

TEST_CASE("architecture accounting") {
  SECTION("reference scale") {
    Darccn model(ModelConfig::full_scale());
    CHECK(model.total_params() == 1412070);
    CHECK(model.macs_per_frame() == 42500256);
    CHECK(model.macs_per_frame() % 3 == 0);
    CHECK(model.macs_per_frame() / 3 == 14166752);

    std::map<std::string, LayerStat> by_name;
    for (const auto& s : model.layer_stats()) by_name[s.name] = s;
    CHECK(by_name.at("agm.enc1").params == 688);
    CHECK(by_name.at("agm.enc1").macs == 51840);
    CHECK(by_name.at("agm.dec5").params == 5168);
    CHECK(by_name.at("nrm.srnn").params == 1008);
    CHECK(by_name.at("nrm.srnn").macs == 154560);
    CHECK(by_name.at("nrm.glu1").params == 138620);
    CHECK(by_name.at("nrm.glu1").macs == 830208);
    CHECK(by_name.at("nrm.re.conv6").params == 321);
    CHECK(by_name.at("nrm.im.conv6").params == 321);
    CHECK(by_name.at("nrm.re.gate1").params == by_name.at("nrm.im.gate1").params);

    long sum = 0;
    for (const auto& s : model.layer_stats()) sum += s.params;
    CHECK(sum == model.total_params());
  }
  SECTION("desk and micro scales") {
    Darccn desk(ModelConfig::desk());
    CHECK(desk.total_params() == 90570);
    CHECK(desk.macs_per_frame() == 771432);
    Darccn micro(ModelConfig::micro());
    CHECK(micro.total_params() == 3335);
    CHECK(micro.macs_per_frame() == 25880);
  }
  SECTION("recursion depth shares parameters but multiplies work") {
    ModelConfig base = ModelConfig::micro();
    long params1 = 0, macs1 = 0;
    for (long q : {1L, 2L, 5L}) {
      ModelConfig c = base;
      c.stages = q;
      Darccn m(c);
      if (q == 1) {
        params1 = m.total_params();
        macs1 = m.macs_per_frame();
      }
      CHECK(m.total_params() == params1);
      CHECK(m.macs_per_frame() == macs1 * q);
    }
  }
  SECTION("construction is deterministic in the seed") {
    Darccn a(ModelConfig::micro(), 42);
    Darccn b(ModelConfig::micro(), 42);
    Darccn c(ModelConfig::micro(), 43);
    bool any_diff = false;
    for (const auto& e : a.registry().entries()) {
      CHECK(oracle::max_abs_diff(e.var.value(), b.registry().find(e.name).value()) == 0.0);
      if (oracle::max_abs_diff(e.var.value(), c.registry().find(e.name).value()) > 0.0)
        any_diff = true;
    }
    CHECK(any_diff);
  }
}

TEST_CASE("model forward") {
  Rng rng(401);
  ModelConfig cfg = ModelConfig::desk();
  Darccn model(cfg);

  SECTION("stage estimates keep the spectral shape") {
    Tensor X = random_spectrum(5, cfg.bins(), rng);
    NoGrad ng;
    auto stages = model.forward({Var(X)}, false);
    REQUIRE(stages.size() == static_cast<std::size_t>(cfg.stages));
    for (const auto& stage : stages) {
      REQUIRE(stage.size() == 1);
      CHECK(stage[0].value().dims() == std::vector<long>({2, 5, cfg.bins()}));
      for (long i = 0; i < stage[0].value().numel(); ++i)
        CHECK(std::isfinite(stage[0].value()[static_cast<std::size_t>(i)]));
    }
  }
  SECTION("stages refine rather than repeat") {
    Tensor X = random_spectrum(4, cfg.bins(), rng);
    NoGrad ng;
    auto stages = model.forward({Var(X)}, false);
    CHECK(oracle::max_abs_diff(stages[0][0].value(), stages[2][0].value()) > 1e-8);
  }
  SECTION("batch items keep their own frame counts") {
    NoGrad ng;
    auto stages = model.forward(
        {Var(random_spectrum(3, cfg.bins(), rng)), Var(random_spectrum(7, cfg.bins(), rng))},
        true);
    CHECK(stages.back()[0].value().frames() == 3);
    CHECK(stages.back()[1].value().frames() == 7);
  }
  SECTION("evaluation is a pure function") {
    Tensor X = random_spectrum(4, cfg.bins(), rng);
    Tensor y1 = model.enhance_spec(X);
    Tensor y2 = model.enhance_spec(X);
    CHECK(oracle::max_abs_diff(y1, y2) == 0.0);
  }
  SECTION("future frames cannot influence the past") {
    for (int trial = 0; trial < 10; ++trial) {
      const long T = 10;
      Tensor X = random_spectrum(T, cfg.bins(), rng);
      Tensor y1 = model.enhance_spec(X);
      const long t0 = 2 + static_cast<long>(rng.next_below(static_cast<std::uint64_t>(T - 2)));
      Tensor X2 = X;
      for (long c = 0; c < 2; ++c)
        for (long f = 0; f < cfg.bins(); ++f) X2.at(c, t0, f) += rng.uniform(0.1, 1.0);
      Tensor y2 = model.enhance_spec(X2);
      for (long c = 0; c < 2; ++c)
        for (long t = 0; t < t0; ++t)
          for (long f = 0; f < cfg.bins(); ++f) {
            REQUIRE(y1.at(c, t, f) == y2.at(c, t, f));
          }
      CHECK(oracle::max_abs_diff(y1, y2) > 0.0);
    }
  }
}

TEST_CASE("identity bypass reconstructs the input") {
  // Wire the weights so the whole network passes the noisy spectrum through:
  // the recurrent cell copies the input into its state at a small scale, the
  // coupling gate saturates open, the first encoder shifts everything into
  // the linear region of the ELU, every other path is zeroed, and the output
  // convolutions undo the scaling. The enhanced utterance must then match the
  // analysis-synthesis round trip of the input.
  ModelConfig cfg = ModelConfig::desk();
  Darccn model(cfg);
  ParamRegistry& reg = model.registry();
  for (const auto& e : reg.entries())
    if (e.trainable) e.var.value().fill(0.0);

  const double eps = 1e-5;
  const double lift = 10.0;
  const long c16 = cfg.ch(16);
  reg.find("nrm.srnn.z.b").value().fill(50.0);
  reg.find("nrm.srnn.n.w").value().at4(0, 0, 0, 0) = eps;
  reg.find("nrm.srnn.n.w").value().at4(1, 1, 0, 0) = eps;
  reg.find("nrm.couple.b").value().fill(50.0);
  reg.find("nrm.enc1.w").value().at4(0, 0, 0, 2) = 1.0;
  reg.find("nrm.enc1.w").value().at4(1, 1, 0, 2) = 1.0;
  reg.find("nrm.enc1.gamma").value().fill(std::sqrt(1.0 + 1e-5));
  reg.find("nrm.enc1.beta").value().fill(lift);
  for (const char* side : {"nrm.re", "nrm.im"})
    for (int k = 1; k <= 6; ++k)
      reg.find(std::string(side) + ".gate" + std::to_string(k) + ".psi.b").value().fill(50.0);
  reg.find("nrm.re.conv6.w").value().at4(0, c16 + 0, 0, 2) = 1.0 / eps;
  reg.find("nrm.re.conv6.b").value().fill(-lift / eps);
  reg.find("nrm.im.conv6.w").value().at4(0, c16 + 1, 0, 2) = 1.0 / eps;
  reg.find("nrm.im.conv6.b").value().fill(-lift / eps);

  Rng rng(402);
  Waveform wav;
  wav.samples = random_signal(4800, rng, 0.05);

  SECTION("spectra pass through every stage") {
    Tensor X = signal::pack_features(signal::stft(wav.samples, model.stft_config()));
    NoGrad ng;
    auto stages = model.forward({Var(X)}, false);
    for (const auto& stage : stages)
      CHECK(oracle::max_abs_diff(stage[0].value(), X) < 1e-7);
  }
  SECTION("utterance survives the full pipeline") {
    Waveform y = enhance_utterance(model, wav);
    REQUIRE(y.samples.size() == wav.samples.size());
    auto round = signal::istft(signal::stft(wav.samples, model.stft_config()),
                               model.stft_config(), 4800);
    CHECK(rel_l2(round, y.samples, 4800) < 1e-6);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 64; i + 64 < wav.samples.size(); ++i) {
      num += (y.samples[i] - wav.samples[i]) * (y.samples[i] - wav.samples[i]);
      den += wav.samples[i] * wav.samples[i];
    }
    CHECK(std::sqrt(num / den) < 1e-5);
  }
}

TEST_CASE("streaming enhancement") {
  Rng rng(403);
  ModelConfig cfg = ModelConfig::desk();
  Darccn model(cfg);
  const StftConfig& sc = model.stft_config();

  SECTION("session equals the batch path") {
    for (int trial = 0; trial < 3; ++trial) {
      Waveform wav;
      wav.samples = random_signal(3200 + 160 * static_cast<std::size_t>(trial), rng);
      Waveform batch = enhance_utterance(model, wav);

      EnhanceSession session(model);
      std::vector<double> streamed;
      std::size_t pos = 0;
      while (pos < wav.samples.size()) {
        const std::size_t n = std::min<std::size_t>(1 + rng.next_below(300),
                                                    wav.samples.size() - pos);
        auto part = session.feed(wav.samples.data() + pos, n);
        streamed.insert(streamed.end(), part.begin(), part.end());
        pos += n;
      }
      auto tail = session.finish();
      streamed.insert(streamed.end(), tail.begin(), tail.end());

      const long frames = 1 + (static_cast<long>(wav.samples.size()) - sc.win_len) / sc.hop;
      const std::size_t covered = static_cast<std::size_t>((frames - 1) * sc.hop + sc.win_len);
      REQUIRE(streamed.size() == covered);
      CHECK(rel_l2(batch.samples, streamed, covered) < 1e-9);
    }
  }
  SECTION("chunk size does not matter") {
    Waveform wav;
    wav.samples = random_signal(800, rng);
    EnhanceSession one(model);
    std::vector<double> a = one.feed(wav.samples.data(), wav.samples.size());
    auto ta = one.finish();
    a.insert(a.end(), ta.begin(), ta.end());

    EnhanceSession drip(model);
    std::vector<double> b;
    for (std::size_t i = 0; i < wav.samples.size(); ++i) {
      auto part = drip.feed(wav.samples.data() + i, 1);
      b.insert(b.end(), part.begin(), part.end());
    }
    auto tb = drip.finish();
    b.insert(b.end(), tb.begin(), tb.end());

    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
  }
  SECTION("sessions do not share state") {
    Waveform wav;
    wav.samples = random_signal(640, rng);
    auto run = [&] {
      EnhanceSession s(model);
      auto out = s.feed(wav.samples.data(), wav.samples.size());
      auto tail = s.finish();
      out.insert(out.end(), tail.begin(), tail.end());
      return out;
    };
    auto first = run();
    auto second = run();
    REQUIRE(first.size() == second.size());
    for (std::size_t i = 0; i < first.size(); ++i) CHECK(first[i] == second[i]);
  }
  SECTION("passthrough session reconstructs its input") {
    Waveform wav;
    wav.samples = random_signal(2000, rng);
    EnhanceSession s(sc);
    auto out = s.feed(wav.samples.data(), wav.samples.size());
    auto tail = s.finish();
    out.insert(out.end(), tail.begin(), tail.end());
    REQUIRE(out.size() >= 1984);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 64; i < out.size(); ++i) {
      num += (out[i] - wav.samples[i]) * (out[i] - wav.samples[i]);
      den += wav.samples[i] * wav.samples[i];
    }
    CHECK(std::sqrt(num / den) < 1e-6);
  }
  SECTION("first samples appear only after a full window") {
    EnhanceSession s(model);
    std::vector<double> x(static_cast<std::size_t>(sc.win_len - 1), 0.1);
    CHECK(s.feed(x.data(), x.size()).empty());
    double one = 0.1;
    CHECK(s.feed(&one, 1).size() == static_cast<std::size_t>(sc.hop));
  }
}

TEST_CASE("utterance enhancement contracts") {
  Rng rng(404);
  Darccn model(ModelConfig::desk());

  SECTION("output length and rate match the input") {
    Waveform wav;
    wav.samples = random_signal(1234, rng);
    Waveform y = enhance_utterance(model, wav);
    CHECK(y.samples.size() == 1234);
    CHECK(y.sample_rate == 16000);
  }
  SECTION("wrong sample rate rejected") {
    Waveform wav;
    wav.samples = random_signal(1000, rng);
    wav.sample_rate = 8000;
    CHECK_THROWS_AS(enhance_utterance(model, wav), std::invalid_argument);
  }
  SECTION("input shorter than one analysis window rejected") {
    Waveform wav;
    wav.samples = random_signal(63, rng);
    CHECK_THROWS_AS(enhance_utterance(model, wav), std::invalid_argument);
  }
}
