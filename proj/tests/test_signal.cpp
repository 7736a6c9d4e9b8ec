#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "darccn/common.hpp"
#include "darccn/signal.hpp"
#include "darccn/wav.hpp"
#include "support/oracles.hpp"

using namespace darccn;
using namespace darccn::signal;

namespace {

std::vector<double> random_signal(std::size_t n, Rng& rng, double amp = 0.5) {
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform(-amp, amp);
  return x;
}

}  // namespace

TEST_CASE("hamming window") {
  auto w = make_hamming(320);
  REQUIRE(w.size() == 320);
  CHECK(w[0] == Catch::Approx(0.08).margin(1e-15));
  CHECK(w[319] == Catch::Approx(0.08).margin(1e-15));
  // frozen midpoint values (high-precision table generation)
  CHECK(w[160] == Catch::Approx(0.99997769292100780753).epsilon(1e-14));
  auto w64 = make_hamming(64);
  CHECK(w64[31] == Catch::Approx(0.99942818376070429009).epsilon(1e-14));

  SECTION("odd length peaks at exactly 1") {
    auto w321 = make_hamming(321);
    CHECK(w321[160] == 1.0);
  }
  SECTION("strictly positive everywhere") {
    for (double v : w) CHECK(v > 0.0);
  }
  SECTION("symmetric") {
    for (std::size_t i = 0; i < w.size(); ++i)
      CHECK(w[i] == Catch::Approx(w[w.size() - 1 - i]).margin(1e-15));
  }
  SECTION("length below 2 rejected") {
    CHECK_THROWS_AS(make_hamming(1), std::invalid_argument);
    CHECK_THROWS_AS(make_hamming(0), std::invalid_argument);
  }
}

TEST_CASE("fft matches naive dft") {
  Rng rng(77);
  for (long n : {1L, 2L, 3L, 4L, 5L, 6L, 8L, 10L, 12L, 15L, 16L, 20L, 64L, 320L, 512L}) {
    std::vector<oracle::cd> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    auto want = oracle::naive_dft(x);
    std::vector<oracle::cd> got(x.size());
    Fft fft(n);
    fft.forward(x.data(), got.data());
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(got[i].real() == Catch::Approx(want[i].real()).margin(1e-9 * n));
      CHECK(got[i].imag() == Catch::Approx(want[i].imag()).margin(1e-9 * n));
    }
    std::vector<oracle::cd> back(x.size());
    fft.inverse(got.data(), back.data());
    for (std::size_t i = 0; i < x.size(); ++i) {
      CHECK(back[i].real() == Catch::Approx(x[i].real()).margin(1e-10 * n));
      CHECK(back[i].imag() == Catch::Approx(x[i].imag()).margin(1e-10 * n));
    }
  }
}

TEST_CASE("stft shape and frame count") {
  StftConfig cfg;  // 320/160 @16k
  Rng rng(1);

  SECTION("one second gives 99 frames of 161 bins") {
    auto x = random_signal(16000, rng);
    auto s = stft(x, cfg);
    CHECK(s.frames == 99);
    CHECK(s.bins == 161);
  }
  SECTION("frame formula matches a manual sliding count") {
    for (int trial = 0; trial < 24; ++trial) {
      const long n = 320 + static_cast<long>(rng.next_below(50000));
      long manual = 0;
      for (long start = 0; start + cfg.win_len <= n; start += cfg.hop) ++manual;
      CHECK(frame_count(n, cfg) == manual);
    }
  }
  SECTION("input shorter than one window rejected") {
    std::vector<double> x(319, 0.1);
    CHECK_THROWS_AS(stft(x, cfg), std::invalid_argument);
  }
}

TEST_CASE("stft values") {
  StftConfig cfg;
  SECTION("all zero input gives all zero spectrogram") {
    std::vector<double> x(4800, 0.0);
    auto s = stft(x, cfg);
    for (double v : s.re) CHECK(v == 0.0);
    for (double v : s.im) CHECK(v == 0.0);
  }
  SECTION("dc input concentrates on bin zero with zero imaginary part") {
    const double c = 0.25;
    std::vector<double> x(3200, c);
    auto s = stft(x, cfg);
    for (long t = 0; t < s.frames; ++t) {
      CHECK(s.re[s.idx(t, 0)] == Catch::Approx(c * 172.34).epsilon(1e-12));
      CHECK(std::abs(s.im[s.idx(t, 0)]) < 1e-10);
    }
  }
  SECTION("one frame matches direct-summation dft oracle") {
    Rng rng(42);
    auto x = random_signal(640, rng);
    auto s = stft(x, cfg);
    std::vector<double> re, im;
    oracle::naive_stft_frame(x.data() + cfg.hop, cfg.window, cfg.fft_size, re, im);
    for (long f = 0; f < s.bins; ++f) {
      CHECK(s.re[s.idx(1, f)] == Catch::Approx(re[static_cast<std::size_t>(f)]).margin(1e-9));
      CHECK(s.im[s.idx(1, f)] == Catch::Approx(im[static_cast<std::size_t>(f)]).margin(1e-9));
    }
  }
}

TEST_CASE("istft reconstruction") {
  StftConfig cfg;
  Rng rng(9);

  SECTION("round trip on random noise") {
    auto x = random_signal(16000, rng);
    auto y = istft(stft(x, cfg), cfg, static_cast<long>(x.size()));
    REQUIRE(y.size() == x.size());
    CHECK(oracle::rel_l2(x, y, 320, x.size() - 320) < 1e-6);
  }
  SECTION("round trip on a 440 Hz tone") {
    std::vector<double> x(8000);
    for (std::size_t i = 0; i < x.size(); ++i)
      x[i] = 0.7 * std::sin(2.0 * M_PI * 440.0 * static_cast<double>(i) / 16000.0);
    auto y = istft(stft(x, cfg), cfg, static_cast<long>(x.size()));
    CHECK(oracle::rel_l2(x, y, 320, x.size() - 320) < 1e-6);
  }
  SECTION("round trip at awkward lengths") {
    for (long n : {320L, 481L, 1000L, 16001L}) {
      auto x = random_signal(static_cast<std::size_t>(n), rng);
      auto y = istft(stft(x, cfg), cfg, n);
      REQUIRE(y.size() == static_cast<std::size_t>(n));
      if (n > 700) CHECK(oracle::rel_l2(x, y, 320, static_cast<std::size_t>(n - 320)) < 1e-6);
    }
  }
  SECTION("linearity") {
    auto x1 = random_signal(4000, rng);
    auto x2 = random_signal(4000, rng);
    auto s1 = stft(x1, cfg), s2 = stft(x2, cfg);
    ComplexSpectrogram mix = s1;
    for (std::size_t i = 0; i < mix.re.size(); ++i) {
      mix.re[i] = 2.0 * s1.re[i] - 0.5 * s2.re[i];
      mix.im[i] = 2.0 * s1.im[i] - 0.5 * s2.im[i];
    }
    auto y = istft(mix, cfg, 4000);
    auto y1 = istft(s1, cfg, 4000);
    auto y2 = istft(s2, cfg, 4000);
    for (std::size_t i = 0; i < y.size(); ++i)
      CHECK(y[i] == Catch::Approx(2.0 * y1[i] - 0.5 * y2[i]).margin(1e-10));
  }
  SECTION("zero spectrogram gives zero signal") {
    ComplexSpectrogram s;
    s.frames = 10;
    s.bins = 161;
    s.re.assign(1610, 0.0);
    s.im.assign(1610, 0.0);
    auto y = istft(s, cfg, 2000);
    for (double v : y) CHECK(v == 0.0);
  }
  SECTION("output length is honored by pad or truncate") {
    auto x = random_signal(3200, rng);
    auto s = stft(x, cfg);
    CHECK(istft(s, cfg, 1000).size() == 1000);
    auto padded = istft(s, cfg, 5000);
    CHECK(padded.size() == 5000);
    for (std::size_t i = 3300; i < padded.size(); ++i) CHECK(padded[i] == 0.0);
  }
  SECTION("bin mismatch rejected") {
    ComplexSpectrogram s;
    s.frames = 4;
    s.bins = 33;
    s.re.assign(132, 0.0);
    s.im.assign(132, 0.0);
    CHECK_THROWS_AS(istft(s, cfg, 500), shape_error);
  }
  SECTION("window-sum underflow guard") {
    StftConfig bad = cfg;
    bad.window.assign(320, 0.0);
    std::vector<double> x(1600, 0.3);
    auto s = stft(x, bad);
    CHECK_THROWS_AS(istft(s, bad, 1600), numerical_error);
  }
}

TEST_CASE("feature packing") {
  StftConfig cfg;
  Rng rng(5);
  for (int trial = 0; trial < 3; ++trial) {
    auto x = random_signal(1600 + 160 * static_cast<std::size_t>(trial), rng);
    auto s = stft(x, cfg);
    auto t = pack_features(s);
    REQUIRE(t.dims() == std::vector<long>({2, s.frames, s.bins}));
    auto back = unpack_features(t);
    REQUIRE(back.frames == s.frames);
    for (std::size_t i = 0; i < s.re.size(); ++i) {
      CHECK(back.re[i] == s.re[i]);
      CHECK(back.im[i] == s.im[i]);
    }
  }
  SECTION("channel 0 is the real plane") {
    ComplexSpectrogram s;
    s.frames = 1;
    s.bins = 2;
    s.re = {1.0, 2.0};
    s.im = {-3.0, -4.0};
    auto t = pack_features(s);
    CHECK(t.at(0, 0, 0) == 1.0);
    CHECK(t.at(0, 0, 1) == 2.0);
    CHECK(t.at(1, 0, 0) == -3.0);
    CHECK(t.at(1, 0, 1) == -4.0);
  }
  SECTION("wrong channel count rejected") {
    nn::Tensor t({3, 4, 5});
    CHECK_THROWS_AS(unpack_features(t), shape_error);
  }
}

TEST_CASE("wav io") {
  namespace fs = std::filesystem;
  auto dir = fs::temp_directory_path() / "darccn_wav_test";
  fs::create_directories(dir);
  Rng rng(12);

  SECTION("round trip within quantization error") {
    Waveform w;
    w.samples = random_signal(4321, rng, 0.9);
    auto path = (dir / "rt.wav").string();
    write_wav(path, w);
    auto r = read_wav(path);
    REQUIRE(r.samples.size() == w.samples.size());
    CHECK(r.sample_rate == 16000);
    for (std::size_t i = 0; i < r.samples.size(); ++i)
      CHECK(r.samples[i] == Catch::Approx(w.samples[i]).margin(1.0 / 32768.0));
  }
  SECTION("pcm16 values survive a second round trip exactly") {
    Waveform w;
    w.samples = random_signal(1000, rng, 0.9);
    auto p1 = (dir / "q1.wav").string(), p2 = (dir / "q2.wav").string();
    write_wav(p1, w);
    auto r1 = read_wav(p1);
    write_wav(p2, r1);
    auto r2 = read_wav(p2);
    for (std::size_t i = 0; i < r1.samples.size(); ++i) CHECK(r1.samples[i] == r2.samples[i]);
  }
  SECTION("missing file") {
    CHECK_THROWS_AS(read_wav((dir / "nope.wav").string()), io_error);
  }
  SECTION("unsupported formats rejected") {
    // craft headers: stereo, 8 kHz, and float encodings
    auto craft = [&](std::uint16_t fmt, std::uint16_t ch, std::uint32_t rate, std::uint16_t bits) {
      std::vector<unsigned char> b;
      auto u16 = [&](std::uint16_t v) {
        b.push_back(static_cast<unsigned char>(v & 0xff));
        b.push_back(static_cast<unsigned char>(v >> 8));
      };
      auto u32 = [&](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
      };
      const char* s = "RIFF";
      b.insert(b.end(), s, s + 4);
      u32(36 + 4);
      const char* s2 = "WAVEfmt ";
      b.insert(b.end(), s2, s2 + 8);
      u32(16);
      u16(fmt);
      u16(ch);
      u32(rate);
      u32(rate * ch * bits / 8);
      u16(static_cast<std::uint16_t>(ch * bits / 8));
      u16(bits);
      const char* s3 = "data";
      b.insert(b.end(), s3, s3 + 4);
      u32(4);
      u32(0);
      auto path = (dir / "bad.wav").string();
      std::ofstream f(path, std::ios::binary | std::ios::trunc);
      f.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
      f.close();
      return path;
    };
    CHECK_THROWS_AS(read_wav(craft(1, 2, 16000, 16)), io_error);  // stereo
    CHECK_THROWS_AS(read_wav(craft(1, 1, 8000, 16)), io_error);   // wrong rate
    CHECK_THROWS_AS(read_wav(craft(3, 1, 16000, 32)), io_error);  // float
    CHECK_THROWS_AS(read_wav(craft(1, 1, 16000, 8)), io_error);   // 8-bit
  }
  fs::remove_all(dir);
}
