#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "darccn/common.hpp"
#include "darccn/fft.hpp"

namespace darccn::metrics {

inline double rms_of(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : std::sqrt(acc / static_cast<double>(x.size()));
}

// ---------------------------------------------------------------------------
// polyphase resampling
// ---------------------------------------------------------------------------

inline double bessel_i0(double x) {
  const double half = x / 2.0;
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < sum * 1e-21) break;
  }
  return sum;
}

inline std::vector<double> kaiser_window(long n, double beta) {
  std::vector<double> w(static_cast<std::size_t>(n));
  const double denom = bessel_i0(beta);
  for (long i = 0; i < n; ++i) {
    const double r = 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0;
    w[static_cast<std::size_t>(i)] = bessel_i0(beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
  }
  return w;
}

// Rational-rate resampler: zero-stuff by `up`, Kaiser-windowed sinc lowpass
// at the tighter Nyquist, keep every `down`-th sample. Group delay is
// compensated, so input and output stay time-aligned.
inline std::vector<double> resample_poly(const std::vector<double>& x, long up, long down,
                                         long taps = 161, double beta = 5.0) {
  if (up < 1 || down < 1) throw std::invalid_argument("resample: factors must be positive");
  if (taps % 2 == 0) throw std::invalid_argument("resample: tap count must be odd");
  const long center = taps / 2;
  const double fc = 1.0 / static_cast<double>(std::max(up, down));  // 2x cutoff, cycles/sample
  const std::vector<double> w = kaiser_window(taps, beta);
  std::vector<double> h(static_cast<std::size_t>(taps));
  for (long m = 0; m < taps; ++m) {
    const double t = static_cast<double>(m - center);
    const double sinc = t == 0.0 ? 1.0 : std::sin(M_PI * fc * t) / (M_PI * fc * t);
    h[static_cast<std::size_t>(m)] = static_cast<double>(up) * fc * sinc * w[static_cast<std::size_t>(m)];
  }
  const long n = static_cast<long>(x.size());
  const long out_len = (n * up + down - 1) / down;
  std::vector<double> y(static_cast<std::size_t>(out_len), 0.0);
  for (long j = 0; j < out_len; ++j) {
    // upsampled-grid index of the newest tap, with the filter delay removed
    const long q0 = j * down + center;
    double acc = 0.0;
    // taps congruent to q0 mod up are the ones that land on real samples
    for (long m = q0 % up; m < taps; m += up) {
      const long q = q0 - m;
      if (q < 0) break;
      const long i = q / up;
      if (i < n) acc += h[static_cast<std::size_t>(m)] * x[static_cast<std::size_t>(i)];
    }
    y[static_cast<std::size_t>(j)] = acc;
  }
  return y;
}

// ---------------------------------------------------------------------------
// short-time objective intelligibility
// ---------------------------------------------------------------------------

namespace stoi_detail {

constexpr long kFrame = 256;
constexpr long kHop = 128;
constexpr long kFftSize = 512;
constexpr long kBands = 15;
constexpr long kSegment = 30;
constexpr double kDynRangeDb = 40.0;
constexpr double kBandOrigin = 150.0;
constexpr double kSampleRate10k = 10000.0;

inline std::vector<double> hanning_matlab(long n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] =
        0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(i + 1) / static_cast<double>(n + 1)));
  return w;
}

// Drops frames whose clean-signal energy sits more than 40 dB under the
// loudest frame, packing the survivors back together with windowed
// overlap-add.
inline void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const std::vector<double> w = hanning_matlab(kFrame);
  const long n = static_cast<long>(x.size());
  std::vector<long> starts;
  for (long s = 0; s + kFrame <= n; s += kHop) starts.push_back(s);
  if (starts.empty()) {
    x.clear();
    y.clear();
    return;
  }
  std::vector<double> energy_db(starts.size());
  double max_db = -1e300;
  for (std::size_t j = 0; j < starts.size(); ++j) {
    double e = 0.0;
    for (long i = 0; i < kFrame; ++i) {
      const double v = x[static_cast<std::size_t>(starts[j] + i)] * w[static_cast<std::size_t>(i)];
      e += v * v;
    }
    energy_db[j] = 10.0 * std::log10(e + 1e-300);
    max_db = std::max(max_db, energy_db[j]);
  }
  std::vector<double> xs, ys;
  long count = 0;
  for (std::size_t j = 0; j < starts.size(); ++j) {
    if (energy_db[j] <= max_db - kDynRangeDb) continue;
    const long out_start = count * kHop;
    if (static_cast<long>(xs.size()) < out_start + kFrame) {
      xs.resize(static_cast<std::size_t>(out_start + kFrame), 0.0);
      ys.resize(xs.size(), 0.0);
    }
    for (long i = 0; i < kFrame; ++i) {
      const double wi = w[static_cast<std::size_t>(i)];
      xs[static_cast<std::size_t>(out_start + i)] +=
          x[static_cast<std::size_t>(starts[j] + i)] * wi;
      ys[static_cast<std::size_t>(out_start + i)] +=
          y[static_cast<std::size_t>(starts[j] + i)] * wi;
    }
    ++count;
  }
  x = std::move(xs);
  y = std::move(ys);
}

// one-sided magnitude-squared spectrogram, 256-sample frames zero-padded to 512
inline std::vector<std::vector<double>> power_spectrogram(const std::vector<double>& x) {
  const std::vector<double> w = hanning_matlab(kFrame);
  const signal::Fft fft(kFftSize);
  std::vector<std::vector<double>> out;
  std::vector<std::complex<double>> buf(kFftSize), spec(kFftSize);
  for (long s = 0; s + kFrame <= static_cast<long>(x.size()); s += kHop) {
    for (long i = 0; i < kFrame; ++i)
      buf[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(s + i)] *
                                         w[static_cast<std::size_t>(i)];
    for (long i = kFrame; i < kFftSize; ++i) buf[static_cast<std::size_t>(i)] = 0.0;
    fft.forward(buf.data(), spec.data());
    std::vector<double> row(static_cast<std::size_t>(kFftSize / 2 + 1));
    for (long k = 0; k <= kFftSize / 2; ++k) row[static_cast<std::size_t>(k)] =
        std::norm(spec[static_cast<std::size_t>(k)]);
    out.push_back(std::move(row));
  }
  return out;
}

// bin ranges of the 15 third-octave bands starting at 150 Hz
inline std::vector<std::pair<long, long>> third_octave_bands() {
  const long bins = kFftSize / 2 + 1;
  auto nearest_bin = [&](double freq) {
    long best = 0;
    double best_d = 1e300;
    for (long k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate10k / static_cast<double>(kFftSize);
      const double d = std::fabs(f - freq);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    return best;
  };
  std::vector<std::pair<long, long>> bands;
  for (long j = 0; j < kBands; ++j) {
    const double cf = kBandOrigin * std::pow(2.0, static_cast<double>(j) / 3.0);
    bands.emplace_back(nearest_bin(cf / std::pow(2.0, 1.0 / 6.0)),
                       nearest_bin(cf * std::pow(2.0, 1.0 / 6.0)));
  }
  return bands;
}

}  // namespace stoi_detail

// Intelligibility of `processed` against `clean`, in [0, 1]. Inputs are
// 16 kHz, equal length. The result is invariant to a global gain on either
// signal and symmetric under polarity flips.
inline double stoi(const std::vector<double>& clean, const std::vector<double>& processed) {
  using namespace stoi_detail;
  if (clean.size() != processed.size())
    throw std::invalid_argument("stoi: signals must have equal length");
  const double scale = rms_of(clean);
  if (scale <= 0.0) throw std::invalid_argument("stoi: clean reference is silent");

  std::vector<double> x(clean), y(processed);
  for (auto& v : x) v /= scale;
  for (auto& v : y) v /= scale;

  x = resample_poly(x, 5, 8);
  y = resample_poly(y, 5, 8);

  const long min_len = (kSegment - 1) * kHop + kFrame;
  if (static_cast<long>(x.size()) < min_len)
    throw std::invalid_argument("stoi: signal too short for a 30-frame analysis segment");

  remove_silent_frames(x, y);
  auto X = power_spectrogram(x);
  auto Y = power_spectrogram(y);
  const long frames = static_cast<long>(X.size());
  if (frames < kSegment)
    throw std::invalid_argument("stoi: fewer than 30 frames remain after silence removal");

  const auto bands = third_octave_bands();
  std::vector<std::vector<double>> ex(static_cast<std::size_t>(kBands)),
      ey(static_cast<std::size_t>(kBands));
  for (long j = 0; j < kBands; ++j) {
    ex[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(frames));
    ey[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(frames));
    for (long m = 0; m < frames; ++m) {
      double sx = 0.0, sy = 0.0;
      for (long k = bands[static_cast<std::size_t>(j)].first;
           k < bands[static_cast<std::size_t>(j)].second; ++k) {
        sx += X[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)];
        sy += Y[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)];
      }
      ex[static_cast<std::size_t>(j)][static_cast<std::size_t>(m)] = std::sqrt(sx);
      ey[static_cast<std::size_t>(j)][static_cast<std::size_t>(m)] = std::sqrt(sy);
    }
  }

  const double clip = 1.0 + std::pow(10.0, 15.0 / 20.0);
  double total = 0.0;
  long terms = 0;
  std::vector<double> xs(kSegment), ys(kSegment);
  for (long m = kSegment - 1; m < frames; ++m) {
    for (long j = 0; j < kBands; ++j) {
      double nx = 0.0, ny = 0.0;
      for (long i = 0; i < kSegment; ++i) {
        xs[static_cast<std::size_t>(i)] =
            ex[static_cast<std::size_t>(j)][static_cast<std::size_t>(m - kSegment + 1 + i)];
        ys[static_cast<std::size_t>(i)] =
            ey[static_cast<std::size_t>(j)][static_cast<std::size_t>(m - kSegment + 1 + i)];
        nx += xs[static_cast<std::size_t>(i)] * xs[static_cast<std::size_t>(i)];
        ny += ys[static_cast<std::size_t>(i)] * ys[static_cast<std::size_t>(i)];
      }
      const double alpha = ny > 0.0 ? std::sqrt(nx / ny) : 0.0;
      double mx = 0.0, my = 0.0;
      for (long i = 0; i < kSegment; ++i) {
        ys[static_cast<std::size_t>(i)] = std::min(alpha * ys[static_cast<std::size_t>(i)],
                                                   clip * xs[static_cast<std::size_t>(i)]);
        mx += xs[static_cast<std::size_t>(i)];
        my += ys[static_cast<std::size_t>(i)];
      }
      mx /= kSegment;
      my /= kSegment;
      double num = 0.0, dx = 0.0, dy = 0.0;
      for (long i = 0; i < kSegment; ++i) {
        const double a = xs[static_cast<std::size_t>(i)] - mx;
        const double b = ys[static_cast<std::size_t>(i)] - my;
        num += a * b;
        dx += a * a;
        dy += b * b;
      }
      const double denom = std::sqrt(dx * dy);
      if (denom < 1e-20) continue;  // flat segment carries no intelligibility signal
      total += num / denom;
      ++terms;
    }
  }
  if (terms == 0) return 0.0;
  return std::clamp(total / static_cast<double>(terms), 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// scale-invariant SDR and plain SNR
// ---------------------------------------------------------------------------

constexpr double kMetricCapDb = 100.0;

inline double si_sdr(const std::vector<double>& estimate, const std::vector<double>& reference) {
  if (estimate.size() != reference.size() || estimate.empty())
    throw std::invalid_argument("si_sdr: signals must be non-empty and equal length");
  double dot = 0.0, ref2 = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    dot += estimate[i] * reference[i];
    ref2 += reference[i] * reference[i];
  }
  if (ref2 <= 0.0) throw std::invalid_argument("si_sdr: reference is silent");
  const double a = dot / ref2;
  double s2 = 0.0, e2 = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = a * reference[i];
    const double e = estimate[i] - s;
    s2 += s * s;
    e2 += e * e;
  }
  if (e2 <= s2 * 1e-10 || e2 == 0.0) return kMetricCapDb;
  return std::min(10.0 * std::log10(s2 / e2), kMetricCapDb);
}

// SNR of `processed` against `clean`, treating their difference as noise.
inline double measure_snr(const std::vector<double>& clean, const std::vector<double>& processed) {
  if (clean.size() != processed.size() || clean.empty())
    throw std::invalid_argument("measure_snr: signals must be non-empty and equal length");
  const double rc = rms_of(clean);
  if (rc <= 0.0) throw std::invalid_argument("measure_snr: clean reference is silent");
  double racc = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const double d = processed[i] - clean[i];
    racc += d * d;
  }
  const double rr = std::sqrt(racc / static_cast<double>(clean.size()));
  if (rr == 0.0) return kMetricCapDb;
  return std::min(20.0 * std::log10(rc / rr), kMetricCapDb);
}

}  // namespace darccn::metrics
