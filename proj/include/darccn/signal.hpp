#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "darccn/common.hpp"
#include "darccn/fft.hpp"
#include "darccn/tensor.hpp"

namespace darccn::signal {

struct Waveform {
  std::vector<double> samples;
  int sample_rate = 16000;
};

// Symmetric Hamming: w[i] = 0.54 - 0.46 cos(2*pi*i / (n-1)). Endpoints sit at
// 0.08, so every weight is strictly positive and overlap-add never divides by
// a vanishing window sum.
inline std::vector<double> make_hamming(long n) {
  if (n < 2) throw std::invalid_argument("make_hamming: window length must be >= 2");
  std::vector<double> w(static_cast<std::size_t>(n));
  const double step = 6.283185307179586476925287 / static_cast<double>(n - 1);
  for (long i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] = 0.54 - 0.46 * std::cos(step * static_cast<double>(i));
  return w;
}

struct StftConfig {
  int sample_rate = 16000;
  long win_len = 320;
  long hop = 160;
  long fft_size = 320;
  std::vector<double> window = make_hamming(320);

  long bins() const { return fft_size / 2 + 1; }
};

inline StftConfig make_stft_config(long win_len, long hop, int sample_rate = 16000) {
  StftConfig c;
  c.sample_rate = sample_rate;
  c.win_len = win_len;
  c.hop = hop;
  c.fft_size = win_len;
  c.window = make_hamming(win_len);
  return c;
}

inline void validate(const StftConfig& c) {
  if (c.win_len < 2) throw std::invalid_argument("stft: win_len must be >= 2");
  if (c.fft_size != c.win_len)
    throw std::invalid_argument("stft: fft_size must equal win_len (no zero padding)");
  if (c.hop * 2 != c.win_len) throw std::invalid_argument("stft: hop must be win_len/2");
  if (static_cast<long>(c.window.size()) != c.win_len)
    throw std::invalid_argument("stft: window length does not match win_len");
}

// One-sided complex spectrogram, row-major (frames x bins).
struct ComplexSpectrogram {
  long frames = 0;
  long bins = 0;
  std::vector<double> re, im;

  std::size_t idx(long t, long f) const { return static_cast<std::size_t>(t * bins + f); }
};

inline long frame_count(long num_samples, const StftConfig& c) {
  if (num_samples < c.win_len)
    throw std::invalid_argument("stft: input shorter than one window");
  return 1 + (num_samples - c.win_len) / c.hop;
}

// Analysis of a single windowed frame starting at `x` (win_len samples).
inline void stft_frame(const double* x, const StftConfig& c, const Fft& fft, double* re,
                       double* im) {
  std::vector<cd> buf(static_cast<std::size_t>(c.fft_size));
  for (long i = 0; i < c.win_len; ++i)
    buf[static_cast<std::size_t>(i)] = {x[i] * c.window[static_cast<std::size_t>(i)], 0.0};
  std::vector<cd> out(static_cast<std::size_t>(c.fft_size));
  fft.forward(buf.data(), out.data());
  const long nb = c.bins();
  for (long f = 0; f < nb; ++f) {
    re[f] = out[static_cast<std::size_t>(f)].real();
    im[f] = out[static_cast<std::size_t>(f)].imag();
  }
}

// Inverse of one spectral column; writes the re-windowed time frame (win_len
// samples), ready for weighted overlap-add.
inline void istft_frame(const double* re, const double* im, const StftConfig& c, const Fft& fft,
                        double* frame) {
  const long n = c.fft_size;
  const long nb = c.bins();
  std::vector<cd> full(static_cast<std::size_t>(n));
  for (long f = 0; f < nb; ++f) full[static_cast<std::size_t>(f)] = {re[f], im[f]};
  for (long f = nb; f < n; ++f) {
    const long m = n - f;
    full[static_cast<std::size_t>(f)] = {re[m], -im[m]};
  }
  std::vector<cd> time(static_cast<std::size_t>(n));
  fft.inverse(full.data(), time.data());
  for (long i = 0; i < c.win_len; ++i)
    frame[i] = time[static_cast<std::size_t>(i)].real() * c.window[static_cast<std::size_t>(i)];
}

inline ComplexSpectrogram stft(const std::vector<double>& x, const StftConfig& c) {
  validate(c);
  const long nf = frame_count(static_cast<long>(x.size()), c);
  ComplexSpectrogram s;
  s.frames = nf;
  s.bins = c.bins();
  s.re.assign(static_cast<std::size_t>(nf * s.bins), 0.0);
  s.im.assign(static_cast<std::size_t>(nf * s.bins), 0.0);
  Fft fft(c.fft_size);
  for (long t = 0; t < nf; ++t)
    stft_frame(x.data() + t * c.hop, c, fft, s.re.data() + t * s.bins,
               s.im.data() + t * s.bins);
  return s;
}

// Weighted overlap-add synthesis: each inverse frame is windowed again and the
// result is normalized by the accumulated squared-window sum, which makes the
// analysis-synthesis chain exact wherever at least one frame covers a sample.
inline std::vector<double> istft(const ComplexSpectrogram& s, const StftConfig& c, long out_len) {
  validate(c);
  if (s.bins != c.bins())
    throw shape_error("istft: spectrogram bins do not match config (" + std::to_string(s.bins) +
                      " vs " + std::to_string(c.bins()) + ")");
  if (s.frames < 1) throw std::invalid_argument("istft: empty spectrogram");
  if (out_len < 0) throw std::invalid_argument("istft: negative output length");

  const long cover = (s.frames - 1) * c.hop + c.win_len;
  std::vector<double> acc(static_cast<std::size_t>(cover), 0.0);
  std::vector<double> wsum(static_cast<std::size_t>(cover), 0.0);
  std::vector<double> frame(static_cast<std::size_t>(c.win_len));
  Fft fft(c.fft_size);
  for (long t = 0; t < s.frames; ++t) {
    istft_frame(s.re.data() + t * s.bins, s.im.data() + t * s.bins, c, fft, frame.data());
    const long base = t * c.hop;
    for (long i = 0; i < c.win_len; ++i) {
      acc[static_cast<std::size_t>(base + i)] += frame[static_cast<std::size_t>(i)];
      const double w = c.window[static_cast<std::size_t>(i)];
      wsum[static_cast<std::size_t>(base + i)] += w * w;
    }
  }
  for (long i = 0; i < cover; ++i) {
    if (wsum[static_cast<std::size_t>(i)] < 1e-8) {
      if (i >= c.win_len && i < cover - c.win_len)
        throw numerical_error("istft: window-sum underflow at interior sample " +
                              std::to_string(i));
      acc[static_cast<std::size_t>(i)] = 0.0;
    } else {
      acc[static_cast<std::size_t>(i)] /= wsum[static_cast<std::size_t>(i)];
    }
  }
  acc.resize(static_cast<std::size_t>(out_len), 0.0);
  return acc;
}

// Spectrogram <-> network feature tensor (2, frames, bins); channel 0 carries
// the real plane, channel 1 the imaginary plane. Bit-exact in both directions.
inline nn::Tensor pack_features(const ComplexSpectrogram& s) {
  nn::Tensor t({2, s.frames, s.bins});
  for (long m = 0; m < s.frames; ++m)
    for (long f = 0; f < s.bins; ++f) {
      t.at(0, m, f) = s.re[s.idx(m, f)];
      t.at(1, m, f) = s.im[s.idx(m, f)];
    }
  return t;
}

inline ComplexSpectrogram unpack_features(const nn::Tensor& t) {
  if (t.rank() != 3 || t.channels() != 2)
    throw shape_error("unpack_features: expected tensor (2, frames, bins), got " + t.shape_str());
  ComplexSpectrogram s;
  s.frames = t.frames();
  s.bins = t.bins();
  s.re.resize(static_cast<std::size_t>(s.frames * s.bins));
  s.im.resize(static_cast<std::size_t>(s.frames * s.bins));
  for (long m = 0; m < s.frames; ++m)
    for (long f = 0; f < s.bins; ++f) {
      s.re[s.idx(m, f)] = t.at(0, m, f);
      s.im[s.idx(m, f)] = t.at(1, m, f);
    }
  return s;
}

}  // namespace darccn::signal
