#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace darccn::signal {

using cd = std::complex<double>;

// Mixed-radix Cooley-Tukey FFT. Handles any composite size via its prime
// factors (sizes used here: 64, 320, 512), so no power-of-two restriction.
class Fft {
 public:
  explicit Fft(long n) : n_(n) {
    if (n < 1) throw std::invalid_argument("fft: size must be >= 1");
    tw_.resize(static_cast<std::size_t>(n));
    const double step = -6.283185307179586476925287 / static_cast<double>(n);
    for (long k = 0; k < n; ++k)
      tw_[static_cast<std::size_t>(k)] = {std::cos(step * k), std::sin(step * k)};
    long m = n;
    for (long p = 2; p * p <= m;) {
      if (m % p == 0) {
        factors_.push_back(p);
        m /= p;
      } else {
        ++p;
      }
    }
    if (m > 1) factors_.push_back(m);
  }

  long size() const { return n_; }

  void forward(const cd* in, cd* out) const { rec(in, 1, out, n_, 0, false); }

  // normalized inverse: out = (1/n) * sum in[k] e^{+2pi i kn/N}
  void inverse(const cd* in, cd* out) const {
    rec(in, 1, out, n_, 0, true);
    const double s = 1.0 / static_cast<double>(n_);
    for (long i = 0; i < n_; ++i) out[i] *= s;
  }

 private:
  cd tw(long idx, bool inv) const {
    idx %= n_;
    if (inv && idx) idx = n_ - idx;
    return tw_[static_cast<std::size_t>(idx)];
  }

  void rec(const cd* x, long stride, cd* y, long n, std::size_t level, bool inv) const {
    if (n == 1) {
      y[0] = x[0];
      return;
    }
    const long r = factors_[level];
    const long m = n / r;
    for (long q = 0; q < r; ++q) rec(x + q * stride, stride * r, y + q * m, m, level + 1, inv);

    const long mul = n_ / n;  // maps exponents of W_n onto the W_N table
    cd a[64], res[64];
    std::vector<cd> heap_a, heap_res;
    cd* pa = a;
    cd* pr = res;
    if (r > 64) {
      heap_a.resize(static_cast<std::size_t>(r));
      heap_res.resize(static_cast<std::size_t>(r));
      pa = heap_a.data();
      pr = heap_res.data();
    }
    for (long k = 0; k < m; ++k) {
      for (long q = 0; q < r; ++q) pa[q] = y[q * m + k] * tw(q * k * mul, inv);
      for (long j = 0; j < r; ++j) {
        cd acc = pa[0];
        for (long q = 1; q < r; ++q) acc += pa[q] * tw(q * j * m * mul, inv);
        pr[j] = acc;
      }
      for (long j = 0; j < r; ++j) y[j * m + k] = pr[j];
    }
  }

  long n_;
  std::vector<cd> tw_;
  std::vector<long> factors_;
};

}  // namespace darccn::signal
