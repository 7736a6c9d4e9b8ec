#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "darccn/autodiff.hpp"
#include "darccn/tensor.hpp"

namespace darccn::nn {

// ---------------------------------------------------------------------------
// convolution geometry
// ---------------------------------------------------------------------------

// Convolutions are causal in time (left pad only, stride 1) and "same"-style
// in frequency with ceil semantics: out = ceil(in / stride). Transposed
// convolutions upsample frequency to an explicit target size and stay causal
// gathers in time, so every operator reads only present and past frames.
struct ConvSpec {
  long in_ch = 0, out_ch = 0;
  long kt = 2, kf = 5;
  long sf = 1;              // frequency stride (time stride is always 1)
  long dt = 1;              // time dilation
  bool transposed = false;  // frequency-transposed (upsampling)
  long in_bins = 0;
  long out_bins = 0;
  long pad_f = 0;  // left frequency pad

  long history() const { return (kt - 1) * dt; }  // past frames each output needs
};

inline ConvSpec make_conv_spec(long in_ch, long out_ch, long kt, long kf, long sf, long in_bins,
                               long dt = 1) {
  ConvSpec s;
  s.in_ch = in_ch;
  s.out_ch = out_ch;
  s.kt = kt;
  s.kf = kf;
  s.sf = sf;
  s.dt = dt;
  s.in_bins = in_bins;
  s.out_bins = (in_bins + sf - 1) / sf;
  const long pad_total = std::max(0L, (s.out_bins - 1) * sf + kf - in_bins);
  s.pad_f = pad_total / 2;
  return s;
}

inline ConvSpec make_deconv_spec(long in_ch, long out_ch, long kt, long kf, long sf, long in_bins,
                                 long out_bins) {
  ConvSpec s;
  s.in_ch = in_ch;
  s.out_ch = out_ch;
  s.kt = kt;
  s.kf = kf;
  s.sf = sf;
  s.transposed = true;
  s.in_bins = in_bins;
  s.out_bins = out_bins;
  const long pad_total = (in_bins - 1) * sf + kf - out_bins;
  if (pad_total < 0)
    throw shape_error("deconv: target bins " + std::to_string(out_bins) +
                      " unreachable from " + std::to_string(in_bins));
  s.pad_f = pad_total / 2;
  return s;
}

// ---------------------------------------------------------------------------
// convolution kernels
// ---------------------------------------------------------------------------

// Computes one output frame. `col(back, ic)` returns the input row of channel
// `ic` located `back` frames in the past, or nullptr for the causal pad. Both
// the batch forward and the streaming step funnel through this routine, so
// they accumulate in the identical order.
template <class ColFn>
inline void conv_frame(const ConvSpec& sp, const Tensor& w, const double* bias, const ColFn& col,
                       double* out) {
  const long ob = sp.out_bins;
  for (long oc = 0; oc < sp.out_ch; ++oc) {
    double* orow = out + oc * ob;
    const double bv = bias ? bias[oc] : 0.0;
    for (long f = 0; f < ob; ++f) orow[f] = bv;
  }
  for (long ic = 0; ic < sp.in_ch; ++ic)
    for (long j = 0; j < sp.kt; ++j) {
      const double* src = col(j * sp.dt, ic);
      if (!src) continue;
      for (long oc = 0; oc < sp.out_ch; ++oc) {
        double* orow = out + oc * ob;
        if (!sp.transposed) {
          for (long kf = 0; kf < sp.kf; ++kf) {
            const double wv = w.at4(oc, ic, j, kf);
            const long off = kf - sp.pad_f;
            long f_lo = 0;
            if (off < 0) f_lo = (-off + sp.sf - 1) / sp.sf;
            long f_hi = (sp.in_bins - off + sp.sf - 1) / sp.sf;
            if (f_hi > ob) f_hi = ob;
            if (sp.sf == 1) {
              const double* s = src + off + f_lo;
              for (long f = f_lo; f < f_hi; ++f) orow[f] += wv * s[f - f_lo];
            } else {
              for (long f = f_lo; f < f_hi; ++f) orow[f] += wv * src[f * sp.sf + off];
            }
          }
        } else {
          for (long kf = 0; kf < sp.kf; ++kf) {
            const double wv = w.at4(oc, ic, j, kf);
            const long off = kf - sp.pad_f;
            for (long fi = 0; fi < sp.in_bins; ++fi) {
              const long fo = fi * sp.sf + off;
              if (fo >= 0 && fo < ob) orow[fo] += wv * src[fi];
            }
          }
        }
      }
    }
}

inline void check_conv_args(const Tensor& x, const Tensor& w, const Tensor& b,
                            const ConvSpec& sp) {
  if (x.rank() != 3 || x.channels() != sp.in_ch || x.bins() != sp.in_bins)
    throw shape_error("conv: input " + x.shape_str() + " does not match spec (in_ch=" +
                      std::to_string(sp.in_ch) + ", bins=" + std::to_string(sp.in_bins) + ")");
  require_shape(w, {sp.out_ch, sp.in_ch, sp.kt, sp.kf}, "conv weights");
  require_shape(b, {sp.out_ch}, "conv bias");
}

inline Tensor conv2d_fwd(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& sp) {
  check_conv_args(x, w, b, sp);
  const long T = x.frames();
  Tensor y({sp.out_ch, T, sp.out_bins});
  std::vector<double> frame(static_cast<std::size_t>(sp.out_ch * sp.out_bins));
  for (long t = 0; t < T; ++t) {
    conv_frame(sp, w, b.data(),
               [&](long back, long ic) -> const double* {
                 const long tt = t - back;
                 return tt >= 0 ? x.row(ic, tt) : nullptr;
               },
               frame.data());
    for (long oc = 0; oc < sp.out_ch; ++oc) {
      double* dst = y.row(oc, t);
      const double* s = frame.data() + oc * sp.out_bins;
      for (long f = 0; f < sp.out_bins; ++f) dst[f] = s[f];
    }
  }
  return y;
}

// Adjoints of the exact forward loop nest.
inline void conv2d_bwd(const Tensor& x, const Tensor& w, const ConvSpec& sp, const Tensor& gy,
                       Tensor* gx, Tensor* gw, Tensor* gb) {
  const long T = x.frames();
  for (long t = 0; t < T; ++t)
    for (long ic = 0; ic < sp.in_ch; ++ic)
      for (long j = 0; j < sp.kt; ++j) {
        const long tt = t - j * sp.dt;
        if (tt < 0) continue;
        const double* xrow = x.row(ic, tt);
        double* gxrow = gx ? gx->row(ic, tt) : nullptr;
        for (long oc = 0; oc < sp.out_ch; ++oc) {
          const double* gyrow = gy.row(oc, t);
          if (!sp.transposed) {
            for (long kf = 0; kf < sp.kf; ++kf) {
              const double wv = w.at4(oc, ic, j, kf);
              double gwacc = 0.0;
              const long off = kf - sp.pad_f;
              long f_lo = 0;
              if (off < 0) f_lo = (-off + sp.sf - 1) / sp.sf;
              long f_hi = (sp.in_bins - off + sp.sf - 1) / sp.sf;
              if (f_hi > sp.out_bins) f_hi = sp.out_bins;
              for (long f = f_lo; f < f_hi; ++f) {
                const long fi = f * sp.sf + off;
                if (gxrow) gxrow[fi] += wv * gyrow[f];
                gwacc += xrow[fi] * gyrow[f];
              }
              if (gw) gw->at4(oc, ic, j, kf) += gwacc;
            }
          } else {
            for (long kf = 0; kf < sp.kf; ++kf) {
              const double wv = w.at4(oc, ic, j, kf);
              double gwacc = 0.0;
              const long off = kf - sp.pad_f;
              for (long fi = 0; fi < sp.in_bins; ++fi) {
                const long fo = fi * sp.sf + off;
                if (fo < 0 || fo >= sp.out_bins) continue;
                if (gxrow) gxrow[fi] += wv * gyrow[fo];
                gwacc += xrow[fi] * gyrow[fo];
              }
              if (gw) gw->at4(oc, ic, j, kf) += gwacc;
            }
          }
        }
      }
  if (gb) {
    for (long oc = 0; oc < sp.out_ch; ++oc) {
      double acc = 0.0;
      for (long t = 0; t < T; ++t) {
        const double* gyrow = gy.row(oc, t);
        for (long f = 0; f < sp.out_bins; ++f) acc += gyrow[f];
      }
      (*gb)[static_cast<std::size_t>(oc)] += acc;
    }
  }
}

inline Var conv2d(const Var& x, const Var& w, const Var& b, const ConvSpec& sp) {
  Tensor y = conv2d_fwd(x.value(), w.value(), b.value(), sp);
  Var xc = x, wc = w, bc = b;
  return make_op(std::move(y), {x, w, b}, [xc, wc, bc, sp](Node& self) {
    Tensor* gx = nullptr;
    Tensor* gw = nullptr;
    Tensor* gb = nullptr;
    if (xc.requires_grad()) {
      if (xc.grad().empty()) xc.grad() = Tensor(xc.value().dims());
      gx = &xc.grad();
    }
    if (wc.requires_grad()) {
      if (wc.grad().empty()) wc.grad() = Tensor(wc.value().dims());
      gw = &wc.grad();
    }
    if (bc.requires_grad()) {
      if (bc.grad().empty()) bc.grad() = Tensor(bc.value().dims());
      gb = &bc.grad();
    }
    conv2d_bwd(xc.value(), wc.value(), sp, self.grad, gx, gw, gb);
  });
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

// Per-channel statistics over every (frame, bin) element of the input tensor.
// Minibatches are packed along the frame axis before this op, which makes the
// statistics joint across the batch. Biased variance throughout; running
// stats decay with momentum 0.99 per update.
struct BnStats {
  Tensor mean, istd;  // rank-1 (C), istd = 1/sqrt(var + eps)
};

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.99;

inline BnStats bn_batch_stats(const Tensor& x) {
  const long C = x.channels();
  const long n = x.frames() * x.bins();
  BnStats st{Tensor({C}), Tensor({C})};
  for (long c = 0; c < C; ++c) {
    double m = 0.0;
    for (long t = 0; t < x.frames(); ++t) {
      const double* row = x.row(c, t);
      for (long f = 0; f < x.bins(); ++f) m += row[f];
    }
    m /= static_cast<double>(n);
    double v = 0.0;
    for (long t = 0; t < x.frames(); ++t) {
      const double* row = x.row(c, t);
      for (long f = 0; f < x.bins(); ++f) {
        const double d = row[f] - m;
        v += d * d;
      }
    }
    v /= static_cast<double>(n);
    st.mean[static_cast<std::size_t>(c)] = m;
    st.istd[static_cast<std::size_t>(c)] = 1.0 / std::sqrt(v + kBnEps);
  }
  return st;
}

inline Tensor bn_apply(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const Tensor& mean, const Tensor& istd) {
  Tensor y(x.dims());
  for (long c = 0; c < x.channels(); ++c) {
    const double g = gamma[static_cast<std::size_t>(c)] * istd[static_cast<std::size_t>(c)];
    const double off = beta[static_cast<std::size_t>(c)] -
                       g * mean[static_cast<std::size_t>(c)];
    for (long t = 0; t < x.frames(); ++t) {
      const double* src = x.row(c, t);
      double* dst = y.row(c, t);
      for (long f = 0; f < x.bins(); ++f) dst[f] = g * src[f] + off;
    }
  }
  return y;
}

struct BatchNormState {
  Var gamma, beta;
  Var running_mean, running_var;  // leaves with requires_grad = false
};

inline Var batch_norm(const Var& x, BatchNormState& bn, bool training) {
  const long C = x.value().channels();
  require_shape(bn.gamma.value(), {C}, "batch_norm gamma");
  require_shape(bn.beta.value(), {C}, "batch_norm beta");

  if (!training) {
    Tensor istd({C});
    for (long c = 0; c < C; ++c)
      istd[static_cast<std::size_t>(c)] =
          1.0 / std::sqrt(bn.running_var.value()[static_cast<std::size_t>(c)] + kBnEps);
    Tensor y = bn_apply(x.value(), bn.gamma.value(), bn.beta.value(), bn.running_mean.value(),
                        istd);
    Var xc = x, gc = bn.gamma, bc = bn.beta;
    Tensor mean = bn.running_mean.value();
    return make_op(std::move(y), {x, bn.gamma, bn.beta}, [xc, gc, bc, mean, istd](Node& self) {
      const Tensor& gy = self.grad;
      const Tensor& xv = xc.value();
      const long C2 = xv.channels();
      if (xc.requires_grad()) {
        if (xc.grad().empty()) xc.grad() = Tensor(xv.dims());
        for (long c = 0; c < C2; ++c) {
          const double k = gc.value()[static_cast<std::size_t>(c)] *
                           istd[static_cast<std::size_t>(c)];
          for (long t = 0; t < xv.frames(); ++t) {
            const double* g = gy.row(c, t);
            double* dst = xc.grad().row(c, t);
            for (long f = 0; f < xv.bins(); ++f) dst[f] += k * g[f];
          }
        }
      }
      if (gc.requires_grad() || bc.requires_grad()) {
        for (long c = 0; c < C2; ++c) {
          double sg = 0.0, sgx = 0.0;
          for (long t = 0; t < xv.frames(); ++t) {
            const double* g = gy.row(c, t);
            const double* xr = xv.row(c, t);
            for (long f = 0; f < xv.bins(); ++f) {
              sg += g[f];
              sgx += g[f] * (xr[f] - mean[static_cast<std::size_t>(c)]) *
                     istd[static_cast<std::size_t>(c)];
            }
          }
          if (gc.requires_grad()) {
            if (gc.grad().empty()) gc.grad() = Tensor(gc.value().dims());
            gc.grad()[static_cast<std::size_t>(c)] += sgx;
          }
          if (bc.requires_grad()) {
            if (bc.grad().empty()) bc.grad() = Tensor(bc.value().dims());
            bc.grad()[static_cast<std::size_t>(c)] += sg;
          }
        }
      }
    });
  }

  BnStats st = bn_batch_stats(x.value());
  // side effect: running stats track the batch statistics
  for (long c = 0; c < C; ++c) {
    const double istd = st.istd[static_cast<std::size_t>(c)];
    const double var = 1.0 / (istd * istd) - kBnEps;
    auto& rm = bn.running_mean.value()[static_cast<std::size_t>(c)];
    auto& rv = bn.running_var.value()[static_cast<std::size_t>(c)];
    rm = kBnMomentum * rm + (1.0 - kBnMomentum) * st.mean[static_cast<std::size_t>(c)];
    rv = kBnMomentum * rv + (1.0 - kBnMomentum) * var;
  }
  Tensor y = bn_apply(x.value(), bn.gamma.value(), bn.beta.value(), st.mean, st.istd);
  Var xc = x, gc = bn.gamma, bc = bn.beta;
  return make_op(std::move(y), {x, bn.gamma, bn.beta}, [xc, gc, bc, st](Node& self) {
    const Tensor& gy = self.grad;
    const Tensor& xv = xc.value();
    const long C2 = xv.channels();
    const double n = static_cast<double>(xv.frames() * xv.bins());
    for (long c = 0; c < C2; ++c) {
      const double mean = st.mean[static_cast<std::size_t>(c)];
      const double istd = st.istd[static_cast<std::size_t>(c)];
      double sg = 0.0, sgx = 0.0;
      for (long t = 0; t < xv.frames(); ++t) {
        const double* g = gy.row(c, t);
        const double* xr = xv.row(c, t);
        for (long f = 0; f < xv.bins(); ++f) {
          sg += g[f];
          sgx += g[f] * (xr[f] - mean) * istd;
        }
      }
      if (xc.requires_grad()) {
        if (xc.grad().empty()) xc.grad() = Tensor(xv.dims());
        const double k = gc.value()[static_cast<std::size_t>(c)] * istd;
        for (long t = 0; t < xv.frames(); ++t) {
          const double* g = gy.row(c, t);
          const double* xr = xv.row(c, t);
          double* dst = xc.grad().row(c, t);
          for (long f = 0; f < xv.bins(); ++f) {
            const double xhat = (xr[f] - mean) * istd;
            dst[f] += k * (g[f] - sg / n - xhat * sgx / n);
          }
        }
      }
      if (gc.requires_grad()) {
        if (gc.grad().empty()) gc.grad() = Tensor(gc.value().dims());
        gc.grad()[static_cast<std::size_t>(c)] += sgx;
      }
      if (bc.requires_grad()) {
        if (bc.grad().empty()) bc.grad() = Tensor(bc.value().dims());
        bc.grad()[static_cast<std::size_t>(c)] += sg;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// pointwise ops
// ---------------------------------------------------------------------------

inline double elu_s(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double sigmoid_s(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

namespace detail {

template <class F, class DF>
inline Var unary_op(const Var& x, F f, DF df_from_y) {
  Tensor y(x.value().dims());
  for (long i = 0; i < y.numel(); ++i)
    y[static_cast<std::size_t>(i)] = f(x.value()[static_cast<std::size_t>(i)]);
  Var xc = x;
  return make_op(std::move(y), {x}, [xc, df_from_y](Node& self) {
    if (!xc.requires_grad()) return;
    if (xc.grad().empty()) xc.grad() = Tensor(xc.value().dims());
    for (long i = 0; i < self.value.numel(); ++i)
      xc.grad()[static_cast<std::size_t>(i)] +=
          self.grad[static_cast<std::size_t>(i)] *
          df_from_y(self.value[static_cast<std::size_t>(i)]);
  });
}

}  // namespace detail

inline Var elu(const Var& x) {
  return detail::unary_op(
      x, [](double v) { return elu_s(v); },
      [](double y) { return y > 0.0 ? 1.0 : y + 1.0; });
}

inline Var sigmoid(const Var& x) {
  return detail::unary_op(
      x, [](double v) { return sigmoid_s(v); }, [](double y) { return y * (1.0 - y); });
}

inline Var tanh_op(const Var& x) {
  return detail::unary_op(
      x, [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

inline Var square(const Var& x) {
  Tensor y(x.value().dims());
  for (long i = 0; i < y.numel(); ++i) {
    const double v = x.value()[static_cast<std::size_t>(i)];
    y[static_cast<std::size_t>(i)] = v * v;
  }
  Var xc = x;
  return make_op(std::move(y), {x}, [xc](Node& self) {
    if (!xc.requires_grad()) return;
    if (xc.grad().empty()) xc.grad() = Tensor(xc.value().dims());
    for (long i = 0; i < self.value.numel(); ++i)
      xc.grad()[static_cast<std::size_t>(i)] += self.grad[static_cast<std::size_t>(i)] * 2.0 *
                                                xc.value()[static_cast<std::size_t>(i)];
  });
}

inline Var affine(const Var& x, double k, double c) {
  Tensor y(x.value().dims());
  for (long i = 0; i < y.numel(); ++i)
    y[static_cast<std::size_t>(i)] = k * x.value()[static_cast<std::size_t>(i)] + c;
  Var xc = x;
  return make_op(std::move(y), {x}, [xc, k](Node& self) {
    if (!xc.requires_grad()) return;
    if (xc.grad().empty()) xc.grad() = Tensor(xc.value().dims());
    for (long i = 0; i < self.value.numel(); ++i)
      xc.grad()[static_cast<std::size_t>(i)] += k * self.grad[static_cast<std::size_t>(i)];
  });
}

namespace detail {

template <class F, class DFa, class DFb>
inline Var binary_op(const Var& a, const Var& b, F f, DFa dfa, DFb dfb, const char* name) {
  require_same_shape(a.value(), b.value(), name);
  Tensor y(a.value().dims());
  for (long i = 0; i < y.numel(); ++i)
    y[static_cast<std::size_t>(i)] =
        f(a.value()[static_cast<std::size_t>(i)], b.value()[static_cast<std::size_t>(i)]);
  Var ac = a, bc = b;
  return make_op(std::move(y), {a, b}, [ac, bc, dfa, dfb](Node& self) {
    for (long i = 0; i < self.value.numel(); ++i) {
      const double g = self.grad[static_cast<std::size_t>(i)];
      const double av = ac.value()[static_cast<std::size_t>(i)];
      const double bv = bc.value()[static_cast<std::size_t>(i)];
      if (ac.requires_grad()) {
        if (ac.grad().empty()) ac.grad() = Tensor(ac.value().dims());
        ac.grad()[static_cast<std::size_t>(i)] += g * dfa(av, bv);
      }
      if (bc.requires_grad()) {
        if (bc.grad().empty()) bc.grad() = Tensor(bc.value().dims());
        bc.grad()[static_cast<std::size_t>(i)] += g * dfb(av, bv);
      }
    }
  });
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; }, "add");
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; }, "sub");
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary_op(
      a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; }, "mul");
}

// x (C,T,F) scaled per position by a single-channel map m (1,T,F)
inline Var mul_map(const Var& x, const Var& m) {
  const Tensor& xv = x.value();
  const Tensor& mv = m.value();
  if (mv.channels() != 1 || mv.frames() != xv.frames() || mv.bins() != xv.bins())
    throw shape_error("mul_map: map " + mv.shape_str() + " does not broadcast over " +
                      xv.shape_str());
  Tensor y(xv.dims());
  for (long c = 0; c < xv.channels(); ++c)
    for (long t = 0; t < xv.frames(); ++t) {
      const double* xr = xv.row(c, t);
      const double* mr = mv.row(0, t);
      double* d = y.row(c, t);
      for (long f = 0; f < xv.bins(); ++f) d[f] = xr[f] * mr[f];
    }
  Var xc = x, mc = m;
  return make_op(std::move(y), {x, m}, [xc, mc](Node& self) {
    const Tensor& xv2 = xc.value();
    const Tensor& mv2 = mc.value();
    if (xc.requires_grad() && xc.grad().empty()) xc.grad() = Tensor(xv2.dims());
    if (mc.requires_grad() && mc.grad().empty()) mc.grad() = Tensor(mv2.dims());
    for (long c = 0; c < xv2.channels(); ++c)
      for (long t = 0; t < xv2.frames(); ++t) {
        const double* g = self.grad.row(c, t);
        const double* xr = xv2.row(c, t);
        const double* mr = mv2.row(0, t);
        for (long f = 0; f < xv2.bins(); ++f) {
          if (xc.requires_grad()) xc.grad().row(c, t)[f] += g[f] * mr[f];
          if (mc.requires_grad()) mc.grad().row(0, t)[f] += g[f] * xr[f];
        }
      }
  });
}

inline Var reduce_sum(const Var& x) {
  double acc = 0.0;
  for (long i = 0; i < x.value().numel(); ++i) acc += x.value()[static_cast<std::size_t>(i)];
  Var xc = x;
  return make_op(Tensor::scalar(acc), {x}, [xc](Node& self) {
    if (!xc.requires_grad()) return;
    if (xc.grad().empty()) xc.grad() = Tensor(xc.value().dims());
    const double g = self.grad[0];
    for (long i = 0; i < xc.value().numel(); ++i) xc.grad()[static_cast<std::size_t>(i)] += g;
  });
}

inline Var reduce_mean(const Var& x) {
  const double n = static_cast<double>(x.value().numel());
  double acc = 0.0;
  for (long i = 0; i < x.value().numel(); ++i) acc += x.value()[static_cast<std::size_t>(i)];
  Var xc = x;
  return make_op(Tensor::scalar(acc / n), {x}, [xc, n](Node& self) {
    if (!xc.requires_grad()) return;
    if (xc.grad().empty()) xc.grad() = Tensor(xc.value().dims());
    const double g = self.grad[0] / n;
    for (long i = 0; i < xc.value().numel(); ++i) xc.grad()[static_cast<std::size_t>(i)] += g;
  });
}

// mean((x - target)^2) against a constant target
inline Var mean_sq_diff(const Var& x, const Tensor& target) {
  require_same_shape(x.value(), target, "mean_sq_diff");
  const double n = static_cast<double>(x.value().numel());
  double acc = 0.0;
  for (long i = 0; i < x.value().numel(); ++i) {
    const double d = x.value()[static_cast<std::size_t>(i)] - target[static_cast<std::size_t>(i)];
    acc += d * d;
  }
  Var xc = x;
  Tensor tgt = target;
  return make_op(Tensor::scalar(acc / n), {x}, [xc, tgt, n](Node& self) {
    if (!xc.requires_grad()) return;
    if (xc.grad().empty()) xc.grad() = Tensor(xc.value().dims());
    const double g = 2.0 * self.grad[0] / n;
    for (long i = 0; i < xc.value().numel(); ++i)
      xc.grad()[static_cast<std::size_t>(i)] +=
          g * (xc.value()[static_cast<std::size_t>(i)] - tgt[static_cast<std::size_t>(i)]);
  });
}

// ---------------------------------------------------------------------------
// concatenation / splitting
// ---------------------------------------------------------------------------

inline Var concat_ch(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_ch: empty input list");
  const long T = xs[0].value().frames();
  const long F = xs[0].value().bins();
  long C = 0;
  for (const auto& x : xs) {
    if (x.value().frames() != T || x.value().bins() != F)
      throw shape_error("concat_ch: mismatched frame/bin extents");
    C += x.value().channels();
  }
  Tensor y({C, T, F});
  long base = 0;
  for (const auto& x : xs) {
    const Tensor& v = x.value();
    for (long c = 0; c < v.channels(); ++c)
      for (long t = 0; t < T; ++t) {
        const double* s = v.row(c, t);
        double* d = y.row(base + c, t);
        for (long f = 0; f < F; ++f) d[f] = s[f];
      }
    base += v.channels();
  }
  std::vector<Var> parents = xs;
  return make_op(std::move(y), parents, [xs](Node& self) {
    long base2 = 0;
    for (const auto& x : xs) {
      Var xc = x;
      const long ch = xc.value().channels();
      if (xc.requires_grad()) {
        if (xc.grad().empty()) xc.grad() = Tensor(xc.value().dims());
        for (long c = 0; c < ch; ++c)
          for (long t = 0; t < xc.value().frames(); ++t) {
            const double* g = self.grad.row(base2 + c, t);
            double* d = xc.grad().row(c, t);
            for (long f = 0; f < xc.value().bins(); ++f) d[f] += g[f];
          }
      }
      base2 += ch;
    }
  });
}

inline Var concat_time(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_time: empty input list");
  const long C = xs[0].value().channels();
  const long F = xs[0].value().bins();
  long T = 0;
  for (const auto& x : xs) {
    if (x.value().channels() != C || x.value().bins() != F)
      throw shape_error("concat_time: mismatched channel/bin extents");
    T += x.value().frames();
  }
  Tensor y({C, T, F});
  long base = 0;
  for (const auto& x : xs) {
    const Tensor& v = x.value();
    for (long c = 0; c < C; ++c)
      for (long t = 0; t < v.frames(); ++t) {
        const double* s = v.row(c, t);
        double* d = y.row(c, base + t);
        for (long f = 0; f < F; ++f) d[f] = s[f];
      }
    base += v.frames();
  }
  std::vector<Var> parents = xs;
  return make_op(std::move(y), parents, [xs](Node& self) {
    long base2 = 0;
    for (const auto& x : xs) {
      Var xc = x;
      const long tn = xc.value().frames();
      if (xc.requires_grad()) {
        if (xc.grad().empty()) xc.grad() = Tensor(xc.value().dims());
        for (long c = 0; c < xc.value().channels(); ++c)
          for (long t = 0; t < tn; ++t) {
            const double* g = self.grad.row(c, base2 + t);
            double* d = xc.grad().row(c, t);
            for (long f = 0; f < xc.value().bins(); ++f) d[f] += g[f];
          }
      }
      base2 += tn;
    }
  });
}

inline std::vector<Var> split_time(const Var& x, const std::vector<long>& lens) {
  long total = 0;
  for (long l : lens) total += l;
  if (total != x.value().frames())
    throw shape_error("split_time: segment lengths do not sum to frame count");
  std::vector<Var> out;
  long base = 0;
  for (long l : lens) {
    const Tensor& v = x.value();
    Tensor seg({v.channels(), l, v.bins()});
    for (long c = 0; c < v.channels(); ++c)
      for (long t = 0; t < l; ++t) {
        const double* s = v.row(c, base + t);
        double* d = seg.row(c, t);
        for (long f = 0; f < v.bins(); ++f) d[f] = s[f];
      }
    Var xc = x;
    const long seg_base = base;
    out.push_back(make_op(std::move(seg), {x}, [xc, seg_base](Node& self) {
      if (!xc.requires_grad()) return;
      if (xc.grad().empty()) xc.grad() = Tensor(xc.value().dims());
      const Tensor& g = self.grad;
      for (long c = 0; c < g.channels(); ++c)
        for (long t = 0; t < g.frames(); ++t) {
          const double* s = g.row(c, t);
          double* d = xc.grad().row(c, seg_base + t);
          for (long f = 0; f < g.bins(); ++f) d[f] += s[f];
        }
    }));
    base += l;
  }
  return out;
}

}  // namespace darccn::nn
