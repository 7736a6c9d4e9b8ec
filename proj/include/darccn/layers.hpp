#pragma once

#include <deque>
#include <string>
#include <vector>

#include "darccn/ops.hpp"
#include "darccn/registry.hpp"

namespace darccn::nn {

struct LayerStat {
  std::string name;
  long params = 0;  // trainable
  long macs = 0;    // multiply-accumulates per frame (dense formula, convolutions only)
};

// Dense per-frame MAC count. Transposed convolutions scatter each input bin,
// plain ones gather each output bin; both sides reduce to extent x in x out x
// taps. Bias adds and elementwise work are not counted.
inline long conv_macs(const ConvSpec& sp) {
  const long extent = sp.transposed ? sp.in_bins : sp.out_bins;
  return extent * sp.in_ch * sp.out_ch * sp.kt * sp.kf;
}

// ---------------------------------------------------------------------------
// streaming history
// ---------------------------------------------------------------------------

// Ring of past input frames for one causal conv; front is frame t-1. Frames
// beyond what has been pushed read as the zero left pad.
struct FrameRing {
  std::deque<Tensor> past;
  long capacity = 0;

  void push(const Tensor& frame) {
    if (capacity <= 0) return;
    past.push_front(frame);
    if (static_cast<long>(past.size()) > capacity) past.pop_back();
  }

  const double* col(long back, long ic, const Tensor& current) const {
    if (back == 0) return current.row(ic, 0);
    const std::size_t k = static_cast<std::size_t>(back - 1);
    return k < past.size() ? past[k].row(ic, 0) : nullptr;
  }
};

// Single-frame convolution through the shared kernel; pushes x into the ring.
inline Tensor conv_step(const ConvSpec& sp, const Tensor& w, const Tensor& b, FrameRing& ring,
                        const Tensor& x) {
  Tensor y({sp.out_ch, 1, sp.out_bins});
  conv_frame(sp, w, b.data(), [&](long back, long ic) { return ring.col(back, ic, x); },
             y.data());
  ring.push(x);
  return y;
}

inline void elu_inplace(Tensor& t) {
  for (long i = 0; i < t.numel(); ++i) {
    auto& v = t[static_cast<std::size_t>(i)];
    v = elu_s(v);
  }
}

inline void sigmoid_inplace(Tensor& t) {
  for (long i = 0; i < t.numel(); ++i) {
    auto& v = t[static_cast<std::size_t>(i)];
    v = sigmoid_s(v);
  }
}

inline Tensor concat_ch_frames(const std::vector<const Tensor*>& xs) {
  long C = 0;
  for (const Tensor* x : xs) C += x->channels();
  const long F = xs[0]->bins();
  Tensor y({C, 1, F});
  long base = 0;
  for (const Tensor* x : xs) {
    for (long c = 0; c < x->channels(); ++c) {
      const double* s = x->row(c, 0);
      double* d = y.row(base + c, 0);
      for (long f = 0; f < F; ++f) d[f] = s[f];
    }
    base += x->channels();
  }
  return y;
}

// ---------------------------------------------------------------------------
// conv / deconv block: convolution, then BN and ELU unless linear
// ---------------------------------------------------------------------------

struct ConvLayer {
  ConvSpec spec;
  Var w, b;
  BatchNormState bn;
  bool linear = false;

  void init(ParamRegistry& reg, const std::string& prefix, const ConvSpec& sp, bool lin,
            Rng& rng) {
    spec = sp;
    linear = lin;
    Tensor wt({sp.out_ch, sp.in_ch, sp.kt, sp.kf});
    xavier_fill(wt, rng);
    w = reg.add(prefix + ".w", std::move(wt));
    b = reg.add(prefix + ".b", Tensor({sp.out_ch}));
    if (!linear) {
      bn.gamma = reg.add(prefix + ".gamma", Tensor::full({sp.out_ch}, 1.0));
      bn.beta = reg.add(prefix + ".beta", Tensor({sp.out_ch}));
      bn.running_mean = reg.add(prefix + ".rmean", Tensor({sp.out_ch}), false);
      bn.running_var = reg.add(prefix + ".rvar", Tensor::full({sp.out_ch}, 1.0), false);
    }
  }

  Var forward(const Var& x, bool training) {
    Var y = conv2d(x, w, b, spec);
    if (linear) return y;
    return elu(batch_norm(y, bn, training));
  }

  // Convolutions stay per-utterance; BN statistics are joint across the
  // batch, computed by packing the batch along the frame axis.
  std::vector<Var> forward_batch(const std::vector<Var>& xs, bool training) {
    std::vector<Var> ys;
    ys.reserve(xs.size());
    for (const Var& x : xs) ys.push_back(conv2d(x, w, b, spec));
    if (linear) return ys;
    if (ys.size() == 1) return {elu(batch_norm(ys[0], bn, training))};
    std::vector<long> lens;
    lens.reserve(ys.size());
    for (const Var& y : ys) lens.push_back(y.value().frames());
    return split_time(elu(batch_norm(concat_time(ys), bn, training)), lens);
  }

  struct Stream {
    FrameRing ring;
    Tensor bn_istd;  // empty when linear
  };

  Stream make_stream() const {
    Stream st;
    st.ring.capacity = spec.history();
    if (!linear) {
      const Tensor& rv = bn.running_var.value();
      st.bn_istd = Tensor({spec.out_ch});
      for (long c = 0; c < spec.out_ch; ++c)
        st.bn_istd[static_cast<std::size_t>(c)] =
            1.0 / std::sqrt(rv[static_cast<std::size_t>(c)] + kBnEps);
    }
    return st;
  }

  Tensor step(Stream& st, const Tensor& x) const {
    Tensor y = conv_step(spec, w.value(), b.value(), st.ring, x);
    if (linear) return y;
    y = bn_apply(y, bn.gamma.value(), bn.beta.value(), bn.running_mean.value(), st.bn_istd);
    elu_inplace(y);
    return y;
  }

  LayerStat stat(const std::string& name) const {
    long p = w.value().numel() + b.value().numel();
    if (!linear) p += bn.gamma.value().numel() + bn.beta.value().numel();
    return {name, p, conv_macs(spec)};
  }
};

// ---------------------------------------------------------------------------
// gated linear unit block with a residual connection
// ---------------------------------------------------------------------------

// y = proj(conv_a(x) * sigmoid(conv_b(x))) + x; the two branch convs are
// causal dilated 1-D convolutions along time.
struct GluBlock {
  ConvSpec sp_branch, sp_proj;
  Var wa, ba, wb, bb, wp, bp;

  void init(ParamRegistry& reg, const std::string& prefix, long ch, long width, long kt,
            long dilation, long bins, Rng& rng) {
    sp_branch = make_conv_spec(ch, width, kt, 1, 1, bins, dilation);
    sp_proj = make_conv_spec(width, ch, 1, 1, 1, bins);
    Tensor t({width, ch, kt, 1});
    xavier_fill(t, rng);
    wa = reg.add(prefix + ".a.w", t);
    xavier_fill(t, rng);
    wb = reg.add(prefix + ".b.w", std::move(t));
    ba = reg.add(prefix + ".a.b", Tensor({width}));
    bb = reg.add(prefix + ".b.b", Tensor({width}));
    Tensor p({ch, width, 1, 1});
    xavier_fill(p, rng);
    wp = reg.add(prefix + ".p.w", std::move(p));
    bp = reg.add(prefix + ".p.b", Tensor({ch}));
  }

  Var forward(const Var& x) const {
    Var a = conv2d(x, wa, ba, sp_branch);
    Var g = sigmoid(conv2d(x, wb, bb, sp_branch));
    return add(conv2d(mul(a, g), wp, bp, sp_proj), x);
  }

  struct Stream {
    FrameRing ring;
  };

  Stream make_stream() const {
    Stream st;
    st.ring.capacity = sp_branch.history();
    return st;
  }

  Tensor step(Stream& st, const Tensor& x) const {
    Tensor a({sp_branch.out_ch, 1, sp_branch.out_bins});
    Tensor g(a.dims());
    auto col = [&](long back, long ic) { return st.ring.col(back, ic, x); };
    conv_frame(sp_branch, wa.value(), ba.value().data(), col, a.data());
    conv_frame(sp_branch, wb.value(), bb.value().data(), col, g.data());
    st.ring.push(x);
    sigmoid_inplace(g);
    for (long i = 0; i < a.numel(); ++i)
      a[static_cast<std::size_t>(i)] *= g[static_cast<std::size_t>(i)];
    Tensor y({sp_proj.out_ch, 1, sp_proj.out_bins});
    FrameRing none;
    conv_frame(sp_proj, wp.value(), bp.value().data(),
               [&](long back, long ic) { return none.col(back, ic, a); }, y.data());
    for (long i = 0; i < y.numel(); ++i)
      y[static_cast<std::size_t>(i)] += x[static_cast<std::size_t>(i)];
    return y;
  }

  LayerStat stat(const std::string& name) const {
    const long p = wa.value().numel() + ba.value().numel() + wb.value().numel() +
                   bb.value().numel() + wp.value().numel() + bp.value().numel();
    return {name, p, 2 * conv_macs(sp_branch) + conv_macs(sp_proj)};
  }
};

// ---------------------------------------------------------------------------
// convolutional GRU over pointwise (1x1) gates
// ---------------------------------------------------------------------------

// The hidden state carries information between recursion stages. Every gate
// is a 1x1 convolution, so the cell is local to each (frame, bin) position
// and adds no temporal context of its own.
struct ConvGru {
  ConvSpec sp;  // (in_ch + state_ch) -> state_ch, 1x1
  long state_ch = 0;
  Var wz, bz, wr, br, wn, bn_;

  void init(ParamRegistry& reg, const std::string& prefix, long in_ch, long state,
            long bins, Rng& rng) {
    state_ch = state;
    sp = make_conv_spec(in_ch + state, state, 1, 1, 1, bins);
    Tensor t({state, in_ch + state, 1, 1});
    xavier_fill(t, rng);
    wz = reg.add(prefix + ".z.w", t);
    xavier_fill(t, rng);
    wr = reg.add(prefix + ".r.w", t);
    xavier_fill(t, rng);
    wn = reg.add(prefix + ".n.w", std::move(t));
    bz = reg.add(prefix + ".z.b", Tensor({state}));
    br = reg.add(prefix + ".r.b", Tensor({state}));
    bn_ = reg.add(prefix + ".n.b", Tensor({state}));
  }

  Var forward(const Var& x, const Var& h) const {
    Var xh = concat_ch({x, h});
    Var z = sigmoid(conv2d(xh, wz, bz, sp));
    Var r = sigmoid(conv2d(xh, wr, br, sp));
    Var n = tanh_op(conv2d(concat_ch({x, mul(r, h)}), wn, bn_, sp));
    return add(mul(affine(z, -1.0, 1.0), h), mul(z, n));
  }

  Tensor step(const Tensor& x, const Tensor& h) const {
    FrameRing none;
    Tensor xh = concat_ch_frames({&x, &h});
    Tensor z({state_ch, 1, sp.out_bins});
    Tensor r(z.dims());
    auto col = [&](long back, long ic) { return none.col(back, ic, xh); };
    conv_frame(sp, wz.value(), bz.value().data(), col, z.data());
    conv_frame(sp, wr.value(), br.value().data(), col, r.data());
    sigmoid_inplace(z);
    sigmoid_inplace(r);
    Tensor rh(h.dims());
    for (long i = 0; i < h.numel(); ++i)
      rh[static_cast<std::size_t>(i)] =
          r[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(i)];
    Tensor xrh = concat_ch_frames({&x, &rh});
    Tensor n(z.dims());
    conv_frame(sp, wn.value(), bn_.value().data(),
               [&](long back, long ic) { return none.col(back, ic, xrh); }, n.data());
    for (long i = 0; i < n.numel(); ++i)
      n[static_cast<std::size_t>(i)] = std::tanh(n[static_cast<std::size_t>(i)]);
    Tensor out(h.dims());
    for (long i = 0; i < h.numel(); ++i) {
      const double zi = z[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(i)] = (-1.0 * zi + 1.0) * h[static_cast<std::size_t>(i)] +
                                         zi * n[static_cast<std::size_t>(i)];
    }
    return out;
  }

  LayerStat stat(const std::string& name) const {
    const long p = 3 * (wz.value().numel() + bz.value().numel());
    return {name, p, 3 * conv_macs(sp)};
  }
};

// ---------------------------------------------------------------------------
// additive attention gate on a skip connection
// ---------------------------------------------------------------------------

// alpha = sigmoid(psi(elu(Wg g + Wx x))), out = alpha * x, with the
// intermediate width half the skip's channel count. All 1x1 convolutions.
struct AttentionGate {
  ConvSpec sp_g, sp_x, sp_psi;
  Var wg, bg, wx, bx, wpsi, bpsi;

  void init(ParamRegistry& reg, const std::string& prefix, long g_ch, long x_ch, long bins,
            Rng& rng) {
    const long f_int = std::max(x_ch / 2, 1L);
    sp_g = make_conv_spec(g_ch, f_int, 1, 1, 1, bins);
    sp_x = make_conv_spec(x_ch, f_int, 1, 1, 1, bins);
    sp_psi = make_conv_spec(f_int, 1, 1, 1, 1, bins);
    Tensor tg({f_int, g_ch, 1, 1});
    xavier_fill(tg, rng);
    wg = reg.add(prefix + ".g.w", std::move(tg));
    bg = reg.add(prefix + ".g.b", Tensor({f_int}));
    Tensor tx({f_int, x_ch, 1, 1});
    xavier_fill(tx, rng);
    wx = reg.add(prefix + ".x.w", std::move(tx));
    bx = reg.add(prefix + ".x.b", Tensor({f_int}));
    Tensor tp({1, f_int, 1, 1});
    xavier_fill(tp, rng);
    wpsi = reg.add(prefix + ".psi.w", std::move(tp));
    bpsi = reg.add(prefix + ".psi.b", Tensor({1}));
  }

  Var forward(const Var& g, const Var& x) const {
    Var q = elu(add(conv2d(g, wg, bg, sp_g), conv2d(x, wx, bx, sp_x)));
    Var alpha = sigmoid(conv2d(q, wpsi, bpsi, sp_psi));
    return mul_map(x, alpha);
  }

  Tensor step(const Tensor& g, const Tensor& x) const {
    FrameRing none;
    Tensor qg({sp_g.out_ch, 1, sp_g.out_bins});
    Tensor qx(qg.dims());
    conv_frame(sp_g, wg.value(), bg.value().data(),
               [&](long back, long ic) { return none.col(back, ic, g); }, qg.data());
    conv_frame(sp_x, wx.value(), bx.value().data(),
               [&](long back, long ic) { return none.col(back, ic, x); }, qx.data());
    for (long i = 0; i < qg.numel(); ++i)
      qg[static_cast<std::size_t>(i)] =
          elu_s(qg[static_cast<std::size_t>(i)] + qx[static_cast<std::size_t>(i)]);
    Tensor alpha({1, 1, sp_psi.out_bins});
    conv_frame(sp_psi, wpsi.value(), bpsi.value().data(),
               [&](long back, long ic) { return none.col(back, ic, qg); }, alpha.data());
    sigmoid_inplace(alpha);
    Tensor y(x.dims());
    for (long c = 0; c < x.channels(); ++c) {
      const double* xr = x.row(c, 0);
      const double* ar = alpha.row(0, 0);
      double* d = y.row(c, 0);
      for (long f = 0; f < x.bins(); ++f) d[f] = xr[f] * ar[f];
    }
    return y;
  }

  LayerStat stat(const std::string& name) const {
    const long p = wg.value().numel() + bg.value().numel() + wx.value().numel() +
                   bx.value().numel() + wpsi.value().numel() + bpsi.value().numel();
    return {name, p, conv_macs(sp_g) + conv_macs(sp_x) + conv_macs(sp_psi)};
  }
};

}  // namespace darccn::nn
