#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "darccn/layers.hpp"
#include "darccn/signal.hpp"

namespace darccn::nn {

using signal::ComplexSpectrogram;
using signal::Fft;
using signal::StftConfig;
using signal::Waveform;

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

// Channel widths derive from the reference layout divided by `scale`; the
// frequency geometry derives from the analysis window. The GLU stack width is
// independent so the parameter budget can be tuned without reshaping the
// U-Nets.
struct ModelConfig {
  long sample_rate = 16000;
  long win_len = 320;  // fft size == window, hop == win/2
  long stages = 3;
  long scale = 1;
  long glu_blocks = 6;
  long glu_width = 94;
  long glu_kernel = 11;

  long bins() const { return win_len / 2 + 1; }
  long ch(long base) const { return std::max(1L, base / scale); }

  static ModelConfig full_scale() { return {}; }

  static ModelConfig desk() {
    ModelConfig c;
    c.win_len = 64;
    c.scale = 4;
    c.glu_width = 24;
    return c;
  }

  static ModelConfig micro() {
    ModelConfig c;
    c.win_len = 64;
    c.scale = 16;
    c.stages = 2;
    c.glu_blocks = 2;
    c.glu_width = 4;
    return c;
  }
};

inline void validate(const ModelConfig& c) {
  if (c.sample_rate <= 0) throw shape_error("model config: sample_rate must be positive");
  if (c.win_len < 32 || c.win_len % 2 != 0)
    throw shape_error("model config: win_len must be even and at least 32");
  if (c.stages < 1) throw shape_error("model config: stages must be at least 1");
  if (c.scale < 1) throw shape_error("model config: scale must be at least 1");
  if (c.glu_blocks < 1 || c.glu_width < 1 || c.glu_kernel < 1)
    throw shape_error("model config: GLU stack must be non-empty");
}

inline std::vector<std::pair<std::string, std::uint32_t>> config_entries(const ModelConfig& c) {
  return {{"sample_rate", static_cast<std::uint32_t>(c.sample_rate)},
          {"win_len", static_cast<std::uint32_t>(c.win_len)},
          {"stages", static_cast<std::uint32_t>(c.stages)},
          {"scale", static_cast<std::uint32_t>(c.scale)},
          {"glu_blocks", static_cast<std::uint32_t>(c.glu_blocks)},
          {"glu_width", static_cast<std::uint32_t>(c.glu_width)},
          {"glu_kernel", static_cast<std::uint32_t>(c.glu_kernel)}};
}

inline ModelConfig config_from_entries(
    const std::vector<std::pair<std::string, std::uint32_t>>& entries) {
  ModelConfig c;
  bool seen[7] = {};
  const char* keys[7] = {"sample_rate", "win_len",   "stages",    "scale",
                         "glu_blocks",  "glu_width", "glu_kernel"};
  long* fields[7] = {&c.sample_rate, &c.win_len,   &c.stages,    &c.scale,
                     &c.glu_blocks,  &c.glu_width, &c.glu_kernel};
  for (const auto& [key, value] : entries) {
    bool known = false;
    for (int i = 0; i < 7; ++i)
      if (key == keys[i]) {
        *fields[i] = static_cast<long>(value);
        seen[i] = true;
        known = true;
      }
    if (!known) throw protocol_error("weights file: unknown config key " + key);
  }
  for (int i = 0; i < 7; ++i)
    if (!seen[i]) throw protocol_error("weights file: missing config key " + std::string(keys[i]));
  validate(c);
  return c;
}

namespace detail {

inline std::vector<Var> concat_items(const std::vector<Var>& a, const std::vector<Var>& b) {
  std::vector<Var> out;
  out.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(concat_ch({a[i], b[i]}));
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// attention generator: plain U-Net from the 4-channel spectra to one
// attention feature map per coupled channel
// ---------------------------------------------------------------------------

struct Agm {
  ConvLayer enc[5];
  ConvLayer dec[5];
  std::vector<long> enc_bins;  // bins entering each encoder level

  void init(ParamRegistry& reg, const ModelConfig& cfg, Rng& rng) {
    const long c16 = cfg.ch(16), c32 = cfg.ch(32), c64 = cfg.ch(64);
    const long enc_in[5] = {4, c16, c32, c32, c32};
    const long enc_out[5] = {c16, c32, c32, c32, c64};
    long bins = cfg.bins();
    enc_bins.clear();
    std::vector<ConvSpec> specs;
    for (int i = 0; i < 5; ++i) {
      enc_bins.push_back(bins);
      specs.push_back(make_conv_spec(enc_in[i], enc_out[i], 2, 5, 2, bins));
      bins = specs.back().out_bins;
      enc[i].init(reg, "agm.enc" + std::to_string(i + 1), specs[i], false, rng);
    }
    const long dec_in[5] = {c64, c64 + c32, c32 + c32, c32 + c32, c16 + c16};
    const long dec_out[5] = {c64, c32, c32, c16, c16};
    for (int i = 0; i < 5; ++i) {
      const long target = enc_bins[4 - i];
      dec[i].init(reg, "agm.dec" + std::to_string(i + 1),
                  make_deconv_spec(dec_in[i], dec_out[i], 2, 5, 2, bins, target), false, rng);
      bins = target;
    }
  }

  std::vector<Var> forward(const std::vector<Var>& x, bool training) {
    std::vector<Var> e1 = enc[0].forward_batch(x, training);
    std::vector<Var> e2 = enc[1].forward_batch(e1, training);
    std::vector<Var> e3 = enc[2].forward_batch(e2, training);
    std::vector<Var> e4 = enc[3].forward_batch(e3, training);
    std::vector<Var> e5 = enc[4].forward_batch(e4, training);
    std::vector<Var> d = dec[0].forward_batch(e5, training);
    d = dec[1].forward_batch(detail::concat_items(d, e4), training);
    d = dec[2].forward_batch(detail::concat_items(d, e3), training);
    d = dec[3].forward_batch(detail::concat_items(d, e2), training);
    d = dec[4].forward_batch(detail::concat_items(d, e1), training);
    return d;
  }

  struct Stream {
    ConvLayer::Stream enc[5], dec[5];
  };

  Stream make_stream() const {
    Stream st;
    for (int i = 0; i < 5; ++i) {
      st.enc[i] = enc[i].make_stream();
      st.dec[i] = dec[i].make_stream();
    }
    return st;
  }

  Tensor step(Stream& st, const Tensor& x) const {
    Tensor e1 = enc[0].step(st.enc[0], x);
    Tensor e2 = enc[1].step(st.enc[1], e1);
    Tensor e3 = enc[2].step(st.enc[2], e2);
    Tensor e4 = enc[3].step(st.enc[3], e3);
    Tensor e5 = enc[4].step(st.enc[4], e4);
    Tensor d = dec[0].step(st.dec[0], e5);
    d = dec[1].step(st.dec[1], concat_ch_frames({&d, &e4}));
    d = dec[2].step(st.dec[2], concat_ch_frames({&d, &e3}));
    d = dec[3].step(st.dec[3], concat_ch_frames({&d, &e2}));
    d = dec[4].step(st.dec[4], concat_ch_frames({&d, &e1}));
    return d;
  }

  void stats(std::vector<LayerStat>& out) const {
    for (int i = 0; i < 5; ++i) out.push_back(enc[i].stat("agm.enc" + std::to_string(i + 1)));
    for (int i = 0; i < 5; ++i) out.push_back(dec[i].stat("agm.dec" + std::to_string(i + 1)));
  }
};

// ---------------------------------------------------------------------------
// noise removal: recurrent features, attention coupling, gated skip U-Net
// with a dilated GLU stack at the bottleneck and two spectral decoders
// ---------------------------------------------------------------------------

struct NrmDecoder {
  AttentionGate gates[6];
  ConvLayer convs[6];

  void init(ParamRegistry& reg, const std::string& prefix, const ModelConfig& cfg,
            const std::vector<long>& enc_bins, const std::vector<long>& enc_out_ch,
            long bottleneck_bins, Rng& rng) {
    const long c16 = cfg.ch(16), c32 = cfg.ch(32), c64 = cfg.ch(64);
    const long dec_out[6] = {c64, c32, c32, c16, c16, 1};
    long bins = bottleneck_bins;
    for (int i = 0; i < 6; ++i) {
      const long skip_ch = enc_out_ch[5 - i];
      const long skip_bins = (i == 0) ? bottleneck_bins : enc_bins[6 - i];
      const long g_ch = (i == 0) ? c64 : dec_out[i - 1];
      gates[i].init(reg, prefix + ".gate" + std::to_string(i + 1), g_ch, skip_ch, skip_bins,
                    rng);
      const long in_ch = g_ch + skip_ch;
      if (i < 5) {
        const long target = enc_bins[5 - i];
        convs[i].init(reg, prefix + ".conv" + std::to_string(i + 1),
                      make_deconv_spec(in_ch, dec_out[i], 2, 5, 2, bins, target), false, rng);
        bins = target;
      } else {
        convs[i].init(reg, prefix + ".conv6", make_conv_spec(in_ch, 1, 2, 5, 1, bins), true,
                      rng);
      }
    }
  }

  std::vector<Var> forward(const std::vector<Var>& bottleneck,
                           const std::vector<std::vector<Var>>& enc_acts, bool training) {
    std::vector<Var> d = bottleneck;
    for (int i = 0; i < 6; ++i) {
      const std::vector<Var>& skip = enc_acts[5 - i];
      std::vector<Var> gated;
      gated.reserve(d.size());
      for (std::size_t k = 0; k < d.size(); ++k) gated.push_back(gates[i].forward(d[k], skip[k]));
      d = convs[i].forward_batch(detail::concat_items(d, gated), training);
    }
    return d;
  }

  struct Stream {
    ConvLayer::Stream convs[6];
  };

  Stream make_stream() const {
    Stream st;
    for (int i = 0; i < 6; ++i) st.convs[i] = convs[i].make_stream();
    return st;
  }

  Tensor step(Stream& st, const Tensor& bottleneck, const std::vector<Tensor>& enc_acts) const {
    Tensor d = bottleneck;
    for (int i = 0; i < 6; ++i) {
      Tensor gated = gates[i].step(d, enc_acts[static_cast<std::size_t>(5 - i)]);
      d = convs[i].step(st.convs[i], concat_ch_frames({&d, &gated}));
    }
    return d;
  }

  void stats(const std::string& prefix, std::vector<LayerStat>& out) const {
    for (int i = 0; i < 6; ++i) {
      out.push_back(gates[i].stat(prefix + ".gate" + std::to_string(i + 1)));
      out.push_back(convs[i].stat(prefix + ".conv" + std::to_string(i + 1)));
    }
  }
};

struct Nrm {
  ConvGru srnn;
  ConvLayer couple;
  ConvLayer enc[6];
  std::vector<GluBlock> glu;
  NrmDecoder dec_re, dec_im;
  std::vector<long> enc_bins;    // bins entering each encoder level
  std::vector<long> enc_out_ch;  // channels leaving each encoder level
  long bottleneck_bins = 0;
  long state_ch = 0;

  void init(ParamRegistry& reg, const ModelConfig& cfg, Rng& rng) {
    const long c16 = cfg.ch(16), c32 = cfg.ch(32), c64 = cfg.ch(64);
    state_ch = c16;
    srnn.init(reg, "nrm.srnn", 4, state_ch, cfg.bins(), rng);
    couple.init(reg, "nrm.couple", make_conv_spec(c16, state_ch, 1, 1, 1, cfg.bins()), true,
                rng);

    const long enc_in[6] = {state_ch, c16, c16, c32, c32, c64};
    const long enc_out[6] = {c16, c16, c32, c32, c64, c64};
    enc_out_ch.assign(enc_out, enc_out + 6);
    long bins = cfg.bins();
    enc_bins.clear();
    for (int i = 0; i < 6; ++i) {
      enc_bins.push_back(bins);
      const long stride = (i == 0) ? 1 : 2;
      ConvSpec sp = make_conv_spec(enc_in[i], enc_out[i], 2, 5, stride, bins);
      enc[i].init(reg, "nrm.enc" + std::to_string(i + 1), sp, false, rng);
      bins = sp.out_bins;
    }
    bottleneck_bins = bins;

    glu.resize(static_cast<std::size_t>(cfg.glu_blocks));
    long dilation = 1;
    for (long i = 0; i < cfg.glu_blocks; ++i) {
      glu[static_cast<std::size_t>(i)].init(reg, "nrm.glu" + std::to_string(i + 1), c64,
                                            cfg.glu_width, cfg.glu_kernel, dilation,
                                            bottleneck_bins, rng);
      dilation *= 2;
    }

    dec_re.init(reg, "nrm.re", cfg, enc_bins, enc_out_ch, bottleneck_bins, rng);
    dec_im.init(reg, "nrm.im", cfg, enc_bins, enc_out_ch, bottleneck_bins, rng);
  }

  // x4: per-item (4,T,bins) noisy spectrum with the previous estimate;
  // attn: attention generator output; h: recurrent state entering this stage.
  // Returns the per-item 2-channel spectrum estimate and the next state.
  std::pair<std::vector<Var>, std::vector<Var>> forward(const std::vector<Var>& x4,
                                                        const std::vector<Var>& attn,
                                                        const std::vector<Var>& h,
                                                        bool training) {
    std::vector<Var> h_new;
    h_new.reserve(x4.size());
    for (std::size_t k = 0; k < x4.size(); ++k) h_new.push_back(srnn.forward(x4[k], h[k]));
    std::vector<Var> gate = couple.forward_batch(attn, training);
    std::vector<Var> feat;
    feat.reserve(x4.size());
    for (std::size_t k = 0; k < x4.size(); ++k)
      feat.push_back(mul(h_new[k], sigmoid(gate[k])));

    std::vector<std::vector<Var>> acts;  // encoder outputs e1..e6
    std::vector<Var> cur = feat;
    for (int i = 0; i < 6; ++i) {
      cur = enc[i].forward_batch(cur, training);
      acts.push_back(cur);
    }
    for (auto& block : glu) {
      std::vector<Var> next;
      next.reserve(cur.size());
      for (const Var& v : cur) next.push_back(block.forward(v));
      cur = next;
    }
    std::vector<Var> re = dec_re.forward(cur, acts, training);
    std::vector<Var> im = dec_im.forward(cur, acts, training);
    return {detail::concat_items(re, im), h_new};
  }

  struct Stream {
    ConvLayer::Stream couple;
    ConvLayer::Stream enc[6];
    std::vector<GluBlock::Stream> glu;
    NrmDecoder::Stream re, im;
  };

  Stream make_stream() const {
    Stream st;
    st.couple = couple.make_stream();
    for (int i = 0; i < 6; ++i) st.enc[i] = enc[i].make_stream();
    st.glu.reserve(glu.size());
    for (const auto& block : glu) st.glu.push_back(block.make_stream());
    st.re = dec_re.make_stream();
    st.im = dec_im.make_stream();
    return st;
  }

  std::pair<Tensor, Tensor> step(Stream& st, const Tensor& x4, const Tensor& attn,
                                 const Tensor& h) const {
    Tensor h_new = srnn.step(x4, h);
    Tensor gate = couple.step(st.couple, attn);
    sigmoid_inplace(gate);
    Tensor feat(h_new.dims());
    for (long i = 0; i < feat.numel(); ++i)
      feat[static_cast<std::size_t>(i)] =
          h_new[static_cast<std::size_t>(i)] * gate[static_cast<std::size_t>(i)];

    std::vector<Tensor> acts;
    Tensor cur = feat;
    for (int i = 0; i < 6; ++i) {
      cur = enc[i].step(st.enc[i], cur);
      acts.push_back(cur);
    }
    for (std::size_t i = 0; i < glu.size(); ++i) cur = glu[i].step(st.glu[i], cur);
    Tensor re = dec_re.step(st.re, cur, acts);
    Tensor im = dec_im.step(st.im, cur, acts);
    return {concat_ch_frames({&re, &im}), h_new};
  }

  void stats(std::vector<LayerStat>& out) const {
    out.push_back(srnn.stat("nrm.srnn"));
    out.push_back(couple.stat("nrm.couple"));
    for (int i = 0; i < 6; ++i) out.push_back(enc[i].stat("nrm.enc" + std::to_string(i + 1)));
    for (std::size_t i = 0; i < glu.size(); ++i)
      out.push_back(glu[i].stat("nrm.glu" + std::to_string(i + 1)));
    dec_re.stats("nrm.re", out);
    dec_im.stats("nrm.im", out);
  }
};

// ---------------------------------------------------------------------------
// full model: recursive complex spectral mapping with shared weights
// ---------------------------------------------------------------------------

class Darccn {
 public:
  explicit Darccn(ModelConfig cfg, std::uint64_t init_seed = 0x5eed) : cfg_(cfg) {
    validate(cfg_);
    Rng rng(init_seed);
    agm_.init(reg_, cfg_, rng);
    nrm_.init(reg_, cfg_, rng);
    stft_cfg_ = signal::make_stft_config(cfg_.win_len, cfg_.win_len / 2, cfg_.sample_rate);
  }

  const ModelConfig& config() const { return cfg_; }
  const StftConfig& stft_config() const { return stft_cfg_; }
  ParamRegistry& registry() { return reg_; }
  const ParamRegistry& registry() const { return reg_; }

  // Per-stage estimates for a batch of utterance spectra (each (2,T,bins)).
  // The estimate of stage l-1 feeds stage l; stage 0 is the input itself.
  std::vector<std::vector<Var>> forward(const std::vector<Var>& X, bool training) {
    std::vector<Var> S_prev = X;
    std::vector<Var> h;
    h.reserve(X.size());
    for (const Var& x : X)
      h.emplace_back(Tensor({nrm_.state_ch, x.value().frames(), cfg_.bins()}), false);
    std::vector<std::vector<Var>> out;
    for (long l = 0; l < cfg_.stages; ++l) {
      std::vector<Var> x4 = detail::concat_items(X, S_prev);
      std::vector<Var> attn = agm_.forward(x4, training);
      auto [S, h_new] = nrm_.forward(x4, attn, h, training);
      h = std::move(h_new);
      out.push_back(S);
      S_prev = out.back();
    }
    return out;
  }

  Tensor enhance_spec(const Tensor& X) {
    NoGrad ng;
    Var x(X, false);
    auto stages = forward({x}, false);
    return stages.back()[0].value();
  }

  struct Stream {
    std::vector<Agm::Stream> agm;
    std::vector<Nrm::Stream> nrm;
  };

  Stream make_stream() const {
    Stream st;
    for (long l = 0; l < cfg_.stages; ++l) {
      st.agm.push_back(agm_.make_stream());
      st.nrm.push_back(nrm_.make_stream());
    }
    return st;
  }

  // One spectral frame in, one enhanced spectral frame out.
  Tensor step(Stream& st, const Tensor& x) {
    Tensor S_prev = x;
    Tensor h({nrm_.state_ch, 1, cfg_.bins()});
    for (long l = 0; l < cfg_.stages; ++l) {
      Tensor x4 = concat_ch_frames({&x, &S_prev});
      Tensor attn = agm_.step(st.agm[static_cast<std::size_t>(l)], x4);
      auto [S, h_new] = nrm_.step(st.nrm[static_cast<std::size_t>(l)], x4, attn, h);
      h = std::move(h_new);
      S_prev = std::move(S);
    }
    return S_prev;
  }

  std::vector<LayerStat> layer_stats() const {
    std::vector<LayerStat> out;
    agm_.stats(out);
    nrm_.stats(out);
    return out;
  }

  long total_params() const { return reg_.trainable_params(); }

  long macs_per_frame() const {
    long per_stage = 0;
    for (const auto& s : layer_stats()) per_stage += s.macs;
    return per_stage * cfg_.stages;
  }

 private:
  ModelConfig cfg_;
  ParamRegistry reg_;
  Agm agm_;
  Nrm nrm_;
  StftConfig stft_cfg_;
};

// ---------------------------------------------------------------------------
// utterance and streaming enhancement
// ---------------------------------------------------------------------------

inline Waveform enhance_utterance(Darccn& model, const Waveform& x) {
  const StftConfig& sc = model.stft_config();
  if (x.sample_rate != sc.sample_rate)
    throw std::invalid_argument("enhance: expected " + std::to_string(sc.sample_rate) +
                                " Hz input");
  ComplexSpectrogram spec = signal::stft(x.samples, sc);
  Tensor S = model.enhance_spec(signal::pack_features(spec));
  Waveform y;
  y.sample_rate = x.sample_rate;
  y.samples = signal::istft(signal::unpack_features(S), sc, static_cast<long>(x.samples.size()));
  return y;
}

// Sample-in, sample-out causal session. Samples come out exactly as the
// overlap-add normalization finalizes them: the first hop is emitted after
// one full window has been consumed, then one hop per hop.
class EnhanceSession {
 public:
  explicit EnhanceSession(Darccn& model)
      : model_(&model), st_(model.make_stream()), fft_(model.stft_config().fft_size) {}

  // identity session: same buffering and overlap-add, no model, for
  // measuring harness overhead
  explicit EnhanceSession(const StftConfig& sc) : model_(nullptr), passthrough_(sc),
                                                  fft_(sc.fft_size) {}

  std::vector<double> feed(const double* x, std::size_t n) {
    inbuf_.insert(inbuf_.end(), x, x + n);
    std::vector<double> out;
    const StftConfig& sc = config();
    const long win = sc.win_len, hop = sc.hop;
    while (static_cast<long>(inbuf_.size()) - consumed_ >= win) {
      std::vector<double> re(static_cast<std::size_t>(sc.bins()));
      std::vector<double> im(re.size());
      signal::stft_frame(inbuf_.data() + consumed_, sc, fft_, re.data(), im.data());
      if (model_) {
        Tensor xf({2L, 1L, sc.bins()});
        for (long f = 0; f < sc.bins(); ++f) {
          xf.at(0, 0, f) = re[static_cast<std::size_t>(f)];
          xf.at(1, 0, f) = im[static_cast<std::size_t>(f)];
        }
        Tensor yf = model_->step(st_, xf);
        for (long f = 0; f < sc.bins(); ++f) {
          re[static_cast<std::size_t>(f)] = yf.at(0, 0, f);
          im[static_cast<std::size_t>(f)] = yf.at(1, 0, f);
        }
      }
      std::vector<double> frame(static_cast<std::size_t>(win));
      signal::istft_frame(re.data(), im.data(), sc, fft_, frame.data());
      const long start = frame_idx_ * hop;
      if (static_cast<long>(num_.size()) < start - emitted_ + win) {
        num_.resize(static_cast<std::size_t>(start - emitted_ + win), 0.0);
        den_.resize(num_.size(), 0.0);
      }
      for (long i = 0; i < win; ++i) {
        const double w = sc.window[static_cast<std::size_t>(i)];
        num_[static_cast<std::size_t>(start - emitted_ + i)] +=
            frame[static_cast<std::size_t>(i)];
        den_[static_cast<std::size_t>(start - emitted_ + i)] += w * w;
      }
      ++frame_idx_;
      consumed_ += hop;
      if (consumed_ >= win * 4) {  // keep the pending buffer compact
        inbuf_.erase(inbuf_.begin(), inbuf_.begin() + consumed_);
        consumed_ = 0;
      }
      // every sample before the next frame's start is now fully accumulated
      emit(frame_idx_ * hop - emitted_, out);
    }
    return out;
  }

  // Emits whatever overlap-add tail is still pending.
  std::vector<double> finish() {
    std::vector<double> out;
    const long cover = frame_idx_ > 0 ? (frame_idx_ - 1) * config().hop + config().win_len : 0;
    emit(cover - emitted_, out);
    return out;
  }

 private:
  const StftConfig& config() const {
    return model_ ? model_->stft_config() : passthrough_;
  }

  void emit(long count, std::vector<double>& out) {
    if (count <= 0) return;
    for (long i = 0; i < count; ++i) {
      const double den = den_[static_cast<std::size_t>(i)];
      out.push_back(den < 1e-8 ? 0.0 : num_[static_cast<std::size_t>(i)] / den);
    }
    num_.erase(num_.begin(), num_.begin() + count);
    den_.erase(den_.begin(), den_.begin() + count);
    emitted_ += count;
  }

  Darccn* model_;
  Darccn::Stream st_;
  StftConfig passthrough_;
  Fft fft_;
  std::vector<double> inbuf_;
  long consumed_ = 0;
  std::vector<double> num_, den_;
  long frame_idx_ = 0;  // frames processed so far
  long emitted_ = 0;    // absolute index of num_[0]
};

}  // namespace darccn::nn
