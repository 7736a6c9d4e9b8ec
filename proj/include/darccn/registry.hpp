#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "darccn/autodiff.hpp"
#include "darccn/common.hpp"
#include "darccn/tensor.hpp"

namespace darccn::nn {

// ---------------------------------------------------------------------------
// parameter registry
// ---------------------------------------------------------------------------

struct ParamEntry {
  std::string name;
  Var var;
  bool trainable = true;
};

// Owns every persistent tensor of a model in a stable, name-addressed order:
// weights, biases, BN affine terms, and BN running statistics. The trainable
// flag gates the optimizer; serialization always covers the full set.
class ParamRegistry {
 public:
  Var add(const std::string& name, Tensor init, bool trainable = true) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    Var v(std::move(init), trainable);
    index_[name] = entries_.size();
    entries_.push_back({name, v, trainable});
    return v;
  }

  const std::vector<ParamEntry>& entries() const { return entries_; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Var find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return entries_[it->second].var;
  }

  long trainable_params() const {
    long n = 0;
    for (const auto& e : entries_)
      if (e.trainable) n += e.var.value().numel();
    return n;
  }

  void zero_grads() const {
    for (const auto& e : entries_) e.var.clear_grad();
  }

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)); fans follow the
// (out, in, kt, kf) weight layout.
inline void xavier_fill(Tensor& w, Rng& rng) {
  if (w.rank() != 4) throw std::invalid_argument("xavier_fill expects rank-4 weights");
  const long out_ch = w.dims()[0], in_ch = w.dims()[1];
  const long k = w.dims()[2] * w.dims()[3];
  const double a = std::sqrt(6.0 / (static_cast<double>(in_ch * k) +
                                    static_cast<double>(out_ch * k)));
  for (long i = 0; i < w.numel(); ++i)
    w[static_cast<std::size_t>(i)] = rng.uniform(-a, a);
}

// ---------------------------------------------------------------------------
// weights file
// ---------------------------------------------------------------------------
//
// Binary layout, little-endian throughout:
//   magic "DRCN" | u32 version (1)
//   u32 config_count | config_count x { u32 name_len, name bytes, u32 value }
//   u32 tensor_count | tensor_count x { u32 name_len, name bytes,
//                                       u32 rank, u32 dims[rank], f32 payload }

struct WeightsFile {
  std::vector<std::pair<std::string, std::uint32_t>> config;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

namespace wire {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw protocol_error("weights file truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float f) {
  std::uint32_t v;
  static_assert(sizeof(v) == sizeof(f));
  std::memcpy(&v, &f, 4);
  put_u32(os, v);
}

inline float get_f32(std::istream& is) {
  const std::uint32_t v = get_u32(is);
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

inline std::string get_name(std::istream& is) {
  const std::uint32_t len = get_u32(is);
  if (len == 0 || len > 4096) throw protocol_error("weights file: implausible name length");
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) throw protocol_error("weights file truncated");
  return s;
}

}  // namespace wire

inline void save_weights(const std::filesystem::path& path, const WeightsFile& wf) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw io_error("cannot open for writing: " + tmp.string());
    os.write("DRCN", 4);
    wire::put_u32(os, 1);
    wire::put_u32(os, static_cast<std::uint32_t>(wf.config.size()));
    for (const auto& [name, value] : wf.config) {
      wire::put_u32(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      wire::put_u32(os, value);
    }
    wire::put_u32(os, static_cast<std::uint32_t>(wf.tensors.size()));
    for (const auto& [name, t] : wf.tensors) {
      wire::put_u32(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      wire::put_u32(os, static_cast<std::uint32_t>(t.rank()));
      for (long d : t.dims()) wire::put_u32(os, static_cast<std::uint32_t>(d));
      for (long i = 0; i < t.numel(); ++i)
        wire::put_f32(os, static_cast<float>(t[static_cast<std::size_t>(i)]));
    }
    if (!os) throw io_error("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw io_error("rename failed: " + path.string() + " (" + ec.message() + ")");
}

inline WeightsFile load_weights(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "DRCN")
    throw protocol_error("not a weights file: " + path.string());
  const std::uint32_t version = wire::get_u32(is);
  if (version != 1)
    throw protocol_error("unsupported weights version " + std::to_string(version));
  WeightsFile wf;
  const std::uint32_t n_cfg = wire::get_u32(is);
  for (std::uint32_t i = 0; i < n_cfg; ++i) {
    std::string name = wire::get_name(is);
    const std::uint32_t value = wire::get_u32(is);
    wf.config.emplace_back(std::move(name), value);
  }
  const std::uint32_t n_tensors = wire::get_u32(is);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = wire::get_name(is);
    const std::uint32_t rank = wire::get_u32(is);
    if (rank > 8) throw protocol_error("weights file: implausible rank for " + name);
    std::vector<long> dims(rank);
    long numel = 1;
    for (auto& d : dims) {
      d = static_cast<long>(wire::get_u32(is));
      if (d <= 0 || numel > (1L << 31) / std::max(d, 1L))
        throw protocol_error("weights file: implausible dims for " + name);
      numel *= d;
    }
    Tensor t(dims);
    for (long j = 0; j < numel; ++j)
      t[static_cast<std::size_t>(j)] = static_cast<double>(wire::get_f32(is));
    if (!is) throw protocol_error("weights file truncated");
    wf.tensors.emplace_back(std::move(name), std::move(t));
  }
  return wf;
}

inline WeightsFile snapshot(const ParamRegistry& reg,
                            std::vector<std::pair<std::string, std::uint32_t>> config) {
  WeightsFile wf;
  wf.config = std::move(config);
  for (const auto& e : reg.entries()) wf.tensors.emplace_back(e.name, e.var.value());
  return wf;
}

// Copies file tensors into the registry, enforcing exact name and shape
// agreement. With allow_extra the unmatched file tensors are returned instead
// of treated as an error (checkpoints carry optimizer state this way).
inline std::vector<std::pair<std::string, Tensor>> restore(const WeightsFile& wf,
                                                           const ParamRegistry& reg,
                                                           bool allow_extra = false) {
  std::unordered_map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : wf.tensors) {
    if (!by_name.emplace(name, &t).second)
      throw protocol_error("weights file: duplicate tensor " + name);
  }
  for (const auto& e : reg.entries()) {
    auto it = by_name.find(e.name);
    if (it == by_name.end()) throw protocol_error("weights file: missing tensor " + e.name);
    const Tensor& src = *it->second;
    if (src.dims() != e.var.value().dims())
      throw protocol_error("weights file: shape mismatch for " + e.name + ": file " +
                           src.shape_str() + " vs model " + e.var.value().shape_str());
    e.var.value() = src;
    by_name.erase(it);
  }
  std::vector<std::pair<std::string, Tensor>> extra;
  for (const auto& [name, t] : wf.tensors) {
    if (!by_name.count(name)) continue;
    if (!allow_extra) throw protocol_error("weights file: unexpected tensor " + name);
    extra.emplace_back(name, t);
  }
  return extra;
}

}  // namespace darccn::nn
