#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "darccn/common.hpp"

namespace darccn::nn {

// Dense row-major tensor of doubles. Activations are rank 3 with axes
// (channels, frames, bins); convolution weights are rank 4
// (out_ch, in_ch, taps_t, taps_f). Scalars are rank 1 with one element.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<long> dims) : dims_(std::move(dims)) {
    data_.assign(static_cast<std::size_t>(numel_of(dims_)), 0.0);
  }

  static Tensor zeros(std::initializer_list<long> dims) { return Tensor(std::vector<long>(dims)); }

  static Tensor scalar(double v) {
    Tensor t({1});
    t.data_[0] = v;
    return t;
  }

  static Tensor full(std::vector<long> dims, double v) {
    Tensor t(std::move(dims));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  const std::vector<long>& dims() const { return dims_; }
  long rank() const { return static_cast<long>(dims_.size()); }
  long dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
  long numel() const { return numel_of(dims_); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // rank-3 accessors (channels, frames, bins)
  long channels() const { return dims_[0]; }
  long frames() const { return dims_[1]; }
  long bins() const { return dims_[2]; }

  double& at(long c, long t, long f) { return data_[idx3(c, t, f)]; }
  double at(long c, long t, long f) const { return data_[idx3(c, t, f)]; }

  // rank-4 accessor (out_ch, in_ch, kt, kf)
  double& at4(long o, long i, long kt, long kf) { return data_[idx4(o, i, kt, kf)]; }
  double at4(long o, long i, long kt, long kf) const { return data_[idx4(o, i, kt, kf)]; }

  std::size_t idx3(long c, long t, long f) const {
    return static_cast<std::size_t>((c * dims_[1] + t) * dims_[2] + f);
  }
  std::size_t idx4(long o, long i, long kt, long kf) const {
    return static_cast<std::size_t>(((o * dims_[1] + i) * dims_[2] + kt) * dims_[3] + kf);
  }

  // contiguous row of `bins` values for one (channel, frame)
  double* row(long c, long t) { return data_.data() + idx3(c, t, 0); }
  const double* row(long c, long t) const { return data_.data() + idx3(c, t, 0); }

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  std::string shape_str() const {
    std::string s = "(";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + ")";
  }

  static long numel_of(const std::vector<long>& dims) {
    long n = 1;
    for (long d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }

 private:
  std::vector<long> dims_;
  std::vector<double> data_;
};

inline void require_shape(const Tensor& t, const std::vector<long>& dims, const char* what) {
  if (t.dims() != dims)
    throw shape_error(std::string(what) + ": expected " + Tensor(dims).shape_str() + ", got " +
                      t.shape_str());
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b))
    throw shape_error(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " +
                      b.shape_str());
}

}  // namespace darccn::nn
