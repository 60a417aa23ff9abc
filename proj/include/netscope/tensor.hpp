#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "netscope/errors.hpp"

namespace netscope {

// Dense NCHW tensor. Row-major contiguous, data length == N*C*H*W.
// T is float in normal operation; double exists for verification only.
template <typename T>
class TensorT {
 public:
  TensorT() : dims_{0, 0, 0, 0} {}
  TensorT(int n, int c, int h, int w) : dims_{n, c, h, w} {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      throw ShapeError("tensor dims must be non-negative, got " + dims_str(dims_));
    data_.assign(static_cast<std::size_t>(n) * c * h * w, T(0));
  }

  static TensorT full(int n, int c, int h, int w, T value) {
    TensorT t(n, c, h, w);
    for (auto& v : t.data_) v = value;
    return t;
  }

  int n() const { return dims_[0]; }
  int c() const { return dims_[1]; }
  int h() const { return dims_[2]; }
  int w() const { return dims_[3]; }
  const std::array<int, 4>& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& at(int n, int c, int y, int x) { return data_[idx(n, c, y, x)]; }
  T at(int n, int c, int y, int x) const { return data_[idx(n, c, y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  // Channel-plane base offset for sample n, channel c.
  std::size_t plane(int n, int c) const {
    return (static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] * dims_[3];
  }

  bool same_dims(const TensorT& o) const { return dims_ == o.dims_; }

  // NaN/Inf sweep; checkable debug assertion per the data invariants.
  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  static std::string dims_str(const std::array<int, 4>& d) {
    return "(" + std::to_string(d[0]) + "," + std::to_string(d[1]) + "," +
           std::to_string(d[2]) + "," + std::to_string(d[3]) + ")";
  }
  std::string dims_str() const { return dims_str(dims_); }

 private:
  std::size_t idx(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * dims_[1] + c) * dims_[2] + y) * dims_[3] + x;
  }

  std::array<int, 4> dims_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

// Convolution kernel bank W[p][q][i][j]: p out-channels, q in-channels,
// i x j spatial taps. Kernel dims must be odd (asymmetric padding is not
// supported anywhere in the toolkit).
template <typename T>
struct ConvWeightsT {
  TensorT<T> w;  // dims (out_channels, in_channels, kh, kw)

  ConvWeightsT() = default;
  ConvWeightsT(int out_c, int in_c, int kh, int kw) : w(out_c, in_c, kh, kw) {
    if (kh % 2 == 0 || kw % 2 == 0)
      throw ShapeError("conv kernel dims must be odd, got " + w.dims_str());
  }

  int out_channels() const { return w.n(); }
  int in_channels() const { return w.c(); }
  int kh() const { return w.h(); }
  int kw() const { return w.w(); }

  T& at(int p, int q, int i, int j) { return w.at(p, q, i, j); }
  T at(int p, int q, int i, int j) const { return w.at(p, q, i, j); }
};

using ConvWeights = ConvWeightsT<float>;
using ConvWeights64 = ConvWeightsT<double>;

enum class BnMode { train, eval };

// Per-channel batch normalization state. Running stats are updated by EMA in
// train mode only; eval mode is a frozen affine map.
template <typename T>
struct BatchNormStateT {
  std::vector<T> gamma, beta, running_mean, running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.1);

  BatchNormStateT() = default;
  explicit BatchNormStateT(int channels)
      : gamma(channels, T(1)),
        beta(channels, T(0)),
        running_mean(channels, T(0)),
        running_var(channels, T(1)) {}

  int channels() const { return static_cast<int>(gamma.size()); }

  void check() const {
    std::size_t c = gamma.size();
    if (beta.size() != c || running_mean.size() != c || running_var.size() != c)
      throw ShapeError("batchnorm vectors disagree on channel count");
    for (T v : running_var)
      if (v < T(0)) throw NumericError("batchnorm running_var has a negative entry");
  }
};

using BatchNormState = BatchNormStateT<float>;
using BatchNormState64 = BatchNormStateT<double>;

}  // namespace netscope
