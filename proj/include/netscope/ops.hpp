#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "netscope/tensor.hpp"

// Differentiable layer primitives. Forward functions are pure; backward
// functions are exact adjoints of the forward maps. Everything is defined
// for float and double.
//
// Determinism contract: each output element is accumulated sequentially in a
// fixed operand order, and parallelism only ever splits disjoint output
// ranges, so results are bit-identical for any thread count.

namespace netscope::ops {

struct Stride {
  int h = 1, w = 1;
};
struct Pad {
  int h = 0, w = 0;
};

inline int conv_out_extent(int in, int pad, int k, int stride) {
  return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
struct ConvGrads {
  TensorT<T> grad_x;
  ConvWeightsT<T> grad_w;
  std::vector<T> grad_bias;  // empty when the forward had no bias
};

// out[n,p,u,v] = sum_{q,i,j} w[p,q,i,j] * x_pad[n,q,u*sh+i,v*sw+j] (+ bias[p]).
// Padding contributes explicit zero terms, exactly as the reference loop sums
// them. Internally uses a patch-matrix buffer; per-element accumulation order
// is (q, i, j) ascending, identical to the reference.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const ConvWeightsT<T>& w,
                          const std::vector<T>* bias, Stride stride, Pad pad);

template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& grad_out, const TensorT<T>& x,
                             const ConvWeightsT<T>& w, bool had_bias, Stride stride,
                             Pad pad);

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x);

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& grad_out, const TensorT<T>& x);

template <typename T>
struct MaxPoolResult {
  TensorT<T> out;
  // Flat input index of the max per output element (first occurrence in
  // row-major window scan on ties). Padded cells never win: they are
  // excluded from the max, not treated as zeros.
  std::vector<std::int64_t> argmax;
};

template <typename T>
MaxPoolResult<T> maxpool_forward(const TensorT<T>& x, int k, int stride, int pad);

template <typename T>
TensorT<T> maxpool_backward(const TensorT<T>& grad_out, const TensorT<T>& x,
                            const std::vector<std::int64_t>& argmax);

// (N,C,H,W) -> (N,C,1,1) spatial mean.
template <typename T>
TensorT<T> global_avgpool_forward(const TensorT<T>& x);

template <typename T>
TensorT<T> global_avgpool_backward(const TensorT<T>& grad_out, int h, int w);

template <typename T>
struct LinearParamT {
  TensorT<T> weight;      // (out, in, 1, 1)
  std::vector<T> bias;    // (out)
};

using LinearParam = LinearParamT<float>;

// Treats x as (N, C*H*W) rows. out dims (N, out, 1, 1).
template <typename T>
TensorT<T> linear_forward(const TensorT<T>& x, const LinearParamT<T>& p);

template <typename T>
struct LinearGrads {
  TensorT<T> grad_x;
  TensorT<T> grad_weight;
  std::vector<T> grad_bias;
};

template <typename T>
LinearGrads<T> linear_backward(const TensorT<T>& grad_out, const TensorT<T>& x,
                               const LinearParamT<T>& p);

template <typename T>
TensorT<T> add_forward(const TensorT<T>& a, const TensorT<T>& b);

// Mean/inverse-stddev actually used by a train-mode forward; required by the
// matching backward.
template <typename T>
struct BnBatchStats {
  std::vector<T> mean;
  std::vector<T> inv_std;  // 1/sqrt(var + eps)
};

// Train mode normalizes with batch statistics (batch size >= 2 required) and
// updates running stats in place: r <- (1-momentum)*r + momentum*batch.
// Eval mode uses running stats and leaves state untouched.
template <typename T>
TensorT<T> batchnorm_forward(const TensorT<T>& x, BatchNormStateT<T>& state,
                             BnMode mode, BnBatchStats<T>* saved = nullptr);

template <typename T>
struct BnGrads {
  TensorT<T> grad_x;
  std::vector<T> grad_gamma;
  std::vector<T> grad_beta;
};

template <typename T>
BnGrads<T> batchnorm_backward(const TensorT<T>& grad_out, const TensorT<T>& x,
                              const BatchNormStateT<T>& state, BnMode mode,
                              const BnBatchStats<T>* saved);

}  // namespace netscope::ops
