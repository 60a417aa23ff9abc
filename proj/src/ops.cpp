#include "netscope/ops.hpp"

#include <algorithm>
#include <cmath>

#include "netscope/threads.hpp"

namespace netscope::ops {

namespace {

template <typename T>
void check_conv_pre(const TensorT<T>& x, const ConvWeightsT<T>& w, Stride s, Pad p) {
  if (x.c() != w.in_channels())
    throw ShapeError("conv2d: input channels " + x.dims_str() + " do not match weights " +
                     w.w.dims_str());
  if (s.h < 1 || s.w < 1) throw ShapeError("conv2d: stride must be positive");
  if (p.h < 0 || p.w < 0) throw ShapeError("conv2d: padding must be non-negative");
  int oh = conv_out_extent(x.h(), p.h, w.kh(), s.h);
  int ow = conv_out_extent(x.w(), p.w, w.kw(), s.w);
  if (oh < 1 || ow < 1)
    throw ShapeError("conv2d: non-positive output dims for input " + x.dims_str() +
                     " and kernel " + w.w.dims_str());
}

// Patch matrix for one sample: col[k][m] = x_pad[q, u*sh+i, v*sw+j] with
// k = (q*kh+i)*kw+j and m = u*ow+v. Out-of-image cells hold explicit zeros so
// the GEMM accumulates exactly the reference loop's terms.
template <typename T>
void im2col(const TensorT<T>& x, int n, int kh, int kw, Stride s, Pad p, int oh, int ow,
            std::vector<T>& col) {
  const int q_count = x.c(), h = x.h(), w = x.w();
  col.assign(static_cast<std::size_t>(q_count) * kh * kw * oh * ow, T(0));
  const std::size_t m_total = static_cast<std::size_t>(oh) * ow;
  for (int q = 0; q < q_count; ++q) {
    const T* plane = x.data() + x.plane(n, q);
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        T* row = col.data() + ((static_cast<std::size_t>(q) * kh + i) * kw + j) * m_total;
        for (int u = 0; u < oh; ++u) {
          int y = u * s.h + i - p.h;
          if (y < 0 || y >= h) continue;
          const T* src = plane + static_cast<std::size_t>(y) * w;
          T* dst = row + static_cast<std::size_t>(u) * ow;
          for (int v = 0; v < ow; ++v) {
            int xx = v * s.w + j - p.w;
            if (xx >= 0 && xx < w) dst[v] = src[xx];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const ConvWeightsT<T>& w,
                          const std::vector<T>* bias, Stride stride, Pad pad) {
  check_conv_pre(x, w, stride, pad);
  if (bias && static_cast<int>(bias->size()) != w.out_channels())
    throw ShapeError("conv2d: bias length " + std::to_string(bias->size()) +
                     " does not match out_channels " + std::to_string(w.out_channels()));
  const int oh = conv_out_extent(x.h(), pad.h, w.kh(), stride.h);
  const int ow = conv_out_extent(x.w(), pad.w, w.kw(), stride.w);
  const int k_total = w.in_channels() * w.kh() * w.kw();
  const std::size_t m_total = static_cast<std::size_t>(oh) * ow;

  TensorT<T> out(x.n(), w.out_channels(), oh, ow);
  std::vector<T> col;
  for (int n = 0; n < x.n(); ++n) {
    im2col(x, n, w.kh(), w.kw(), stride, pad, oh, ow, col);
    parallel_for(w.out_channels(), [&](std::int64_t p) {
      const T* wrow = w.w.data() + static_cast<std::size_t>(p) * k_total;
      T* orow = out.data() + out.plane(n, static_cast<int>(p));
      for (int k = 0; k < k_total; ++k) {
        const T wv = wrow[k];
        const T* crow = col.data() + static_cast<std::size_t>(k) * m_total;
        for (std::size_t m = 0; m < m_total; ++m) orow[m] += wv * crow[m];
      }
      if (bias) {
        const T b = (*bias)[p];
        for (std::size_t m = 0; m < m_total; ++m) orow[m] += b;
      }
    });
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const TensorT<T>& grad_out, const TensorT<T>& x,
                             const ConvWeightsT<T>& w, bool had_bias, Stride stride,
                             Pad pad) {
  check_conv_pre(x, w, stride, pad);
  const int oh = conv_out_extent(x.h(), pad.h, w.kh(), stride.h);
  const int ow = conv_out_extent(x.w(), pad.w, w.kw(), stride.w);
  if (grad_out.n() != x.n() || grad_out.c() != w.out_channels() || grad_out.h() != oh ||
      grad_out.w() != ow)
    throw ShapeError("conv2d_backward: grad_out " + grad_out.dims_str() +
                     " does not match forward output (" + std::to_string(x.n()) + "," +
                     std::to_string(w.out_channels()) + "," + std::to_string(oh) + "," +
                     std::to_string(ow) + ")");

  const int p_count = w.out_channels();
  const int k_total = w.in_channels() * w.kh() * w.kw();
  const std::size_t m_total = static_cast<std::size_t>(oh) * ow;

  ConvGrads<T> g;
  g.grad_x = TensorT<T>(x.n(), x.c(), x.h(), x.w());
  g.grad_w = ConvWeightsT<T>(p_count, w.in_channels(), w.kh(), w.kw());
  if (had_bias) g.grad_bias.assign(p_count, T(0));

  std::vector<T> col, gcol(static_cast<std::size_t>(k_total) * m_total);
  for (int n = 0; n < x.n(); ++n) {
    im2col(x, n, w.kh(), w.kw(), stride, pad, oh, ow, col);

    // grad_w[p][k] += sum_m grad_out[p][m] * col[k][m]
    parallel_for(p_count, [&](std::int64_t p) {
      const T* go = grad_out.data() + grad_out.plane(n, static_cast<int>(p));
      T* gw = g.grad_w.w.data() + static_cast<std::size_t>(p) * k_total;
      for (int k = 0; k < k_total; ++k) {
        const T* crow = col.data() + static_cast<std::size_t>(k) * m_total;
        T acc = T(0);
        for (std::size_t m = 0; m < m_total; ++m) acc += go[m] * crow[m];
        gw[k] += acc;
      }
    });

    // gcol[k][m] = sum_p w[p][k] * grad_out[p][m], then scatter back (col2im).
    parallel_for(k_total, [&](std::int64_t k) {
      T* grow = gcol.data() + static_cast<std::size_t>(k) * m_total;
      std::fill(grow, grow + m_total, T(0));
      for (int p = 0; p < p_count; ++p) {
        const T wv = w.w.data()[static_cast<std::size_t>(p) * k_total + k];
        const T* go = grad_out.data() + grad_out.plane(n, p);
        for (std::size_t m = 0; m < m_total; ++m) grow[m] += wv * go[m];
      }
    });
    for (int k = 0; k < k_total; ++k) {
      const int q = k / (w.kh() * w.kw());
      const int i = (k / w.kw()) % w.kh();
      const int j = k % w.kw();
      T* plane = g.grad_x.data() + g.grad_x.plane(n, q);
      const T* grow = gcol.data() + static_cast<std::size_t>(k) * m_total;
      for (int u = 0; u < oh; ++u) {
        int y = u * stride.h + i - pad.h;
        if (y < 0 || y >= x.h()) continue;
        T* dst = plane + static_cast<std::size_t>(y) * x.w();
        const T* src = grow + static_cast<std::size_t>(u) * ow;
        for (int v = 0; v < ow; ++v) {
          int xx = v * stride.w + j - pad.w;
          if (xx >= 0 && xx < x.w()) dst[xx] += src[v];
        }
      }
    }

    if (had_bias) {
      for (int p = 0; p < p_count; ++p) {
        const T* go = grad_out.data() + grad_out.plane(n, p);
        T acc = T(0);
        for (std::size_t m = 0; m < m_total; ++m) acc += go[m];
        g.grad_bias[p] += acc;
      }
    }
  }
  return g;
}

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
  TensorT<T> out(x.n(), x.c(), x.h(), x.w());
  const T* in = x.data();
  T* o = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = in[i] > T(0) ? in[i] : T(0);
  return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& grad_out, const TensorT<T>& x) {
  if (!grad_out.same_dims(x))
    throw ShapeError("relu_backward: grad " + grad_out.dims_str() + " vs input " +
                     x.dims_str());
  TensorT<T> out(x.n(), x.c(), x.h(), x.w());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? grad_out[i] : T(0);
  return out;
}

template <typename T>
MaxPoolResult<T> maxpool_forward(const TensorT<T>& x, int k, int stride, int pad) {
  if (k < 1 || stride < 1 || pad < 0 || pad >= k)
    throw ShapeError("maxpool: need k >= 1, stride >= 1, 0 <= pad < k");
  const int oh = conv_out_extent(x.h(), pad, k, stride);
  const int ow = conv_out_extent(x.w(), pad, k, stride);
  if (oh < 1 || ow < 1) throw ShapeError("maxpool: non-positive output dims for " + x.dims_str());

  MaxPoolResult<T> r;
  r.out = TensorT<T>(x.n(), x.c(), oh, ow);
  r.argmax.assign(r.out.size(), -1);
  const std::int64_t planes = static_cast<std::int64_t>(x.n()) * x.c();
  parallel_for(planes, [&](std::int64_t pc) {
    const int n = static_cast<int>(pc) / x.c();
    const int c = static_cast<int>(pc) % x.c();
    const T* plane = x.data() + x.plane(n, c);
    T* oplane = r.out.data() + r.out.plane(n, c);
    std::int64_t* aplane = r.argmax.data() + r.out.plane(n, c);
    for (int u = 0; u < oh; ++u) {
      for (int v = 0; v < ow; ++v) {
        T best = T(0);
        std::int64_t best_idx = -1;
        for (int i = 0; i < k; ++i) {
          int y = u * stride + i - pad;
          if (y < 0 || y >= x.h()) continue;
          for (int j = 0; j < k; ++j) {
            int xx = v * stride + j - pad;
            if (xx < 0 || xx >= x.w()) continue;
            T val = plane[static_cast<std::size_t>(y) * x.w() + xx];
            if (best_idx < 0 || val > best) {
              best = val;
              best_idx = x.plane(n, c) + static_cast<std::size_t>(y) * x.w() + xx;
            }
          }
        }
        oplane[static_cast<std::size_t>(u) * ow + v] = best;
        aplane[static_cast<std::size_t>(u) * ow + v] = best_idx;
      }
    }
  });
  return r;
}

template <typename T>
TensorT<T> maxpool_backward(const TensorT<T>& grad_out, const TensorT<T>& x,
                            const std::vector<std::int64_t>& argmax) {
  if (argmax.size() != grad_out.size())
    throw ShapeError("maxpool_backward: argmax size does not match grad_out");
  TensorT<T> gx(x.n(), x.c(), x.h(), x.w());
  const std::int64_t planes = static_cast<std::int64_t>(grad_out.n()) * grad_out.c();
  const std::size_t out_plane = static_cast<std::size_t>(grad_out.h()) * grad_out.w();
  parallel_for(planes, [&](std::int64_t pc) {
    const std::size_t base = static_cast<std::size_t>(pc) * out_plane;
    for (std::size_t m = 0; m < out_plane; ++m) {
      std::int64_t a = argmax[base + m];
      if (a >= 0) gx[static_cast<std::size_t>(a)] += grad_out[base + m];
    }
  });
  return gx;
}

template <typename T>
TensorT<T> global_avgpool_forward(const TensorT<T>& x) {
  TensorT<T> out(x.n(), x.c(), 1, 1);
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();
  if (hw == 0) throw ShapeError("global_avgpool: empty spatial dims " + x.dims_str());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* plane = x.data() + x.plane(n, c);
      T acc = T(0);
      for (std::size_t i = 0; i < hw; ++i) acc += plane[i];
      out.at(n, c, 0, 0) = acc / static_cast<T>(hw);
    }
  }
  return out;
}

template <typename T>
TensorT<T> global_avgpool_backward(const TensorT<T>& grad_out, int h, int w) {
  TensorT<T> gx(grad_out.n(), grad_out.c(), h, w);
  const T scale = T(1) / static_cast<T>(static_cast<std::size_t>(h) * w);
  for (int n = 0; n < grad_out.n(); ++n) {
    for (int c = 0; c < grad_out.c(); ++c) {
      const T g = grad_out.at(n, c, 0, 0) * scale;
      T* plane = gx.data() + gx.plane(n, c);
      for (int i = 0; i < h * w; ++i) plane[i] = g;
    }
  }
  return gx;
}

template <typename T>
TensorT<T> linear_forward(const TensorT<T>& x, const LinearParamT<T>& p) {
  const std::size_t in_dim = static_cast<std::size_t>(x.c()) * x.h() * x.w();
  const int out_dim = p.weight.n();
  if (static_cast<std::size_t>(p.weight.c()) != in_dim)
    throw ShapeError("linear: weight expects " + std::to_string(p.weight.c()) +
                     " inputs, got " + x.dims_str());
  if (p.bias.size() != static_cast<std::size_t>(out_dim))
    throw ShapeError("linear: bias length does not match out features");
  TensorT<T> out(x.n(), out_dim, 1, 1);
  parallel_for(x.n(), [&](std::int64_t n) {
    const T* row = x.data() + n * in_dim;
    for (int o = 0; o < out_dim; ++o) {
      const T* wrow = p.weight.data() + static_cast<std::size_t>(o) * in_dim;
      T acc = T(0);
      for (std::size_t i = 0; i < in_dim; ++i) acc += wrow[i] * row[i];
      out.at(static_cast<int>(n), o, 0, 0) = acc + p.bias[o];
    }
  });
  return out;
}

template <typename T>
LinearGrads<T> linear_backward(const TensorT<T>& grad_out, const TensorT<T>& x,
                               const LinearParamT<T>& p) {
  const std::size_t in_dim = static_cast<std::size_t>(x.c()) * x.h() * x.w();
  const int out_dim = p.weight.n();
  if (grad_out.n() != x.n() || grad_out.c() != out_dim)
    throw ShapeError("linear_backward: grad_out " + grad_out.dims_str() + " mismatch");
  LinearGrads<T> g;
  g.grad_x = TensorT<T>(x.n(), x.c(), x.h(), x.w());
  g.grad_weight = TensorT<T>(out_dim, static_cast<int>(in_dim), 1, 1);
  g.grad_bias.assign(out_dim, T(0));
  for (int n = 0; n < x.n(); ++n) {
    const T* row = x.data() + n * in_dim;
    T* gxrow = g.grad_x.data() + n * in_dim;
    for (int o = 0; o < out_dim; ++o) {
      const T go = grad_out.at(n, o, 0, 0);
      const T* wrow = p.weight.data() + static_cast<std::size_t>(o) * in_dim;
      T* gwrow = g.grad_weight.data() + static_cast<std::size_t>(o) * in_dim;
      for (std::size_t i = 0; i < in_dim; ++i) {
        gxrow[i] += go * wrow[i];
        gwrow[i] += go * row[i];
      }
      g.grad_bias[o] += go;
    }
  }
  return g;
}

template <typename T>
TensorT<T> add_forward(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_dims(b))
    throw ShapeError("add: dims " + a.dims_str() + " vs " + b.dims_str());
  TensorT<T> out(a.n(), a.c(), a.h(), a.w());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
TensorT<T> batchnorm_forward(const TensorT<T>& x, BatchNormStateT<T>& state, BnMode mode,
                             BnBatchStats<T>* saved) {
  if (x.c() != state.channels())
    throw ShapeError("batchnorm: input " + x.dims_str() + " vs state channels " +
                     std::to_string(state.channels()));
  TensorT<T> out(x.n(), x.c(), x.h(), x.w());
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();

  if (mode == BnMode::eval) {
    parallel_for(x.c(), [&](std::int64_t c) {
      const T inv = T(1) / std::sqrt(state.running_var[c] + state.epsilon);
      const T a = state.gamma[c] * inv;
      const T m = state.running_mean[c];
      const T b = state.beta[c];
      for (int n = 0; n < x.n(); ++n) {
        const T* in = x.data() + x.plane(n, static_cast<int>(c));
        T* o = out.data() + out.plane(n, static_cast<int>(c));
        for (std::size_t i = 0; i < hw; ++i) o[i] = (in[i] - m) * a + b;
      }
    });
    return out;
  }

  if (x.n() < 2)
    throw ShapeError("batchnorm train mode requires batch size >= 2, got " +
                     std::to_string(x.n()));
  const T m_count = static_cast<T>(static_cast<std::size_t>(x.n()) * hw);
  if (saved) {
    saved->mean.assign(x.c(), T(0));
    saved->inv_std.assign(x.c(), T(0));
  }
  parallel_for(x.c(), [&](std::int64_t c) {
    T sum = T(0);
    for (int n = 0; n < x.n(); ++n) {
      const T* in = x.data() + x.plane(n, static_cast<int>(c));
      for (std::size_t i = 0; i < hw; ++i) sum += in[i];
    }
    const T mean = sum / m_count;
    T sq = T(0);
    for (int n = 0; n < x.n(); ++n) {
      const T* in = x.data() + x.plane(n, static_cast<int>(c));
      for (std::size_t i = 0; i < hw; ++i) {
        const T d = in[i] - mean;
        sq += d * d;
      }
    }
    const T var = sq / m_count;  // population variance, also used for the EMA
    const T inv = T(1) / std::sqrt(var + state.epsilon);
    const T a = state.gamma[c] * inv;
    const T b = state.beta[c];
    for (int n = 0; n < x.n(); ++n) {
      const T* in = x.data() + x.plane(n, static_cast<int>(c));
      T* o = out.data() + out.plane(n, static_cast<int>(c));
      for (std::size_t i = 0; i < hw; ++i) o[i] = (in[i] - mean) * a + b;
    }
    state.running_mean[c] = (T(1) - state.momentum) * state.running_mean[c] + state.momentum * mean;
    state.running_var[c] = (T(1) - state.momentum) * state.running_var[c] + state.momentum * var;
    if (saved) {
      saved->mean[c] = mean;
      saved->inv_std[c] = inv;
    }
  });
  return out;
}

template <typename T>
BnGrads<T> batchnorm_backward(const TensorT<T>& grad_out, const TensorT<T>& x,
                              const BatchNormStateT<T>& state, BnMode mode,
                              const BnBatchStats<T>* saved) {
  if (!grad_out.same_dims(x))
    throw ShapeError("batchnorm_backward: grad " + grad_out.dims_str() + " vs input " +
                     x.dims_str());
  BnGrads<T> g;
  g.grad_x = TensorT<T>(x.n(), x.c(), x.h(), x.w());
  g.grad_gamma.assign(x.c(), T(0));
  g.grad_beta.assign(x.c(), T(0));
  const std::size_t hw = static_cast<std::size_t>(x.h()) * x.w();

  if (mode == BnMode::eval) {
    parallel_for(x.c(), [&](std::int64_t c) {
      const T inv = T(1) / std::sqrt(state.running_var[c] + state.epsilon);
      const T mean = state.running_mean[c];
      const T a = state.gamma[c] * inv;
      T dgamma = T(0), dbeta = T(0);
      for (int n = 0; n < x.n(); ++n) {
        const T* go = grad_out.data() + grad_out.plane(n, static_cast<int>(c));
        const T* in = x.data() + x.plane(n, static_cast<int>(c));
        T* gx = g.grad_x.data() + g.grad_x.plane(n, static_cast<int>(c));
        for (std::size_t i = 0; i < hw; ++i) {
          gx[i] = go[i] * a;
          dgamma += go[i] * (in[i] - mean) * inv;
          dbeta += go[i];
        }
      }
      g.grad_gamma[c] = dgamma;
      g.grad_beta[c] = dbeta;
    });
    return g;
  }

  if (!saved || saved->mean.size() != static_cast<std::size_t>(x.c()))
    throw Error("batchnorm_backward: train mode needs the forward's saved batch stats");
  const T m_count = static_cast<T>(static_cast<std::size_t>(x.n()) * hw);
  parallel_for(x.c(), [&](std::int64_t c) {
    const T mean = saved->mean[c];
    const T inv = saved->inv_std[c];
    T dgamma = T(0), dbeta = T(0);
    for (int n = 0; n < x.n(); ++n) {
      const T* go = grad_out.data() + grad_out.plane(n, static_cast<int>(c));
      const T* in = x.data() + x.plane(n, static_cast<int>(c));
      for (std::size_t i = 0; i < hw; ++i) {
        dgamma += go[i] * (in[i] - mean) * inv;
        dbeta += go[i];
      }
    }
    const T scale = state.gamma[c] * inv / m_count;
    for (int n = 0; n < x.n(); ++n) {
      const T* go = grad_out.data() + grad_out.plane(n, static_cast<int>(c));
      const T* in = x.data() + x.plane(n, static_cast<int>(c));
      T* gx = g.grad_x.data() + g.grad_x.plane(n, static_cast<int>(c));
      for (std::size_t i = 0; i < hw; ++i) {
        const T xhat = (in[i] - mean) * inv;
        gx[i] = scale * (m_count * go[i] - dbeta - xhat * dgamma);
      }
    }
    g.grad_gamma[c] = dgamma;
    g.grad_beta[c] = dbeta;
  });
  return g;
}

#define NETSCOPE_INSTANTIATE_OPS(T)                                                          \
  template TensorT<T> conv2d_forward<T>(const TensorT<T>&, const ConvWeightsT<T>&,           \
                                        const std::vector<T>*, Stride, Pad);                 \
  template ConvGrads<T> conv2d_backward<T>(const TensorT<T>&, const TensorT<T>&,             \
                                           const ConvWeightsT<T>&, bool, Stride, Pad);       \
  template TensorT<T> relu_forward<T>(const TensorT<T>&);                                    \
  template TensorT<T> relu_backward<T>(const TensorT<T>&, const TensorT<T>&);                \
  template MaxPoolResult<T> maxpool_forward<T>(const TensorT<T>&, int, int, int);            \
  template TensorT<T> maxpool_backward<T>(const TensorT<T>&, const TensorT<T>&,              \
                                          const std::vector<std::int64_t>&);                 \
  template TensorT<T> global_avgpool_forward<T>(const TensorT<T>&);                          \
  template TensorT<T> global_avgpool_backward<T>(const TensorT<T>&, int, int);               \
  template TensorT<T> linear_forward<T>(const TensorT<T>&, const LinearParamT<T>&);          \
  template LinearGrads<T> linear_backward<T>(const TensorT<T>&, const TensorT<T>&,           \
                                             const LinearParamT<T>&);                        \
  template TensorT<T> add_forward<T>(const TensorT<T>&, const TensorT<T>&);                  \
  template TensorT<T> batchnorm_forward<T>(const TensorT<T>&, BatchNormStateT<T>&, BnMode,   \
                                           BnBatchStats<T>*);                                \
  template BnGrads<T> batchnorm_backward<T>(const TensorT<T>&, const TensorT<T>&,            \
                                            const BatchNormStateT<T>&, BnMode,               \
                                            const BnBatchStats<T>*);

NETSCOPE_INSTANTIATE_OPS(float)
NETSCOPE_INSTANTIATE_OPS(double)

}  // namespace netscope::ops
