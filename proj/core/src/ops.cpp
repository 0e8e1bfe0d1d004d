// Copyright 2026 The A2FPN Authors
// SPDX-License-Identifier: Apache-2.0

#include "a2fpn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace a2fpn {

namespace {
thread_local BranchRecorder* g_active_recorder = nullptr;
}  // namespace

BranchRecorder::BranchRecorder() : previous_(g_active_recorder) { g_active_recorder = this; }
BranchRecorder::~BranchRecorder() { g_active_recorder = previous_; }
BranchRecorder* BranchRecorder::active() { return g_active_recorder; }

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void require_matrix(const Shape& s, const char* what) {
  if (s.size() != 2) {
    throw DimensionError(std::string(what) + ": expected a matrix, got " +
                         shape_to_string(s));
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": shape " + shape_to_string(a) +
                         " vs " + shape_to_string(b));
  }
}

// View of a tensor as [outer, axis, inner] for axis-wise reductions.
struct AxisView {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for " + shape_to_string(s));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.extent = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a.shape(), "matmul");
  require_matrix(b.shape(), "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner extents " + shape_to_string(a.shape()) +
                         " * " + shape_to_string(b.shape()));
  }
  Tensor<T> out({m, n});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = pa[i * k + p];
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a.shape(), "matmul_tn");
  require_matrix(b.shape(), "matmul_tn");
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul_tn: inner extents " +
                         shape_to_string(a.shape()) + "^T * " +
                         shape_to_string(b.shape()));
  }
  Tensor<T> out({m, n});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = pa[p * m + i];
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  require_matrix(a.shape(), "matmul_nt");
  require_matrix(b.shape(), "matmul_nt");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) {
    throw DimensionError("matmul_nt: inner extents " +
                         shape_to_string(a.shape()) + " * " +
                         shape_to_string(b.shape()) + "^T");
  }
  Tensor<T> out({m, n});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = pb + j * k;
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      po[i * n + j] = acc;
    }
  }
  return out;
}

template <typename T>
MatmulGrads<T> matmul_backward(const Tensor<T>& a, const Tensor<T>& b,
                               const Tensor<T>& dout) {
  return {matmul_nt(dout, b), matmul_tn(a, dout)};
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& m) {
  require_matrix(m.shape(), "transpose");
  const std::size_t r = m.dim(0), c = m.dim(1);
  Tensor<T> out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out(j, i) = m(i, j);
  return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& t, std::size_t axis) {
  const AxisView v = axis_view(t.shape(), axis);
  Tensor<T> out(t.shape());
  const T* in = t.data().data();
  T* po = out.data().data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      T mx = in[base];
      for (std::size_t a = 1; a < v.extent; ++a)
        mx = std::max(mx, in[base + a * v.inner]);
      T total{0};
      for (std::size_t a = 0; a < v.extent; ++a) {
        const T e = std::exp(in[base + a * v.inner] - mx);
        po[base + a * v.inner] = e;
        total += e;
      }
      for (std::size_t a = 0; a < v.extent; ++a) po[base + a * v.inner] /= total;
    }
  }
  return out;
}

template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& y, const Tensor<T>& dy,
                           std::size_t axis) {
  require_same_shape(y.shape(), dy.shape(), "softmax_backward");
  const AxisView v = axis_view(y.shape(), axis);
  Tensor<T> dx(y.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      T inner{0};
      for (std::size_t a = 0; a < v.extent; ++a) {
        const std::size_t idx = base + a * v.inner;
        inner += y[idx] * dy[idx];
      }
      for (std::size_t a = 0; a < v.extent; ++a) {
        const std::size_t idx = base + a * v.inner;
        dx[idx] = y[idx] * (dy[idx] - inner);
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& t, std::size_t axis, T eps) {
  const AxisView v = axis_view(t.shape(), axis);
  Tensor<T> out(t.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      T sq{0};
      for (std::size_t a = 0; a < v.extent; ++a) {
        const T x = t[base + a * v.inner];
        sq += x * x;
      }
      const T denom = std::max(std::sqrt(sq), eps);
      for (std::size_t a = 0; a < v.extent; ++a)
        out[base + a * v.inner] = t[base + a * v.inner] / denom;
    }
  }
  return out;
}

template <typename T>
Tensor<T> l2_normalize_backward(const Tensor<T>& x, const Tensor<T>& dy,
                                std::size_t axis, T eps) {
  require_same_shape(x.shape(), dy.shape(), "l2_normalize_backward");
  const AxisView v = axis_view(x.shape(), axis);
  Tensor<T> dx(x.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.extent * v.inner + i;
      T sq{0};
      for (std::size_t a = 0; a < v.extent; ++a) {
        const T xv = x[base + a * v.inner];
        sq += xv * xv;
      }
      const T norm = std::sqrt(sq);
      if (norm < eps) {
        // Clamped branch: y = x / eps is linear in x.
        for (std::size_t a = 0; a < v.extent; ++a)
          dx[base + a * v.inner] = dy[base + a * v.inner] / eps;
        continue;
      }
      T proj{0};
      for (std::size_t a = 0; a < v.extent; ++a) {
        const std::size_t idx = base + a * v.inner;
        proj += x[idx] * dy[idx];
      }
      proj /= norm;
      for (std::size_t a = 0; a < v.extent; ++a) {
        const std::size_t idx = base + a * v.inner;
        dx[idx] = (dy[idx] - (x[idx] / norm) * proj) / norm;
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& t) {
  Tensor<T> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i)
    out[i] = T{1} / (T{1} + std::exp(-t[i]));
  return out;
}

template <typename T>
Tensor<T> two_sigmoid(const Tensor<T>& t) {
  Tensor<T> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i)
    out[i] = T{2} / (T{1} + std::exp(-t[i]));
  return out;
}

template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  require_same_shape(y.shape(), dy.shape(), "sigmoid_backward");
  Tensor<T> dx(y.shape());
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (T{1} - y[i]);
  return dx;
}

template <typename T>
Tensor<T> two_sigmoid_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  require_same_shape(y.shape(), dy.shape(), "two_sigmoid_backward");
  Tensor<T> dx(y.shape());
  // y = 2s, dy/dx = 2 s (1 - s) = y (1 - y/2)
  for (std::size_t i = 0; i < y.size(); ++i)
    dx[i] = dy[i] * y[i] * (T{1} - y[i] / T{2});
  return dx;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& t) {
  Tensor<T> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i] > T{0} ? t[i] : T{0};
  if (BranchRecorder* rec = BranchRecorder::active()) {
    for (std::size_t i = 0; i < t.size(); ++i) rec->record(t[i] > T{0});
  }
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& dy) {
  require_same_shape(x.shape(), dy.shape(), "relu_backward");
  Tensor<T> dx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
  return dx;
}

namespace {

template <typename T>
void layer_norm_stats(const Tensor<T>& t, T eps, T& mean, T& inv_std) {
  const auto n = static_cast<T>(t.size());
  T s{0};
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i];
  mean = s / n;
  T var{0};
  for (std::size_t i = 0; i < t.size(); ++i) {
    const T d = t[i] - mean;
    var += d * d;
  }
  var /= n;
  inv_std = T{1} / std::sqrt(var + eps);
}

}  // namespace

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& t, const Tensor<T>& gain,
                     const Tensor<T>& shift, T eps) {
  require_same_shape(t.shape(), gain.shape(), "layer_norm gain");
  require_same_shape(t.shape(), shift.shape(), "layer_norm shift");
  T mean, inv_std;
  layer_norm_stats(t, eps, mean, inv_std);
  Tensor<T> out(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i)
    out[i] = (t[i] - mean) * inv_std * gain[i] + shift[i];
  return out;
}

template <typename T>
LayerNormGrads<T> layer_norm_backward(const Tensor<T>& t, const Tensor<T>& gain,
                                      const Tensor<T>& dy, T eps) {
  require_same_shape(t.shape(), dy.shape(), "layer_norm_backward");
  T mean, inv_std;
  layer_norm_stats(t, eps, mean, inv_std);
  const std::size_t n = t.size();
  LayerNormGrads<T> g{Tensor<T>(t.shape()), Tensor<T>(t.shape()),
                      Tensor<T>(t.shape())};
  T mean_dxhat{0}, mean_dxhat_xhat{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T xhat = (t[i] - mean) * inv_std;
    const T dxhat = dy[i] * gain[i];
    g.dgain[i] = dy[i] * xhat;
    g.dshift[i] = dy[i];
    mean_dxhat += dxhat;
    mean_dxhat_xhat += dxhat * xhat;
  }
  mean_dxhat /= static_cast<T>(n);
  mean_dxhat_xhat /= static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T xhat = (t[i] - mean) * inv_std;
    const T dxhat = dy[i] * gain[i];
    g.dx[i] = inv_std * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
  }
  return g;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<T> out(a);
  out += b;
  return out;
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "hadamard");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * factor;
  return out;
}

template <typename T>
T sum(const Tensor<T>& t) {
  T s{0};
  for (std::size_t i = 0; i < t.size(); ++i) s += t[i];
  return s;
}

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "dot");
  T s{0};
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(),
                     [](T v) { return std::isfinite(v); });
}

#define A2FPN_INSTANTIATE_OPS(T)                                                \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> matmul_tn(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);             \
  template MatmulGrads<T> matmul_backward(const Tensor<T>&, const Tensor<T>&,   \
                                          const Tensor<T>&);                    \
  template Tensor<T> transpose(const Tensor<T>&);                               \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                    \
  template Tensor<T> softmax_backward(const Tensor<T>&, const Tensor<T>&,       \
                                      std::size_t);                             \
  template Tensor<T> l2_normalize(const Tensor<T>&, std::size_t, T);            \
  template Tensor<T> l2_normalize_backward(const Tensor<T>&, const Tensor<T>&,  \
                                           std::size_t, T);                     \
  template Tensor<T> sigmoid(const Tensor<T>&);                                 \
  template Tensor<T> two_sigmoid(const Tensor<T>&);                             \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);      \
  template Tensor<T> two_sigmoid_backward(const Tensor<T>&, const Tensor<T>&);  \
  template Tensor<T> relu(const Tensor<T>&);                                    \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&,             \
                                const Tensor<T>&, T);                           \
  template LayerNormGrads<T> layer_norm_backward(                               \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> hadamard(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> scale(const Tensor<T>&, T);                                \
  template T sum(const Tensor<T>&);                                             \
  template T dot(const Tensor<T>&, const Tensor<T>&);                           \
  template double max_abs_diff(const Tensor<T>&, const Tensor<T>&);             \
  template bool all_finite(const Tensor<T>&);

A2FPN_INSTANTIATE_OPS(float)
A2FPN_INSTANTIATE_OPS(double)

#undef A2FPN_INSTANTIATE_OPS

}  // namespace a2fpn
