#pragma once

// Minimal reverse-mode differentiable tensor engine. Provides exactly the
// operators the network and losses need: conv2d, maxpool2d, adaptive pooling,
// nearest upsampling, relu, sigmoid, softmax, linear, concat, slice, add,
// scale, reshape, sum and roi_pool. Templated on the scalar type so the same
// graph code runs in float for training and in double "shadow mode" for
// finite-difference verification.
//
// Layouts: feature maps are (N, C, H, W) row-major, matrices (N, F). A graph
// is confined to one logical execution context during forward/backward;
// distinct graphs (distinct scenes) may run in parallel because parameter
// data is shared read-only while gradients live per-node.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <vector>

#include "stackgrasp/errors.hpp"

namespace stackgrasp {

using Shape = std::vector<int>;

inline size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) n *= static_cast<size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Test hook: returns true when the named backward rule should be corrupted.
// Used by the numeric-check CLI to prove the detector actually detects.
inline bool corrupt_backward_hook(const char* op) {
  static const char* env = std::getenv("STACKGRASP_CORRUPT_BACKWARD");
  return env && std::string(env) == op;
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  std::vector<T> grad;            // sized lazily, zero-filled
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode<T>>> parents;
  std::function<void(TensorNode<T>&)> backward_fn;  // accumulates into parents

  size_t numel() const { return shape_numel(shape); }

  std::vector<T>& ensure_grad() {
    if (grad.size() != numel()) grad.assign(numel(), T(0));
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<T>> n) : n_(std::move(n)) {}

  static Tensor zeros(Shape s, bool requires_grad = false) {
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(s);
    n->data = std::make_shared<std::vector<T>>(n->numel(), T(0));
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor from(std::vector<T> values, Shape s, bool requires_grad = false) {
    if (values.size() != shape_numel(s))
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " != numel of " + shape_str(s));
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = std::move(s);
    n->data = std::make_shared<std::vector<T>>(std::move(values));
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from({v}, {1}, requires_grad);
  }

  bool valid() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  size_t numel() const { return n_->numel(); }
  int dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(n_->shape.size()); }

  T* data() { return n_->data->data(); }
  const T* data() const { return n_->data->data(); }
  T item() const {
    if (numel() != 1) throw NonScalarError("item() on tensor of shape " + shape_str(shape()));
    return (*n_->data)[0];
  }

  std::vector<T>& grad() { return n_->ensure_grad(); }
  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool b) { n_->requires_grad = b; }
  void zero_grad() { n_->grad.assign(n_->numel(), T(0)); }

  std::shared_ptr<TensorNode<T>> node() const { return n_; }

  // Leaf view of the same storage with an independent gradient buffer.
  // Parameter replicas for parallel batch elements come from here.
  Tensor share_data_leaf(bool requires_grad) const {
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = n_->shape;
    n->data = n_->data;
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  Tensor<T> clone_detached() const {
    auto n = std::make_shared<TensorNode<T>>();
    n->shape = n_->shape;
    n->data = std::make_shared<std::vector<T>>(*n_->data);
    n->requires_grad = false;
    return Tensor(n);
  }

 private:
  std::shared_ptr<TensorNode<T>> n_;
};

namespace detail {

template <typename T>
Tensor<T> make_op_node(Shape shape, std::vector<Tensor<T>> parents,
                       std::function<void(TensorNode<T>&)> backward_fn) {
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = std::move(shape);
  n->data = std::make_shared<std::vector<T>>(n->numel(), T(0));
  for (auto& p : parents) {
    n->parents.push_back(p.node());
    if (p.requires_grad()) n->requires_grad = true;
  }
  if (n->requires_grad) n->backward_fn = std::move(backward_fn);
  return Tensor<T>(n);
}

// C[m x n] += A[m x k] * B[k x n], all row-major
template <typename T>
void gemm_nn(int m, int k, int n, const T* a, const T* b, T* c) {
  for (int i = 0; i < m; ++i) {
    const T* ar = a + static_cast<size_t>(i) * k;
    T* cr = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      T av = ar[p];
      if (av == T(0)) continue;
      const T* br = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

// C[m x n] += A[m x k] * B^T where B is [n x k]
template <typename T>
void gemm_nt(int m, int k, int n, const T* a, const T* b, T* c) {
  for (int i = 0; i < m; ++i) {
    const T* ar = a + static_cast<size_t>(i) * k;
    T* cr = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* br = b + static_cast<size_t>(j) * k;
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += ar[p] * br[p];
      cr[j] += acc;
    }
  }
}

// C[m x n] += A^T * B where A is [k x m], B is [k x n]
template <typename T>
void gemm_tn(int m, int k, int n, const T* a, const T* b, T* c) {
  for (int p = 0; p < k; ++p) {
    const T* ar = a + static_cast<size_t>(p) * m;
    const T* br = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      T av = ar[i];
      if (av == T(0)) continue;
      T* cr = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
}

// im2col for one image: x (C,H,W) -> cols (C*kh*kw, oh*ow)
template <typename T>
void im2col(const T* x, int c, int h, int w, int kh, int kw, int stride, int pad,
            int oh, int ow, T* cols) {
  int row = 0;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++row) {
        T* dst = cols + static_cast<size_t>(row) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            dst += ow;
            continue;
          }
          const T* src = x + (static_cast<size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride - pad + kx;
            *dst++ = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// scatter-add transpose of im2col
template <typename T>
void col2im_acc(const T* cols, int c, int h, int w, int kh, int kw, int stride,
                int pad, int oh, int ow, T* dx) {
  int row = 0;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++row) {
        const T* base = cols + static_cast<size_t>(row) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* src = base + static_cast<size_t>(oy) * ow;
          T* dst = dx + (static_cast<size_t>(ci) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// forward ops

// x (N,Ci,H,W), w (Co,Ci,kh,kw), b (Co) or invalid for bias-free
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride = 1, int pad = 0) {
  if (x.ndim() != 4 || w.ndim() != 4)
    throw ShapeError("conv2d expects x (N,C,H,W) and w (Co,Ci,kh,kw)");
  int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != ci)
    throw ShapeError("conv2d channel mismatch: x has " + std::to_string(ci) +
                     ", w expects " + std::to_string(w.dim(1)));
  bool has_bias = b.valid();
  if (has_bias && (b.ndim() != 1 || b.dim(0) != co))
    throw ShapeError("conv2d bias must be (Co)");
  int oh = (h + 2 * pad - kh) / stride + 1;
  int ow = (wd + 2 * pad - kw) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d output would be empty");

  int k = ci * kh * kw;
  auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(n) * k * oh * ow);

  std::vector<Tensor<T>> parents{x, w};
  if (has_bias) parents.push_back(b);

  auto out = detail::make_op_node<T>(
      {n, co, oh, ow}, parents,
      [x, w, b, stride, pad, n, ci, h, wd, co, kh, kw, oh, ow, k, cols,
       has_bias](TensorNode<T>& node) {
        auto xn = x.node();
        auto wn = w.node();
        size_t plane = static_cast<size_t>(oh) * ow;
        for (int i = 0; i < n; ++i) {
          const T* dy = node.grad.data() + static_cast<size_t>(i) * co * plane;
          const T* col = cols->data() + static_cast<size_t>(i) * k * plane;
          if (wn->requires_grad) {
            // dW += dY * cols^T
            detail::gemm_nt(co, static_cast<int>(plane), k, dy, col,
                            wn->ensure_grad().data());
          }
          if (xn->requires_grad) {
            // dcols = W^T * dY
            std::vector<T> dcols(static_cast<size_t>(k) * plane, T(0));
            detail::gemm_tn(k, co, static_cast<int>(plane), wn->data->data(), dy,
                            dcols.data());
            detail::col2im_acc(dcols.data(), ci, h, wd, kh, kw, stride, pad, oh, ow,
                               xn->ensure_grad().data() +
                                   static_cast<size_t>(i) * ci * h * wd);
          }
          if (has_bias && b.node()->requires_grad) {
            T* db = b.node()->ensure_grad().data();
            for (int c = 0; c < co; ++c) {
              const T* row = dy + static_cast<size_t>(c) * plane;
              T acc = T(0);
              for (size_t j = 0; j < plane; ++j) acc += row[j];
              db[c] += acc;
            }
          }
        }
      });

  // forward
  size_t plane = static_cast<size_t>(oh) * ow;
  T* y = out.data();
  for (int i = 0; i < n; ++i) {
    T* col = cols->data() + static_cast<size_t>(i) * k * plane;
    detail::im2col(x.data() + static_cast<size_t>(i) * ci * h * wd, ci, h, wd, kh, kw,
                   stride, pad, oh, ow, col);
    T* yi = y + static_cast<size_t>(i) * co * plane;
    detail::gemm_nn(co, k, static_cast<int>(plane), w.data(), col, yi);
    if (has_bias) {
      for (int c = 0; c < co; ++c) {
        T bias = b.data()[c];
        T* row = yi + static_cast<size_t>(c) * plane;
        for (size_t j = 0; j < plane; ++j) row[j] += bias;
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& x, int k, int stride) {
  if (x.ndim() != 4) throw ShapeError("maxpool2d expects (N,C,H,W)");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  int oh = (h - k) / stride + 1;
  int ow = (w - k) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("maxpool2d output would be empty");
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(n) * c * oh * ow);

  auto out = detail::make_op_node<T>(
      {n, c, oh, ow}, {x}, [x, argmax](TensorNode<T>& node) {
        auto xn = x.node();
        if (!xn->requires_grad) return;
        T* dx = xn->ensure_grad().data();
        const T* dy = node.grad.data();
        for (size_t i = 0; i < argmax->size(); ++i) dx[(*argmax)[i]] += dy[i];
      });

  T* y = out.data();
  const T* xd = x.data();
  size_t o = 0;
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      const T* plane = xd + (static_cast<size_t>(i) * c + ci) * h * w;
      size_t base = (static_cast<size_t>(i) * c + ci) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox, ++o) {
          int y0 = oy * stride, x0 = ox * stride;
          T best = plane[static_cast<size_t>(y0) * w + x0];
          int bi = y0 * w + x0;
          for (int dy = 0; dy < k; ++dy)
            for (int dx = 0; dx < k; ++dx) {
              int idx = (y0 + dy) * w + (x0 + dx);
              if (plane[idx] > best) {
                best = plane[idx];
                bi = idx;
              }
            }
          y[o] = best;
          (*argmax)[o] = static_cast<int>(base) + bi;
        }
      }
    }
  }
  return out;
}

// Adaptive max pooling to an arbitrary output grid; window edges follow the
// floor/ceil fractional partition. Ties resolve to the first element scanned.
template <typename T>
Tensor<T> adaptive_maxpool2d(const Tensor<T>& x, int oh, int ow) {
  if (x.ndim() != 4) throw ShapeError("adaptive_maxpool2d expects (N,C,H,W)");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (oh <= 0 || ow <= 0) throw ShapeError("adaptive_maxpool2d needs positive output dims");
  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(n) * c * oh * ow);

  auto out = detail::make_op_node<T>(
      {n, c, oh, ow}, {x}, [x, argmax](TensorNode<T>& node) {
        auto xn = x.node();
        if (!xn->requires_grad) return;
        T* dx = xn->ensure_grad().data();
        const T* dy = node.grad.data();
        for (size_t i = 0; i < argmax->size(); ++i) dx[(*argmax)[i]] += dy[i];
      });

  T* y = out.data();
  const T* xd = x.data();
  size_t o = 0;
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < c; ++ci) {
      const T* plane = xd + (static_cast<size_t>(i) * c + ci) * h * w;
      size_t base = (static_cast<size_t>(i) * c + ci) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        int y0 = (oy * h) / oh;
        int y1 = ((oy + 1) * h + oh - 1) / oh;
        for (int ox = 0; ox < ow; ++ox, ++o) {
          int x0 = (ox * w) / ow;
          int x1 = ((ox + 1) * w + ow - 1) / ow;
          T best = plane[static_cast<size_t>(y0) * w + x0];
          int bi = y0 * w + x0;
          for (int yy = y0; yy < y1; ++yy)
            for (int xx = x0; xx < x1; ++xx) {
              int idx = yy * w + xx;
              if (plane[idx] > best) {
                best = plane[idx];
                bi = idx;
              }
            }
          y[o] = best;
          (*argmax)[o] = static_cast<int>(base) + bi;
        }
      }
    }
  return out;
}

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& x, int oh, int ow) {
  if (x.ndim() != 4) throw ShapeError("upsample_nearest expects (N,C,H,W)");
  int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (oh <= 0 || ow <= 0) throw ShapeError("upsample_nearest needs positive output dims");

  auto out = detail::make_op_node<T>(
      {n, c, oh, ow}, {x}, [x, n, c, h, w, oh, ow](TensorNode<T>& node) {
        auto xn = x.node();
        if (!xn->requires_grad) return;
        T* dx = xn->ensure_grad().data();
        const T* dy = node.grad.data();
        size_t o = 0;
        for (int i = 0; i < n; ++i)
          for (int ci = 0; ci < c; ++ci) {
            size_t base = (static_cast<size_t>(i) * c + ci) * h * w;
            for (int oy = 0; oy < oh; ++oy) {
              int sy = (oy * h) / oh;
              for (int ox = 0; ox < ow; ++ox, ++o) {
                int sx = (ox * w) / ow;
                dx[base + static_cast<size_t>(sy) * w + sx] += dy[o];
              }
            }
          }
      });

  T* y = out.data();
  const T* xd = x.data();
  size_t o = 0;
  for (int i = 0; i < n; ++i)
    for (int ci = 0; ci < c; ++ci) {
      const T* plane = xd + (static_cast<size_t>(i) * c + ci) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        int sy = (oy * h) / oh;
        for (int ox = 0; ox < ow; ++ox, ++o) {
          int sx = (ox * w) / ow;
          y[o] = plane[static_cast<size_t>(sy) * w + sx];
        }
      }
    }
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  auto out = detail::make_op_node<T>(x.shape(), {x}, [x](TensorNode<T>& node) {
    auto xn = x.node();
    if (!xn->requires_grad) return;
    T* dx = xn->ensure_grad().data();
    const T* dy = node.grad.data();
    const T* xd = xn->data->data();
    T flip = corrupt_backward_hook("relu") ? T(-1) : T(1);
    for (size_t i = 0; i < node.numel(); ++i)
      if (xd[i] > T(0)) dx[i] += flip * dy[i];
  });
  T* y = out.data();
  const T* xd = x.data();
  for (size_t i = 0; i < x.numel(); ++i) y[i] = xd[i] > T(0) ? xd[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  auto out = detail::make_op_node<T>(x.shape(), {x}, [x](TensorNode<T>& node) {
    auto xn = x.node();
    if (!xn->requires_grad) return;
    T* dx = xn->ensure_grad().data();
    const T* dy = node.grad.data();
    const T* s = node.data->data();
    for (size_t i = 0; i < node.numel(); ++i) dx[i] += dy[i] * s[i] * (T(1) - s[i]);
  });
  T* y = out.data();
  const T* xd = x.data();
  for (size_t i = 0; i < x.numel(); ++i) y[i] = T(1) / (T(1) + std::exp(-xd[i]));
  return out;
}

// Row-wise softmax over the last axis of a 2D tensor.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  if (x.ndim() != 2) throw ShapeError("softmax expects (N,C)");
  int n = x.dim(0), c = x.dim(1);
  auto out = detail::make_op_node<T>(x.shape(), {x}, [x, n, c](TensorNode<T>& node) {
    auto xn = x.node();
    if (!xn->requires_grad) return;
    T* dx = xn->ensure_grad().data();
    const T* dy = node.grad.data();
    const T* p = node.data->data();
    for (int i = 0; i < n; ++i) {
      const T* pr = p + static_cast<size_t>(i) * c;
      const T* gr = dy + static_cast<size_t>(i) * c;
      T dot = T(0);
      for (int j = 0; j < c; ++j) dot += pr[j] * gr[j];
      T* dr = dx + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) dr[j] += pr[j] * (gr[j] - dot);
    }
  });
  T* y = out.data();
  const T* xd = x.data();
  for (int i = 0; i < n; ++i) {
    const T* row = xd + static_cast<size_t>(i) * c;
    T mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    T* yr = y + static_cast<size_t>(i) * c;
    for (int j = 0; j < c; ++j) {
      yr[j] = std::exp(row[j] - mx);
      sum += yr[j];
    }
    for (int j = 0; j < c; ++j) yr[j] /= sum;
  }
  return out;
}

// x (N,Fi), w (Fo,Fi), b (Fo) or invalid
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.ndim() != 2 || w.ndim() != 2)
    throw ShapeError("linear expects x (N,Fi) and w (Fo,Fi)");
  int n = x.dim(0), fi = x.dim(1), fo = w.dim(0);
  if (w.dim(1) != fi)
    throw ShapeError("linear feature mismatch: x has " + std::to_string(fi) +
                     ", w expects " + std::to_string(w.dim(1)));
  bool has_bias = b.valid();
  if (has_bias && (b.ndim() != 1 || b.dim(0) != fo)) throw ShapeError("linear bias must be (Fo)");

  std::vector<Tensor<T>> parents{x, w};
  if (has_bias) parents.push_back(b);
  auto out = detail::make_op_node<T>(
      {n, fo}, parents, [x, w, b, n, fi, fo, has_bias](TensorNode<T>& node) {
        auto xn = x.node();
        auto wn = w.node();
        const T* dy = node.grad.data();
        if (xn->requires_grad)
          detail::gemm_nn(n, fo, fi, dy, wn->data->data(), xn->ensure_grad().data());
        if (wn->requires_grad)
          detail::gemm_tn(fo, n, fi, dy, xn->data->data(), wn->ensure_grad().data());
        if (has_bias && b.node()->requires_grad) {
          T* db = b.node()->ensure_grad().data();
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < fo; ++j) db[j] += dy[static_cast<size_t>(i) * fo + j];
        }
      });

  detail::gemm_nt(n, fi, fo, x.data(), w.data(), out.data());
  if (has_bias) {
    T* y = out.data();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < fo; ++j) y[static_cast<size_t>(i) * fo + j] += b.data()[j];
  }
  return out;
}

// Concatenation along an axis; all other dims must agree.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int axis) {
  if (xs.empty()) throw ShapeError("concat of zero tensors");
  Shape s = xs[0].shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) throw ShapeError("concat axis out of range");
  int total = 0;
  for (const auto& x : xs) {
    if (x.ndim() != static_cast<int>(s.size())) throw ShapeError("concat rank mismatch");
    for (int d = 0; d < x.ndim(); ++d)
      if (d != axis && x.dim(d) != s[static_cast<size_t>(d)])
        throw ShapeError("concat dim mismatch at axis " + std::to_string(d));
    total += x.dim(axis);
  }
  Shape os = s;
  os[static_cast<size_t>(axis)] = total;

  size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<size_t>(s[static_cast<size_t>(d)]);
  for (size_t d = static_cast<size_t>(axis) + 1; d < s.size(); ++d) inner *= static_cast<size_t>(s[d]);

  auto out = detail::make_op_node<T>(os, xs, [xs, axis, outer, inner, total](TensorNode<T>& node) {
    const T* dy = node.grad.data();
    size_t off = 0;
    for (const auto& x : xs) {
      auto xn = x.node();
      size_t span = static_cast<size_t>(xn->shape[static_cast<size_t>(axis)]) * inner;
      if (xn->requires_grad) {
        T* dx = xn->ensure_grad().data();
        for (size_t o = 0; o < outer; ++o) {
          const T* src = dy + (o * static_cast<size_t>(total)) * inner + off;
          T* dst = dx + o * span;
          for (size_t i = 0; i < span; ++i) dst[i] += src[i];
        }
      }
      off += span;
    }
  });

  T* y = out.data();
  size_t off = 0;
  for (const auto& x : xs) {
    size_t span = static_cast<size_t>(x.dim(axis)) * inner;
    const T* src = x.data();
    for (size_t o = 0; o < outer; ++o)
      std::memcpy(y + (o * static_cast<size_t>(total)) * inner + off, src + o * span,
                  span * sizeof(T));
    off += span;
  }
  return out;
}

// Contiguous slice along an axis, the inverse building block of concat.
template <typename T>
Tensor<T> slice_axis(const Tensor<T>& x, int axis, int from, int to) {
  Shape s = x.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) throw ShapeError("slice axis out of range");
  int len = s[static_cast<size_t>(axis)];
  if (from < 0 || to > len || from >= to) throw ShapeError("slice range invalid");
  Shape os = s;
  os[static_cast<size_t>(axis)] = to - from;

  size_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= static_cast<size_t>(s[static_cast<size_t>(d)]);
  for (size_t d = static_cast<size_t>(axis) + 1; d < s.size(); ++d) inner *= static_cast<size_t>(s[d]);
  size_t span = static_cast<size_t>(to - from) * inner;
  size_t stride = static_cast<size_t>(len) * inner;
  size_t off = static_cast<size_t>(from) * inner;

  auto out = detail::make_op_node<T>(os, {x}, [x, outer, span, stride, off](TensorNode<T>& node) {
    auto xn = x.node();
    if (!xn->requires_grad) return;
    T* dx = xn->ensure_grad().data();
    const T* dy = node.grad.data();
    for (size_t o = 0; o < outer; ++o) {
      T* dst = dx + o * stride + off;
      const T* src = dy + o * span;
      for (size_t i = 0; i < span; ++i) dst[i] += src[i];
    }
  });
  T* y = out.data();
  const T* xd = x.data();
  for (size_t o = 0; o < outer; ++o)
    std::memcpy(y + o * span, xd + o * stride + off, span * sizeof(T));
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  auto out = detail::make_op_node<T>(a.shape(), {a, b}, [a, b](TensorNode<T>& node) {
    const T* dy = node.grad.data();
    for (const auto& p : {a, b}) {
      auto pn = p.node();
      if (!pn->requires_grad) continue;
      T* dp = pn->ensure_grad().data();
      for (size_t i = 0; i < node.numel(); ++i) dp[i] += dy[i];
    }
  });
  T* y = out.data();
  const T* ad = a.data();
  const T* bd = b.data();
  for (size_t i = 0; i < a.numel(); ++i) y[i] = ad[i] + bd[i];
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  auto out = detail::make_op_node<T>(x.shape(), {x}, [x, c](TensorNode<T>& node) {
    auto xn = x.node();
    if (!xn->requires_grad) return;
    T* dx = xn->ensure_grad().data();
    const T* dy = node.grad.data();
    for (size_t i = 0; i < node.numel(); ++i) dx[i] += c * dy[i];
  });
  T* y = out.data();
  const T* xd = x.data();
  for (size_t i = 0; i < x.numel(); ++i) y[i] = c * xd[i];
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape s) {
  if (shape_numel(s) != x.numel())
    throw ShapeError("reshape numel mismatch: " + shape_str(x.shape()) + " -> " + shape_str(s));
  auto out = detail::make_op_node<T>(std::move(s), {x}, [x](TensorNode<T>& node) {
    auto xn = x.node();
    if (!xn->requires_grad) return;
    T* dx = xn->ensure_grad().data();
    const T* dy = node.grad.data();
    for (size_t i = 0; i < node.numel(); ++i) dx[i] += dy[i];
  });
  std::memcpy(out.data(), x.data(), x.numel() * sizeof(T));
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  auto out = detail::make_op_node<T>({1}, {x}, [x](TensorNode<T>& node) {
    auto xn = x.node();
    if (!xn->requires_grad) return;
    T* dx = xn->ensure_grad().data();
    T g = node.grad[0];
    for (size_t i = 0; i < xn->numel(); ++i) dx[i] += g;
  });
  T acc = T(0);
  const T* xd = x.data();
  for (size_t i = 0; i < x.numel(); ++i) acc += xd[i];
  out.data()[0] = acc;
  return out;
}

// (1,C,H,W) -> (H*W, C): one row per spatial cell. Pure index remap.
template <typename T>
Tensor<T> chw_to_rows(const Tensor<T>& x) {
  if (x.ndim() != 4 || x.dim(0) != 1) throw ShapeError("chw_to_rows expects (1,C,H,W)");
  int c = x.dim(1), h = x.dim(2), w = x.dim(3);
  size_t hw = static_cast<size_t>(h) * w;
  auto out = detail::make_op_node<T>({h * w, c}, {x}, [x, c, hw](TensorNode<T>& node) {
    auto xn = x.node();
    if (!xn->requires_grad) return;
    T* dx = xn->ensure_grad().data();
    const T* dy = node.grad.data();
    for (size_t p = 0; p < hw; ++p)
      for (int ci = 0; ci < c; ++ci)
        dx[static_cast<size_t>(ci) * hw + p] += dy[p * c + ci];
  });
  T* y = out.data();
  const T* xd = x.data();
  for (size_t p = 0; p < hw; ++p)
    for (int ci = 0; ci < c; ++ci) y[p * c + ci] = xd[static_cast<size_t>(ci) * hw + p];
  return out;
}

// Row subset of a (N,C) matrix; backward scatter-adds into the picked rows.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::vector<int> idx) {
  if (x.ndim() != 2) throw ShapeError("gather_rows expects (N,C)");
  int n = x.dim(0), c = x.dim(1);
  for (int i : idx)
    if (i < 0 || i >= n) throw ShapeError("gather_rows index " + std::to_string(i) + " out of range");
  auto indices = std::make_shared<std::vector<int>>(std::move(idx));
  int k = static_cast<int>(indices->size());
  auto out = detail::make_op_node<T>({k, c}, {x}, [x, indices, c](TensorNode<T>& node) {
    auto xn = x.node();
    if (!xn->requires_grad) return;
    T* dx = xn->ensure_grad().data();
    const T* dy = node.grad.data();
    for (size_t r = 0; r < indices->size(); ++r) {
      T* dst = dx + static_cast<size_t>((*indices)[r]) * c;
      const T* src = dy + r * c;
      for (int j = 0; j < c; ++j) dst[j] += src[j];
    }
  });
  T* y = out.data();
  const T* xd = x.data();
  for (size_t r = 0; r < indices->size(); ++r)
    std::memcpy(y + r * c, xd + static_cast<size_t>((*indices)[r]) * c, static_cast<size_t>(c) * sizeof(T));
  return out;
}

// Box for ROI pooling, in feature-map coordinates (not image pixels).
struct RoiBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
};

// Adaptive max pooling of the clipped box region onto an out_hw grid of
// subwindows. The box is clipped to the feature extent; a clipped box with
// zero area raises EmptyRoiError.
template <typename T>
Tensor<T> roi_pool(const Tensor<T>& x, const RoiBox& box, int out_h, int out_w) {
  if (x.ndim() != 4 || x.dim(0) != 1) throw ShapeError("roi_pool expects (1,C,H,W)");
  int c = x.dim(1), h = x.dim(2), w = x.dim(3);
  double bx1 = std::clamp(box.x1, 0.0, static_cast<double>(w));
  double by1 = std::clamp(box.y1, 0.0, static_cast<double>(h));
  double bx2 = std::clamp(box.x2, 0.0, static_cast<double>(w));
  double by2 = std::clamp(box.y2, 0.0, static_cast<double>(h));
  if (bx2 - bx1 <= 0 || by2 - by1 <= 0)
    throw EmptyRoiError("roi_pool: clipped box has zero area");

  auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(c) * out_h * out_w);
  auto out = detail::make_op_node<T>(
      {1, c, out_h, out_w}, {x}, [x, argmax](TensorNode<T>& node) {
        auto xn = x.node();
        if (!xn->requires_grad) return;
        T* dx = xn->ensure_grad().data();
        const T* dy = node.grad.data();
        for (size_t i = 0; i < argmax->size(); ++i) dx[(*argmax)[i]] += dy[i];
      });

  T* y = out.data();
  const T* xd = x.data();
  size_t o = 0;
  for (int ci = 0; ci < c; ++ci) {
    const T* plane = xd + static_cast<size_t>(ci) * h * w;
    size_t base = static_cast<size_t>(ci) * h * w;
    for (int oy = 0; oy < out_h; ++oy) {
      int y0 = static_cast<int>(std::floor(by1 + (by2 - by1) * oy / out_h));
      int y1i = static_cast<int>(std::ceil(by1 + (by2 - by1) * (oy + 1) / out_h));
      y0 = std::clamp(y0, 0, h - 1);
      y1i = std::clamp(std::max(y1i, y0 + 1), 1, h);
      for (int ox = 0; ox < out_w; ++ox, ++o) {
        int x0 = static_cast<int>(std::floor(bx1 + (bx2 - bx1) * ox / out_w));
        int x1i = static_cast<int>(std::ceil(bx1 + (bx2 - bx1) * (ox + 1) / out_w));
        x0 = std::clamp(x0, 0, w - 1);
        x1i = std::clamp(std::max(x1i, x0 + 1), 1, w);
        T best = plane[static_cast<size_t>(y0) * w + x0];
        int bi = y0 * w + x0;
        for (int yy = y0; yy < y1i; ++yy)
          for (int xx = x0; xx < x1i; ++xx) {
            int idx = yy * w + xx;
            if (plane[idx] > best) {
              best = plane[idx];
              bi = idx;
            }
          }
        y[o] = best;
        (*argmax)[o] = static_cast<int>(base) + bi;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// backward driver

// Fills grads of every reachable tensor with d(loss)/d(tensor). Gradients
// accumulate additively across fan-out; calling twice doubles them, so zero
// grads between passes.
template <typename T>
void backward(Tensor<T>& loss) {
  if (loss.numel() != 1)
    throw NonScalarError("backward needs a scalar loss, got " + shape_str(loss.shape()));
  // topological order by DFS over parents
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> seen;
  std::vector<std::pair<TensorNode<T>*, size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    TensorNode<T>* node = stack.back().first;
    size_t idx = stack.back().second;
    if (idx < node->parents.size()) {
      stack.back().second++;
      TensorNode<T>* p = node->parents[idx].get();
      if (!seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad()[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* n = *it;
    if (n->backward_fn && n->requires_grad) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

}  // namespace stackgrasp
