#pragma once

// Loss operators. Each builds a scalar graph node with a hand-written
// backward rule. Probabilities are clamped at 1e-7 inside the logs, and the
// backward rules respect the clamp (zero slope in the clamped region) so
// analytic gradients agree with finite differences everywhere.

#include <cmath>

#include "stackgrasp/tensor.hpp"

namespace stackgrasp {

template <typename T>
constexpr T kProbEps = T(1e-7);

// mean over n of: 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise, d = gt - pre.
// Continuous with continuous first derivative across |d| = 1.
template <typename T>
Tensor<T> smooth_l1(const Tensor<T>& gt, const Tensor<T>& pre) {
  if (gt.shape() != pre.shape())
    throw ShapeError("smooth_l1 shape mismatch " + shape_str(gt.shape()) + " vs " +
                     shape_str(pre.shape()));
  size_t n = gt.numel();
  auto out = detail::make_op_node<T>({1}, {gt, pre}, [gt, pre, n](TensorNode<T>& node) {
    T g = node.grad[0] / static_cast<T>(n);
    const T* gd = gt.data();
    const T* pd = pre.data();
    auto gn = gt.node();
    auto pn = pre.node();
    T* dg = gn->requires_grad ? gn->ensure_grad().data() : nullptr;
    T* dp = pn->requires_grad ? pn->ensure_grad().data() : nullptr;
    for (size_t i = 0; i < n; ++i) {
      T d = gd[i] - pd[i];
      T slope = std::abs(d) < T(1) ? d : (d > T(0) ? T(1) : T(-1));
      if (dg) dg[i] += g * slope;
      if (dp) dp[i] -= g * slope;
    }
  });
  T acc = T(0);
  const T* gd = gt.data();
  const T* pd = pre.data();
  for (size_t i = 0; i < n; ++i) {
    T d = std::abs(gd[i] - pd[i]);
    acc += d < T(1) ? T(0.5) * d * d : d - T(0.5);
  }
  out.data()[0] = acc / static_cast<T>(n);
  return out;
}

// H(gt, softmax(logits)) = -sum gt * log(clamp(p)), summed over rows
// (mean over rows with mean=true). Backward differentiates the softmax and
// the clamped log exactly rather than using the p - gt shortcut, so the
// clamp region has zero slope.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& gt_onehot, const Tensor<T>& logits,
                        bool mean = false) {
  if (gt_onehot.shape() != logits.shape())
    throw ShapeError("cross_entropy shape mismatch " + shape_str(gt_onehot.shape()) +
                     " vs " + shape_str(logits.shape()));
  if (logits.ndim() != 2) throw ShapeError("cross_entropy expects (N,C)");
  int n = logits.dim(0), c = logits.dim(1);
  T norm = mean ? T(1) / static_cast<T>(n) : T(1);

  // cache softmax rows for forward and backward
  auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(n) * c);
  {
    const T* xd = logits.data();
    T* p = probs->data();
    for (int i = 0; i < n; ++i) {
      const T* row = xd + static_cast<size_t>(i) * c;
      T mx = row[0];
      for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
      T sum = T(0);
      T* pr = p + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) {
        pr[j] = std::exp(row[j] - mx);
        sum += pr[j];
      }
      for (int j = 0; j < c; ++j) pr[j] /= sum;
    }
  }

  auto out = detail::make_op_node<T>(
      {1}, {gt_onehot, logits}, [gt_onehot, logits, probs, n, c, norm](TensorNode<T>& node) {
        T g = node.grad[0] * norm;
        auto gn = gt_onehot.node();
        auto ln = logits.node();
        const T* gd = gt_onehot.data();
        const T* p = probs->data();
        for (int i = 0; i < n; ++i) {
          const T* pr = p + static_cast<size_t>(i) * c;
          const T* gr = gd + static_cast<size_t>(i) * c;
          if (ln->requires_grad) {
            // dL/dp_j then softmax jacobian
            T* dl = ln->ensure_grad().data() + static_cast<size_t>(i) * c;
            T dot = T(0);
            for (int j = 0; j < c; ++j) {
              T dLdp = pr[j] > kProbEps<T> ? -gr[j] / pr[j] : T(0);
              dot += dLdp * pr[j];
            }
            for (int j = 0; j < c; ++j) {
              T dLdp = pr[j] > kProbEps<T> ? -gr[j] / pr[j] : T(0);
              dl[j] += g * pr[j] * (dLdp - dot);
            }
          }
          if (gn->requires_grad) {
            T* dg = gn->ensure_grad().data() + static_cast<size_t>(i) * c;
            for (int j = 0; j < c; ++j)
              dg[j] -= g * std::log(std::max(pr[j], kProbEps<T>));
          }
        }
      });

  T acc = T(0);
  const T* gd = gt_onehot.data();
  const T* p = probs->data();
  for (size_t i = 0; i < static_cast<size_t>(n) * c; ++i)
    acc -= gd[i] * std::log(std::max(p[i], kProbEps<T>));
  out.data()[0] = acc * norm;
  return out;
}

// Binary cross-entropy over probabilities, summed by default (mean=true
// divides by the element count). Optional per-element weights scale each
// term; the weight tensor is treated as a constant.
template <typename T>
Tensor<T> bce(const Tensor<T>& gt, const Tensor<T>& pre_prob, bool mean = false,
              const Tensor<T>& weights = Tensor<T>()) {
  if (gt.shape() != pre_prob.shape())
    throw ShapeError("bce shape mismatch " + shape_str(gt.shape()) + " vs " +
                     shape_str(pre_prob.shape()));
  bool weighted = weights.valid();
  if (weighted && weights.shape() != gt.shape())
    throw ShapeError("bce weights shape mismatch");
  size_t n = gt.numel();
  T norm = mean ? T(1) / static_cast<T>(n) : T(1);

  auto out = detail::make_op_node<T>(
      {1}, {gt, pre_prob}, [gt, pre_prob, weights, weighted, n, norm](TensorNode<T>& node) {
        T g = node.grad[0] * norm;
        auto gn = gt.node();
        auto pn = pre_prob.node();
        const T* gd = gt.data();
        const T* pd = pre_prob.data();
        const T* wd = weighted ? weights.data() : nullptr;
        T* dg = gn->requires_grad ? gn->ensure_grad().data() : nullptr;
        T* dp = pn->requires_grad ? pn->ensure_grad().data() : nullptr;
        for (size_t i = 0; i < n; ++i) {
          T w = wd ? wd[i] : T(1);
          T p = pd[i];
          T q = T(1) - p;
          if (dp) {
            T slope = T(0);
            if (p > kProbEps<T>) slope -= gd[i] / p;
            if (q > kProbEps<T>) slope += (T(1) - gd[i]) / q;
            dp[i] += g * w * slope;
          }
          if (dg) {
            dg[i] += g * w *
                     (-std::log(std::max(p, kProbEps<T>)) +
                      std::log(std::max(q, kProbEps<T>)));
          }
        }
      });

  T acc = T(0);
  const T* gd = gt.data();
  const T* pd = pre_prob.data();
  const T* wd = weighted ? weights.data() : nullptr;
  for (size_t i = 0; i < n; ++i) {
    T w = wd ? wd[i] : T(1);
    acc -= w * (gd[i] * std::log(std::max(pd[i], kProbEps<T>)) +
                (T(1) - gd[i]) * std::log(std::max(T(1) - pd[i], kProbEps<T>)));
  }
  out.data()[0] = acc * norm;
  return out;
}

// Negative log of the ground-truth class probability for one pair.
// probs: (3,) or (1,3) softmax output; label in [0, len).
template <typename T>
Tensor<T> nll_relation(const Tensor<T>& probs, int label) {
  size_t len = probs.numel();
  if (probs.ndim() > 2 || (probs.ndim() == 2 && probs.dim(0) != 1))
    throw ShapeError("nll_relation expects (C,) or (1,C) probabilities");
  if (label < 0 || static_cast<size_t>(label) >= len)
    throw ShapeError("nll_relation label " + std::to_string(label) + " out of range");

  auto out = detail::make_op_node<T>({1}, {probs}, [probs, label](TensorNode<T>& node) {
    auto pn = probs.node();
    if (!pn->requires_grad) return;
    T p = probs.data()[label];
    if (p > kProbEps<T>)
      pn->ensure_grad()[static_cast<size_t>(label)] -= node.grad[0] / p;
  });
  out.data()[0] = -std::log(std::max(probs.data()[label], kProbEps<T>));
  return out;
}

}  // namespace stackgrasp
