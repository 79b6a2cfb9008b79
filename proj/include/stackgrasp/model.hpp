#pragma once

// The network: shared multi-scale backbone, MSFA cross-scale aggregation,
// dense detector head, anchor-based grasp head, pairwise relation head with
// intersection features, plus target assignment, decode paths, and the
// composite loss.
//
// Everything is templated on the scalar type: float for training, double for
// finite-difference shadow checks.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "stackgrasp/config.hpp"
#include "stackgrasp/data.hpp"
#include "stackgrasp/geometry.hpp"
#include "stackgrasp/image.hpp"
#include "stackgrasp/losses.hpp"
#include "stackgrasp/params.hpp"
#include "stackgrasp/rng.hpp"
#include "stackgrasp/scene.hpp"
#include "stackgrasp/tensor.hpp"

namespace stackgrasp {

// ---------------------------------------------------------------------------
// angle bins: n equal bins partitioning (-90, 90]

inline int assign_angle_bin(double theta_deg, int n_bins) {
  double width = 180.0 / n_bins;
  int bin = static_cast<int>(std::floor((theta_deg + 90.0) / width));
  return std::clamp(bin, 0, n_bins - 1);
}

inline double angle_bin_center(int bin, int n_bins) {
  return -90.0 + (bin + 0.5) * 180.0 / n_bins;
}

// per-anchor channel block: [tx, ty, tw, th, conf, angle bins..., classes...]
inline int grasp_block_size(const ModelConfig& cfg) {
  return 5 + cfg.n_angle_bins + cfg.n_classes;
}

template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  Tensor<T> x = Tensor<T>::zeros({1, 3, img.h, img.w});
  T* d = x.data();
  size_t plane = static_cast<size_t>(img.h) * img.w;
  for (int y = 0; y < img.h; ++y)
    for (int xx = 0; xx < img.w; ++xx) {
      const uint8_t* p = img.px(xx, y);
      size_t o = static_cast<size_t>(y) * img.w + xx;
      d[o] = p[0] / T(255);
      d[plane + o] = p[1] / T(255);
      d[2 * plane + o] = p[2] / T(255);
    }
  return x;
}

// ---------------------------------------------------------------------------
// parameters

namespace detail {

// Each tap pools from the deepest previous map whose stride divides its own
// (the stride-1 stem always qualifies), then runs a 3x3 conv.
struct TapPlan {
  int src;   // -1 = stem, else tap index
  int pool;  // pooling factor from the source map
};

inline std::vector<TapPlan> plan_taps(const ModelConfig& cfg) {
  std::vector<TapPlan> plans;
  for (size_t i = 0; i < cfg.strides.size(); ++i) {
    TapPlan p{-1, cfg.strides[i]};
    for (size_t j = 0; j < i; ++j)
      if (cfg.strides[i] % cfg.strides[j] == 0) {
        p.src = static_cast<int>(j);
        p.pool = cfg.strides[i] / cfg.strides[j];
      }
    plans.push_back(p);
  }
  return plans;
}

template <typename T>
Tensor<T> he_conv(Rng& rng, int co, int ci, int k) {
  Tensor<T> w = Tensor<T>::zeros({co, ci, k, k});
  double std = std::sqrt(2.0 / (ci * k * k));
  for (size_t i = 0; i < w.numel(); ++i) w.data()[i] = static_cast<T>(rng.normal(0.0, std));
  return w;
}

template <typename T>
Tensor<T> he_linear(Rng& rng, int fo, int fi) {
  Tensor<T> w = Tensor<T>::zeros({fo, fi});
  double std = std::sqrt(2.0 / fi);
  for (size_t i = 0; i < w.numel(); ++i) w.data()[i] = static_cast<T>(rng.normal(0.0, std));
  return w;
}

}  // namespace detail

inline constexpr int kRoiSize = 7;
inline constexpr int kRelConvChannels = 32;
inline constexpr int kRelHidden = 64;

template <typename T>
ParamStore<T> build_params(const ModelConfig& cfg, Rng& rng) {
  cfg.check();
  ParamStore<T> ps;
  auto plans = detail::plan_taps(cfg);
  int ch0 = cfg.channels[0];
  ps.add("backbone/stem/w", detail::he_conv<T>(rng, ch0, 3, 3));
  ps.add("backbone/stem/b", Tensor<T>::zeros({ch0}));
  for (size_t i = 0; i < plans.size(); ++i) {
    int src_ch = plans[i].src < 0 ? ch0 : cfg.channels[static_cast<size_t>(plans[i].src)];
    int out_ch = cfg.channels[i];
    std::string base = "backbone/tap" + std::to_string(i);
    ps.add(base + "/w", detail::he_conv<T>(rng, out_ch, src_ch, 3));
    ps.add(base + "/b", Tensor<T>::zeros({out_ch}));
  }
  int F = cfg.fusion_channels;
  if (cfg.msfa) {
    for (int i = 0; i < 3; ++i)
      ps.add("msfa/lateral" + std::to_string(i) + "/w",
             detail::he_conv<T>(rng, F, cfg.channels[static_cast<size_t>(i)], 1));
    for (int i = 0; i < 3; ++i)
      ps.add("msfa/fuse" + std::to_string(i) + "/w", detail::he_conv<T>(rng, F, F, 1));
  }
  int head_ch = cfg.msfa ? F : cfg.channels[static_cast<size_t>(cfg.detect_scale())];
  int C = cfg.n_classes;
  ps.add("det/head/w", detail::he_conv<T>(rng, C + 5, head_ch, 1));
  {
    Tensor<T> b = Tensor<T>::zeros({C + 5});
    b.data()[0] = T(4);  // background prior: an untrained net detects nothing
    ps.add("det/head/b", std::move(b));
  }
  int A = static_cast<int>(cfg.anchors.size());
  int block = grasp_block_size(cfg);
  ps.add("grasp/head/w", detail::he_conv<T>(rng, A * block, head_ch, 1));
  {
    Tensor<T> b = Tensor<T>::zeros({A * block});
    for (int a = 0; a < A; ++a) b.data()[a * block + 4] = T(-2);  // conf starts low
    ps.add("grasp/head/b", std::move(b));
  }
  int rel_ch = cfg.msfa ? F : cfg.channels[static_cast<size_t>(cfg.relation_scale())];
  ps.add("rel/conv/w", detail::he_conv<T>(rng, kRelConvChannels, 4 * rel_ch, 3));
  ps.add("rel/conv/b", Tensor<T>::zeros({kRelConvChannels}));
  ps.add("rel/fc1/w", detail::he_linear<T>(rng, kRelHidden, kRelConvChannels * kRoiSize * kRoiSize));
  ps.add("rel/fc1/b", Tensor<T>::zeros({kRelHidden}));
  ps.add("rel/fc2/w", detail::he_linear<T>(rng, 3, kRelHidden));
  ps.add("rel/fc2/b", Tensor<T>::zeros({3}));
  return ps;
}

// ---------------------------------------------------------------------------
// forward passes

template <typename T>
std::vector<Tensor<T>> backbone_forward(ParamStore<T>& ps, const ModelConfig& cfg,
                                        const Tensor<T>& x) {
  if (x.ndim() != 4 || x.dim(1) != 3 || x.dim(2) != cfg.input_hw || x.dim(3) != cfg.input_hw)
    throw ShapeError("backbone_forward expects (N,3," + std::to_string(cfg.input_hw) + "," +
                     std::to_string(cfg.input_hw) + "), got " + shape_str(x.shape()));
  auto plans = detail::plan_taps(cfg);
  Tensor<T> stem = relu(conv2d(x, ps.get("backbone/stem/w"), ps.get("backbone/stem/b"), 1, 1));
  std::vector<Tensor<T>> maps;
  for (size_t i = 0; i < plans.size(); ++i) {
    Tensor<T> src = plans[i].src < 0 ? stem : maps[static_cast<size_t>(plans[i].src)];
    if (plans[i].pool > 1) src = maxpool2d(src, plans[i].pool, plans[i].pool);
    std::string base = "backbone/tap" + std::to_string(i);
    maps.push_back(relu(conv2d(src, ps.get(base + "/w"), ps.get(base + "/b"), 1, 1)));
  }
  return maps;
}

// Lateral 1x1 projections, then msfa_rounds x (top-down add + bottom-up add),
// then per-scale 1x1 fusion convs. All convs bias-free so zero in = zero out.
template <typename T>
std::vector<Tensor<T>> msfa_aggregate(ParamStore<T>& ps, const ModelConfig& cfg,
                                      const std::vector<Tensor<T>>& maps) {
  if (maps.size() != 3) throw ShapeError("msfa_aggregate expects 3 maps");
  std::vector<Tensor<T>> p;
  for (int i = 0; i < 3; ++i)
    p.push_back(conv2d(maps[static_cast<size_t>(i)],
                       ps.get("msfa/lateral" + std::to_string(i) + "/w"), Tensor<T>()));
  for (int round = 0; round < std::max(1, cfg.msfa_rounds); ++round) {
    for (int i = 1; i >= 0; --i)  // top-down: coarse into fine
      p[static_cast<size_t>(i)] =
          add(p[static_cast<size_t>(i)],
              upsample_nearest(p[static_cast<size_t>(i) + 1], p[static_cast<size_t>(i)].dim(2),
                               p[static_cast<size_t>(i)].dim(3)));
    for (int i = 1; i <= 2; ++i)  // bottom-up: fine into coarse
      p[static_cast<size_t>(i)] =
          add(p[static_cast<size_t>(i)],
              adaptive_maxpool2d(p[static_cast<size_t>(i) - 1], p[static_cast<size_t>(i)].dim(2),
                                 p[static_cast<size_t>(i)].dim(3)));
  }
  std::vector<Tensor<T>> fused;
  for (int i = 0; i < 3; ++i)
    fused.push_back(
        conv2d(p[static_cast<size_t>(i)], ps.get("msfa/fuse" + std::to_string(i) + "/w"), Tensor<T>()));
  return fused;
}

template <typename T>
struct Features {
  std::vector<Tensor<T>> raw;
  std::vector<Tensor<T>> fused;  // empty when msfa disabled
  Tensor<T> head;                // detector + grasp head input (middle scale)
  Tensor<T> rel;                 // relation crop source
};

template <typename T>
Features<T> forward_features(ParamStore<T>& ps, const ModelConfig& cfg, const Tensor<T>& x) {
  Features<T> f;
  f.raw = backbone_forward(ps, cfg, x);
  if (cfg.msfa) {
    f.fused = msfa_aggregate(ps, cfg, f.raw);
    f.head = f.fused[static_cast<size_t>(cfg.detect_scale())];
    f.rel = f.fused[static_cast<size_t>(cfg.relation_scale())];
  } else {
    f.head = f.raw[static_cast<size_t>(cfg.detect_scale())];
    f.rel = f.raw[static_cast<size_t>(cfg.relation_scale())];
  }
  return f;
}

template <typename T>
Tensor<T> detector_head(ParamStore<T>& ps, const Features<T>& f) {
  return conv2d(f.head, ps.get("det/head/w"), ps.get("det/head/b"));
}

template <typename T>
Tensor<T> grasp_head(ParamStore<T>& ps, const Features<T>& f) {
  return conv2d(f.head, ps.get("grasp/head/w"), ps.get("grasp/head/b"));
}

inline int relation_stride(const ModelConfig& cfg) {
  return cfg.strides[static_cast<size_t>(cfg.relation_scale())];
}

// Ordered-pair relation probabilities. With short-circuit enabled, a pair
// whose boxes do not intersect returns the exact constant (0, 0, 1) without
// touching the network.
template <typename T>
Tensor<T> relation_forward(ParamStore<T>& ps, const ModelConfig& cfg, const Tensor<T>& rel_map,
                           const ObjectBox& a, const ObjectBox& b,
                           bool* short_circuited = nullptr) {
  if (short_circuited) *short_circuited = false;
  auto inter = box_intersection(a, b);
  if (cfg.short_circuit && !inter) {
    if (short_circuited) *short_circuited = true;
    return Tensor<T>::from({T(0), T(0), T(1)}, {1, 3});
  }
  double s = relation_stride(cfg);
  auto roi = [&](const ObjectBox& box) {
    return roi_pool(rel_map, RoiBox{box.x1 / s, box.y1 / s, box.x2 / s, box.y2 / s}, kRoiSize,
                    kRoiSize);
  };
  Tensor<T> fa = roi(a);
  Tensor<T> fb = roi(b);
  Tensor<T> fu = roi(box_union(a, b));
  Tensor<T> fi = inter ? roi(*inter)
                       : Tensor<T>::zeros({1, rel_map.dim(1), kRoiSize, kRoiSize});
  Tensor<T> cat = concat<T>({fa, fb, fu, fi}, 1);
  Tensor<T> conv = relu(conv2d(cat, ps.get("rel/conv/w"), ps.get("rel/conv/b"), 1, 1));
  Tensor<T> flat = reshape(conv, {1, kRelConvChannels * kRoiSize * kRoiSize});
  Tensor<T> h = relu(linear(flat, ps.get("rel/fc1/w"), ps.get("rel/fc1/b")));
  Tensor<T> logits = linear(h, ps.get("rel/fc2/w"), ps.get("rel/fc2/b"));
  return softmax(logits);
}

// ---------------------------------------------------------------------------
// decode

template <typename T>
std::vector<ObjectBox> detect_objects(const Tensor<T>& det_out, const ModelConfig& cfg) {
  int C = cfg.n_classes;
  int stride = cfg.strides[static_cast<size_t>(cfg.detect_scale())];
  int h = det_out.dim(2), w = det_out.dim(3);
  size_t hw = static_cast<size_t>(h) * w;
  const T* d = det_out.data();
  std::vector<ObjectBox> cands;
  for (int cy = 0; cy < h; ++cy) {
    for (int cx = 0; cx < w; ++cx) {
      size_t o = static_cast<size_t>(cy) * w + cx;
      // softmax over C+1 class logits
      double mx = -1e30;
      for (int c = 0; c <= C; ++c) mx = std::max(mx, static_cast<double>(d[c * hw + o]));
      double z = 0;
      int best = 0;
      double best_e = 0;
      for (int c = 0; c <= C; ++c) {
        double e = std::exp(static_cast<double>(d[c * hw + o]) - mx);
        z += e;
        if (e > best_e) {
          best_e = e;
          best = c;
        }
      }
      double p = best_e / z;
      if (best == 0 || p < cfg.score_thresh) continue;
      auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
      double tx = d[(C + 1) * hw + o], ty = d[(C + 2) * hw + o];
      double tw = d[(C + 3) * hw + o], th = d[(C + 4) * hw + o];
      double bcx = (cx + sig(tx)) * stride;
      double bcy = (cy + sig(ty)) * stride;
      double bw = cfg.det_anchor.w * std::exp(std::min(8.0, tw));
      double bh = cfg.det_anchor.h * std::exp(std::min(8.0, th));
      ObjectBox box;
      box.cls = best;
      box.score = p;
      box.x1 = std::clamp(bcx - bw / 2, 0.0, static_cast<double>(cfg.input_hw));
      box.y1 = std::clamp(bcy - bh / 2, 0.0, static_cast<double>(cfg.input_hw));
      box.x2 = std::clamp(bcx + bw / 2, 0.0, static_cast<double>(cfg.input_hw));
      box.y2 = std::clamp(bcy + bh / 2, 0.0, static_cast<double>(cfg.input_hw));
      if (box.x2 - box.x1 <= 0 || box.y2 - box.y1 <= 0) continue;
      cands.push_back(box);
    }
  }
  // class-wise greedy NMS, deterministic order
  std::stable_sort(cands.begin(), cands.end(),
                   [](const ObjectBox& a, const ObjectBox& b) { return a.score > b.score; });
  std::vector<ObjectBox> kept;
  for (const auto& c : cands) {
    bool dead = false;
    for (const auto& k : kept)
      if (k.cls == c.cls && aabb_iou(k, c) > cfg.nms_iou) {
        dead = true;
        break;
      }
    if (!dead) kept.push_back(c);
  }
  for (size_t i = 0; i < kept.size(); ++i) kept[i].id = static_cast<int>(i);
  return kept;
}

template <typename T>
std::vector<GraspRect> decode_grasps(const Tensor<T>& grasp_out, const ModelConfig& cfg,
                                     double conf_thresh) {
  int A = static_cast<int>(cfg.anchors.size());
  int block = grasp_block_size(cfg);
  int stride = cfg.strides[static_cast<size_t>(cfg.grasp_scale())];
  int h = grasp_out.dim(2), w = grasp_out.dim(3);
  size_t hw = static_cast<size_t>(h) * w;
  const T* d = grasp_out.data();
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<GraspRect> out;
  for (int a = 0; a < A; ++a) {
    int base = a * block;
    for (int cy = 0; cy < h; ++cy) {
      for (int cx = 0; cx < w; ++cx) {
        size_t o = static_cast<size_t>(cy) * w + cx;
        auto at = [&](int ch) { return static_cast<double>(d[(base + ch) * hw + o]); };
        double conf = sig(at(4));
        if (conf < conf_thresh) continue;
        int best_bin = 0;
        double best_v = at(5);
        for (int k = 1; k < cfg.n_angle_bins; ++k)
          if (at(5 + k) > best_v) {
            best_v = at(5 + k);
            best_bin = k;
          }
        int best_cls = 0;
        double best_c = at(5 + cfg.n_angle_bins);
        for (int k = 1; k < cfg.n_classes; ++k)
          if (at(5 + cfg.n_angle_bins + k) > best_c) {
            best_c = at(5 + cfg.n_angle_bins + k);
            best_cls = k;
          }
        double gcx = (cx + sig(at(0))) * stride;
        double gcy = (cy + sig(at(1))) * stride;
        double gw = cfg.anchors[static_cast<size_t>(a)].w * std::exp(std::min(8.0, at(2)));
        double gh = cfg.anchors[static_cast<size_t>(a)].h * std::exp(std::min(8.0, at(3)));
        out.push_back(make_grasp(gcx, gcy, gw, gh, angle_bin_center(best_bin, cfg.n_angle_bins),
                                 best_cls + 1, -1, conf));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// target assignment

struct DetTargets {
  std::vector<int> pos_cells;     // row indices into the (HW, C+5) layout
  std::vector<double> box_gt;     // per positive: fx, fy, ln(w/aw), ln(h/ah)
  std::vector<double> cls_gt;     // (HW, C+1) rows; positives scaled by pos_weight
};

inline DetTargets assign_detect_targets(const SceneAnnotation& scene, const ModelConfig& cfg) {
  int C = cfg.n_classes;
  int stride = cfg.strides[static_cast<size_t>(cfg.detect_scale())];
  int hw_dim = cfg.input_hw / stride;
  size_t hw = static_cast<size_t>(hw_dim) * hw_dim;
  DetTargets t;
  t.cls_gt.assign(hw * (C + 1), 0.0);
  for (size_t i = 0; i < hw; ++i) t.cls_gt[i * (C + 1)] = 1.0;  // background everywhere
  std::vector<char> taken(hw, 0);
  for (const auto& obj : scene.objects) {
    if (obj.cls < 1 || obj.cls > C) continue;
    double cx = obj.cx(), cy = obj.cy();
    int col = std::clamp(static_cast<int>(cx / stride), 0, hw_dim - 1);
    int row = std::clamp(static_cast<int>(cy / stride), 0, hw_dim - 1);
    size_t cell = static_cast<size_t>(row) * hw_dim + col;
    if (taken[cell]) continue;  // first object keeps a contested cell
    taken[cell] = 1;
    t.pos_cells.push_back(static_cast<int>(cell));
    for (int c = 0; c <= C; ++c) t.cls_gt[cell * (C + 1) + c] = 0.0;
    t.cls_gt[cell * (C + 1) + obj.cls] = cfg.pos_weight;
    t.box_gt.push_back(cx / stride - col);
    t.box_gt.push_back(cy / stride - row);
    t.box_gt.push_back(std::log(std::max(1e-6, obj.width() / cfg.det_anchor.w)));
    t.box_gt.push_back(std::log(std::max(1e-6, obj.height() / cfg.det_anchor.h)));
  }
  return t;
}

struct GraspTargets {
  std::vector<double> gt;       // target in probability space, grasp-head layout
  std::vector<double> weight;   // 0 = unsupervised entry
  int n_pos = 0;
};

inline double anchor_iou(double w, double h, const Anchor& a) {
  double inter = std::min(w, a.w) * std::min(h, a.h);
  return inter / (w * h + a.w * a.h - inter);
}

inline GraspTargets assign_grasp_targets(const SceneAnnotation& scene, const ModelConfig& cfg) {
  int A = static_cast<int>(cfg.anchors.size());
  int block = grasp_block_size(cfg);
  int stride = cfg.strides[static_cast<size_t>(cfg.grasp_scale())];
  int hw_dim = cfg.input_hw / stride;
  size_t hw = static_cast<size_t>(hw_dim) * hw_dim;
  GraspTargets t;
  t.gt.assign(static_cast<size_t>(A) * block * hw, 0.0);
  t.weight.assign(t.gt.size(), 0.0);
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  // every confidence entry starts as a soft negative
  for (int a = 0; a < A; ++a)
    for (size_t o = 0; o < hw; ++o)
      t.weight[(static_cast<size_t>(a) * block + 4) * hw + o] = cfg.noobj_weight;
  for (const auto& g : scene.grasps) {
    if (g.cls < 1 || g.cls > cfg.n_classes) continue;
    int col = std::clamp(static_cast<int>(g.cx / stride), 0, hw_dim - 1);
    int row = std::clamp(static_cast<int>(g.cy / stride), 0, hw_dim - 1);
    size_t o = static_cast<size_t>(row) * hw_dim + col;
    int best_a = 0;
    double best = -1;
    for (int a = 0; a < A; ++a) {
      double iou = anchor_iou(g.w, g.h, cfg.anchors[static_cast<size_t>(a)]);
      if (iou > best) {
        best = iou;
        best_a = a;
      }
    }
    size_t base = static_cast<size_t>(best_a) * block;
    auto idx = [&](int ch) { return (base + static_cast<size_t>(ch)) * hw + o; };
    if (t.weight[idx(4)] == 1.0 && t.gt[idx(4)] == 1.0) continue;  // cell+anchor already owned
    ++t.n_pos;
    t.gt[idx(4)] = 1.0;
    t.weight[idx(4)] = 1.0;
    t.gt[idx(0)] = g.cx / stride - col;
    t.gt[idx(1)] = g.cy / stride - row;
    t.gt[idx(2)] = sig(std::log(std::max(1e-6, g.w / cfg.anchors[static_cast<size_t>(best_a)].w)));
    t.gt[idx(3)] = sig(std::log(std::max(1e-6, g.h / cfg.anchors[static_cast<size_t>(best_a)].h)));
    for (int k = 0; k < 4; ++k) t.weight[idx(k)] = 1.0;
    int bin = assign_angle_bin(g.theta_deg, cfg.n_angle_bins);
    for (int k = 0; k < cfg.n_angle_bins; ++k) {
      t.gt[idx(5 + k)] = k == bin ? 1.0 : 0.0;
      t.weight[idx(5 + k)] = 1.0;
    }
    for (int k = 0; k < cfg.n_classes; ++k) {
      t.gt[idx(5 + cfg.n_angle_bins + k)] = k == g.cls - 1 ? 1.0 : 0.0;
      t.weight[idx(5 + cfg.n_angle_bins + k)] = 1.0;
    }
  }
  return t;
}

// Ordered-pair labels from the canonical gt relation list.
struct RelPair {
  int a_idx, b_idx;  // indices into scene.objects
  RelationKind label;
};

inline std::vector<RelPair> relation_pairs(const SceneAnnotation& scene) {
  std::map<int, int> idx_of;
  for (size_t i = 0; i < scene.objects.size(); ++i)
    idx_of[scene.objects[i].id] = static_cast<int>(i);
  std::vector<RelPair> pairs;
  for (const auto& r : scene.relations) {
    int ia = idx_of.at(r.from_id), ib = idx_of.at(r.to_id);
    pairs.push_back({ia, ib, r.kind});
    pairs.push_back({ib, ia, relation_inverse(r.kind)});
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// losses

template <typename T>
struct SceneLosses {
  Tensor<T> l_o, l_g, l_r, total;
};

template <typename T>
Tensor<T> scalar_zero() {
  return Tensor<T>::from({T(0)}, {1});
}

// L_O: smooth L1 on positive-cell box params + class cross-entropy over all
// cells (positive rows weighted).
template <typename T>
Tensor<T> detection_loss(ParamStore<T>& ps, const ModelConfig& cfg, const Features<T>& f,
                         const DetTargets& t) {
  int C = cfg.n_classes;
  Tensor<T> det = detector_head(ps, f);
  Tensor<T> rows = chw_to_rows(det);                 // (HW, C+5)
  Tensor<T> cls_rows = slice_axis(rows, 1, 0, C + 1);
  std::vector<T> cls_gt_t(t.cls_gt.begin(), t.cls_gt.end());
  Tensor<T> cls_gt = Tensor<T>::from(cls_gt_t, {rows.dim(0), C + 1});
  Tensor<T> ce = cross_entropy(cls_gt, cls_rows, true);
  if (t.pos_cells.empty()) return ce;
  Tensor<T> pos = gather_rows(rows, t.pos_cells);    // (P, C+5)
  Tensor<T> txy = sigmoid(slice_axis(pos, 1, C + 1, C + 3));
  Tensor<T> twh = slice_axis(pos, 1, C + 3, C + 5);
  Tensor<T> pred = concat<T>({txy, twh}, 1);         // (P,4)
  std::vector<T> box_gt_t(t.box_gt.begin(), t.box_gt.end());
  Tensor<T> box_gt = Tensor<T>::from(box_gt_t, {static_cast<int>(t.pos_cells.size()), 4});
  return add(scale(smooth_l1(box_gt, pred), T(cfg.box_weight)), ce);
}

// L_G: one weighted binary cross-entropy over the sigmoid of the whole grasp
// head map; targets/weights from assign_grasp_targets.
template <typename T>
Tensor<T> grasp_loss(ParamStore<T>& ps, const ModelConfig& cfg, const Features<T>& f,
                     const GraspTargets& t) {
  Tensor<T> g = grasp_head(ps, f);
  std::vector<T> gt_t(t.gt.begin(), t.gt.end());
  std::vector<T> w_t(t.weight.begin(), t.weight.end());
  Tensor<T> gt = Tensor<T>::from(gt_t, g.shape());
  Tensor<T> w = Tensor<T>::from(w_t, g.shape());
  return bce(gt, sigmoid(g), cfg.grasp_loss_mean, w);
}

// L_R: mean NLL over ordered gt pairs; short-circuited pairs contribute
// nothing (their loss is exactly zero).
template <typename T>
Tensor<T> relation_loss(ParamStore<T>& ps, const ModelConfig& cfg, const Features<T>& f,
                        const SceneAnnotation& scene) {
  auto pairs = relation_pairs(scene);
  if (pairs.empty()) return scalar_zero<T>();
  Tensor<T> acc;
  for (const auto& pr : pairs) {
    bool sc = false;
    Tensor<T> probs = relation_forward(ps, cfg, f.rel, scene.objects[static_cast<size_t>(pr.a_idx)],
                                       scene.objects[static_cast<size_t>(pr.b_idx)], &sc);
    if (sc) continue;  // exact (0,0,1); NoRel gt costs 0 and carries no grad
    Tensor<T> nll = nll_relation(probs, static_cast<int>(pr.label));
    acc = acc.valid() ? add(acc, nll) : nll;
  }
  if (!acc.valid()) return scalar_zero<T>();
  return scale(acc, T(1) / T(pairs.size()));
}

template <typename T>
SceneLosses<T> total_loss(ParamStore<T>& ps, const ModelConfig& cfg, const Tensor<T>& x,
                          const SceneAnnotation& scene, bool with_detect = true,
                          bool with_grasp_rel = true) {
  Features<T> f = forward_features(ps, cfg, x);
  SceneLosses<T> out;
  out.l_o = with_detect ? detection_loss(ps, cfg, f, assign_detect_targets(scene, cfg))
                        : scalar_zero<T>();
  out.l_g = with_grasp_rel ? grasp_loss(ps, cfg, f, assign_grasp_targets(scene, cfg))
                           : scalar_zero<T>();
  out.l_r = with_grasp_rel ? relation_loss(ps, cfg, f, scene) : scalar_zero<T>();
  out.total = add(out.l_o, add(scale(out.l_g, T(cfg.alpha)), scale(out.l_r, T(cfg.beta))));
  return out;
}

}  // namespace stackgrasp
