#pragma once

// Whole-scene inference: detect objects, decode and attach grasps, classify
// every pairwise relation from both directions, and derive the clearing
// order. All outputs live in the network input frame (input_hw x input_hw);
// images of other sizes are resized on the way in.

#include <array>
#include <utility>
#include <vector>

#include "stackgrasp/config.hpp"
#include "stackgrasp/image.hpp"
#include "stackgrasp/metrics.hpp"
#include "stackgrasp/model.hpp"
#include "stackgrasp/planner.hpp"

namespace stackgrasp {

struct InferResult {
  ScenePrediction pred;
  std::vector<Relation> relations;          // canonical (i < j), box indices
  std::vector<double> relation_conf;
  RelationGraph graph;
  std::vector<int> clearing_order;          // box indices, base first
  std::vector<std::pair<int, int>> broken;  // edges removed to clear cycles
};

// Smallest same-class detected box containing the grasp center; -1 if none.
inline int grasp_owner_box(const GraspRect& g, const std::vector<ObjectBox>& boxes) {
  int best = -1;
  double best_area = 0;
  for (size_t i = 0; i < boxes.size(); ++i) {
    const ObjectBox& b = boxes[i];
    if (b.cls != g.cls) continue;
    if (g.cx < b.x1 || g.cx > b.x2 || g.cy < b.y1 || g.cy > b.y2) continue;
    if (best < 0 || b.area() < best_area) {
      best = static_cast<int>(i);
      best_area = b.area();
    }
  }
  return best;
}

// break_cycles=false lets CycleError escape when the predicted graph loops.
template <typename T>
InferResult infer_scene(ParamStore<T>& ps, const ModelConfig& cfg, const Image& img,
                        bool break_cycles = false) {
  Image in = (img.w == cfg.input_hw && img.h == cfg.input_hw)
                 ? img
                 : resize_nearest(img, cfg.input_hw, cfg.input_hw);
  Tensor<T> x = image_to_tensor<T>(in);
  Features<T> f = forward_features(ps, cfg, x);

  InferResult r;
  r.pred.boxes = detect_objects(detector_head(ps, f), cfg);

  auto raw_grasps = decode_grasps(grasp_head(ps, f), cfg, cfg.grasp_conf_thresh);
  for (auto& g : raw_grasps) {
    int owner = grasp_owner_box(g, r.pred.boxes);
    if (owner < 0) continue;  // a grasp must sit on a detected object
    g.owner = owner;
    r.pred.grasps.push_back(g);
  }

  for (size_t i = 0; i < r.pred.boxes.size(); ++i) {
    for (size_t j = i + 1; j < r.pred.boxes.size(); ++j) {
      PairPrediction pp;
      pp.id_i = static_cast<int>(i);
      pp.id_j = static_cast<int>(j);
      Tensor<T> pij = relation_forward(ps, cfg, f.rel, r.pred.boxes[i], r.pred.boxes[j]);
      Tensor<T> pji = relation_forward(ps, cfg, f.rel, r.pred.boxes[j], r.pred.boxes[i]);
      for (int k = 0; k < 3; ++k) {
        pp.probs_ij[static_cast<size_t>(k)] = pij.data()[k];
        pp.probs_ji[static_cast<size_t>(k)] = pji.data()[k];
      }
      auto [rel, conf] = symmetrize_pair_scored(pp);
      r.pred.pair_kinds[{static_cast<int>(i), static_cast<int>(j)}] = rel.kind;
      r.relations.push_back(rel);
      r.relation_conf.push_back(conf);
    }
  }

  r.graph = build_graph(r.pred.boxes, r.relations, r.relation_conf);
  if (break_cycles) r.broken = break_cycles_weakest_edge(r.graph);
  r.clearing_order = full_clearing_order(r.graph);
  return r;
}

// Ordered-pair relation accuracy over ground-truth boxes: the fraction of
// directed gt pairs whose argmax matches the label. Short-circuited pairs
// count too; their prediction is the NoRel constant.
template <typename T>
double relation_accuracy(ParamStore<T>& ps, const ModelConfig& cfg, const Image& img,
                         const SceneAnnotation& scene, int* correct_out = nullptr,
                         int* total_out = nullptr) {
  Image in = img;
  SceneAnnotation s = scene;
  if (img.w != cfg.input_hw || img.h != cfg.input_hw) prepare_eval(s, in, cfg.input_hw);
  Tensor<T> x = image_to_tensor<T>(in);
  Features<T> f = forward_features(ps, cfg, x);
  auto pairs = relation_pairs(s);
  int correct = 0;
  for (const auto& pr : pairs) {
    Tensor<T> p = relation_forward(ps, cfg, f.rel, s.objects[static_cast<size_t>(pr.a_idx)],
                                   s.objects[static_cast<size_t>(pr.b_idx)]);
    int arg = 0;
    for (int k = 1; k < 3; ++k)
      if (p.data()[k] > p.data()[arg]) arg = k;
    if (arg == static_cast<int>(pr.label)) ++correct;
  }
  if (correct_out) *correct_out += correct;
  if (total_out) *total_out += static_cast<int>(pairs.size());
  return pairs.empty() ? 1.0 : static_cast<double>(correct) / static_cast<double>(pairs.size());
}

}  // namespace stackgrasp
