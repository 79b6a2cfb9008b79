#pragma once

// Evaluation: rectangle metric for grasps, VOC-style mAP for detection, and
// the relation metrics OR (pair recall), OP (macro precision over the three
// relation kinds) and IA (whole-scene accuracy with per-object-count
// breakdown).

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stackgrasp/geometry.hpp"
#include "stackgrasp/scene.hpp"

namespace stackgrasp {

// A scene's predicted outputs. `pair_kinds` is keyed by canonical box-index
// pairs (i < j) and the stored kind reads "boxes[i] <kind> boxes[j]"; grasp
// owners index into `boxes`.
struct ScenePrediction {
  std::vector<ObjectBox> boxes;
  std::map<std::pair<int, int>, RelationKind> pair_kinds;
  std::vector<GraspRect> grasps;
};

struct EvalReport {
  double map = 0.0;
  double or_recall = 0.0;
  double op_precision = 0.0;
  double ia_accuracy = 0.0;
  double grasp_accuracy = 0.0;
  std::map<int, double> per_class_ap;
  std::map<int, double> per_count_ia;
};

inline bool grasp_match(const GraspRect& pred, const std::vector<GraspRect>& gts) {
  for (const auto& gt : gts) {
    if (pred.cls != gt.cls) continue;
    if (jaccard_rotated(pred, gt) <= 0.25) continue;  // strictly greater required
    if (grasp_angle_diff(pred.theta_deg, gt.theta_deg) > 30.0) continue;
    return true;
  }
  return false;
}

// Greedy matching by descending prediction score (ties: lower index first).
// Each prediction takes the highest-IoU unmatched ground-truth box of the
// same class with IoU >= iou_thresh. Returns, per prediction (input order),
// the matched gt index or -1.
inline std::vector<int> match_detections(const std::vector<ObjectBox>& preds,
                                         const std::vector<ObjectBox>& gts,
                                         double iou_thresh) {
  std::vector<int> order(preds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return preds[a].score > preds[b].score; });
  std::vector<int> result(preds.size(), -1);
  std::vector<char> taken(gts.size(), 0);
  for (int pi : order) {
    int best = -1;
    double best_iou = 0.0;
    for (size_t gi = 0; gi < gts.size(); ++gi) {
      if (taken[gi] || gts[gi].cls != preds[pi].cls) continue;
      double iou = aabb_iou(preds[pi], gts[gi]);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(gi);
      }
    }
    if (best >= 0 && best_iou >= iou_thresh) {
      result[pi] = best;
      taken[best] = 1;
    }
  }
  return result;
}

namespace detail {

// All-points interpolated AP from per-detection (score, tp) pairs already
// sorted by descending score, against n_gt positives.
inline double ap_from_flags(const std::vector<char>& tp, int n_gt) {
  if (n_gt == 0) return 0.0;
  std::vector<double> prec, rec;
  int cum_tp = 0, cum_fp = 0;
  for (char f : tp) {
    if (f) ++cum_tp; else ++cum_fp;
    prec.push_back(static_cast<double>(cum_tp) / (cum_tp + cum_fp));
    rec.push_back(static_cast<double>(cum_tp) / n_gt);
  }
  // precision envelope (running max from the right), then sum recall steps
  for (int i = static_cast<int>(prec.size()) - 2; i >= 0; --i)
    prec[static_cast<size_t>(i)] = std::max(prec[static_cast<size_t>(i)], prec[static_cast<size_t>(i) + 1]);
  double ap = 0.0, prev_r = 0.0;
  for (size_t i = 0; i < prec.size(); ++i) {
    if (rec[i] > prev_r) {
      ap += (rec[i] - prev_r) * prec[i];
      prev_r = rec[i];
    }
  }
  return ap;
}

struct SceneMatch {
  std::vector<int> pred_to_gt;   // per pred box: gt index or -1
  std::map<int, int> id_to_pred; // gt object id -> matched pred index
};

inline SceneMatch match_scene(const ScenePrediction& pred, const SceneAnnotation& gt,
                              double iou_thresh = 0.5) {
  SceneMatch m;
  m.pred_to_gt = match_detections(pred.boxes, gt.objects, iou_thresh);
  for (size_t pi = 0; pi < m.pred_to_gt.size(); ++pi) {
    int gi = m.pred_to_gt[pi];
    if (gi >= 0) m.id_to_pred[gt.objects[static_cast<size_t>(gi)].id] = static_cast<int>(pi);
  }
  return m;
}

// Predicted kind for the gt pair (a_id -> b_id), re-expressed in that
// direction; false if the pair is missing or either endpoint is unmatched.
inline bool predicted_kind_for(const ScenePrediction& pred, const SceneMatch& m,
                               int a_id, int b_id, RelationKind& out) {
  auto ia = m.id_to_pred.find(a_id);
  auto ib = m.id_to_pred.find(b_id);
  if (ia == m.id_to_pred.end() || ib == m.id_to_pred.end()) return false;
  int pi = ia->second, pj = ib->second;
  auto it = pred.pair_kinds.find({std::min(pi, pj), std::max(pi, pj)});
  if (it == pred.pair_kinds.end()) return false;
  out = pi < pj ? it->second : relation_inverse(it->second);
  return true;
}

}  // namespace detail

inline std::pair<double, std::map<int, double>> detection_map(
    const std::vector<ScenePrediction>& preds, const std::vector<SceneAnnotation>& gts,
    double iou_thresh = 0.5) {
  struct Det {
    double score;
    int scene, idx, cls;
  };
  std::vector<Det> dets;
  std::map<int, int> gt_count;
  for (size_t s = 0; s < gts.size(); ++s) {
    for (const auto& o : gts[s].objects) ++gt_count[o.cls];
    for (size_t i = 0; i < preds[s].boxes.size(); ++i)
      dets.push_back({preds[s].boxes[i].score, static_cast<int>(s), static_cast<int>(i),
                      preds[s].boxes[i].cls});
  }
  std::map<int, double> per_class;
  for (const auto& [cls, n_gt] : gt_count) {
    std::vector<Det> cdets;
    for (const auto& d : dets)
      if (d.cls == cls) cdets.push_back(d);
    std::stable_sort(cdets.begin(), cdets.end(), [](const Det& a, const Det& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.scene != b.scene) return a.scene < b.scene;
      return a.idx < b.idx;
    });
    std::map<std::pair<int, int>, char> taken;  // (scene, gt index)
    std::vector<char> tp;
    for (const auto& d : cdets) {
      const auto& scene_gts = gts[static_cast<size_t>(d.scene)].objects;
      int best = -1;
      double best_iou = 0.0;
      for (size_t gi = 0; gi < scene_gts.size(); ++gi) {
        if (scene_gts[gi].cls != cls || taken.count({d.scene, static_cast<int>(gi)})) continue;
        double iou = aabb_iou(preds[static_cast<size_t>(d.scene)].boxes[static_cast<size_t>(d.idx)],
                              scene_gts[gi]);
        if (iou > best_iou) {
          best_iou = iou;
          best = static_cast<int>(gi);
        }
      }
      if (best >= 0 && best_iou >= iou_thresh) {
        taken[{d.scene, best}] = 1;
        tp.push_back(1);
      } else {
        tp.push_back(0);
      }
    }
    per_class[cls] = detail::ap_from_flags(tp, n_gt);
  }
  double sum = 0.0;
  for (const auto& [cls, ap] : per_class) sum += ap;
  double map = per_class.empty() ? 0.0 : sum / per_class.size();
  return {map, per_class};
}

inline double relation_or(const std::vector<ScenePrediction>& preds,
                          const std::vector<SceneAnnotation>& gts) {
  long total = 0, correct = 0;
  for (size_t s = 0; s < gts.size(); ++s) {
    auto m = detail::match_scene(preds[s], gts[s]);
    for (const auto& r : gts[s].relations) {
      ++total;
      RelationKind got;
      if (detail::predicted_kind_for(preds[s], m, r.from_id, r.to_id, got) && got == r.kind)
        ++correct;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(correct) / total;
}

inline double relation_op(const std::vector<ScenePrediction>& preds,
                          const std::vector<SceneAnnotation>& gts) {
  // Per-kind tallies: predictions bucketed by kind re-expressed in the
  // matched gt pair's canonical direction (stored direction when unmatched,
  // i.e. a guaranteed false positive).
  long pred_total[3] = {0, 0, 0};
  long pred_correct[3] = {0, 0, 0};
  long gt_required[3] = {0, 0, 0};
  for (size_t s = 0; s < gts.size(); ++s) {
    auto m = detail::match_scene(preds[s], gts[s]);
    for (const auto& r : gts[s].relations) ++gt_required[static_cast<int>(r.kind)];
    std::map<std::pair<int, int>, RelationKind> gt_pairs;
    for (const auto& r : gts[s].relations) gt_pairs[{r.from_id, r.to_id}] = r.kind;
    // reverse map: pred index -> gt object id
    std::map<int, int> pred_to_id;
    for (const auto& [id, pi] : m.id_to_pred) pred_to_id[pi] = id;
    for (const auto& [key, kind] : preds[s].pair_kinds) {
      auto ai = pred_to_id.find(key.first);
      auto bi = pred_to_id.find(key.second);
      if (ai == pred_to_id.end() || bi == pred_to_id.end()) {
        ++pred_total[static_cast<int>(kind)];
        continue;
      }
      int a_id = ai->second, b_id = bi->second;  // kind reads "a <kind> b"
      RelationKind in_gt_dir = a_id < b_id ? kind : relation_inverse(kind);
      std::pair<int, int> gt_key{std::min(a_id, b_id), std::max(a_id, b_id)};
      ++pred_total[static_cast<int>(in_gt_dir)];
      auto it = gt_pairs.find(gt_key);
      if (it != gt_pairs.end() && it->second == in_gt_dir)
        ++pred_correct[static_cast<int>(in_gt_dir)];
    }
  }
  double sum = 0.0;
  for (int k = 0; k < 3; ++k) {
    double p;
    if (pred_total[k] > 0)
      p = static_cast<double>(pred_correct[k]) / pred_total[k];
    else
      p = gt_required[k] == 0 ? 1.0 : 0.0;
    sum += p;
  }
  return sum / 3.0;
}

inline std::pair<double, std::map<int, double>> relation_ia(
    const std::vector<ScenePrediction>& preds, const std::vector<SceneAnnotation>& gts) {
  long correct = 0;
  std::map<int, std::pair<long, long>> buckets;  // n_objects -> (correct, total)
  for (size_t s = 0; s < gts.size(); ++s) {
    auto m = detail::match_scene(preds[s], gts[s]);
    bool ok = true;
    for (const auto& o : gts[s].objects)
      if (!m.id_to_pred.count(o.id)) ok = false;
    if (ok) {
      for (const auto& r : gts[s].relations) {
        RelationKind got;
        if (!detail::predicted_kind_for(preds[s], m, r.from_id, r.to_id, got) || got != r.kind) {
          ok = false;
          break;
        }
      }
    }
    int n = static_cast<int>(gts[s].objects.size());
    auto& b = buckets[n];
    ++b.second;
    if (ok) {
      ++b.first;
      ++correct;
    }
  }
  std::map<int, double> per_count;
  for (const auto& [n, b] : buckets)
    per_count[n] = static_cast<double>(b.first) / b.second;
  double acc = gts.empty() ? 1.0 : static_cast<double>(correct) / gts.size();
  return {acc, per_count};
}

// Fraction of gt objects (with at least one gt grasp) whose matched
// detection carries a top-1-by-confidence grasp that passes the rectangle
// metric.
inline double grasp_accuracy(const std::vector<ScenePrediction>& preds,
                             const std::vector<SceneAnnotation>& gts) {
  long total = 0, correct = 0;
  for (size_t s = 0; s < gts.size(); ++s) {
    auto m = detail::match_scene(preds[s], gts[s]);
    for (size_t gi = 0; gi < gts[s].objects.size(); ++gi) {
      const auto& obj = gts[s].objects[gi];
      std::vector<GraspRect> gt_grasps;
      for (const auto& g : gts[s].grasps)
        if (g.owner == obj.id) gt_grasps.push_back(g);
      if (gt_grasps.empty()) continue;
      ++total;
      auto it = m.id_to_pred.find(obj.id);
      if (it == m.id_to_pred.end()) continue;
      const GraspRect* best = nullptr;
      for (const auto& g : preds[s].grasps)
        if (g.owner == it->second && (!best || g.confidence > best->confidence)) best = &g;
      if (best && grasp_match(*best, gt_grasps)) ++correct;
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(correct) / total;
}

inline EvalReport evaluate_scenes(const std::vector<ScenePrediction>& preds,
                                  const std::vector<SceneAnnotation>& gts) {
  if (preds.size() != gts.size())
    throw ShapeError("evaluate_scenes: prediction/annotation count mismatch");
  EvalReport r;
  auto [map, per_class] = detection_map(preds, gts);
  r.map = map;
  r.per_class_ap = per_class;
  r.or_recall = relation_or(preds, gts);
  r.op_precision = relation_op(preds, gts);
  auto [ia, per_count] = relation_ia(preds, gts);
  r.ia_accuracy = ia;
  r.per_count_ia = per_count;
  r.grasp_accuracy = grasp_accuracy(preds, gts);
  return r;
}

// Ground truth replayed as its own prediction (oracle mode): every metric
// must come out exactly 1.0.
inline ScenePrediction prediction_from_annotation(const SceneAnnotation& gt) {
  ScenePrediction p;
  p.boxes = gt.objects;
  std::map<int, int> id_to_idx;
  for (size_t i = 0; i < gt.objects.size(); ++i) id_to_idx[gt.objects[i].id] = static_cast<int>(i);
  for (const auto& r : gt.relations) {
    int i = id_to_idx.at(r.from_id), j = id_to_idx.at(r.to_id);
    if (i < j)
      p.pair_kinds[{i, j}] = r.kind;
    else
      p.pair_kinds[{j, i}] = relation_inverse(r.kind);
  }
  for (const auto& g : gt.grasps) {
    GraspRect copy = g;
    copy.owner = id_to_idx.at(g.owner);
    p.grasps.push_back(copy);
  }
  return p;
}

namespace detail {
inline std::string fmt6(double v) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(6);
  os << v;
  return os.str();
}
}  // namespace detail

inline std::string report_to_json(const EvalReport& r) {
  std::ostringstream os;
  os << "{\"map\":" << detail::fmt6(r.map) << ",\"or_recall\":" << detail::fmt6(r.or_recall)
     << ",\"op_precision\":" << detail::fmt6(r.op_precision)
     << ",\"ia_accuracy\":" << detail::fmt6(r.ia_accuracy)
     << ",\"grasp_accuracy\":" << detail::fmt6(r.grasp_accuracy) << ",\"per_class_ap\":{";
  bool first = true;
  for (const auto& [cls, ap] : r.per_class_ap) {
    if (!first) os << ",";
    first = false;
    os << "\"" << cls << "\":" << detail::fmt6(ap);
  }
  os << "},\"per_count_ia\":{";
  first = true;
  for (const auto& [n, ia] : r.per_count_ia) {
    if (!first) os << ",";
    first = false;
    os << "\"" << n << "\":" << detail::fmt6(ia);
  }
  os << "}}";
  return os.str();
}

}  // namespace stackgrasp
