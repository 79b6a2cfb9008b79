#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "stackgrasp/metrics.hpp"

using namespace stackgrasp;

namespace {

ObjectBox box(int id, int cls, double x1, double y1, double x2, double y2, double score = 1.0) {
  ObjectBox b;
  b.id = id;
  b.cls = cls;
  b.x1 = x1;
  b.y1 = y1;
  b.x2 = x2;
  b.y2 = y2;
  b.score = score;
  return b;
}

// Two objects stacked (0 under 1), one grasp each.
SceneAnnotation two_block_scene() {
  SceneAnnotation s;
  s.width = 96;
  s.height = 96;
  s.objects = {box(0, 1, 10, 10, 50, 50), box(1, 2, 20, 20, 60, 60)};
  s.grasps = {make_grasp(30, 30, 30, 12, 0.0, 1, 0), make_grasp(40, 40, 30, 12, 90.0, 2, 1)};
  s.relations = {{0, 1, RelationKind::Under}};
  return s;
}

// Three objects: 0 under 1, others unrelated.
SceneAnnotation three_block_scene() {
  SceneAnnotation s;
  s.width = 96;
  s.height = 96;
  s.objects = {box(0, 1, 5, 5, 35, 35), box(1, 2, 15, 15, 45, 45), box(2, 1, 60, 60, 90, 90)};
  s.grasps = {make_grasp(20, 20, 20, 8, 0.0, 1, 0), make_grasp(30, 30, 20, 8, 0.0, 2, 1),
              make_grasp(75, 75, 20, 8, 90.0, 1, 2)};
  s.relations = {{0, 1, RelationKind::Under},
                 {0, 2, RelationKind::NoRel},
                 {1, 2, RelationKind::NoRel}};
  return s;
}

}  // namespace

TEST_CASE("grasp_match basics") {
  auto gt = make_grasp(10, 10, 8, 4, 20.0, 1, 0);
  CHECK(grasp_match(gt, {gt}));

  // class must agree even for a perfect rectangle
  auto wrong_cls = gt;
  wrong_cls.cls = 2;
  CHECK_FALSE(grasp_match(wrong_cls, {gt}));
}

TEST_CASE("grasp_match jaccard threshold is strict") {
  // 1x1 inside 4x1: intersection 1, union 4 => jaccard exactly 0.25
  auto big = make_grasp(0, 0, 4, 1, 0.0, 1, 0);
  auto small = make_grasp(1.5, 0, 1, 1, 0.0, 1, 0);
  REQUIRE(jaccard_rotated(big, small) == Catch::Approx(0.25).margin(1e-12));
  CHECK_FALSE(grasp_match(small, {big}));

  // widen to 1.2x1: intersection 1.2, union 4 => 0.3 > 0.25
  auto wider = make_grasp(1.3, 0, 1.2, 1, 0.0, 1, 0);
  REQUIRE(jaccard_rotated(big, wider) > 0.25);
  CHECK(grasp_match(wider, {big}));
}

TEST_CASE("grasp_match angle threshold is inclusive") {
  auto gt = make_grasp(0, 0, 10, 10, 0.0, 1, 0);
  auto at30 = make_grasp(0, 0, 10, 10, 30.0, 1, 0);
  auto at31 = make_grasp(0, 0, 10, 10, 31.0, 1, 0);
  REQUIRE(jaccard_rotated(gt, at30) > 0.25);
  REQUIRE(jaccard_rotated(gt, at31) > 0.25);
  CHECK(grasp_match(at30, {gt}));        // exactly 30 accepted
  CHECK_FALSE(grasp_match(at31, {gt}));  // 31 rejected
}

TEST_CASE("grasp_match any-of semantics over gt list") {
  auto pred = make_grasp(0, 0, 10, 4, 45.0, 1, 0);
  auto far_gt = make_grasp(100, 100, 10, 4, 45.0, 1, 0);
  auto near_gt = make_grasp(0.5, 0, 10, 4, 40.0, 1, 0);
  CHECK_FALSE(grasp_match(pred, {far_gt}));
  CHECK(grasp_match(pred, {far_gt, near_gt}));
}

TEST_CASE("match_detections greedy rules") {
  auto gt = box(0, 1, 0, 0, 10, 10);

  SECTION("IoU above threshold matches") {
    std::vector<ObjectBox> preds = {box(0, 1, 0, 0, 10, 14, 0.9)};  // IoU 10/14
    auto m = match_detections(preds, {gt}, 0.5);
    REQUIRE(m == std::vector<int>{0});
  }
  SECTION("two preds on one gt: higher score wins") {
    std::vector<ObjectBox> preds = {box(0, 1, 0, 0, 10, 10, 0.5), box(1, 1, 1, 0, 11, 10, 0.8)};
    auto m = match_detections(preds, {gt}, 0.5);
    CHECK(m[0] == -1);
    CHECK(m[1] == 0);
  }
  SECTION("IoU below threshold stays unmatched") {
    // 10x10 vs shifted: inter 4.9*10 = 49, union 151 -> ~0.3245 < 0.5
    std::vector<ObjectBox> preds = {box(0, 1, 5.1, 0, 15.1, 10, 0.9)};
    auto m = match_detections(preds, {gt}, 0.5);
    CHECK(m == std::vector<int>{-1});
    // and just over the line with a near-identical box
    std::vector<ObjectBox> close = {box(0, 1, 0, 0, 10, 10.01, 0.9)};
    CHECK(match_detections(close, {gt}, 0.5) == std::vector<int>{0});
  }
  SECTION("class mismatch never matches") {
    std::vector<ObjectBox> preds = {box(0, 2, 0, 0, 10, 10, 0.9)};
    CHECK(match_detections(preds, {gt}, 0.5) == std::vector<int>{-1});
  }
}

TEST_CASE("detection_map endpoints") {
  auto gt = two_block_scene();
  SECTION("perfect detections give 1.0") {
    auto pred = prediction_from_annotation(gt);
    auto [map, per_class] = detection_map({pred}, {gt});
    CHECK(map == 1.0);
    CHECK(per_class.at(1) == 1.0);
    CHECK(per_class.at(2) == 1.0);
  }
  SECTION("zero detections give 0.0") {
    ScenePrediction empty;
    auto [map, per_class] = detection_map({empty}, {gt});
    CHECK(map == 0.0);
  }
  SECTION("high-scored TP shields a lower-scored FP") {
    // 1 gt of class 1; TP at score .9, far FP at score .8 -> AP 1.0
    SceneAnnotation g;
    g.width = g.height = 96;
    g.objects = {box(0, 1, 0, 0, 10, 10)};
    ScenePrediction p;
    p.boxes = {box(0, 1, 0, 0, 10, 10, 0.9), box(1, 1, 50, 50, 60, 60, 0.8)};
    auto [map, per_class] = detection_map({p}, {g});
    CHECK(map == Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("FP outranking the TP halves AP") {
    SceneAnnotation g;
    g.width = g.height = 96;
    g.objects = {box(0, 1, 0, 0, 10, 10)};
    ScenePrediction p;
    p.boxes = {box(0, 1, 0, 0, 10, 10, 0.8), box(1, 1, 50, 50, 60, 60, 0.9)};
    auto [map, per_class] = detection_map({p}, {g});
    CHECK(map == Catch::Approx(0.5).margin(1e-12));
  }
}

TEST_CASE("detection_map agrees with brute-force PR oracle") {
  // Fixtures with unambiguous TP/FP status: TPs coincide exactly with their
  // own gt, FPs live far away. Flags are then known a priori.
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    int n_scenes = 1 + static_cast<int>(gen() % 3);
    std::vector<SceneAnnotation> gts(n_scenes);
    std::vector<ScenePrediction> preds(n_scenes);
    std::vector<std::pair<double, bool>> flat;
    int n_gt = 0;
    for (int s = 0; s < n_scenes; ++s) {
      gts[s].width = gts[s].height = 500;
      int n_obj = 1 + static_cast<int>(gen() % 3);
      for (int i = 0; i < n_obj; ++i) {
        double x = 20.0 * i, y = 0;
        gts[s].objects.push_back(box(i, 1, x, y, x + 10, y + 10));
        ++n_gt;
        if (gen() % 2) {  // detected
          double score = U(gen);
          preds[s].boxes.push_back(box(0, 1, x, y, x + 10, y + 10, score));
          flat.push_back({score, true});
        }
      }
      int n_fp = static_cast<int>(gen() % 3);
      for (int i = 0; i < n_fp; ++i) {
        double score = U(gen);
        double x = 300 + 20.0 * i;
        preds[s].boxes.push_back(box(0, 1, x, 300, x + 10, 310, score));
        flat.push_back({score, false});
      }
    }
    auto [map, per_class] = detection_map(preds, gts);
    double want = oracles::ap_brute(flat, n_gt);
    INFO("trial " << trial);
    CHECK(map == Catch::Approx(want).margin(1e-9));
  }
}

TEST_CASE("relation_or counts gt pairs with detection prerequisites") {
  auto gt = three_block_scene();
  SECTION("all pairs correct") {
    CHECK(relation_or({prediction_from_annotation(gt)}, {gt}) == 1.0);
  }
  SECTION("2 of 3 pairs correct") {
    auto pred = prediction_from_annotation(gt);
    pred.pair_kinds[{0, 1}] = RelationKind::NoRel;  // was Under
    CHECK(relation_or({pred}, {gt}) == Catch::Approx(2.0 / 3.0));
  }
  SECTION("missing detection kills the pair") {
    auto two = two_block_scene();
    auto pred = prediction_from_annotation(two);
    pred.boxes.erase(pred.boxes.begin());  // object 0 undetected
    pred.pair_kinds.clear();               // indices shifted; single box, no pairs
    CHECK(relation_or({pred}, {two}) == 0.0);
  }
  SECTION("wrong detected class kills the pair") {
    auto two = two_block_scene();
    auto pred = prediction_from_annotation(two);
    pred.boxes[0].cls = 3;
    CHECK(relation_or({pred}, {two}) == 0.0);
  }
}

TEST_CASE("relation_op macro-averages the three kinds") {
  auto gt = two_block_scene();  // single pair, kind Under
  SECTION("all correct") {
    CHECK(relation_op({prediction_from_annotation(gt)}, {gt}) == 1.0);
  }
  SECTION("all NoRel predicted against an all-Under gt") {
    auto pred = prediction_from_annotation(gt);
    pred.pair_kinds[{0, 1}] = RelationKind::NoRel;
    // NoRel precision 0; Under unpredicted-but-required 0; On unpredicted-and-unrequired 1
    CHECK(relation_op({pred}, {gt}) == Catch::Approx(1.0 / 3.0));
  }
  SECTION("single correctly predicted pair scores 1.0") {
    // gt kind On for the only pair; prediction correct; Under/NoRel unpredicted+unrequired
    SceneAnnotation g = two_block_scene();
    g.relations = {{0, 1, RelationKind::On}};
    CHECK(relation_op({prediction_from_annotation(g)}, {g}) == 1.0);
  }
  SECTION("direction flip in prediction storage is still correct") {
    // store the pair as boxes[1]-first by reordering prediction boxes
    auto pred = prediction_from_annotation(gt);
    std::swap(pred.boxes[0], pred.boxes[1]);
    auto kinds = pred.pair_kinds;
    pred.pair_kinds.clear();
    for (auto [key, kind] : kinds) pred.pair_kinds[key] = relation_inverse(kind);
    CHECK(relation_op({pred}, {gt}) == 1.0);
    CHECK(relation_or({pred}, {gt}) == 1.0);
  }
}

TEST_CASE("relation_ia is all-or-nothing per scene") {
  auto gt = three_block_scene();
  SECTION("fully correct scene counts") {
    auto [acc, per_count] = relation_ia({prediction_from_annotation(gt)}, {gt});
    CHECK(acc == 1.0);
    CHECK(per_count.at(3) == 1.0);
  }
  SECTION("one wrong pair zeroes the scene") {
    auto pred = prediction_from_annotation(gt);
    pred.pair_kinds[{1, 2}] = RelationKind::On;
    auto [acc, per_count] = relation_ia({pred}, {gt});
    CHECK(acc == 0.0);
  }
  SECTION("3 of 4 scenes correct gives 0.75 with per-count buckets") {
    std::vector<SceneAnnotation> gts = {three_block_scene(), three_block_scene(),
                                        two_block_scene(), two_block_scene()};
    std::vector<ScenePrediction> preds;
    for (const auto& g : gts) preds.push_back(prediction_from_annotation(g));
    preds[0].pair_kinds[{0, 1}] = RelationKind::On;  // break one 3-object scene
    auto [acc, per_count] = relation_ia(preds, gts);
    CHECK(acc == 0.75);
    CHECK(per_count.at(3) == 0.5);
    CHECK(per_count.at(2) == 1.0);
  }
}

TEST_CASE("grasp_accuracy scores top-1 per object") {
  auto gt = two_block_scene();
  SECTION("oracle grasps are all correct") {
    CHECK(grasp_accuracy({prediction_from_annotation(gt)}, {gt}) == 1.0);
  }
  SECTION("higher-confidence bad grasp displaces a good one") {
    auto pred = prediction_from_annotation(gt);
    auto bad = make_grasp(30, 30, 30, 12, 55.0, 1, 0);  // angle off by 55
    bad.confidence = 0.99;
    for (auto& g : pred.grasps) g.confidence = 0.5;
    pred.grasps.push_back(bad);
    CHECK(grasp_accuracy({pred}, {gt}) == 0.5);  // object 0 now fails
  }
  SECTION("undetected object cannot score") {
    auto pred = prediction_from_annotation(gt);
    pred.boxes[0].x1 += 30;  // destroy IoU for object 0
    CHECK(grasp_accuracy({pred}, {gt}) == 0.5);
  }
}

TEST_CASE("oracle mode yields exact ones across the board") {
  std::vector<SceneAnnotation> gts = {two_block_scene(), three_block_scene()};
  std::vector<ScenePrediction> preds;
  for (const auto& g : gts) preds.push_back(prediction_from_annotation(g));
  auto r = evaluate_scenes(preds, gts);
  CHECK(r.map == 1.0);
  CHECK(r.or_recall == 1.0);
  CHECK(r.op_precision == 1.0);
  CHECK(r.ia_accuracy == 1.0);
  CHECK(r.grasp_accuracy == 1.0);
  for (const auto& [cls, ap] : r.per_class_ap) CHECK(ap == 1.0);
  for (const auto& [n, ia] : r.per_count_ia) CHECK(ia == 1.0);
}

TEST_CASE("oracle mode survives unsorted object ids") {
  // objects listed in descending id order: direction bookkeeping must hold
  auto gt = two_block_scene();
  std::swap(gt.objects[0], gt.objects[1]);
  auto r = evaluate_scenes({prediction_from_annotation(gt)}, {gt});
  CHECK(r.or_recall == 1.0);
  CHECK(r.op_precision == 1.0);
  CHECK(r.ia_accuracy == 1.0);
  CHECK(r.grasp_accuracy == 1.0);
}

TEST_CASE("metrics are permutation invariant in scene order") {
  std::vector<SceneAnnotation> gts = {three_block_scene(), two_block_scene()};
  std::vector<ScenePrediction> preds;
  for (const auto& g : gts) preds.push_back(prediction_from_annotation(g));
  preds[0].pair_kinds[{0, 1}] = RelationKind::On;  // imperfection to make it interesting
  auto a = evaluate_scenes(preds, gts);
  std::swap(gts[0], gts[1]);
  std::swap(preds[0], preds[1]);
  auto b = evaluate_scenes(preds, gts);
  CHECK(a.map == b.map);
  CHECK(a.or_recall == b.or_recall);
  CHECK(a.op_precision == b.op_precision);
  CHECK(a.ia_accuracy == b.ia_accuracy);
  CHECK(a.grasp_accuracy == b.grasp_accuracy);
}

TEST_CASE("removing a correct pair prediction never raises a metric") {
  auto gt = three_block_scene();
  auto pred = prediction_from_annotation(gt);
  auto before_or = relation_or({pred}, {gt});
  auto before_op = relation_op({pred}, {gt});
  auto before_ia = relation_ia({pred}, {gt}).first;
  for (const auto& [key, kind] : prediction_from_annotation(gt).pair_kinds) {
    auto cut = pred;
    cut.pair_kinds.erase(key);
    CHECK(relation_or({cut}, {gt}) <= before_or);
    CHECK(relation_op({cut}, {gt}) <= before_op);
    CHECK(relation_ia({cut}, {gt}).first <= before_ia);
  }
}

TEST_CASE("report serializes with fixed keys") {
  auto gt = two_block_scene();
  auto r = evaluate_scenes({prediction_from_annotation(gt)}, {gt});
  auto json = report_to_json(r);
  CHECK(json.find("\"map\":1.000000") != std::string::npos);
  CHECK(json.find("\"or_recall\":1.000000") != std::string::npos);
  CHECK(json.find("\"op_precision\":1.000000") != std::string::npos);
  CHECK(json.find("\"ia_accuracy\":1.000000") != std::string::npos);
  CHECK(json.find("\"grasp_accuracy\":1.000000") != std::string::npos);
  CHECK(json.find("\"per_class_ap\"") != std::string::npos);
  CHECK(json.find("\"per_count_ia\":{\"2\":1.000000}") != std::string::npos);
}
