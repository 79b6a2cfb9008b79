#include <catch2/catch_amalgamated.hpp>

#include "stackgrasp/scene.hpp"

using namespace stackgrasp;

namespace {

SceneAnnotation two_object_scene() {
  SceneAnnotation s;
  s.width = 96;
  s.height = 96;
  s.objects = {ObjectBox{0, 1, 10, 10, 40, 40}, ObjectBox{1, 2, 30, 30, 70, 70}};
  s.grasps = {make_grasp(25, 25, 20, 8, 0, 1, 0),
              make_grasp(50, 50, 24, 10, 90, 2, 1)};
  s.relations = {Relation{0, 1, RelationKind::On}};
  return s;
}

}  // namespace

TEST_CASE("relation_inverse swaps On/Under and fixes NoRel") {
  CHECK(relation_inverse(RelationKind::On) == RelationKind::Under);
  CHECK(relation_inverse(RelationKind::Under) == RelationKind::On);
  CHECK(relation_inverse(RelationKind::NoRel) == RelationKind::NoRel);
  for (auto k : {RelationKind::On, RelationKind::Under, RelationKind::NoRel})
    CHECK(relation_inverse(relation_inverse(k)) == k);
}

TEST_CASE("relation names round-trip") {
  CHECK(relation_name(RelationKind::On) == "on");
  CHECK(relation_name(RelationKind::Under) == "under");
  CHECK(relation_name(RelationKind::NoRel) == "no_rel");
  for (auto k : {RelationKind::On, RelationKind::Under, RelationKind::NoRel}) {
    RelationKind out;
    REQUIRE(parse_relation_kind(relation_name(k), out));
    CHECK(out == k);
  }
  RelationKind out;
  CHECK(!parse_relation_kind("sideways", out));
}

TEST_CASE("normalize_theta maps into (-90, 90]") {
  CHECK(normalize_theta(0) == 0.0);
  CHECK(normalize_theta(90) == 90.0);
  CHECK(normalize_theta(-90) == 90.0);   // -90 + 180
  CHECK(normalize_theta(135) == -45.0);
  CHECK(normalize_theta(180) == 0.0);
  CHECK(normalize_theta(270) == 90.0);
  CHECK(normalize_theta(-135) == 45.0);
  CHECK(normalize_theta(45) == 45.0);
  for (double t = -720; t <= 720; t += 7.3) {
    double n = normalize_theta(t);
    CHECK(n > -90.0);
    CHECK(n <= 90.0);
    // same line orientation modulo 180
    double d = std::fmod(std::fmod(t - n, 180.0), 180.0);
    CHECK(std::abs(d) < 1e-9);
  }
}

TEST_CASE("valid scene produces no violations") {
  CHECK(validate_scene(two_object_scene()).empty());
}

TEST_CASE("missing grasp owner is reported with exact message") {
  auto s = two_object_scene();
  s.grasps.push_back(make_grasp(20, 20, 10, 5, 0, 1, 7));
  auto v = validate_scene(s);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == "grasp owner 7 missing");
}

TEST_CASE("relation coverage mismatch is reported with exact message") {
  auto s = two_object_scene();
  s.objects.push_back(ObjectBox{2, 3, 50, 50, 90, 90});
  s.grasps.push_back(make_grasp(70, 70, 20, 8, 45, 3, 2));
  // 3 objects need C(3,2)=3 relations, only 2 present
  s.relations.push_back(Relation{0, 2, RelationKind::NoRel});
  auto v = validate_scene(s);
  REQUIRE(v.size() == 1);
  CHECK(v[0] == "relation coverage 2 != 3");
}

TEST_CASE("duplicate object ids are violations") {
  auto s = two_object_scene();
  s.objects[1].id = 0;
  auto v = validate_scene(s);
  CHECK(!v.empty());
}

TEST_CASE("non-canonical relation direction is a violation") {
  auto s = two_object_scene();
  s.relations[0] = Relation{1, 0, RelationKind::Under};
  CHECK(!validate_scene(s).empty());
}

TEST_CASE("self-relation is a violation") {
  auto s = two_object_scene();
  s.relations[0] = Relation{0, 0, RelationKind::NoRel};
  CHECK(!validate_scene(s).empty());
}

TEST_CASE("degenerate box corners are violations") {
  auto s = two_object_scene();
  s.objects[0].x2 = s.objects[0].x1;  // zero width
  CHECK(!validate_scene(s).empty());
}

TEST_CASE("grasp with non-positive size is a violation") {
  auto s = two_object_scene();
  s.grasps[0].w = 0;
  CHECK(!validate_scene(s).empty());
}

TEST_CASE("grasp theta outside range is a violation") {
  auto s = two_object_scene();
  s.grasps[0].theta_deg = 91.0;  // bypass make_grasp normalization
  CHECK(!validate_scene(s).empty());
}

TEST_CASE("confidence outside [0,1] is a violation") {
  auto s = two_object_scene();
  s.grasps[0].confidence = 1.5;
  CHECK(!validate_scene(s).empty());
}

TEST_CASE("ObjectBox derived accessors") {
  ObjectBox b{3, 1, 10, 20, 30, 60};
  CHECK(b.cx() == 20.0);
  CHECK(b.cy() == 40.0);
  CHECK(b.width() == 20.0);
  CHECK(b.height() == 40.0);
  CHECK(b.area() == 800.0);
}

TEST_CASE("make_grasp normalizes theta on ingest") {
  auto g = make_grasp(0, 0, 10, 4, 135, 1);
  CHECK(g.theta_deg == -45.0);
  auto h = make_grasp(0, 0, 10, 4, -90, 1);
  CHECK(h.theta_deg == 90.0);
}
