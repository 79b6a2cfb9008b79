#pragma once

// Canonical domain types for stacked-scene grasp perception: oriented grasp
// rectangles, axis-aligned object boxes, pairwise manipulation relations and
// the full scene annotation. Everything here is immutable value data after
// construction and safe to share across threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "stackgrasp/errors.hpp"

namespace stackgrasp {

enum class RelationKind : uint8_t { On = 0, Under = 1, NoRel = 2 };

inline RelationKind relation_inverse(RelationKind k) {
  switch (k) {
    case RelationKind::On: return RelationKind::Under;
    case RelationKind::Under: return RelationKind::On;
    default: return RelationKind::NoRel;
  }
}

inline const char* relation_name(RelationKind k) {
  switch (k) {
    case RelationKind::On: return "on";
    case RelationKind::Under: return "under";
    default: return "no_rel";
  }
}

inline bool parse_relation_kind(const std::string& s, RelationKind& out) {
  if (s == "on") { out = RelationKind::On; return true; }
  if (s == "under") { out = RelationKind::Under; return true; }
  if (s == "no_rel") { out = RelationKind::NoRel; return true; }
  return false;
}

// Maps any angle in degrees onto the half-open interval (-90, 90]. Grasp
// rectangles are line-symmetric, so orientation is only meaningful mod 180.
inline double normalize_theta(double deg) {
  double t = std::fmod(deg, 180.0);
  if (t <= -90.0) t += 180.0;
  if (t > 90.0) t -= 180.0;
  return t;
}

// Oriented grasp rectangle {cx, cy, w, h, theta, cls}. w runs along the
// gripper opening axis, h along the finger width axis. theta in degrees,
// (-90, 90]. owner tags the grasp with its object id inside a scene.
struct GraspRect {
  double cx = 0, cy = 0;
  double w = 0, h = 0;
  double theta_deg = 0;
  int cls = 0;
  double confidence = 1.0;
  int owner = -1;
};

inline GraspRect make_grasp(double cx, double cy, double w, double h, double theta,
                            int cls = 0, int owner = -1, double conf = 1.0) {
  GraspRect g;
  g.cx = cx; g.cy = cy; g.w = w; g.h = h;
  g.theta_deg = normalize_theta(theta);
  g.cls = cls;
  g.owner = owner;
  g.confidence = conf;
  return g;
}

// Axis-aligned object box in pixel corner form. Center form is computed on
// demand; annotation files carry corners.
struct ObjectBox {
  int id = 0;
  int cls = 0;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double score = 1.0;

  double cx() const { return 0.5 * (x1 + x2); }
  double cy() const { return 0.5 * (y1 + y2); }
  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1); }
};

// Directed pairwise relation. Stored scenes keep the canonical direction
// min-id -> max-id; the inverse direction is derived, never stored.
struct Relation {
  int from_id = 0;
  int to_id = 0;
  RelationKind kind = RelationKind::NoRel;
};

struct SceneAnnotation {
  std::string image_ref;  // path to an 8-bit RGB image, or "" when absent
  int width = 0, height = 0;
  std::vector<ObjectBox> objects;
  std::vector<GraspRect> grasps;
  std::vector<Relation> relations;
};

// Checks every type invariant. Violations are data, not failures: the list
// is empty iff the scene is valid, and each entry names the offending field
// and object id.
inline std::vector<std::string> validate_scene(const SceneAnnotation& scene) {
  std::vector<std::string> out;
  std::unordered_set<int> ids;
  for (const auto& o : scene.objects) {
    if (!ids.insert(o.id).second)
      out.push_back("object id " + std::to_string(o.id) + " duplicated");
    if (!(o.x1 < o.x2))
      out.push_back("object " + std::to_string(o.id) + " x1 >= x2");
    if (!(o.y1 < o.y2))
      out.push_back("object " + std::to_string(o.id) + " y1 >= y2");
    if (o.cls < 0)
      out.push_back("object " + std::to_string(o.id) + " cls < 0");
    if (o.score < 0.0 || o.score > 1.0)
      out.push_back("object " + std::to_string(o.id) + " score outside [0,1]");
  }
  for (size_t i = 0; i < scene.grasps.size(); ++i) {
    const auto& g = scene.grasps[i];
    std::string tag = "grasp " + std::to_string(i);
    if (!(g.w > 0)) out.push_back(tag + " w <= 0");
    if (!(g.h > 0)) out.push_back(tag + " h <= 0");
    if (!(g.theta_deg > -90.0) || !(g.theta_deg <= 90.0))
      out.push_back(tag + " theta outside (-90, 90]");
    if (g.cls < 0) out.push_back(tag + " cls < 0");
    if (g.confidence < 0.0 || g.confidence > 1.0)
      out.push_back(tag + " confidence outside [0,1]");
    if (!ids.count(g.owner))
      out.push_back("grasp owner " + std::to_string(g.owner) + " missing");
  }
  size_t n = scene.objects.size();
  size_t expect = n * (n - 1) / 2;
  if (scene.relations.size() != expect)
    out.push_back("relation coverage " + std::to_string(scene.relations.size()) +
                  " != " + std::to_string(expect));
  std::set<std::pair<int, int>> seen;
  for (const auto& r : scene.relations) {
    if (r.from_id == r.to_id) {
      out.push_back("relation " + std::to_string(r.from_id) + " is a self-relation");
      continue;
    }
    if (r.from_id > r.to_id)
      out.push_back("relation " + std::to_string(r.from_id) + "->" +
                    std::to_string(r.to_id) + " not in min->max direction");
    if (!ids.count(r.from_id))
      out.push_back("relation from_id " + std::to_string(r.from_id) + " missing");
    if (!ids.count(r.to_id))
      out.push_back("relation to_id " + std::to_string(r.to_id) + " missing");
    auto key = std::minmax(r.from_id, r.to_id);
    if (!seen.insert(key).second)
      out.push_back("relation pair (" + std::to_string(key.first) + "," +
                    std::to_string(key.second) + ") duplicated");
  }
  return out;
}

}  // namespace stackgrasp
