#pragma once

// Deterministic SVG rendering of scenes: class-colored object boxes, rotated
// grasp rectangles, and a relation-tree inset showing who rests on whom.
// Byte-stable for fixed input so renders can be asserted verbatim in tests.

#include <array>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "stackgrasp/image.hpp"
#include "stackgrasp/planner.hpp"
#include "stackgrasp/scene.hpp"

namespace stackgrasp {

namespace detail {

inline std::string f1(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.1f", v);
  return b;
}

inline std::string hex_color(std::array<uint8_t, 3> c) {
  char b[8];
  std::snprintf(b, sizeof b, "#%02x%02x%02x", c[0], c[1], c[2]);
  return b;
}

inline void svg_boxes(std::string& s, const SceneAnnotation& scene, const char* tag,
                      const char* dash) {
  for (const auto& o : scene.objects) {
    std::string col = hex_color(class_color(o.cls));
    s += "<rect class=\"" + std::string(tag) + "\" x=\"" + f1(o.x1) + "\" y=\"" + f1(o.y1) +
         "\" width=\"" + f1(o.width()) + "\" height=\"" + f1(o.height()) + "\" fill=\"" + col +
         "\" fill-opacity=\"0.12\" stroke=\"" + col + "\" stroke-width=\"1.5\"" + dash + "/>\n";
    s += "<text x=\"" + f1(o.x1 + 2) + "\" y=\"" + f1(o.y1 + 9) + "\" font-family=\"monospace\"" +
         " font-size=\"8\" fill=\"" + col + "\">" + std::to_string(o.id) + "</text>\n";
  }
  for (const auto& g : scene.grasps) {
    std::string col = hex_color(class_color(g.cls));
    s += "<rect class=\"" + std::string(tag) + "-grasp\" x=\"" + f1(g.cx - g.w / 2) + "\" y=\"" +
         f1(g.cy - g.h / 2) + "\" width=\"" + f1(g.w) + "\" height=\"" + f1(g.h) +
         "\" fill=\"none\" stroke=\"" + col + "\" stroke-width=\"1\"" + dash + " transform=\"rotate(" +
         f1(g.theta_deg) + " " + f1(g.cx) + " " + f1(g.cy) + ")\"/>\n";
  }
}

// Stacking depth for the tree inset: 0 = rests on the desk, else one above
// the deepest object it rests on. Cyclic graphs fall back to a flat row.
inline std::map<int, int> stack_levels(const RelationGraph& g, bool& cyclic) {
  std::map<int, int> level;
  cyclic = !detect_cycles(g).empty();
  if (cyclic) {
    for (int n : g.nodes) level[n] = 0;
    return level;
  }
  // edges run a -> b for "a on b"; process in clearing order, base first
  auto order = full_clearing_order(g);  // topmost first
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    int lv = 0;
    for (const auto& [e, w] : g.edges)
      if (e.first == *it && level.count(e.second)) lv = std::max(lv, level[e.second] + 1);
    level[*it] = lv;
  }
  return level;
}

}  // namespace detail

// Renders gt (solid) and optionally a prediction overlay (dashed), plus a
// relation-tree inset derived from the gt relations.
inline std::string render_scene_svg(const SceneAnnotation& scene,
                                    const SceneAnnotation* pred = nullptr) {
  int panel_w = 120;
  int W = scene.width + panel_w;
  int H = std::max(scene.height, 120);
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " + std::to_string(W) + " " +
       std::to_string(H) + "\" width=\"" + std::to_string(W * 4) + "\" height=\"" +
       std::to_string(H * 4) + "\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(W) + "\" height=\"" + std::to_string(H) +
       "\" fill=\"#f4f1ea\"/>\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(scene.width) + "\" height=\"" +
       std::to_string(scene.height) + "\" fill=\"#d1cbc1\"/>\n";

  detail::svg_boxes(s, scene, "gt-box", "");
  if (pred) detail::svg_boxes(s, *pred, "pred-box", " stroke-dasharray=\"3 2\"");

  // relation-tree inset
  auto graph = build_graph(scene.objects, scene.relations);
  bool cyclic = false;
  auto level = detail::stack_levels(graph, cyclic);
  int max_level = 0;
  for (const auto& [n, lv] : level) max_level = std::max(max_level, lv);
  std::map<int, std::vector<int>> by_level;
  for (const auto& [n, lv] : level) by_level[lv].push_back(n);  // ids ascend within a level

  double px0 = scene.width + 10;
  double py1 = H - 14;
  double row_h = max_level > 0 ? std::min(26.0, (py1 - 18.0) / max_level) : 0.0;
  std::map<int, std::pair<double, double>> pos;
  for (const auto& [lv, ids] : by_level) {
    double y = py1 - lv * row_h;
    double step = (panel_w - 20.0) / (static_cast<double>(ids.size()) + 1.0);
    for (size_t k = 0; k < ids.size(); ++k)
      pos[ids[k]] = {px0 + step * (static_cast<double>(k) + 1.0), y};
  }
  for (const auto& [e, w] : graph.edges) {
    auto [x1, y1] = pos[e.first];
    auto [x2, y2] = pos[e.second];
    s += "<line x1=\"" + detail::f1(x1) + "\" y1=\"" + detail::f1(y1 + 4) + "\" x2=\"" +
         detail::f1(x2) + "\" y2=\"" + detail::f1(y2 - 4) + "\" stroke=\"#55504a\"" +
         " stroke-width=\"0.8\"/>\n";
  }
  for (const auto& [id, xy] : pos) {
    int cls = 0;
    for (const auto& o : scene.objects)
      if (o.id == id) cls = o.cls;
    std::string col = detail::hex_color(class_color(cls));
    s += "<circle cx=\"" + detail::f1(xy.first) + "\" cy=\"" + detail::f1(xy.second) +
         "\" r=\"4\" fill=\"" + col + "\"/>\n";
    s += "<text x=\"" + detail::f1(xy.first + 5) + "\" y=\"" + detail::f1(xy.second + 3) +
         "\" font-family=\"monospace\" font-size=\"7\" fill=\"#333\">" + std::to_string(id) +
         "</text>\n";
  }
  if (cyclic)
    s += "<text x=\"" + detail::f1(px0) + "\" y=\"12\" font-family=\"monospace\" font-size=\"7\""
         " fill=\"#a33\">cycle</text>\n";
  s += "</svg>\n";
  return s;
}

}  // namespace stackgrasp
