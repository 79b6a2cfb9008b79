#pragma once

// Best-effort importer for VOC-style stacked-scene annotations: per-image
// XML files carrying object boxes, integer indices and father/children
// relation lists, plus sibling .txt grasp files with 4-corner rectangles.
// Canonical storage stays the JSON SceneFile; this importer never aborts on
// a bad file — it skips and reports.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stackgrasp/scene.hpp"

namespace stackgrasp {

struct ImportReport {
  int scenes_parsed = 0;
  int scenes_skipped = 0;
  int grasps_skipped = 0;
  std::vector<std::string> warnings;

  std::string summary() const {
    std::ostringstream os;
    os << "parsed " << scenes_parsed << " scene(s), skipped " << scenes_skipped
       << " scene(s), skipped " << grasps_skipped << " grasp line(s)";
    return os.str();
  }
};

namespace detail {

// Content of the first <tag>...</tag> inside text[from, to), if any.
inline std::optional<std::string> tag_text(const std::string& text, const std::string& tag,
                                           size_t from, size_t to) {
  std::string open = "<" + tag + ">", close = "</" + tag + ">";
  size_t a = text.find(open, from);
  if (a == std::string::npos || a >= to) return std::nullopt;
  a += open.size();
  size_t b = text.find(close, a);
  if (b == std::string::npos || b > to) return std::nullopt;
  return text.substr(a, b - a);
}

inline std::optional<double> tag_number(const std::string& text, const std::string& tag,
                                        size_t from, size_t to) {
  auto s = tag_text(text, tag, from, to);
  if (!s) return std::nullopt;
  try {
    size_t used = 0;
    double v = std::stod(*s, &used);
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

// All integers found in the tag body, ignoring nested markup.
inline std::vector<int> tag_ints(const std::string& text, const std::string& tag, size_t from,
                                 size_t to) {
  std::vector<int> out;
  auto s = tag_text(text, tag, from, to);
  if (!s) return out;
  std::string cleaned = *s;
  for (auto& c : cleaned)
    if (c == '<' || c == '>' || c == '/' || c == ',' || std::isalpha(static_cast<unsigned char>(c)))
      c = ' ';
  std::istringstream is(cleaned);
  int v;
  while (is >> v) out.push_back(v);
  return out;
}

struct VmrdObject {
  int index = -1;
  std::string name;
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  std::vector<int> fathers;  // objects directly beneath this one
};

}  // namespace detail

// Parses one annotation XML. Returns nothing when the file lacks usable
// objects; fine-grained problems land in `report`.
inline std::optional<SceneAnnotation> parse_vmrd_xml(const std::string& text,
                                                     const std::string& where,
                                                     std::map<std::string, int>& class_ids,
                                                     ImportReport& report) {
  SceneAnnotation s;
  if (auto f = detail::tag_text(text, "filename", 0, text.size())) s.image_ref = *f;
  if (auto w = detail::tag_number(text, "width", 0, text.size())) s.width = static_cast<int>(*w);
  if (auto h = detail::tag_number(text, "height", 0, text.size())) s.height = static_cast<int>(*h);

  std::vector<detail::VmrdObject> objs;
  size_t pos = 0;
  while (true) {
    size_t a = text.find("<object>", pos);
    if (a == std::string::npos) break;
    size_t b = text.find("</object>", a);
    if (b == std::string::npos) break;
    pos = b + 9;
    detail::VmrdObject o;
    if (auto name = detail::tag_text(text, "name", a, b)) o.name = *name;
    if (auto idx = detail::tag_number(text, "index", a, b)) o.index = static_cast<int>(*idx);
    auto x1 = detail::tag_number(text, "xmin", a, b), y1 = detail::tag_number(text, "ymin", a, b);
    auto x2 = detail::tag_number(text, "xmax", a, b), y2 = detail::tag_number(text, "ymax", a, b);
    if (!x1 || !y1 || !x2 || !y2 || *x2 <= *x1 || *y2 <= *y1 || o.name.empty()) {
      report.warnings.push_back(where + ": object with missing/degenerate box skipped");
      continue;
    }
    o.x1 = *x1;
    o.y1 = *y1;
    o.x2 = *x2;
    o.y2 = *y2;
    o.fathers = detail::tag_ints(text, "father", a, b);
    if (o.index < 0) o.index = static_cast<int>(objs.size());
    objs.push_back(o);
  }
  if (objs.empty()) return std::nullopt;

  std::map<int, size_t> by_index;
  for (size_t i = 0; i < objs.size(); ++i) {
    if (by_index.count(objs[i].index)) {
      report.warnings.push_back(where + ": duplicate object index " +
                                std::to_string(objs[i].index));
      return std::nullopt;
    }
    by_index[objs[i].index] = i;
  }
  for (const auto& o : objs) {
    if (!class_ids.count(o.name))
      class_ids[o.name] = static_cast<int>(class_ids.size()) + 1;
    ObjectBox b;
    b.id = o.index;
    b.cls = class_ids[o.name];
    b.x1 = o.x1;
    b.y1 = o.y1;
    b.x2 = o.x2;
    b.y2 = o.y2;
    s.objects.push_back(b);
  }
  // father(o) sits beneath o; express each pair once in min->max direction,
  // fill the rest with no_rel for full coverage
  std::map<std::pair<int, int>, RelationKind> pairs;
  for (const auto& o : objs) {
    for (int f : o.fathers) {
      if (!by_index.count(f) || f == o.index) {
        report.warnings.push_back(where + ": relation to unknown index " + std::to_string(f));
        continue;
      }
      // o on f  <=>  min(o,f) -> max(o,f) carries On when min is o
      std::pair<int, int> key{std::min(o.index, f), std::max(o.index, f)};
      pairs[key] = o.index < f ? RelationKind::On : RelationKind::Under;
    }
  }
  for (size_t i = 0; i < objs.size(); ++i) {
    for (size_t j = i + 1; j < objs.size(); ++j) {
      int a = std::min(objs[i].index, objs[j].index);
      int b = std::max(objs[i].index, objs[j].index);
      if (!pairs.count({a, b})) pairs[{a, b}] = RelationKind::NoRel;
    }
  }
  for (const auto& [key, kind] : pairs) s.relations.push_back({key.first, key.second, kind});
  return s;
}

// Grasp line: 8 numbers (4 corners x,y) optionally followed by an owner
// index. Center/size/angle recovered from the corner geometry.
inline std::optional<GraspRect> parse_vmrd_grasp_line(const std::string& line,
                                                      const SceneAnnotation& scene) {
  std::istringstream is(line);
  std::vector<double> v;
  double x;
  while (is >> x) v.push_back(x);
  if (v.size() != 8 && v.size() != 9) return std::nullopt;
  double cx = (v[0] + v[2] + v[4] + v[6]) / 4.0;
  double cy = (v[1] + v[3] + v[5] + v[7]) / 4.0;
  double w = std::hypot(v[2] - v[0], v[3] - v[1]);
  double h = std::hypot(v[4] - v[2], v[5] - v[3]);
  if (w <= 0 || h <= 0) return std::nullopt;
  double theta = std::atan2(v[3] - v[1], v[2] - v[0]) * 180.0 / M_PI;
  int owner = -1;
  if (v.size() == 9) {
    owner = static_cast<int>(v[8]);
  } else {
    // owner by center containment, smallest box wins
    double best_area = 0;
    for (const auto& o : scene.objects) {
      if (cx >= o.x1 && cx <= o.x2 && cy >= o.y1 && cy <= o.y2 &&
          (owner < 0 || o.area() < best_area)) {
        owner = o.id;
        best_area = o.area();
      }
    }
  }
  bool known = false;
  int cls = 0;
  for (const auto& o : scene.objects)
    if (o.id == owner) {
      known = true;
      cls = o.cls;
    }
  if (!known) return std::nullopt;
  return make_grasp(cx, cy, w, h, theta, cls, owner);
}

inline std::vector<SceneAnnotation> import_vmrd(const std::string& dir, ImportReport& report,
                                                std::map<std::string, int>* class_ids_out = nullptr) {
  namespace fs = std::filesystem;
  std::vector<SceneAnnotation> scenes;
  std::map<std::string, int> class_ids;
  std::vector<fs::path> files;
  std::error_code ec;
  for (const auto& e : fs::directory_iterator(dir, ec))
    if (e.path().extension() == ".xml") files.push_back(e.path());
  if (ec) {
    report.warnings.push_back(dir + ": " + ec.message());
    return scenes;
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    try {
      std::ifstream f(path, std::ios::binary);
      std::stringstream ss;
      ss << f.rdbuf();
      auto scene = parse_vmrd_xml(ss.str(), path.filename().string(), class_ids, report);
      if (!scene) {
        ++report.scenes_skipped;
        continue;
      }
      fs::path grasp_path = path;
      grasp_path.replace_extension(".txt");
      if (fs::exists(grasp_path, ec)) {
        std::ifstream gf(grasp_path, std::ios::binary);
        std::string line;
        while (std::getline(gf, line)) {
          if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
          auto g = parse_vmrd_grasp_line(line, *scene);
          if (g) {
            scene->grasps.push_back(*g);
          } else {
            ++report.grasps_skipped;
            report.warnings.push_back(grasp_path.filename().string() + ": bad grasp line skipped");
          }
        }
      }
      auto violations = validate_scene(*scene);
      if (!violations.empty()) {
        ++report.scenes_skipped;
        report.warnings.push_back(path.filename().string() + ": " + violations.front());
        continue;
      }
      if (scene->image_ref.empty()) scene->image_ref = path.stem().string() + ".jpg";
      scenes.push_back(std::move(*scene));
      ++report.scenes_parsed;
    } catch (const std::exception& e) {
      ++report.scenes_skipped;
      report.warnings.push_back(path.filename().string() + ": " + e.what());
    }
  }
  if (class_ids_out) *class_ids_out = class_ids;
  return scenes;
}

}  // namespace stackgrasp
