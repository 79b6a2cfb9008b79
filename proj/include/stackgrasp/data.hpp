#pragma once

// Scene JSON serialization (tolerant reader, byte-stable writer), the
// synthetic stacked-block generator with exact ground truth, and the online
// augmentation pipeline (flip / scale / gamut).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stackgrasp/errors.hpp"
#include "stackgrasp/geometry.hpp"
#include "stackgrasp/image.hpp"
#include "stackgrasp/rng.hpp"
#include "stackgrasp/scene.hpp"

namespace stackgrasp {

namespace detail {

inline std::string num6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace detail

// Writer emits keys in fixed order with floats at 6 decimal places so a
// load/save round-trip reproduces the file byte for byte.
inline std::string scene_to_json(const SceneAnnotation& s) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"image\": \"" << s.image_ref << "\",\n";
  os << "  \"width\": " << s.width << ",\n";
  os << "  \"height\": " << s.height << ",\n";
  os << "  \"objects\": [";
  for (size_t i = 0; i < s.objects.size(); ++i) {
    const auto& o = s.objects[i];
    os << (i ? ",\n    " : "\n    ");
    os << "{\"id\": " << o.id << ", \"cls\": " << o.cls << ", \"bbox\": ["
       << detail::num6(o.x1) << ", " << detail::num6(o.y1) << ", " << detail::num6(o.x2)
       << ", " << detail::num6(o.y2) << "]}";
  }
  os << (s.objects.empty() ? "]" : "\n  ]") << ",\n";
  os << "  \"grasps\": [";
  for (size_t i = 0; i < s.grasps.size(); ++i) {
    const auto& g = s.grasps[i];
    os << (i ? ",\n    " : "\n    ");
    os << "{\"owner\": " << g.owner << ", \"cx\": " << detail::num6(g.cx) << ", \"cy\": "
       << detail::num6(g.cy) << ", \"w\": " << detail::num6(g.w) << ", \"h\": "
       << detail::num6(g.h) << ", \"theta\": " << detail::num6(g.theta_deg) << "}";
  }
  os << (s.grasps.empty() ? "]" : "\n  ]") << ",\n";
  os << "  \"relations\": [";
  for (size_t i = 0; i < s.relations.size(); ++i) {
    const auto& r = s.relations[i];
    os << (i ? ",\n    " : "\n    ");
    os << "{\"from\": " << r.from_id << ", \"to\": " << r.to_id << ", \"kind\": \""
       << relation_name(r.kind) << "\"}";
  }
  os << (s.relations.empty() ? "]" : "\n  ]") << "\n";
  os << "}\n";
  return os.str();
}

inline void save_scene(const SceneAnnotation& s, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path);
  f << scene_to_json(s);
}

inline SceneAnnotation scene_from_json(const std::string& text, const std::string& where = "<string>") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(where + ": " + e.what());
  }
  auto need = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw ParseError(where + ": missing \"" + key + "\"");
    return j.at(key);
  };
  SceneAnnotation s;
  try {
    s.image_ref = need("image").get<std::string>();
    s.width = need("width").get<int>();
    s.height = need("height").get<int>();
    for (const auto& o : need("objects")) {
      ObjectBox b;
      b.id = o.at("id").get<int>();
      b.cls = o.at("cls").get<int>();
      const auto& bb = o.at("bbox");
      if (!bb.is_array() || bb.size() != 4)
        throw ParseError(where + ": object " + std::to_string(b.id) + " bbox must have 4 entries");
      b.x1 = bb[0].get<double>();
      b.y1 = bb[1].get<double>();
      b.x2 = bb[2].get<double>();
      b.y2 = bb[3].get<double>();
      if (o.contains("score")) b.score = o.at("score").get<double>();
      s.objects.push_back(b);
    }
    for (const auto& g : need("grasps")) {
      GraspRect r;
      r.owner = g.at("owner").get<int>();
      r.cx = g.at("cx").get<double>();
      r.cy = g.at("cy").get<double>();
      r.w = g.at("w").get<double>();
      r.h = g.at("h").get<double>();
      r.theta_deg = g.at("theta").get<double>();
      if (g.contains("cls")) r.cls = g.at("cls").get<int>();
      if (g.contains("confidence")) r.confidence = g.at("confidence").get<double>();
      s.grasps.push_back(r);
    }
    for (const auto& e : need("relations")) {
      Relation r;
      r.from_id = e.at("from").get<int>();
      r.to_id = e.at("to").get<int>();
      std::string kind = e.at("kind").get<std::string>();
      if (!parse_relation_kind(kind, r.kind))
        throw ParseError(where + ": unknown relation kind \"" + kind + "\"");
      s.relations.push_back(r);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  // grasps inherit the owning object's class when the file omits it
  std::map<int, int> cls_of;
  for (const auto& o : s.objects) cls_of[o.id] = o.cls;
  for (auto& g : s.grasps)
    if (g.cls == 0 && cls_of.count(g.owner)) g.cls = cls_of[g.owner];
  auto violations = validate_scene(s);
  if (!violations.empty()) {
    std::string msg = where + ": invalid scene:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw ValidationError(msg);
  }
  return s;
}

inline SceneAnnotation load_scene(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return scene_from_json(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Synthetic stacked scenes

enum class OverlapPolicy { Free, Stack, Chain };

inline bool parse_overlap_policy(const std::string& s, OverlapPolicy& out) {
  if (s == "free") out = OverlapPolicy::Free;
  else if (s == "stack") out = OverlapPolicy::Stack;
  else if (s == "chain") out = OverlapPolicy::Chain;
  else return false;
  return true;
}

struct SynthConfig {
  uint64_t seed = 0;
  int min_objects = 2, max_objects = 5;
  int min_size = 22, max_size = 46;  // block side lengths, px
  int width = 96, height = 96;
  int n_classes = 4;                 // foreground classes, ids 1..n
  OverlapPolicy policy = OverlapPolicy::Stack;
  double stack_prob = 0.75;          // Stack policy: chance a block lands on an earlier one
  double overlap_thresh = 0.1;       // intersection / smaller-area above this => stacked
  double min_visible = 0.25;         // every block keeps this fraction un-occluded
};

namespace detail {

struct Block {
  int x1, y1, x2, y2, cls;
  long area() const { return static_cast<long>(x2 - x1) * (y2 - y1); }
};

inline double block_overlap_ratio(const Block& a, const Block& b) {
  long ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  long iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0 || iy <= 0) return 0.0;
  return static_cast<double>(ix * iy) / std::min(a.area(), b.area());
}

// Exact visible fraction of block `i` under blocks drawn later, by integer
// pixel counting (blocks are integer-aligned).
inline double visible_fraction(const std::vector<Block>& blocks, size_t i) {
  const Block& b = blocks[i];
  long visible = 0;
  for (int y = b.y1; y < b.y2; ++y) {
    for (int x = b.x1; x < b.x2; ++x) {
      bool covered = false;
      for (size_t j = i + 1; j < blocks.size() && !covered; ++j)
        covered = x >= blocks[j].x1 && x < blocks[j].x2 && y >= blocks[j].y1 && y < blocks[j].y2;
      if (!covered) ++visible;
    }
  }
  return static_cast<double>(visible) / b.area();
}

}  // namespace detail

// Renders n axis-aligned blocks in draw order (later occludes earlier) and
// derives exact ground truth: pair (i, j), i drawn before j, is related iff
// intersection over the smaller block exceeds cfg.overlap_thresh, in which
// case i sits under j. Deterministic per seed.
inline std::pair<Image, SceneAnnotation> synth_generate(const SynthConfig& cfg) {
  Rng rng(cfg.seed);
  int n = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  std::vector<detail::Block> blocks;
  for (int i = 0; i < n; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      detail::Block b;
      b.cls = rng.uniform_int(1, cfg.n_classes);
      int bw = rng.uniform_int(cfg.min_size, cfg.max_size);
      int bh = rng.uniform_int(cfg.min_size, cfg.max_size);
      bool want_stack = false;
      int base = -1;
      if (i > 0) {
        if (cfg.policy == OverlapPolicy::Chain) {
          want_stack = true;
          base = i - 1;
        } else if (cfg.policy == OverlapPolicy::Stack) {
          want_stack = rng.bernoulli(cfg.stack_prob);
          if (want_stack) base = rng.uniform_int(0, i - 1);
        }
      }
      if (want_stack && cfg.policy == OverlapPolicy::Chain) {
        // staircase away from the older blocks: overlap the base by 40-70%
        // of the smaller side so the pair ratio clears the threshold while
        // the chain steadily departs from everything before the base
        const auto& bb = blocks[static_cast<size_t>(base)];
        const auto& b0 = blocks.front();
        int dx = (b0.x1 + b0.x2) / 2 < cfg.width / 2 ? 1 : -1;
        int dy = (b0.y1 + b0.y2) / 2 < cfg.height / 2 ? 1 : -1;
        int mx = std::min(bw, bb.x2 - bb.x1), my = std::min(bh, bb.y2 - bb.y1);
        int ox = rng.uniform_int(std::max(1, mx * 2 / 5), std::max(1, mx * 7 / 10));
        int oy = rng.uniform_int(std::max(1, my * 2 / 5), std::max(1, my * 7 / 10));
        b.x1 = dx > 0 ? bb.x2 - ox : bb.x1 + ox - bw;
        b.y1 = dy > 0 ? bb.y2 - oy : bb.y1 + oy - bh;
      } else if (want_stack) {
        // land the center inside the base block so the overlap test passes
        const auto& bb = blocks[static_cast<size_t>(base)];
        int cx = rng.uniform_int(bb.x1 + 2, std::max(bb.x1 + 2, bb.x2 - 3));
        int cy = rng.uniform_int(bb.y1 + 2, std::max(bb.y1 + 2, bb.y2 - 3));
        b.x1 = cx - bw / 2;
        b.y1 = cy - bh / 2;
      } else {
        b.x1 = rng.uniform_int(2, std::max(2, cfg.width - bw - 2));
        b.y1 = rng.uniform_int(2, std::max(2, cfg.height - bh - 2));
      }
      b.x2 = b.x1 + bw;
      b.y2 = b.y1 + bh;
      if (b.x1 < 0 || b.y1 < 0 || b.x2 > cfg.width || b.y2 > cfg.height) continue;
      bool ok = true;
      for (int j = 0; j < i && ok; ++j) {
        double ratio = detail::block_overlap_ratio(blocks[static_cast<size_t>(j)], b);
        bool allowed = want_stack && (cfg.policy != OverlapPolicy::Chain || j == base);
        if (want_stack && j == base && ratio <= cfg.overlap_thresh) ok = false;  // must stack
        if (!allowed && ratio > cfg.overlap_thresh) ok = false;                  // must not
      }
      if (!ok) continue;
      blocks.push_back(b);
      for (size_t j = 0; j + 1 < blocks.size() && ok; ++j)
        if (detail::visible_fraction(blocks, j) < cfg.min_visible) ok = false;
      if (!ok) {
        blocks.pop_back();
        continue;
      }
      placed = true;
    }
    if (!placed)
      throw RetryExhaustedError("synth_generate: placement failed after 100 attempts (seed " +
                                std::to_string(cfg.seed) + ", object " + std::to_string(i) + ")");
  }

  Image img(cfg.width, cfg.height, {209, 203, 193});
  for (const auto& b : blocks) {
    auto c = class_color(b.cls);
    img.fill_rect(b.x1, b.y1, b.x2, b.y2, c);
    auto dark = c;
    for (auto& ch : dark) ch = static_cast<uint8_t>(ch * 2 / 3);
    img.draw_border(b.x1, b.y1, b.x2, b.y2, dark);
  }

  SceneAnnotation s;
  s.width = cfg.width;
  s.height = cfg.height;
  for (int i = 0; i < n; ++i) {
    const auto& b = blocks[static_cast<size_t>(i)];
    ObjectBox o;
    o.id = i;
    o.cls = b.cls;
    o.x1 = b.x1;
    o.y1 = b.y1;
    o.x2 = b.x2;
    o.y2 = b.y2;
    s.objects.push_back(o);
    double cx = (b.x1 + b.x2) / 2.0, cy = (b.y1 + b.y2) / 2.0;
    double bw = b.x2 - b.x1, bh = b.y2 - b.y1;
    s.grasps.push_back(make_grasp(cx, cy, bw * 0.8, bh * 0.45, 0.0, b.cls, i));
    s.grasps.push_back(make_grasp(cx, cy, bh * 0.8, bw * 0.45, 90.0, b.cls, i));
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      double ratio = detail::block_overlap_ratio(blocks[static_cast<size_t>(i)],
                                                 blocks[static_cast<size_t>(j)]);
      Relation r;
      r.from_id = i;
      r.to_id = j;
      r.kind = ratio > cfg.overlap_thresh ? RelationKind::Under : RelationKind::NoRel;
      s.relations.push_back(r);
    }
  }
  return {std::move(img), std::move(s)};
}

// ---------------------------------------------------------------------------
// Augmentation: each transform is pure and exact on labels; the orchestrator
// draws its choices from the supplied rng.

inline void flip_horizontal(SceneAnnotation& s, Image& img) {
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w / 2; ++x)
      for (int c = 0; c < 3; ++c) std::swap(img.px(x, y)[c], img.px(img.w - 1 - x, y)[c]);
  double w = s.width;
  for (auto& o : s.objects) {
    double nx1 = w - o.x2, nx2 = w - o.x1;
    o.x1 = nx1;
    o.x2 = nx2;
  }
  for (auto& g : s.grasps) {
    g.cx = w - g.cx;
    g.theta_deg = normalize_theta(-g.theta_deg);
  }
}

// Isotropic scale by `factor`, then center-crop or pad to out_hw x out_hw.
inline void scale_to_canvas(SceneAnnotation& s, Image& img, double factor, int out_hw,
                            std::array<uint8_t, 3> pad = {209, 203, 193}) {
  int nw = std::max(1, static_cast<int>(std::lround(img.w * factor)));
  int nh = std::max(1, static_cast<int>(std::lround(img.h * factor)));
  double sx = static_cast<double>(nw) / img.w, sy = static_cast<double>(nh) / img.h;
  Image scaled = resize_nearest(img, nw, nh);
  Image out(out_hw, out_hw, pad);
  int dx = (out_hw - nw) / 2, dy = (out_hw - nh) / 2;
  for (int y = 0; y < nh; ++y) {
    int oy = y + dy;
    if (oy < 0 || oy >= out_hw) continue;
    for (int x = 0; x < nw; ++x) {
      int ox = x + dx;
      if (ox < 0 || ox >= out_hw) continue;
      const uint8_t* p = scaled.px(x, y);
      out.set(ox, oy, {p[0], p[1], p[2]});
    }
  }
  img = std::move(out);
  for (auto& o : s.objects) {
    o.x1 = o.x1 * sx + dx;
    o.x2 = o.x2 * sx + dx;
    o.y1 = o.y1 * sy + dy;
    o.y2 = o.y2 * sy + dy;
  }
  for (auto& g : s.grasps) {
    g.cx = g.cx * sx + dx;
    g.cy = g.cy * sy + dy;
    g.w *= sx;
    g.h *= sy;
  }
  s.width = out_hw;
  s.height = out_hw;
}

inline void gamut_jitter(Image& img, double dh, double s_mul, double v_mul) {
  for (int i = 0; i < img.w * img.h; ++i) {
    uint8_t* p = &img.rgb[static_cast<size_t>(i) * 3];
    double h, s, v;
    rgb_to_hsv(p[0], p[1], p[2], h, s, v);
    hsv_to_rgb(h + dh, s * s_mul, v * v_mul, p[0], p[1], p[2]);
  }
}

// Training-time augmentation: flip p=0.5, scale in [0.8, 1.25], HSV jitter
// (hue +-10 deg, saturation/value x[0.8, 1.2]).
inline void augment(SceneAnnotation& s, Image& img, Rng& rng, int input_hw) {
  if (rng.bernoulli(0.5)) flip_horizontal(s, img);
  double factor = rng.uniform(0.8, 1.25) * input_hw / img.w;
  scale_to_canvas(s, img, factor, input_hw);
  gamut_jitter(img, rng.uniform(-10.0, 10.0), rng.uniform(0.8, 1.2), rng.uniform(0.8, 1.2));
}

// Test-time preparation: resize to the square input only.
inline void prepare_eval(SceneAnnotation& s, Image& img, int input_hw) {
  double sx = static_cast<double>(input_hw) / img.w;
  double sy = static_cast<double>(input_hw) / img.h;
  img = resize_nearest(img, input_hw, input_hw);
  for (auto& o : s.objects) {
    o.x1 *= sx;
    o.x2 *= sx;
    o.y1 *= sy;
    o.y2 *= sy;
  }
  for (auto& g : s.grasps) {
    double t = g.theta_deg * M_PI / 180.0;
    double c = std::cos(t), sn = std::sin(t);
    g.cx *= sx;
    g.cy *= sy;
    g.w *= std::sqrt(sx * c * sx * c + sy * sn * sy * sn);
    g.h *= std::sqrt(sx * sn * sx * sn + sy * c * sy * c);
    g.theta_deg = normalize_theta(std::atan2(sy * sn, sx * c) * 180.0 / M_PI);
  }
  s.width = input_hw;
  s.height = input_hw;
}

}  // namespace stackgrasp
