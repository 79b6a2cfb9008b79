#pragma once

// Model + training configuration as a flat key=value text file. Every run
// echoes the resolved config so logs are self-describing.

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stackgrasp/errors.hpp"

namespace stackgrasp {

struct Anchor {
  double w = 0, h = 0;
};

struct ModelConfig {
  int input_hw = 96;                       // square input, px
  std::vector<int> strides = {2, 4, 8};    // per-scale feature strides
  std::vector<int> channels = {16, 32, 64};
  int fusion_channels = 32;
  int n_classes = 4;                       // foreground classes, 1-based ids
  int n_angle_bins = 19;
  std::vector<Anchor> anchors = {{12, 6}, {24, 10}, {40, 16}};
  Anchor det_anchor = {32, 32};
  double alpha = 5, beta = 5;              // loss weights
  double lr = 0.01;
  double lr_stage2 = 0.002;                // stage-2 base lr; 0 reuses lr
  int batch = 8;
  int iters = 500;
  int decay_every = 10000;                 // lr divided every this many iters
  double decay_div = 10;
  bool msfa = true;
  int msfa_rounds = 1;                     // top-down+bottom-up pass pairs
  bool short_circuit = true;               // relation empty-intersection rule
  double score_thresh = 0.5;               // detector
  double nms_iou = 0.45;
  double grasp_conf_thresh = 0.5;
  double noobj_weight = 0.05;              // grasp confidence negatives
  bool grasp_loss_mean = false;            // sum over entries by default
  double pos_weight = 32;                  // detector positive-cell CE weight
  double box_weight = 4;                   // detector box regression scale
  bool augment = true;
  unsigned seed = 0;

  void check() const {
    if (strides.size() != 3) throw DataError("config: exactly 3 strides required");
    if (channels.size() != 3) throw DataError("config: exactly 3 channels required");
    if (anchors.size() != 3) throw DataError("config: exactly 3 anchors required");
    for (int s : strides)
      if (s <= 0 || input_hw % s != 0)
        throw DataError("config: input_hw " + std::to_string(input_hw) +
                        " not divisible by stride " + std::to_string(s));
    if (n_angle_bins <= 0) throw DataError("config: n_angle_bins must be positive");
    if (n_classes <= 0) throw DataError("config: n_classes must be positive");
  }

  int grasp_scale() const { return 1; }    // middle scale index feeds the grasp head
  int detect_scale() const { return 1; }
  int relation_scale() const { return msfa ? 0 : 1; }  // finest fused, or raw middle
};

namespace detail {

inline std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::string fmt_num(double v) {
  std::ostringstream os;
  os << v;  // shortest round-trippable-ish form for config echo
  return os.str();
}

inline std::string join_anchors(const std::vector<Anchor>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += fmt_num(v[i].w) + "x" + fmt_num(v[i].h);
  }
  return s;
}

inline std::vector<int> parse_ints(const std::string& s, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (...) {
      throw ParseError("config: bad integer '" + tok + "' for " + key);
    }
  }
  return out;
}

inline std::vector<Anchor> parse_anchors(const std::string& s, const std::string& key) {
  std::vector<Anchor> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    auto x = tok.find('x');
    if (x == std::string::npos)
      throw ParseError("config: anchor '" + tok + "' for " + key + " must be WxH");
    try {
      out.push_back({std::stod(tok.substr(0, x)), std::stod(tok.substr(x + 1))});
    } catch (...) {
      throw ParseError("config: bad anchor '" + tok + "' for " + key);
    }
  }
  return out;
}

}  // namespace detail

// key=value lines; '#' starts a comment; unknown keys are errors.
inline void apply_config_line(ModelConfig& cfg, const std::string& key,
                              const std::string& val) {
  auto d = [&] { try { return std::stod(val); } catch (...) {
    throw ParseError("config: bad number '" + val + "' for " + key); } };
  auto i = [&] { try { return std::stoi(val); } catch (...) {
    throw ParseError("config: bad integer '" + val + "' for " + key); } };
  auto b = [&] {
    if (val == "1" || val == "true") return true;
    if (val == "0" || val == "false") return false;
    throw ParseError("config: bad bool '" + val + "' for " + key);
  };
  if (key == "input_hw") cfg.input_hw = i();
  else if (key == "strides") cfg.strides = detail::parse_ints(val, key);
  else if (key == "channels") cfg.channels = detail::parse_ints(val, key);
  else if (key == "fusion_channels") cfg.fusion_channels = i();
  else if (key == "n_classes") cfg.n_classes = i();
  else if (key == "n_angle_bins") cfg.n_angle_bins = i();
  else if (key == "anchors") cfg.anchors = detail::parse_anchors(val, key);
  else if (key == "det_anchor") {
    auto a = detail::parse_anchors(val, key);
    if (a.size() != 1) throw ParseError("config: det_anchor takes one WxH pair");
    cfg.det_anchor = a[0];
  }
  else if (key == "alpha") cfg.alpha = d();
  else if (key == "beta") cfg.beta = d();
  else if (key == "lr") cfg.lr = d();
  else if (key == "lr_stage2") cfg.lr_stage2 = d();
  else if (key == "batch") cfg.batch = i();
  else if (key == "iters") cfg.iters = i();
  else if (key == "decay_every") cfg.decay_every = i();
  else if (key == "decay_div") cfg.decay_div = d();
  else if (key == "msfa") cfg.msfa = b();
  else if (key == "msfa_rounds") cfg.msfa_rounds = i();
  else if (key == "short_circuit") cfg.short_circuit = b();
  else if (key == "score_thresh") cfg.score_thresh = d();
  else if (key == "nms_iou") cfg.nms_iou = d();
  else if (key == "grasp_conf_thresh") cfg.grasp_conf_thresh = d();
  else if (key == "noobj_weight") cfg.noobj_weight = d();
  else if (key == "grasp_loss_mean") cfg.grasp_loss_mean = b();
  else if (key == "pos_weight") cfg.pos_weight = d();
  else if (key == "box_weight") cfg.box_weight = d();
  else if (key == "augment") cfg.augment = b();
  else if (key == "seed") cfg.seed = static_cast<unsigned>(std::stoul(val));
  else throw ParseError("config: unknown key '" + key + "'");
}

inline ModelConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("config: cannot open " + path);
  ModelConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // trim
    auto a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    auto z = line.find_last_not_of(" \t\r");
    line = line.substr(a, z - a + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) + ": expected key=value");
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto strip = [](std::string s) {
      auto p = s.find_first_not_of(" \t");
      auto q = s.find_last_not_of(" \t");
      return p == std::string::npos ? std::string() : s.substr(p, q - p + 1);
    };
    try {
      apply_config_line(cfg, strip(key), strip(val));
    } catch (const ParseError& e) {
      throw ParseError(std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
    }
  }
  cfg.check();
  return cfg;
}

// Echo in a stable order; also the canonical config-file format.
inline std::string config_echo(const ModelConfig& c) {
  std::string s;
  auto n = detail::fmt_num;
  s += "input_hw=" + std::to_string(c.input_hw) + "\n";
  s += "strides=" + detail::join_ints(c.strides) + "\n";
  s += "channels=" + detail::join_ints(c.channels) + "\n";
  s += "fusion_channels=" + std::to_string(c.fusion_channels) + "\n";
  s += "n_classes=" + std::to_string(c.n_classes) + "\n";
  s += "n_angle_bins=" + std::to_string(c.n_angle_bins) + "\n";
  s += "anchors=" + detail::join_anchors(c.anchors) + "\n";
  s += "det_anchor=" + n(c.det_anchor.w) + "x" + n(c.det_anchor.h) + "\n";
  s += "alpha=" + n(c.alpha) + "\n";
  s += "beta=" + n(c.beta) + "\n";
  s += "lr=" + n(c.lr) + "\n";
  s += "lr_stage2=" + n(c.lr_stage2) + "\n";
  s += "batch=" + std::to_string(c.batch) + "\n";
  s += "iters=" + std::to_string(c.iters) + "\n";
  s += "decay_every=" + std::to_string(c.decay_every) + "\n";
  s += "decay_div=" + n(c.decay_div) + "\n";
  s += "msfa=" + std::string(c.msfa ? "1" : "0") + "\n";
  s += "msfa_rounds=" + std::to_string(c.msfa_rounds) + "\n";
  s += "short_circuit=" + std::string(c.short_circuit ? "1" : "0") + "\n";
  s += "score_thresh=" + n(c.score_thresh) + "\n";
  s += "nms_iou=" + n(c.nms_iou) + "\n";
  s += "grasp_conf_thresh=" + n(c.grasp_conf_thresh) + "\n";
  s += "noobj_weight=" + n(c.noobj_weight) + "\n";
  s += "grasp_loss_mean=" + std::string(c.grasp_loss_mean ? "1" : "0") + "\n";
  s += "pos_weight=" + n(c.pos_weight) + "\n";
  s += "box_weight=" + n(c.box_weight) + "\n";
  s += "augment=" + std::string(c.augment ? "1" : "0") + "\n";
  s += "seed=" + std::to_string(c.seed) + "\n";
  return s;
}

inline void save_config(const ModelConfig& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("config: cannot write " + path);
  f << config_echo(c);
}

// Effective worker cap: STACKGRASP_THREADS env, default 1.
inline int thread_cap() {
  if (const char* env = std::getenv("STACKGRASP_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

}  // namespace stackgrasp
