// Workbench CLI: synthesize scenes, train the two stages, evaluate, run
// whole-image inference, plan clearing orders, verify gradients, and render
// scenes to SVG. Exit codes: 0 success, 1 usage, 2 data, 3 numeric-check
// failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "stackgrasp/config.hpp"
#include "stackgrasp/data.hpp"
#include "stackgrasp/gradsuite.hpp"
#include "stackgrasp/infer.hpp"
#include "stackgrasp/metrics.hpp"
#include "stackgrasp/model.hpp"
#include "stackgrasp/svg.hpp"
#include "stackgrasp/train.hpp"

namespace fs = std::filesystem;
using namespace stackgrasp;

namespace {

struct UsageError : Error {
  explicit UsageError(const std::string& m) : Error(m) {}
};

std::string num_tag(int i) {
  char b[16];
  std::snprintf(b, sizeof b, "%04d", i);
  return b;
}

std::vector<TrainSample> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<TrainSample> out;
  for (const auto& p : files) {
    TrainSample s;
    s.scene = load_scene(p.string());
    if (s.scene.image_ref.empty())
      throw DataError(p.string() + ": scene has no image reference");
    s.image = png_read((p.parent_path() / s.scene.image_ref).string());
    out.push_back(std::move(s));
  }
  return out;
}

int cmd_synth(const std::string& out_dir, int count, unsigned seed, int min_objects,
              int max_objects, int size, int classes) {
  SynthConfig sc;
  sc.min_objects = min_objects;
  sc.max_objects = max_objects;
  sc.width = size;
  sc.height = size;
  sc.n_classes = classes;
  // keep block bounds proportional when the canvas shrinks below the default
  sc.min_size = std::max(6, size * sc.min_size / 96);
  sc.max_size = std::max(sc.min_size + 2, size * sc.max_size / 96);
  std::printf("synth: out=%s count=%d seed=%u objects=%d..%d size=%d classes=%d\n",
              out_dir.c_str(), count, seed, min_objects, max_objects, size, classes);
  fs::create_directories(out_dir);
  std::ofstream manifest(fs::path(out_dir) / "manifest.txt");
  if (!manifest) throw DataError("cannot write manifest in " + out_dir);
  for (int i = 0; i < count; ++i) {
    sc.seed = seed + static_cast<unsigned>(i);
    auto [img, scene] = synth_generate(sc);
    std::string stem = "scene_" + num_tag(i);
    scene.image_ref = stem + ".png";
    png_write(img, (fs::path(out_dir) / (stem + ".png")).string());
    save_scene(scene, (fs::path(out_dir) / (stem + ".json")).string());
    manifest << stem << ".json " << stem << ".png seed=" << sc.seed << "\n";
  }
  std::printf("wrote %d scene pairs + manifest.txt\n", count);
  return 0;
}

int cmd_train(int stage, const std::string& data_dir, const std::string& config_path,
              const std::string& out_ckpt, const std::string& init_ckpt,
              std::string log_path) {
  if (stage == 2 && init_ckpt.empty())
    throw UsageError("--stage 2 requires --init with the stage-1 checkpoint");
  ModelConfig cfg = config_path.empty() ? ModelConfig{} : load_config(config_path);
  std::fputs(config_echo(cfg).c_str(), stdout);
  auto data = load_dataset(data_dir);
  if (data.empty()) throw DataError("no scenes found in " + data_dir);
  std::printf("dataset: %zu scenes, stage %d, %d iterations\n", data.size(), stage, cfg.iters);

  Rng rng(cfg.seed);
  auto ps = build_params<float>(cfg, rng);
  if (stage == 2) ps.load(init_ckpt);

  if (log_path.empty()) log_path = out_ckpt + ".csv";
  std::ofstream log(log_path);
  if (!log) throw DataError("cannot write log: " + log_path);

  auto history = stage == 1 ? train_stage1(ps, cfg, data, rng, &log)
                            : train_stage2(ps, cfg, data, rng, &log);
  ps.save(out_ckpt);
  std::printf("first total %.6f, last total %.6f\n", history.front().total,
              history.back().total);
  std::printf("checkpoint: %s\nlog: %s\n", out_ckpt.c_str(), log_path.c_str());
  return 0;
}

void print_report(const EvalReport& r) {
  std::printf("%-8s %-8s %-8s %-8s %-8s\n", "mAP", "OR", "OP", "IA", "grasp");
  std::printf("%-8.3f %-8.3f %-8.3f %-8.3f %-8.3f\n", r.map, r.or_recall, r.op_precision,
              r.ia_accuracy, r.grasp_accuracy);
  std::printf("IA by object count:");
  for (const auto& [n, v] : r.per_count_ia) std::printf("  %d: %.3f", n, v);
  std::printf("\nAP by class:");
  for (const auto& [c, v] : r.per_class_ap) std::printf("  %d: %.3f", c, v);
  std::printf("\n");
}

int cmd_eval(const std::string& data_dir, const std::string& ckpt,
             const std::string& config_path, const std::string& report_path, bool oracle) {
  if (!oracle && ckpt.empty()) throw UsageError("--ckpt required unless --oracle");
  ModelConfig cfg = config_path.empty() ? ModelConfig{} : load_config(config_path);
  std::fputs(config_echo(cfg).c_str(), stdout);
  auto data = load_dataset(data_dir);
  if (data.empty()) throw DataError("no scenes found in " + data_dir);

  std::vector<SceneAnnotation> gts;
  std::vector<ScenePrediction> preds;
  if (oracle) {
    for (const auto& s : data) {
      gts.push_back(s.scene);
      preds.push_back(prediction_from_annotation(s.scene));
    }
  } else {
    Rng rng(cfg.seed);
    auto ps = build_params<float>(cfg, rng);
    ps.load(ckpt);
    for (const auto& s : data) {
      SceneAnnotation gt = s.scene;
      Image img = s.image;
      prepare_eval(gt, img, cfg.input_hw);  // evaluate in the network frame
      gts.push_back(gt);
      preds.push_back(infer_scene(ps, cfg, img, /*break_cycles=*/true).pred);
    }
  }
  EvalReport rep = evaluate_scenes(preds, gts);
  print_report(rep);
  if (!report_path.empty()) {
    std::ofstream f(report_path);
    if (!f) throw DataError("cannot write report: " + report_path);
    f << report_to_json(rep) << "\n";
  }
  return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& image_path,
              const std::string& config_path, const std::string& out_json,
              const std::string& out_svg, bool break_cycles) {
  ModelConfig cfg = config_path.empty() ? ModelConfig{} : load_config(config_path);
  std::fputs(config_echo(cfg).c_str(), stdout);
  Rng rng(cfg.seed);
  auto ps = build_params<float>(cfg, rng);
  ps.load(ckpt);
  Image img = png_read(image_path);
  auto res = infer_scene(ps, cfg, img, break_cycles);

  std::printf("objects: %zu, grasps: %zu\n", res.pred.boxes.size(), res.pred.grasps.size());
  for (const auto& b : res.pred.boxes)
    std::printf("  box %d cls=%d score=%.3f [%.1f %.1f %.1f %.1f]\n", b.id, b.cls, b.score,
                b.x1, b.y1, b.x2, b.y2);
  for (const auto& [from, to] : res.broken)
    std::printf("broke cycle edge %d -> %d\n", from, to);
  std::printf("clearing order:");
  for (int id : res.clearing_order) std::printf(" %d", id);
  std::printf("\n");

  SceneAnnotation out;
  out.image_ref = fs::path(image_path).filename().string();
  out.width = cfg.input_hw;
  out.height = cfg.input_hw;
  out.objects = res.pred.boxes;
  out.grasps = res.pred.grasps;
  out.relations = res.relations;
  if (!out_json.empty()) save_scene(out, out_json);
  if (!out_svg.empty()) {
    std::ofstream f(out_svg);
    if (!f) throw DataError("cannot write svg: " + out_svg);
    f << render_scene_svg(out);
  }
  return 0;
}

int cmd_plan(const std::string& scene_path, int target, bool break_cycles) {
  SceneAnnotation scene = load_scene(scene_path);
  std::printf("plan: scene=%s objects=%zu relations=%zu target=%d break_cycles=%d\n",
              scene_path.c_str(), scene.objects.size(), scene.relations.size(), target,
              break_cycles ? 1 : 0);
  auto graph = build_graph(scene.objects, scene.relations);
  if (break_cycles)
    for (const auto& [from, to] : break_cycles_weakest_edge(graph))
      std::printf("broke cycle edge %d -> %d\n", from, to);
  std::vector<int> order =
      target >= 0 ? grasp_order_for_target(graph, target) : full_clearing_order(graph);
  std::printf("%s\n", relation_tree_json(graph, order).c_str());
  std::printf("order:");
  for (int id : order) std::printf(" %d", id);
  std::printf("\n");
  return 0;
}

int cmd_render(const std::string& scene_path, const std::string& out_path,
               const std::string& pred_path) {
  SceneAnnotation scene = load_scene(scene_path);
  SceneAnnotation pred;
  bool has_pred = !pred_path.empty();
  if (has_pred) pred = load_scene(pred_path);
  std::ofstream f(out_path);
  if (!f) throw DataError("cannot write svg: " + out_path);
  f << render_scene_svg(scene, has_pred ? &pred : nullptr);
  std::printf("wrote %s\n", out_path.c_str());
  return 0;
}

int cmd_grad_check(unsigned seed, double tol, double e2e_tol) {
  std::printf("grad-check: seed=%u tol=%g e2e_tol=%g\n", seed, tol, e2e_tol);
  auto suite = run_grad_suite(seed, tol, std::cout);
  auto e2e = run_e2e_check(seed, e2e_tol, std::cout);
  int failures = suite.failures + e2e.failures;
  std::printf("%d op checks, %d failures\n", suite.ops + 1, failures);
  return failures ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stacked-scene grasp workbench"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "generate synthetic scenes");
  std::string synth_out;
  int synth_count = 10, synth_min = 2, synth_max = 5, synth_size = 96, synth_classes = 4;
  unsigned synth_seed = 0;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--count", synth_count, "number of scenes");
  synth->add_option("--seed", synth_seed, "base seed; scene i uses seed+i");
  synth->add_option("--min-objects", synth_min, "minimum objects per scene");
  synth->add_option("--max-objects", synth_max, "maximum objects per scene");
  synth->add_option("--size", synth_size, "canvas size in px");
  synth->add_option("--classes", synth_classes, "number of object classes");

  auto* train = app.add_subcommand("train", "run one training stage");
  int train_stage_n = 1;
  std::string train_data, train_config, train_out, train_init, train_log;
  train->add_option("--stage", train_stage_n, "1 or 2")->required();
  train->add_option("--data", train_data, "scene directory")->required();
  train->add_option("--config", train_config, "key=value config file");
  train->add_option("--out", train_out, "checkpoint to write")->required();
  train->add_option("--init", train_init, "stage-1 checkpoint (stage 2)");
  train->add_option("--log", train_log, "loss CSV path (default: <out>.csv)");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string eval_data, eval_ckpt, eval_config, eval_report;
  bool eval_oracle = false;
  eval->add_option("--data", eval_data, "scene directory")->required();
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file");
  eval->add_option("--config", eval_config, "key=value config file");
  eval->add_option("--report", eval_report, "report JSON path");
  eval->add_flag("--oracle", eval_oracle, "feed ground truth as predictions");

  auto* infer = app.add_subcommand("infer", "run inference on one image");
  std::string infer_ckpt, infer_image, infer_config, infer_json, infer_svg;
  bool infer_break = false;
  infer->add_option("--ckpt", infer_ckpt, "checkpoint file")->required();
  infer->add_option("--image", infer_image, "input PNG")->required();
  infer->add_option("--config", infer_config, "key=value config file");
  infer->add_option("--out", infer_json, "prediction JSON path");
  infer->add_option("--render", infer_svg, "prediction SVG path");
  infer->add_flag("--break-cycles", infer_break, "drop weakest edges of cycles");

  auto* plan = app.add_subcommand("plan", "derive clearing order from a scene");
  std::string plan_scene;
  int plan_target = -1;
  bool plan_break = false;
  plan->add_option("--scene", plan_scene, "scene JSON")->required();
  plan->add_option("--target", plan_target, "object id to extract");
  plan->add_flag("--break-cycles", plan_break, "drop weakest edges of cycles");

  auto* render = app.add_subcommand("render", "render a scene to SVG");
  std::string render_scene, render_out, render_pred;
  render->add_option("--scene", render_scene, "scene JSON")->required();
  render->add_option("--out", render_out, "SVG path")->required();
  render->add_option("--pred", render_pred, "prediction scene JSON (dashed overlay)");

  auto* gc = app.add_subcommand("grad-check", "finite-difference gradient battery");
  unsigned gc_seed = 0;
  double gc_tol = 1e-6, gc_e2e_tol = 1e-2;
  gc->add_option("--seed", gc_seed, "rng seed");
  gc->add_option("--tol", gc_tol, "per-op relative tolerance");
  gc->add_option("--e2e-tol", gc_e2e_tol, "end-to-end relative tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed())
      return cmd_synth(synth_out, synth_count, synth_seed, synth_min, synth_max, synth_size,
                       synth_classes);
    if (train->parsed()) {
      if (train_stage_n != 1 && train_stage_n != 2) throw UsageError("--stage must be 1 or 2");
      return cmd_train(train_stage_n, train_data, train_config, train_out, train_init,
                       train_log);
    }
    if (eval->parsed())
      return cmd_eval(eval_data, eval_ckpt, eval_config, eval_report, eval_oracle);
    if (infer->parsed())
      return cmd_infer(infer_ckpt, infer_image, infer_config, infer_json, infer_svg,
                       infer_break);
    if (plan->parsed()) return cmd_plan(plan_scene, plan_target, plan_break);
    if (render->parsed()) return cmd_render(render_scene, render_out, render_pred);
    if (gc->parsed()) return cmd_grad_check(gc_seed, gc_tol, gc_e2e_tol);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const CycleError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    for (const auto& cyc : e.cycles) {
      std::fprintf(stderr, "cycle:");
      for (int id : cyc) std::fprintf(stderr, " %d", id);
      std::fprintf(stderr, "\n");
    }
    return 2;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    for (const auto& v : e.violations) std::fprintf(stderr, "  %s\n", v.c_str());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
