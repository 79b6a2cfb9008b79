#pragma once

// The standard gradient verification battery: every differentiable op against
// central differences, then a whole-network loss check on a reduced
// configuration. Shared by the grad-check subcommand and the acceptance gate.

#include <functional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "stackgrasp/data.hpp"
#include "stackgrasp/gradcheck.hpp"
#include "stackgrasp/losses.hpp"
#include "stackgrasp/model.hpp"

namespace stackgrasp {

namespace detail {

inline Tensor<double> gauss(Shape s, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = d(gen);
  return Tensor<double>::from(std::move(v), std::move(s));
}

// probabilities bounded away from 0/1 so bce/nll slopes stay finite
inline Tensor<double> probs(Shape s, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> d(0.05, 0.95);
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = d(gen);
  return Tensor<double>::from(std::move(v), std::move(s));
}

}  // namespace detail

struct GradSuiteResult {
  int ops = 0;
  int failures = 0;
  bool e2e_pass = true;
  double e2e_max_rel_err = 0.0;
};

// Runs every op check at `tol`, streaming one line per op. Returns the tally.
inline GradSuiteResult run_grad_suite(uint64_t seed, double tol, std::ostream& os) {
  GradSuiteResult res;
  using Build = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

  auto run = [&](const std::string& name, const Build& build,
                 std::vector<Tensor<double>> ins) {
    auto rep = grad_check(build, ins, tol);
    ++res.ops;
    if (!rep.pass) ++res.failures;
    char line[160];
    std::snprintf(line, sizeof line, "%-22s %-4s max_rel_err=%.3e checked=%d excluded=%d\n",
                  name.c_str(), rep.pass ? "ok" : "FAIL", rep.max_rel_err, rep.checked,
                  rep.excluded);
    os << line;
  };

  std::mt19937_64 gen(seed);
  auto g = [&](Shape s, double sc = 1.0) { return detail::gauss(std::move(s), gen, sc); };

  run("conv2d", [](const auto& v) { return sum(conv2d(v[0], v[1], v[2], 1, 1)); },
      {g({1, 2, 5, 5}), g({3, 2, 3, 3}), g({3})});
  run("conv2d_stride2", [](const auto& v) { return sum(conv2d(v[0], v[1], v[2], 2, 0)); },
      {g({1, 2, 6, 6}), g({2, 2, 3, 3}), g({2})});
  run("conv2d_biasfree",
      [](const auto& v) { return sum(conv2d(v[0], v[1], Tensor<double>())); },
      {g({1, 3, 4, 4}), g({2, 3, 1, 1})});
  run("linear", [](const auto& v) { return sum(linear(v[0], v[1], v[2])); },
      {g({3, 4}), g({2, 4}), g({2})});
  run("relu", [](const auto& v) { return sum(relu(v[0])); }, {g({4, 5}, 2.0)});
  run("sigmoid", [](const auto& v) { return sum(sigmoid(v[0])); }, {g({4, 5})});
  run("softmax", [](const auto& v) { return sum(sigmoid(softmax(v[0]))); }, {g({3, 4})});
  run("maxpool2d", [](const auto& v) { return sum(maxpool2d(v[0], 2, 2)); },
      {g({1, 2, 6, 6}, 3.0)});
  run("adaptive_maxpool2d",
      [](const auto& v) { return sum(adaptive_maxpool2d(v[0], 2, 2)); },
      {g({1, 2, 5, 5}, 3.0)});
  run("upsample_nearest",
      [](const auto& v) { return sum(sigmoid(upsample_nearest(v[0], 6, 6))); },
      {g({1, 2, 3, 3})});
  run("concat",
      [](const auto& v) { return sum(sigmoid(concat<double>({v[0], v[1]}, 1))); },
      {g({2, 3}), g({2, 2})});
  run("slice_axis", [](const auto& v) { return sum(sigmoid(slice_axis(v[0], 1, 1, 3))); },
      {g({3, 5})});
  run("add", [](const auto& v) { return sum(sigmoid(add(v[0], v[1]))); },
      {g({3, 4}), g({3, 4})});
  run("scale", [](const auto& v) { return sum(sigmoid(scale(v[0], 1.7))); }, {g({3, 4})});
  run("reshape", [](const auto& v) { return sum(sigmoid(reshape(v[0], {6, 2}))); },
      {g({3, 4})});
  run("roi_pool",
      [](const auto& v) { return sum(roi_pool(v[0], RoiBox{0.7, 0.4, 4.3, 3.6}, 3, 3)); },
      {g({1, 2, 6, 6}, 3.0)});
  run("chw_to_rows", [](const auto& v) { return sum(sigmoid(chw_to_rows(v[0]))); },
      {g({1, 3, 2, 2})});
  run("gather_rows",
      [](const auto& v) { return sum(sigmoid(gather_rows(v[0], {0, 2, 2, 3}))); },
      {g({4, 3})});
  run("smooth_l1", [](const auto& v) { return smooth_l1(v[0], v[1]); },
      {g({3, 4}), g({3, 4})});
  run("cross_entropy",
      [](const auto& v) { return cross_entropy(v[0], v[1], true); },
      {detail::probs({3, 4}, gen), g({3, 4})});
  run("bce", [](const auto& v) { return bce(v[0], sigmoid(v[1]), true); },
      {detail::probs({3, 4}, gen), g({3, 4})});
  run("bce_weighted",
      [](const auto& v) {
        auto w = Tensor<double>::from({0.5, 1, 0, 2, 1, 1}, {2, 3});
        return bce(v[0], sigmoid(v[1]), false, w);
      },
      {detail::probs({2, 3}, gen), g({2, 3})});
  run("nll_relation", [](const auto& v) { return nll_relation(softmax(v[0]), 1); },
      {g({1, 3})});
  return res;
}

// Whole-pipeline check: composite loss on a reduced network and a stacked
// two-block scene, analytic vs central differences in double precision.
inline GradSuiteResult run_e2e_check(uint64_t seed, double tol, std::ostream& os,
                                     size_t stride = 701) {
  ModelConfig cfg;
  cfg.input_hw = 48;
  cfg.channels = {4, 6, 8};
  cfg.fusion_channels = 6;
  cfg.n_classes = 2;
  cfg.n_angle_bins = 5;

  Rng rng(seed);
  auto ps = build_params<double>(cfg, rng);
  SynthConfig sc;
  sc.seed = static_cast<unsigned>(seed);
  sc.width = 48;
  sc.height = 48;
  sc.min_objects = 2;
  sc.max_objects = 2;
  sc.min_size = 12;
  sc.max_size = 18;
  sc.n_classes = 2;
  sc.stack_prob = 1.0;
  auto [img, scene] = synth_generate(sc);
  auto x = image_to_tensor<double>(img);

  std::vector<Tensor<double>> leaves;
  for (const auto& name : ps.names()) leaves.push_back(ps.get(name));
  auto build = [&](const std::vector<Tensor<double>>&) {
    return total_loss(ps, cfg, x, scene).total;
  };
  auto rep = grad_check(build, leaves, tol, 1e-4, stride);

  GradSuiteResult res;
  res.e2e_pass = rep.pass;
  res.e2e_max_rel_err = rep.max_rel_err;
  if (!rep.pass) res.failures = 1;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %-4s max_rel_err=%.3e checked=%d excluded=%d\n",
                "end_to_end_loss", rep.pass ? "ok" : "FAIL", rep.max_rel_err, rep.checked,
                rep.excluded);
  os << line;
  return res;
}

}  // namespace stackgrasp
