#pragma once

// Two-stage optimization. Stage 1 trains the backbone, aggregation, and
// detector under L_O alone. Stage 2 freezes those prefixes and trains the
// grasp and relation heads under alpha*L_G + beta*L_R, with relation crops
// taken at ground-truth boxes. Each batch element runs against a parameter
// replica that shares weight storage but owns its gradient buffer, so batches
// can run on worker threads; gradients reduce in slot order, which makes the
// result independent of the thread count.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "stackgrasp/config.hpp"
#include "stackgrasp/data.hpp"
#include "stackgrasp/model.hpp"
#include "stackgrasp/params.hpp"
#include "stackgrasp/rng.hpp"

namespace stackgrasp {

struct TrainSample {
  Image image;
  SceneAnnotation scene;
};

struct IterStats {
  int iteration = 0;  // 1-based, as logged
  double lr = 0;
  double l_o = 0, l_g = 0, l_r = 0, total = 0;
};

// lr for 0-based iteration index i: divided every decay_every iterations.
// Stage 2 starts from lr_stage2 when that is set.
inline double lr_at(const ModelConfig& cfg, int i, int stage = 1) {
  double base = stage == 2 && cfg.lr_stage2 > 0 ? cfg.lr_stage2 : cfg.lr;
  return base / std::pow(cfg.decay_div, i / cfg.decay_every);
}

inline void write_log_header(std::ostream& os) {
  os << "iteration,lr,l_o,l_g,l_r,total\n";
}

inline void write_log_row(std::ostream& os, const IterStats& st) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%.6f,%.6f,%.6f\n", st.iteration, st.lr,
                st.l_o, st.l_g, st.l_r, st.total);
  os << buf;
}

namespace detail {

template <typename T>
ParamStore<T> make_replica(const ParamStore<T>& master) {
  ParamStore<T> rep;
  for (const auto& name : master.names())
    rep.add(name, master.get(name).share_data_leaf(master.trainable(name)),
            master.trainable(name));
  return rep;
}

}  // namespace detail

// One optimization stage over `data`. stage 1 minimizes L_O; stage 2 expects
// the caller to have frozen backbone/msfa/det and minimizes
// alpha*L_G + beta*L_R while still logging L_O. Sample picks and augmentation
// seeds are drawn from `rng` up front each iteration, so results do not
// depend on worker scheduling.
template <typename T>
std::vector<IterStats> train_stage(ParamStore<T>& ps, const ModelConfig& cfg,
                                   const std::vector<TrainSample>& data, int stage, Rng& rng,
                                   std::ostream* log = nullptr,
                                   const std::function<void(const IterStats&)>& on_iter = {}) {
  if (data.empty()) throw DataError("train_stage: empty dataset");
  if (stage != 1 && stage != 2) throw DataError("train_stage: stage must be 1 or 2");
  cfg.check();
  int batch = std::max(1, cfg.batch);
  int workers = std::clamp(thread_cap(), 1, batch);

  std::vector<ParamStore<T>> replicas;
  replicas.reserve(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i) replicas.push_back(detail::make_replica(ps));

  if (log) write_log_header(*log);
  std::vector<IterStats> history;
  history.reserve(static_cast<size_t>(cfg.iters));

  std::vector<int> pick(static_cast<size_t>(batch));
  std::vector<uint64_t> aug_seed(static_cast<size_t>(batch));
  std::vector<IterStats> slot_stats(static_cast<size_t>(batch));

  for (int it = 0; it < cfg.iters; ++it) {
    double lr = lr_at(cfg, it, stage);
    for (int s = 0; s < batch; ++s) {
      pick[static_cast<size_t>(s)] = rng.uniform_int(0, static_cast<int>(data.size()) - 1);
      aug_seed[static_cast<size_t>(s)] = rng.next_u64();
    }

    auto run_slot = [&](int s) {
      const TrainSample& src = data[static_cast<size_t>(pick[static_cast<size_t>(s)])];
      Image img = src.image;
      SceneAnnotation scn = src.scene;
      if (cfg.augment) {
        Rng arng(aug_seed[static_cast<size_t>(s)]);
        augment(scn, img, arng, cfg.input_hw);
      } else {
        prepare_eval(scn, img, cfg.input_hw);
      }
      Tensor<T> x = image_to_tensor<T>(img);
      auto out = total_loss(replicas[static_cast<size_t>(s)], cfg, x, scn, true, stage == 2);
      IterStats& st = slot_stats[static_cast<size_t>(s)];
      st.l_o = out.l_o.item();
      st.l_g = out.l_g.item();
      st.l_r = out.l_r.item();
      Tensor<T> objective =
          stage == 1 ? out.l_o
                     : add(scale(out.l_g, T(cfg.alpha)), scale(out.l_r, T(cfg.beta)));
      st.total = objective.item();
      Tensor<T> scaled = scale(objective, T(1) / T(batch));
      backward(scaled);
    };

    if (workers <= 1) {
      for (int s = 0; s < batch; ++s) run_slot(s);
    } else {
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
          for (int s = w; s < batch; s += workers) run_slot(s);
        });
      for (auto& th : pool) th.join();
    }

    IterStats st;
    st.iteration = it + 1;
    st.lr = lr;
    for (int s = 0; s < batch; ++s) {
      st.l_o += slot_stats[static_cast<size_t>(s)].l_o / batch;
      st.l_g += slot_stats[static_cast<size_t>(s)].l_g / batch;
      st.l_r += slot_stats[static_cast<size_t>(s)].l_r / batch;
      st.total += slot_stats[static_cast<size_t>(s)].total / batch;
    }

    // reduce replica gradients in slot order, then step
    for (int s = 0; s < batch; ++s) {
      for (const auto& name : ps.names()) {
        if (!ps.trainable(name)) continue;
        auto& dst = ps.get(name).grad();
        auto& srcg = replicas[static_cast<size_t>(s)].get(name).grad();
        for (size_t i = 0; i < dst.size(); ++i) dst[i] += srcg[i];
        replicas[static_cast<size_t>(s)].get(name).zero_grad();
      }
    }
    ps.sgd_step(static_cast<T>(lr));

    if (log) write_log_row(*log, st);
    if (on_iter) on_iter(st);
    history.push_back(st);
  }
  return history;
}

template <typename T>
std::vector<IterStats> train_stage1(ParamStore<T>& ps, const ModelConfig& cfg,
                                    const std::vector<TrainSample>& data, Rng& rng,
                                    std::ostream* log = nullptr) {
  return train_stage(ps, cfg, data, 1, rng, log);
}

// Freezes everything upstream of the grasp and relation heads, then trains
// those heads. The frozen tensors are bit-identical afterwards.
template <typename T>
std::vector<IterStats> train_stage2(ParamStore<T>& ps, const ModelConfig& cfg,
                                    const std::vector<TrainSample>& data, Rng& rng,
                                    std::ostream* log = nullptr) {
  ps.set_trainable_prefix("backbone/", false);
  ps.set_trainable_prefix("msfa/", false);
  ps.set_trainable_prefix("det/", false);
  return train_stage(ps, cfg, data, 2, rng, log);
}

}  // namespace stackgrasp
