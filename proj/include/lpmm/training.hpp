#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "lpmm/adaptor.hpp"
#include "lpmm/dataset.hpp"
#include "lpmm/pose_edit.hpp"

namespace lpmm {

struct TrainingReport {
  std::vector<LossBreakdown> loss_curve;  // per-step batch loss, before the update
  LossBreakdown initial;                  // full dataset, initialized net
  LossBreakdown final;                    // full dataset, trained net
  double final_pose_residual = 0.0;       // |d(p_bar)|_1 / w
  TrainConfig config;
  std::size_t samples = 0;
  std::string mean_latent_source;
  int steps_completed = 0;
  bool cancelled = false;
  double wall_seconds = 0.0;
};

/// Optional hooks for long runs: progress after each step and cooperative stop.
struct TrainingHooks {
  std::function<void(int step, const LossBreakdown&)> on_step;
  const std::atomic<bool>* stop = nullptr;
};

inline LatentVector mean_latent(const SurrogateStack& stack, const LandmarkDataset& ds) {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(stack.w());
  for (const auto& r : ds.records()) acc += encode_landmarks(stack, r.landmarks).values();
  return LatentVector(acc / static_cast<double>(ds.size()));
}

/// Trains a freshly initialized adaptor against the frozen model and surrogate.
///
/// The mean latent is the average encoding over `dataset`. Batches are drawn
/// from a seeded permutation; a partial tail is dropped and the permutation
/// redrawn. Only the adaptor's weights change.
inline std::pair<AdaptorNet, TrainingReport> train_adaptor(const LpmmModel& model,
                                                           const SurrogateStack& stack,
                                                           const LandmarkDataset& dataset,
                                                           const TrainConfig& cfg,
                                                           const TrainingHooks& hooks = {}) {
  cfg.validate();
  if (!dataset.is_canonical())
    throw Error(ErrorCode::malformed_input, "training dataset contains pixel-space records");
  if (stack.n() != model.n())
    throw Error(ErrorCode::dimension_mismatch, "surrogate and model point counts differ");
  const auto started = std::chrono::steady_clock::now();

  const LatentVector v_bar = mean_latent(stack, dataset);
  AdaptorNet net = init_adaptor(cfg.k, stack.w(), v_bar, cfg.seed);
  const Eigen::VectorXd reg_params = pose_reg_anchor(net, model, stack);

  std::vector<PreparedSample> samples;
  samples.reserve(dataset.size());
  for (const auto& r : dataset.records())
    samples.push_back(prepare_sample(model, stack, r.landmarks, cfg));
  const auto all = detail::pointers(samples);

  TrainingReport report;
  report.config = cfg;
  report.samples = samples.size();
  report.mean_latent_source =
      "mean surrogate encoding over " + std::to_string(samples.size()) + " training samples";
  report.initial = evaluate_prepared(net, stack, all, reg_params, cfg, false).loss;

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const std::size_t batch = std::min<std::size_t>(cfg.batch_size, samples.size());

  AdamState adam = AdamState::for_net(net);
  std::vector<const PreparedSample*> current(batch);
  for (int step = 0; step < cfg.steps; ++step) {
    if (hooks.stop && hooks.stop->load()) {
      report.cancelled = true;
      break;
    }
    if (cursor + batch > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    for (std::size_t i = 0; i < batch; ++i) current[i] = &samples[order[cursor + i]];
    cursor += batch;

    auto [loss, grads] = evaluate_prepared(net, stack, current, reg_params, cfg, true);
    if (!std::isfinite(loss.total))
      throw Error(ErrorCode::non_finite_loss, "non-finite loss at step " + std::to_string(step));
    adam_step(net, grads, adam, cfg);
    report.loss_curve.push_back(loss);
    report.steps_completed = step + 1;
    if (hooks.on_step) hooks.on_step(step + 1, loss);
  }

  report.final = report.steps_completed == 0
                     ? report.initial
                     : evaluate_prepared(net, stack, all, reg_params, cfg, false).loss;
  report.final_pose_residual =
      forward_trace(net, reg_params).residual.cwiseAbs().sum() / static_cast<double>(net.w());
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return {std::move(net), std::move(report)};
}

enum class MixMode {
  parameter,        // A: latent of the edited driving parameters
  latent_residual,  // B: driving encoding plus the adaptor's edit delta
};

struct MixResult {
  ParamVector params;
  LatentVector latent;
};

/// Applies blendshape edits on top of a driving face.
inline MixResult mix_driving_with_params(const AdaptorNet& net, const LpmmModel& model,
                                         const SurrogateStack* stack, const LandmarkSet& driving,
                                         const std::vector<WeightedBlendshape>& edits,
                                         MixMode mode = MixMode::parameter) {
  const ParamVector p_drive = fit_params(model, driving, net.k());
  ParamVector p_mixed = apply_blendshapes(p_drive, edits);
  LatentVector mixed = adaptor_forward(net, p_mixed);
  if (mode == MixMode::parameter) return {std::move(p_mixed), std::move(mixed)};
  if (!stack) throw Error(ErrorCode::no_surrogate, "latent-residual mixing needs a surrogate");
  const Eigen::VectorXd delta = mixed.values() - adaptor_forward(net, p_drive).values();
  return {std::move(p_mixed),
          LatentVector(encode_landmarks(*stack, driving).values() + delta)};
}

}  // namespace lpmm
