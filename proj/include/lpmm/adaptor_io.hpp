#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "lpmm/io.hpp"
#include "lpmm/training.hpp"

namespace lpmm {

inline constexpr int kAdaptorFormatVersion = 1;

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {{"k", c.k},
          {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"lambda_rgb", c.lambda_rgb},
          {"lambda_pose_reg", c.lambda_pose_reg},
          {"batch_size", c.batch_size},
          {"steps", c.steps},
          {"seed", c.seed},
          {"loss_variant", c.loss_variant == LossVariant::rgb ? "rgb" : "latent"},
          {"pose_reg_enabled", c.pose_reg_enabled}};
}

/// Missing keys keep their defaults.
inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  if (!j.is_object()) throw Error(ErrorCode::malformed_input, "train config must be an object");
  try {
    c.k = j.value("k", c.k);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.lambda_rgb = j.value("lambda_rgb", c.lambda_rgb);
    c.lambda_pose_reg = j.value("lambda_pose_reg", c.lambda_pose_reg);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.steps = j.value("steps", c.steps);
    c.seed = j.value("seed", c.seed);
    c.pose_reg_enabled = j.value("pose_reg_enabled", c.pose_reg_enabled);
    const std::string variant = j.value("loss_variant", std::string(c.loss_variant == LossVariant::rgb ? "rgb" : "latent"));
    if (variant == "rgb") {
      c.loss_variant = LossVariant::rgb;
    } else if (variant == "latent") {
      c.loss_variant = LossVariant::latent;
    } else {
      throw Error(ErrorCode::malformed_input, "loss_variant must be \"rgb\" or \"latent\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::malformed_input, std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json loss_to_json(const LossBreakdown& l) {
  return {{"rgb", l.rgb}, {"pose_reg", l.pose_reg}, {"total", l.total}};
}

struct AdaptorFile {
  AdaptorNet net;
  TrainConfig config;
  std::uint64_t surrogate_seed = 0;
  std::string model_fingerprint;
  std::optional<RasterConfig> raster;
};

inline nlohmann::json adaptor_to_json(const AdaptorNet& net, const TrainConfig& cfg,
                                      std::uint64_t surrogate_seed,
                                      const std::string& model_fingerprint,
                                      std::optional<RasterConfig> raster = {}) {
  auto weights = nlohmann::json::array();
  auto biases = nlohmann::json::array();
  for (int l = 0; l < kAdaptorLayers; ++l) {
    const auto& m = net.params().weights[l];
    auto rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(io::to_json(m.row(r).transpose()));
    weights.push_back(std::move(rows));
    biases.push_back(io::to_json(net.params().biases[l]));
  }
  const auto widths = net.widths();
  nlohmann::json out = {{"format", "lpmm-adaptor"},
          {"version", kAdaptorFormatVersion},
          {"k", net.k()},
          {"w", net.w()},
          {"widths", widths},
          {"activation", "elu"},
          {"weights", weights},
          {"biases", biases},
          {"mean_latent", io::to_json(net.mean_latent())},
          {"train_config", train_config_to_json(cfg)},
          {"surrogate_seed", surrogate_seed},
          {"model_fingerprint", model_fingerprint}};
  if (raster) out["raster"] = {{"h", raster->height}, {"w", raster->width}, {"sigma", raster->sigma}};
  return out;
}

inline AdaptorFile adaptor_from_json(const nlohmann::json& j,
                                     std::optional<std::string_view> expected_fingerprint = {}) {
  io::check_header(j, "lpmm-adaptor", kAdaptorFormatVersion);
  const int k = io::require_as<int>(j, "k");
  const int w = io::require_as<int>(j, "w");
  const auto widths = io::require_as<std::vector<int>>(j, "widths");
  if (widths != std::vector<int>{k, 2 * k, 4 * k, w})
    throw Error(ErrorCode::dimension_mismatch, "adaptor widths must be (k, 2k, 4k, w)");
  const auto& wj = io::require(j, "weights");
  const auto& bj = io::require(j, "biases");
  if (!wj.is_array() || !bj.is_array() || wj.size() != kAdaptorLayers || bj.size() != kAdaptorLayers)
    throw Error(ErrorCode::malformed_input, "adaptor needs 3 weight matrices and 3 bias vectors");
  MlpParams p;
  for (int l = 0; l < kAdaptorLayers; ++l) {
    const auto& rows = wj[l];
    if (!rows.is_array() || static_cast<int>(rows.size()) != widths[l + 1])
      throw Error(ErrorCode::dimension_mismatch, "weight matrix row count mismatch");
    p.weights[l].resize(widths[l + 1], widths[l]);
    for (int r = 0; r < widths[l + 1]; ++r) {
      const Eigen::VectorXd row = io::vector_from_json(rows[r], "weights");
      if (row.size() != widths[l])
        throw Error(ErrorCode::dimension_mismatch, "weight matrix column count mismatch");
      p.weights[l].row(r) = row.transpose();
    }
    p.biases[l] = io::vector_from_json(bj[l], "biases");
  }
  const auto fp = j.value("model_fingerprint", std::string{});
  if (expected_fingerprint && fp != *expected_fingerprint)
    throw Error(ErrorCode::fingerprint_mismatch, "adaptor built for different model");
  AdaptorNet net(std::move(p), io::vector_from_json(io::require(j, "mean_latent"), "mean_latent"));
  TrainConfig cfg = j.contains("train_config") ? train_config_from_json(j["train_config"]) : TrainConfig{};
  std::optional<RasterConfig> raster;
  if (j.contains("raster")) {
    const auto& r = j["raster"];
    raster = RasterConfig{io::require_as<int>(r, "h"), io::require_as<int>(r, "w"),
                          io::require_as<double>(r, "sigma")};
  }
  return {std::move(net), cfg, j.value("surrogate_seed", std::uint64_t{0}), fp, raster};
}

inline nlohmann::json report_to_json(const TrainingReport& r) {
  auto curve = nlohmann::json::array();
  for (const auto& l : r.loss_curve) curve.push_back(loss_to_json(l));
  return {{"loss_curve", curve},
          {"initial", loss_to_json(r.initial)},
          {"final", loss_to_json(r.final)},
          {"final_pose_residual", r.final_pose_residual},
          {"config", train_config_to_json(r.config)},
          {"samples", r.samples},
          {"mean_latent_source", r.mean_latent_source},
          {"l1_reduction", "mean over elements"},
          {"steps_completed", r.steps_completed},
          {"cancelled", r.cancelled},
          {"wall_seconds", r.wall_seconds}};
}

}  // namespace lpmm
