#pragma once

#include <string>
#include <string_view>

#include "lpmm/io.hpp"
#include "lpmm/model.hpp"

namespace lpmm {

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json model_to_json(const LpmmModel& model) {
  auto basis = nlohmann::json::array();
  for (Eigen::Index c = 0; c < model.basis().cols(); ++c)
    basis.push_back(io::to_json(model.basis().col(c)));
  return {{"format", "lpmm-model"},
          {"version", kModelFormatVersion},
          {"n", model.n()},
          {"m", model.m()},
          {"mean", io::to_json(model.mean())},
          {"eigenvalues", io::to_json(model.eigenvalues())},
          {"basis", basis},
          {"dataset_fingerprint", model.fingerprint()},
          {"covariance_normalization", "sample (N-1)"},
          {"warnings", model.warnings()}};
}

inline std::string serialize_model(const LpmmModel& model) { return model_to_json(model).dump(); }

/// Loads a model file, re-checking every model invariant.
inline LpmmModel model_from_json(const nlohmann::json& j) {
  io::check_header(j, "lpmm-model", kModelFormatVersion);
  const int n = io::require_as<int>(j, "n");
  const int m = io::require_as<int>(j, "m");
  Eigen::VectorXd mean = io::vector_from_json(io::require(j, "mean"), "mean");
  Eigen::VectorXd eig = io::vector_from_json(io::require(j, "eigenvalues"), "eigenvalues");
  const auto& cols = io::require(j, "basis");
  if (n < 1 || mean.size() != 2 * n || eig.size() != m || !cols.is_array() ||
      static_cast<int>(cols.size()) != m)
    throw Error(ErrorCode::dimension_mismatch, "model file shapes disagree with n/m");
  Eigen::MatrixXd basis(2 * n, m);
  for (int c = 0; c < m; ++c) {
    Eigen::VectorXd col = io::vector_from_json(cols[c], "basis");
    if (col.size() != 2 * n)
      throw Error(ErrorCode::dimension_mismatch, "basis column has wrong length");
    basis.col(c) = col;
  }
  std::vector<std::string> warnings;
  if (j.contains("warnings") && j["warnings"].is_array())
    for (const auto& w : j["warnings"])
      if (w.is_string()) warnings.push_back(w.get<std::string>());
  return LpmmModel(std::move(mean), std::move(basis), std::move(eig),
                   io::require_as<std::string>(j, "dataset_fingerprint"), std::move(warnings));
}

inline LpmmModel deserialize_model(std::string_view text) {
  return model_from_json(io::parse_json(text));
}

}  // namespace lpmm
