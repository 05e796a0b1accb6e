#pragma once

// Test-only synthetic landmark generators.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "lpmm/dataset.hpp"
#include "lpmm/landmarks.hpp"

namespace lpmm::synth {

/// A frontal 68-point face roughly centered in the canonical square.
inline LandmarkSet reference_face() {
  std::vector<std::pair<double, double>> p;
  constexpr double pi = std::numbers::pi;
  for (int i = 0; i <= 16; ++i) {  // jaw
    const double t = pi * i / 16.0;
    p.emplace_back(0.5 - 0.27 * std::cos(t), 0.42 + 0.33 * std::sin(t));
  }
  for (int i = 0; i < 5; ++i) p.emplace_back(0.30 + 0.04 * i, 0.36 - 0.015 * std::sin(pi * i / 4));
  for (int i = 0; i < 5; ++i) p.emplace_back(0.54 + 0.04 * i, 0.36 - 0.015 * std::sin(pi * i / 4));
  for (int i = 0; i < 4; ++i) p.emplace_back(0.5, 0.42 + 0.035 * i);
  for (int i = 0; i < 5; ++i) p.emplace_back(0.46 + 0.02 * i, 0.57 + 0.01 * std::sin(pi * i / 4));
  auto eye = [&](double cx) {
    const double r = 0.035;
    for (int i = 0; i < 6; ++i) {
      const double t = pi - 2.0 * pi * i / 6.0;
      p.emplace_back(cx + r * std::cos(t), 0.42 - 0.5 * r * std::sin(t));
    }
  };
  eye(0.38);
  eye(0.62);
  for (int i = 0; i < 12; ++i) {  // outer lip
    const double t = pi - 2.0 * pi * i / 12.0;
    p.emplace_back(0.5 + 0.08 * std::cos(t), 0.67 - 0.035 * std::sin(t));
  }
  for (int i = 0; i < 8; ++i) {  // inner lip
    const double t = pi - 2.0 * pi * i / 8.0;
    p.emplace_back(0.5 + 0.05 * std::cos(t), 0.67 - 0.015 * std::sin(t));
  }
  return LandmarkSet::from_points(p);
}

/// `count` orthonormal directions in R^dim from a seeded Gaussian QR.
inline Eigen::MatrixXd random_orthonormal(int dim, int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g(dim, count);
  for (int c = 0; c < count; ++c)
    for (int r = 0; r < dim; ++r) g(r, c) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  return Eigen::MatrixXd(qr.householderQ()).leftCols(count);
}

struct LinearFaceModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd directions;  // orthonormal columns
  std::vector<double> variances;
};

inline LinearFaceModel linear_face_model(const std::vector<double>& variances, std::uint64_t seed) {
  const auto face = reference_face();
  return {face.flat(),
          random_orthonormal(static_cast<int>(face.flat().size()),
                             static_cast<int>(variances.size()), seed),
          variances};
}

/// mean + sum_i c_i u_i with c_i ~ N(0, var_i), plus isotropic noise.
inline std::vector<LandmarkSet> sample_faces(const LinearFaceModel& gen, int count,
                                             std::uint64_t seed, double noise_sigma = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<LandmarkSet> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int j = 0; j < count; ++j) {
    Eigen::VectorXd l = gen.mean;
    for (std::size_t i = 0; i < gen.variances.size(); ++i)
      l += std::sqrt(gen.variances[i]) * normal(rng) * gen.directions.col(static_cast<Eigen::Index>(i));
    if (noise_sigma > 0.0)
      for (Eigen::Index d = 0; d < l.size(); ++d) l[d] += noise_sigma * normal(rng);
    out.emplace_back(std::move(l));
  }
  return out;
}

inline LandmarkDataset sample_dataset(const LinearFaceModel& gen, int count, std::uint64_t seed,
                                      double noise_sigma = 0.0) {
  return LandmarkDataset::from_landmarks(sample_faces(gen, count, seed, noise_sigma));
}

inline Eigen::VectorXd random_vector(int size, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(size);
  for (int i = 0; i < size; ++i) v[i] = scale * normal(rng);
  return v;
}

}  // namespace lpmm::synth
