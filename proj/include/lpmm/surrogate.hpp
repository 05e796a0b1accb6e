#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "lpmm/error.hpp"
#include "lpmm/landmarks.hpp"

namespace lpmm {

/// Pose code produced by the surrogate encoder.
class LatentVector {
 public:
  LatentVector() = default;
  explicit LatentVector(Eigen::VectorXd values) : values_(std::move(values)) {
    if (!values_.allFinite()) throw Error(ErrorCode::non_finite, "latent is not finite");
  }
  static LatentVector zeros(int w) { return LatentVector(Eigen::VectorXd::Zero(w)); }

  int w() const noexcept { return static_cast<int>(values_.size()); }
  const Eigen::VectorXd& values() const noexcept { return values_; }

  friend bool operator==(const LatentVector& a, const LatentVector& b) {
    return a.values_.size() == b.values_.size() && a.values_ == b.values_;
  }

 private:
  Eigen::VectorXd values_;
};

struct RasterConfig {
  int height = 64;
  int width = 64;
  double sigma = 0.02;  // splat width in canonical units
};

/// Single-channel image, row r at canonical y = (r + 0.5) / height.
using Raster = Eigen::MatrixXd;

/// Linear pose encoder with orthonormal rows, its transpose decoder, and a
/// Gaussian-splat rasterizer over the decoded landmarks.
class SurrogateStack {
 public:
  SurrogateStack(Eigen::MatrixXd encode_matrix, Eigen::VectorXd anchor, RasterConfig raster,
                 std::uint64_t seed)
      : encode_(std::move(encode_matrix)), anchor_(std::move(anchor)), raster_(raster), seed_(seed) {
    if (encode_.cols() != anchor_.size() || encode_.rows() < 1 || encode_.rows() > encode_.cols())
      throw Error(ErrorCode::dimension_mismatch, "encoder must be w x 2n with 1 <= w <= 2n");
    if (!(raster_.sigma > 0.0) || raster_.height < 8 || raster_.width < 8)
      throw Error(ErrorCode::out_of_range, "raster needs sigma > 0 and at least 8x8 pixels");
    const Eigen::MatrixXd gram = encode_ * encode_.transpose();
    if ((gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() >= 1e-8)
      throw Error(ErrorCode::basis_not_orthonormal, "encoder rows not orthonormal");
  }

  int w() const noexcept { return static_cast<int>(encode_.rows()); }
  int n() const noexcept { return static_cast<int>(encode_.cols() / 2); }
  const Eigen::MatrixXd& encode_matrix() const noexcept { return encode_; }
  const Eigen::VectorXd& anchor() const noexcept { return anchor_; }
  const RasterConfig& raster() const noexcept { return raster_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  Eigen::MatrixXd encode_;
  Eigen::VectorXd anchor_;
  RasterConfig raster_;
  std::uint64_t seed_;
};

/// Encoder rows are the first w rows of Q from a QR factorization of a
/// seeded standard-normal 2n x 2n matrix.
inline SurrogateStack make_surrogate(std::uint64_t seed, int w, const LandmarkSet& anchor,
                                     RasterConfig raster = {}) {
  const int dim = static_cast<int>(anchor.flat().size());
  if (w < 1 || w > dim)
    throw Error(ErrorCode::out_of_range,
                "latent width w=" + std::to_string(w) + " must be in [1, 2n]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd gauss(dim, dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) gauss(r, c) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  const Eigen::MatrixXd q = qr.householderQ();
  return SurrogateStack(q.topRows(w), anchor.flat(), raster, seed);
}

inline LatentVector encode_landmarks(const SurrogateStack& s, const LandmarkSet& l) {
  if (l.flat().size() != s.anchor().size())
    throw Error(ErrorCode::dimension_mismatch, "landmark dimension does not match encoder");
  return LatentVector(s.encode_matrix() * (l.flat() - s.anchor()));
}

inline LandmarkSet decode_latent(const SurrogateStack& s, const LatentVector& v) {
  if (v.w() != s.w()) throw Error(ErrorCode::dimension_mismatch, "latent width mismatch");
  return LandmarkSet(s.anchor() + s.encode_matrix().transpose() * v.values());
}

/// Separable splat factors for one point set. The raster is gy * gx^T and
/// dx, dy hold the per-axis derivative factors (coordinate offset / sigma^2).
class SplatField {
 public:
  SplatField(const RasterConfig& cfg, const Eigen::VectorXd& flat_points) {
    const Eigen::Index n = flat_points.size() / 2;
    const double inv_two_var = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
    const double inv_var = 1.0 / (cfg.sigma * cfg.sigma);
    gx_.resize(cfg.width, n);
    dx_.resize(cfg.width, n);
    gy_.resize(cfg.height, n);
    dy_.resize(cfg.height, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double px = flat_points[2 * j];
      const double py = flat_points[2 * j + 1];
      for (int c = 0; c < cfg.width; ++c) {
        const double off = (c + 0.5) / cfg.width - px;
        gx_(c, j) = std::exp(-off * off * inv_two_var);
        dx_(c, j) = gx_(c, j) * off * inv_var;
      }
      for (int r = 0; r < cfg.height; ++r) {
        const double off = (r + 0.5) / cfg.height - py;
        gy_(r, j) = std::exp(-off * off * inv_two_var);
        dy_(r, j) = gy_(r, j) * off * inv_var;
      }
    }
  }

  Raster render() const { return gy_ * gx_.transpose(); }

  /// Gradient of <cotangent, raster> w.r.t. the flattened point coordinates.
  Eigen::VectorXd pullback(const Raster& cotangent) const {
    const Eigen::MatrixXd ax = cotangent * dx_;              // H x n
    const Eigen::MatrixXd ay = cotangent.transpose() * dy_;  // W x n
    const Eigen::Index n = gx_.cols();
    Eigen::VectorXd grad(2 * n);
    for (Eigen::Index j = 0; j < n; ++j) {
      grad[2 * j] = gy_.col(j).dot(ax.col(j));
      grad[2 * j + 1] = gx_.col(j).dot(ay.col(j));
    }
    return grad;
  }

  /// Raster change for a change of the flattened point coordinates.
  Raster pushforward(const Eigen::VectorXd& d_points) const {
    const Eigen::Index n = gx_.cols();
    Eigen::VectorXd ddx(n), ddy(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      ddx[j] = d_points[2 * j];
      ddy[j] = d_points[2 * j + 1];
    }
    return gy_ * ddx.asDiagonal() * dx_.transpose() + dy_ * ddy.asDiagonal() * gx_.transpose();
  }

 private:
  Eigen::MatrixXd gx_, dx_, gy_, dy_;
};

inline Raster render_points(const RasterConfig& cfg, const LandmarkSet& points) {
  return SplatField(cfg, points.flat()).render();
}

/// pixel(r, c) = sum_j exp(-|x_rc - x_j|^2 / (2 sigma^2)) over the decoded points.
inline Raster render_raster(const SurrogateStack& s, const LatentVector& v) {
  return render_points(s.raster(), decode_latent(s, v));
}

/// Derivative of render_raster at a fixed latent.
class RenderJacobian {
 public:
  RenderJacobian(const SurrogateStack& s, const LatentVector& v)
      : stack_(&s), field_(s.raster(), decode_latent(s, v).flat()) {}

  Raster jvp(const Eigen::VectorXd& dv) const {
    return field_.pushforward(stack_->encode_matrix().transpose() * dv);
  }
  Eigen::VectorXd vjp(const Raster& cotangent) const {
    return stack_->encode_matrix() * field_.pullback(cotangent);
  }
  Raster value() const { return field_.render(); }

 private:
  const SurrogateStack* stack_;
  SplatField field_;
};

inline RenderJacobian render_jacobian(const SurrogateStack& s, const LatentVector& v) {
  return RenderJacobian(s, v);
}

/// ASCII PGM (P2) dump; values are multiplied by the recorded scale so the
/// maximum maps to 65535.
inline std::string raster_to_pgm(const Raster& r) {
  const double peak = r.size() ? r.maxCoeff() : 0.0;
  const double scale = peak > 0.0 ? 65535.0 / peak : 1.0;
  std::ostringstream out;
  out.precision(17);
  out << "P2\n# scale " << scale << "\n" << r.cols() << " " << r.rows() << "\n65535\n";
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    for (Eigen::Index j = 0; j < r.cols(); ++j) {
      if (j) out << ' ';
      out << static_cast<long>(std::lround(std::max(0.0, r(i, j)) * scale));
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace lpmm
