#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include "lpmm/dataset.hpp"
#include "lpmm/error.hpp"
#include "lpmm/landmarks.hpp"

namespace lpmm {

inline constexpr double kOrthonormalityTolerance = 1e-8;

/// LPMM coefficients p_1..p_k.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(Eigen::VectorXd values) : values_(std::move(values)) {
    if (!values_.allFinite()) throw Error(ErrorCode::non_finite, "parameter is not finite");
  }
  static ParamVector zeros(int k) { return ParamVector(Eigen::VectorXd::Zero(k)); }

  int k() const noexcept { return static_cast<int>(values_.size()); }
  double operator[](int i) const { return values_[i]; }
  const Eigen::VectorXd& values() const noexcept { return values_; }

  friend bool operator==(const ParamVector& a, const ParamVector& b) {
    return a.values_.size() == b.values_.size() && a.values_ == b.values_;
  }

 private:
  Eigen::VectorXd values_;
};

namespace detail {

// FNV-1a over raw little-endian doubles; identifies the data a model came from.
class Fnv1a {
 public:
  void add_bytes(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      hash_ ^= p[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void add(double v) { add_bytes(&v, sizeof v); }
  void add(std::int64_t v) { add_bytes(&v, sizeof v); }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash_));
    return buf;
  }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline double orthonormality_error(const Eigen::MatrixXd& basis) {
  if (basis.cols() == 0) return 0.0;
  const Eigen::MatrixXd gram = basis.transpose() * basis;
  return (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
}

}  // namespace detail

inline std::string dataset_fingerprint(const LandmarkDataset& ds) {
  detail::Fnv1a h;
  h.add(static_cast<std::int64_t>(ds.point_count()));
  h.add(static_cast<std::int64_t>(ds.size()));
  for (const auto& r : ds.records())
    for (Eigen::Index i = 0; i < r.landmarks.flat().size(); ++i) h.add(r.landmarks.flat()[i]);
  return h.hex();
}

/// PCA landmark model: L = mean + sum_i p_i * basis.col(i).
class LpmmModel {
 public:
  LpmmModel(Eigen::VectorXd mean, Eigen::MatrixXd basis, Eigen::VectorXd eigenvalues,
            std::string fingerprint, std::vector<std::string> warnings = {})
      : mean_(std::move(mean)),
        basis_(std::move(basis)),
        eigenvalues_(std::move(eigenvalues)),
        fingerprint_(std::move(fingerprint)),
        warnings_(std::move(warnings)) {
    if (mean_.size() == 0 || mean_.size() % 2 != 0)
      throw Error(ErrorCode::dimension_mismatch, "model mean must have length 2n");
    if (basis_.rows() != mean_.size() || basis_.cols() != eigenvalues_.size())
      throw Error(ErrorCode::dimension_mismatch, "model basis/eigenvalue shapes disagree");
    if (basis_.cols() < 1 || basis_.cols() > mean_.size())
      throw Error(ErrorCode::dimension_mismatch, "component count must be in [1, 2n]");
    if (!mean_.allFinite() || !basis_.allFinite() || !eigenvalues_.allFinite())
      throw Error(ErrorCode::non_finite, "model contains non-finite values");
    if (detail::orthonormality_error(basis_) >= kOrthonormalityTolerance)
      throw Error(ErrorCode::basis_not_orthonormal, "basis not orthonormal");
    for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) {
      if (eigenvalues_[i] < -1e-12)
        throw Error(ErrorCode::malformed_input, "negative eigenvalue");
      if (i > 0 && eigenvalues_[i] > eigenvalues_[i - 1])
        throw Error(ErrorCode::malformed_input, "eigenvalues not sorted non-increasing");
    }
    eigenvalues_ = eigenvalues_.cwiseMax(0.0);
  }

  int n() const noexcept { return static_cast<int>(mean_.size() / 2); }
  int m() const noexcept { return static_cast<int>(basis_.cols()); }
  const Eigen::VectorXd& mean() const noexcept { return mean_; }
  const Eigen::MatrixXd& basis() const noexcept { return basis_; }
  const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
  const std::string& fingerprint() const noexcept { return fingerprint_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }

  LandmarkSet mean_landmarks() const { return LandmarkSet(mean_); }

  friend bool operator==(const LpmmModel& a, const LpmmModel& b) {
    return a.mean_ == b.mean_ && a.basis_ == b.basis_ && a.eigenvalues_ == b.eigenvalues_ &&
           a.fingerprint_ == b.fingerprint_;
  }

 private:
  Eigen::VectorXd mean_;
  Eigen::MatrixXd basis_;
  Eigen::VectorXd eigenvalues_;
  std::string fingerprint_;
  std::vector<std::string> warnings_;
};

/// Builds the model by SVD of the centered data matrix.
///
/// Eigenvalues are sample variances (singular value squared over N-1). Each
/// basis column is sign-fixed so that its largest-magnitude entry (lowest
/// index on ties) is positive. A requested `m` above min(2n, N-1) is clamped
/// and the clamp is recorded in the model warnings.
inline LpmmModel build_lpmm(const LandmarkDataset& ds, std::optional<int> m = std::nullopt) {
  if (!ds.is_canonical())
    throw Error(ErrorCode::malformed_input, "dataset contains pixel-space records");
  const auto count = static_cast<Eigen::Index>(ds.size());
  if (count < 2) throw Error(ErrorCode::insufficient_samples, "need at least 2 samples");
  const Eigen::Index dim = 2 * ds.point_count();

  Eigen::MatrixXd data(count, dim);
  for (Eigen::Index j = 0; j < count; ++j) data.row(j) = ds.landmarks(j).flat().transpose();
  const Eigen::VectorXd mean = data.colwise().mean().transpose();
  data.rowwise() -= mean.transpose();

  const int max_m = static_cast<int>(std::min(dim, count - 1));
  std::vector<std::string> warnings;
  int used_m = max_m;
  if (m) {
    if (*m < 1) throw Error(ErrorCode::out_of_range, "m must be positive");
    used_m = *m;
    if (used_m > max_m) {
      warnings.push_back("requested m=" + std::to_string(*m) + " clamped to " +
                         std::to_string(max_m));
      used_m = max_m;
    }
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(data, Eigen::ComputeThinV);
  Eigen::MatrixXd basis = svd.matrixV().leftCols(used_m);
  Eigen::VectorXd eig = svd.singularValues().head(used_m).array().square() /
                        static_cast<double>(count - 1);

  for (Eigen::Index c = 0; c < basis.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index r = 0; r < basis.rows(); ++r) {
      if (std::abs(basis(r, c)) > best) {
        best = std::abs(basis(r, c));
        arg = r;
      }
    }
    if (basis(arg, c) < 0) basis.col(c) = -basis.col(c);
  }
  return LpmmModel(mean, std::move(basis), eig, dataset_fingerprint(ds), std::move(warnings));
}

namespace detail {
inline void check_degree(const LpmmModel& model, int k) {
  if (k < 1 || k > model.m())
    throw Error(ErrorCode::degree_mismatch,
                "degree k=" + std::to_string(k) + " outside [1, " + std::to_string(model.m()) + "]");
}
inline void check_points(const LpmmModel& model, const LandmarkSet& l) {
  if (l.size() != model.n())
    throw Error(ErrorCode::dimension_mismatch,
                "landmarks have " + std::to_string(l.size()) + " points, model expects " +
                    std::to_string(model.n()));
}
}  // namespace detail

inline LandmarkSet reconstruct(const LpmmModel& model, const ParamVector& p) {
  detail::check_degree(model, p.k());
  return LandmarkSet(model.mean() + model.basis().leftCols(p.k()) * p.values());
}

/// Least-squares coefficients of the first k components.
inline ParamVector fit_params(const LpmmModel& model, const LandmarkSet& l, int k) {
  detail::check_degree(model, k);
  detail::check_points(model, l);
  return ParamVector(model.basis().leftCols(k).transpose() * (l.flat() - model.mean()));
}

inline double explained_variance(const LpmmModel& model, int k) {
  detail::check_degree(model, k);
  const double total = model.eigenvalues().sum();
  if (total <= 0.0) return 1.0;
  return model.eigenvalues().head(k).sum() / total;
}

/// Reconstruction NME of every sample at each degree in `ks`.
inline std::vector<NmeReport> nme_sweep(const LpmmModel& model, const LandmarkDataset& eval,
                                        const std::vector<int>& ks) {
  if (ks.empty()) throw Error(ErrorCode::out_of_range, "ks must be non-empty");
  for (int k : ks) detail::check_degree(model, k);
  std::vector<NmeReport> out;
  out.reserve(ks.size());
  for (int k : ks) {
    std::vector<double> values;
    int skipped = 0;
    for (const auto& rec : eval.records()) {
      const auto recon = reconstruct(model, fit_params(model, rec.landmarks, k));
      try {
        values.push_back(nme(recon, rec.landmarks));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::degenerate_interocular) throw;
        ++skipped;
      }
    }
    out.push_back(NmeReport::from_samples(std::move(values), k, skipped));
  }
  return out;
}

}  // namespace lpmm
