#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "lpmm/error.hpp"

namespace lpmm {

inline constexpr int kDefaultPointCount = 68;
// Outer eye corners of the 68-point annotation (0-based).
inline constexpr int kLeftOuterEye = 36;
inline constexpr int kRightOuterEye = 45;
// Side of the canonical square relative to the tight landmark box.
inline constexpr double kCropMargin = 1.8;

/// One face's landmarks, flattened as (x0, y0, x1, y1, ...).
class LandmarkSet {
 public:
  LandmarkSet() = default;

  explicit LandmarkSet(Eigen::VectorXd flat) : flat_(std::move(flat)) {
    if (flat_.size() == 0 || flat_.size() % 2 != 0)
      throw Error(ErrorCode::dimension_mismatch,
                  "landmark vector must have even, non-zero length");
    if (!flat_.allFinite())
      throw Error(ErrorCode::non_finite, "landmark coordinate is not finite");
  }

  static LandmarkSet from_points(const std::vector<std::pair<double, double>>& pts) {
    Eigen::VectorXd flat(2 * static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      flat[2 * i] = pts[i].first;
      flat[2 * i + 1] = pts[i].second;
    }
    return LandmarkSet(std::move(flat));
  }

  int size() const noexcept { return static_cast<int>(flat_.size() / 2); }
  double x(int i) const { return flat_[2 * i]; }
  double y(int i) const { return flat_[2 * i + 1]; }
  Eigen::Vector2d point(int i) const { return {flat_[2 * i], flat_[2 * i + 1]}; }

  const Eigen::VectorXd& flat() const noexcept { return flat_; }

  friend bool operator==(const LandmarkSet& a, const LandmarkSet& b) {
    return a.flat_.size() == b.flat_.size() && a.flat_ == b.flat_;
  }

 private:
  Eigen::VectorXd flat_;
};

/// Maps raw (pixel) landmarks into the canonical unit square.
///
/// The tight bounding box is grown to a square of side 1.8 * max(width,
/// height) around its center, and that square is mapped onto [0,1]^2 with a
/// uniform scale. Translation and scale of the input drop out.
inline LandmarkSet normalize_to_canonical(const LandmarkSet& raw) {
  const int n = raw.size();
  double min_x = raw.x(0), max_x = raw.x(0), min_y = raw.y(0), max_y = raw.y(0);
  for (int i = 1; i < n; ++i) {
    min_x = std::min(min_x, raw.x(i));
    max_x = std::max(max_x, raw.x(i));
    min_y = std::min(min_y, raw.y(i));
    max_y = std::max(max_y, raw.y(i));
  }
  const double extent = std::max(max_x - min_x, max_y - min_y);
  if (!(extent > 0.0))
    throw Error(ErrorCode::degenerate_box, "degenerate bounding box: all points coincide");

  const double side = kCropMargin * extent;
  const double cx = 0.5 * (min_x + max_x);
  const double cy = 0.5 * (min_y + max_y);
  Eigen::VectorXd out(2 * n);
  for (int i = 0; i < n; ++i) {
    out[2 * i] = (raw.x(i) - cx) / side + 0.5;
    out[2 * i + 1] = (raw.y(i) - cy) / side + 0.5;
  }
  return LandmarkSet(std::move(out));
}

inline double interocular_distance(const LandmarkSet& l) {
  if (l.size() != kDefaultPointCount)
    throw Error(ErrorCode::dimension_mismatch, "inter-ocular distance needs 68 points");
  const double d = (l.point(kLeftOuterEye) - l.point(kRightOuterEye)).norm();
  if (d < 1e-9)
    throw Error(ErrorCode::degenerate_interocular, "degenerate inter-ocular distance");
  return d;
}

/// Mean point-to-point error normalized by the inter-ocular distance of `truth`.
inline double nme(const LandmarkSet& pred, const LandmarkSet& truth) {
  if (pred.size() != truth.size())
    throw Error(ErrorCode::dimension_mismatch, "nme: point counts differ");
  const double d = interocular_distance(truth);
  double sum = 0.0;
  for (int i = 0; i < truth.size(); ++i) sum += (pred.point(i) - truth.point(i)).norm() / d;
  return sum / truth.size();
}

struct NmeReport {
  std::vector<double> per_sample;
  double mean = 0.0;
  std::optional<int> k;
  int skipped = 0;  // samples with a degenerate normalizer

  static NmeReport from_samples(std::vector<double> values, std::optional<int> degree = {},
                                int skipped = 0) {
    NmeReport r;
    r.per_sample = std::move(values);
    r.mean = r.per_sample.empty()
                 ? 0.0
                 : std::accumulate(r.per_sample.begin(), r.per_sample.end(), 0.0) /
                       static_cast<double>(r.per_sample.size());
    r.k = degree;
    r.skipped = skipped;
    return r;
  }
};

}  // namespace lpmm
