#pragma once

#include <json.hpp>

#include <istream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lpmm/error.hpp"
#include "lpmm/landmarks.hpp"

namespace lpmm {

enum class CoordinateSpace { pixel, canonical };

struct LandmarkRecord {
  std::string id;
  std::string frame;
  LandmarkSet landmarks;
  CoordinateSpace space = CoordinateSpace::canonical;

  friend bool operator==(const LandmarkRecord&, const LandmarkRecord&) = default;
};

/// Non-empty list of records sharing one point count.
class LandmarkDataset {
 public:
  explicit LandmarkDataset(std::vector<LandmarkRecord> records) : records_(std::move(records)) {
    if (records_.empty()) throw Error(ErrorCode::empty_dataset, "empty dataset");
    const int n = records_.front().landmarks.size();
    for (std::size_t i = 1; i < records_.size(); ++i)
      if (records_[i].landmarks.size() != n)
        throw Error(ErrorCode::inconsistent_point_count,
                    "record " + std::to_string(i + 1) + " has " +
                        std::to_string(records_[i].landmarks.size()) + " points, expected " +
                        std::to_string(n));
  }

  static LandmarkDataset from_landmarks(const std::vector<LandmarkSet>& sets) {
    std::vector<LandmarkRecord> records;
    records.reserve(sets.size());
    for (std::size_t i = 0; i < sets.size(); ++i)
      records.push_back({"synthetic", std::to_string(i), sets[i], CoordinateSpace::canonical});
    return LandmarkDataset(std::move(records));
  }

  const std::vector<LandmarkRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  int point_count() const noexcept { return records_.front().landmarks.size(); }
  const LandmarkSet& landmarks(std::size_t i) const { return records_[i].landmarks; }

  bool is_canonical() const {
    for (const auto& r : records_)
      if (r.space != CoordinateSpace::canonical) return false;
    return true;
  }

  friend bool operator==(const LandmarkDataset&, const LandmarkDataset&) = default;

 private:
  std::vector<LandmarkRecord> records_;
};

namespace detail {

inline LandmarkSet points_from_json(const nlohmann::json& pts) {
  if (!pts.is_array()) throw Error(ErrorCode::malformed_input, "\"points\" must be an array");
  Eigen::VectorXd flat(2 * static_cast<Eigen::Index>(pts.size()));
  Eigen::Index i = 0;
  for (const auto& p : pts) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      throw Error(ErrorCode::malformed_input, "each point must be a pair [x, y]");
    flat[i++] = p[0].get<double>();
    flat[i++] = p[1].get<double>();
  }
  return LandmarkSet(std::move(flat));
}

inline nlohmann::json points_to_json(const LandmarkSet& l) {
  auto pts = nlohmann::json::array();
  for (int i = 0; i < l.size(); ++i) pts.push_back({l.x(i), l.y(i)});
  return pts;
}

}  // namespace detail

inline LandmarkRecord parse_landmark_record(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::malformed_input, e.what());
  } catch (const nlohmann::json::out_of_range& e) {
    // Numeric literals beyond double range.
    throw Error(ErrorCode::non_finite, e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::malformed_input, "record must be an object");
  if (!j.contains("points")) throw Error(ErrorCode::malformed_input, "missing \"points\"");
  LandmarkRecord rec;
  rec.id = j.value("id", "");
  rec.frame = j.value("frame", "");
  rec.landmarks = detail::points_from_json(j["points"]);
  const std::string space = j.value("space", "canonical");
  if (space == "pixel") {
    rec.space = CoordinateSpace::pixel;
  } else if (space == "canonical") {
    rec.space = CoordinateSpace::canonical;
  } else {
    throw Error(ErrorCode::malformed_input, "unknown space \"" + space + "\"");
  }
  return rec;
}

/// Parses a JSON Lines landmark dataset. Blank lines are skipped; every error
/// names the offending 1-based line.
inline LandmarkDataset parse_landmark_records(std::istream& in) {
  std::vector<LandmarkRecord> records;
  std::string line;
  int line_no = 0;
  int expected_n = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto rec = parse_landmark_record(line);
      if (expected_n < 0) expected_n = rec.landmarks.size();
      if (rec.landmarks.size() != expected_n)
        throw Error(ErrorCode::inconsistent_point_count,
                    "has " + std::to_string(rec.landmarks.size()) + " points, expected " +
                        std::to_string(expected_n));
      records.push_back(std::move(rec));
    } catch (const Error& e) {
      throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (records.empty()) throw Error(ErrorCode::empty_dataset, "empty dataset");
  return LandmarkDataset(std::move(records));
}

inline LandmarkDataset parse_landmark_records(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_landmark_records(in);
}

inline nlohmann::json record_to_json(const LandmarkRecord& r) {
  return {{"id", r.id},
          {"frame", r.frame},
          {"points", detail::points_to_json(r.landmarks)},
          {"space", r.space == CoordinateSpace::pixel ? "pixel" : "canonical"}};
}

inline std::string serialize_landmark_records(const LandmarkDataset& ds) {
  std::string out;
  for (const auto& r : ds.records()) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

/// Returns a dataset with every pixel-space record normalized.
inline LandmarkDataset to_canonical(const LandmarkDataset& ds) {
  std::vector<LandmarkRecord> out = ds.records();
  for (auto& r : out) {
    if (r.space == CoordinateSpace::pixel) {
      r.landmarks = normalize_to_canonical(r.landmarks);
      r.space = CoordinateSpace::canonical;
    }
  }
  return LandmarkDataset(std::move(out));
}

}  // namespace lpmm
