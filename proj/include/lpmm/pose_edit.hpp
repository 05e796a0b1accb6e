#pragma once

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lpmm/io.hpp"
#include "lpmm/model.hpp"

namespace lpmm {

inline constexpr int kBlendshapeFormatVersion = 1;

/// A named parameter offset, applied by weighted addition.
struct Blendshape {
  std::string name;
  ParamVector offset;
  std::string description;

  friend bool operator==(const Blendshape&, const Blendshape&) = default;
};

struct WeightedBlendshape {
  const Blendshape* shape;
  double weight;
};

namespace detail {
inline void check_same_degree(int a, int b) {
  if (a != b)
    throw Error(ErrorCode::degree_mismatch,
                "degree mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
}
}  // namespace detail

/// base + sum_i weight_i * offset_i, summed in list order.
inline ParamVector apply_blendshapes(const ParamVector& base,
                                    const std::vector<WeightedBlendshape>& weighted) {
  Eigen::VectorXd acc = base.values();
  for (const auto& [shape, weight] : weighted) {
    detail::check_same_degree(base.k(), shape->offset.k());
    acc += weight * shape->offset.values();
  }
  return ParamVector(std::move(acc));
}

inline ParamVector scale_from_base(const ParamVector& p, double alpha) {
  return ParamVector(alpha * p.values());
}

inline ParamVector interpolate_params(const ParamVector& from, const ParamVector& to,
                                     double alpha) {
  detail::check_same_degree(from.k(), to.k());
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw Error(ErrorCode::out_of_range, "interpolation alpha must lie in [0, 1]");
  return ParamVector((1.0 - alpha) * from.values() + alpha * to.values());
}

/// `steps` evenly spaced frames from `from` to `to`, both endpoints included.
inline std::vector<ParamVector> interpolation_frames(const ParamVector& from,
                                                     const ParamVector& to, int steps) {
  if (steps < 2) throw Error(ErrorCode::out_of_range, "interpolation needs at least 2 steps");
  std::vector<ParamVector> frames;
  frames.reserve(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double alpha = static_cast<double>(i) / (steps - 1);
    frames.push_back(i == steps - 1 ? interpolate_params(from, to, 1.0)
                                    : interpolate_params(from, to, alpha));
  }
  return frames;
}

inline nlohmann::json blendshape_to_json(const Blendshape& b, const std::string& fingerprint) {
  return {{"format", "lpmm-blendshape"},
          {"version", kBlendshapeFormatVersion},
          {"name", b.name},
          {"k", b.offset.k()},
          {"offset", io::to_json(b.offset.values())},
          {"model_fingerprint", fingerprint},
          {"description", b.description}};
}

/// Parses a blendshape file. When `expected_fingerprint` is given the file
/// must have been authored against that model.
inline Blendshape blendshape_from_json(const nlohmann::json& j,
                                       std::optional<std::string_view> expected_fingerprint) {
  io::check_header(j, "lpmm-blendshape", kBlendshapeFormatVersion);
  Blendshape b;
  b.name = io::require_as<std::string>(j, "name");
  if (b.name.empty()) throw Error(ErrorCode::malformed_input, "blendshape name is empty");
  b.offset = ParamVector(io::vector_from_json(io::require(j, "offset"), "offset"));
  if (b.offset.k() != io::require_as<int>(j, "k"))
    throw Error(ErrorCode::dimension_mismatch, "blendshape offset length disagrees with k");
  b.description = j.value("description", "");
  const auto fp = io::require_as<std::string>(j, "model_fingerprint");
  if (expected_fingerprint && fp != *expected_fingerprint)
    throw Error(ErrorCode::fingerprint_mismatch, "blendshape built for different model");
  return b;
}

/// Named blendshapes of one degree, bound to one model fingerprint.
class BlendshapeLibrary {
 public:
  BlendshapeLibrary() = default;
  explicit BlendshapeLibrary(std::string model_fingerprint)
      : fingerprint_(std::move(model_fingerprint)) {}

  const std::string& model_fingerprint() const noexcept { return fingerprint_; }
  std::optional<int> degree() const {
    if (entries_.empty()) return std::nullopt;
    return entries_.begin()->second.offset.k();
  }

  void save(Blendshape b) {
    if (!valid_name(b.name))
      throw Error(ErrorCode::malformed_input,
                  "blendshape name must be non-empty [A-Za-z0-9_.-], not starting with '.'");
    if (entries_.contains(b.name))
      throw Error(ErrorCode::duplicate_name, "blendshape \"" + b.name + "\" already exists");
    if (auto k = degree()) detail::check_same_degree(*k, b.offset.k());
    auto name = b.name;
    entries_.emplace(std::move(name), std::move(b));
  }

  const Blendshape& get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
      throw Error(ErrorCode::not_found, "no blendshape named \"" + name + "\"");
    return it->second;
  }

  void remove(const std::string& name) {
    if (entries_.erase(name) == 0)
      throw Error(ErrorCode::not_found, "no blendshape named \"" + name + "\"");
  }

  std::vector<std::string> list() const {
    std::vector<std::string> names;
    for (const auto& [name, _] : entries_) names.push_back(name);
    return names;
  }

  std::size_t size() const noexcept { return entries_.size(); }

  // Names double as file stems in the state directory.
  static bool valid_name(std::string_view name) {
    if (name.empty() || name.front() == '.' || name.size() > 128) return false;
    for (char c : name)
      if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.'))
        return false;
    return true;
  }

  /// Writes one `<name>.json` file per entry into `dir`, replacing its contents.
  void save_directory(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    for (const auto& f : std::filesystem::directory_iterator(dir))
      if (f.path().extension() == ".json") std::filesystem::remove(f.path());
    for (const auto& [name, b] : entries_)
      io::write_file((dir / (name + ".json")).string(), blendshape_to_json(b, fingerprint_).dump(2));
  }

  /// Loads every blendshape file in `dir`; each must match the fingerprint.
  static BlendshapeLibrary load_directory(const std::filesystem::path& dir,
                                          const std::string& fingerprint) {
    BlendshapeLibrary lib(fingerprint);
    if (!std::filesystem::exists(dir)) return lib;
    std::vector<std::filesystem::path> files;
    for (const auto& f : std::filesystem::directory_iterator(dir))
      if (f.path().extension() == ".json") files.push_back(f.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files)
      lib.save(blendshape_from_json(io::parse_json(io::read_file(f.string())), fingerprint));
    return lib;
  }

 private:
  std::string fingerprint_;
  std::map<std::string, Blendshape> entries_;
};

}  // namespace lpmm
