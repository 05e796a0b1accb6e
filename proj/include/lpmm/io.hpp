#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>

#include "lpmm/error.hpp"

namespace lpmm::io {

using nlohmann::json;

inline json to_json(const Eigen::VectorXd& v) {
  auto a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vector_from_json(const json& j, std::string_view field) {
  if (!j.is_array())
    throw Error(ErrorCode::malformed_input, "\"" + std::string(field) + "\" must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number())
      throw Error(ErrorCode::malformed_input,
                  "\"" + std::string(field) + "\" must contain only numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

inline const json& require(const json& j, std::string_view field) {
  if (!j.is_object() || !j.contains(field))
    throw Error(ErrorCode::malformed_input, "missing field \"" + std::string(field) + "\"");
  return j.at(std::string(field));
}

template <typename T>
T require_as(const json& j, std::string_view field) {
  const json& v = require(j, field);
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::malformed_input, "field \"" + std::string(field) + "\" has wrong type");
  }
}

/// Checks the "format"/"version" header shared by every artifact file.
inline void check_header(const json& j, std::string_view format, int version) {
  if (require_as<std::string>(j, "format") != format)
    throw Error(ErrorCode::format_mismatch, "expected format \"" + std::string(format) + "\"");
  const int got = require_as<int>(j, "version");
  if (got != version)
    throw Error(ErrorCode::version_mismatch,
                "unsupported " + std::string(format) + " version " + std::to_string(got));
}

inline json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::malformed_input, e.what());
  } catch (const json::out_of_range& e) {
    // Numeric literals beyond double range.
    throw Error(ErrorCode::non_finite, e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
  out << content;
  if (!out) throw Error(ErrorCode::io_error, "write failed: " + path);
}

}  // namespace lpmm::io
