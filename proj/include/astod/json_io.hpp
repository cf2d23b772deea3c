#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "astod/error.hpp"

namespace astod {

using json = nlohmann::json;

/// Fixed six-decimal rendering used for every floating-point value written.
inline std::string format_fixed(double v) {
  if (!std::isfinite(v)) throw ParseError("cannot serialize non-finite number");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

namespace detail {

inline bool is_scalar(const json& j) { return !j.is_object() && !j.is_array(); }

inline void write_scalar(std::string& out, const json& j) {
  if (j.is_number_float()) {
    out += format_fixed(j.get<double>());
  } else {
    out += j.dump();
  }
}

inline void write_canonical(std::string& out, const json& j, int depth) {
  const std::string pad(static_cast<std::size_t>(2 * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(2 * depth), ' ');
  if (j.is_object()) {
    if (j.empty()) {
      out += "{}";
      return;
    }
    out += "{\n";
    bool first = true;
    for (auto it = j.begin(); it != j.end(); ++it) {  // keys iterate sorted
      if (!first) out += ",\n";
      first = false;
      out += pad;
      out += json(it.key()).dump();
      out += ": ";
      write_canonical(out, it.value(), depth + 1);
    }
    out += "\n" + close_pad + "}";
  } else if (j.is_array()) {
    if (j.empty()) {
      out += "[]";
      return;
    }
    bool flat = true;
    for (const json& e : j) flat = flat && is_scalar(e);
    if (flat) {
      out += "[";
      bool first = true;
      for (const json& e : j) {
        if (!first) out += ", ";
        first = false;
        write_scalar(out, e);
      }
      out += "]";
      return;
    }
    out += "[\n";
    bool first = true;
    for (const json& e : j) {
      if (!first) out += ",\n";
      first = false;
      out += pad;
      write_canonical(out, e, depth + 1);
    }
    out += "\n" + close_pad + "]";
  } else {
    write_scalar(out, j);
  }
}

}  // namespace detail

/// Deterministic serialization: sorted keys, two-space indentation, arrays of
/// scalars on one line, floats with six decimals, trailing newline.
inline std::string canonical_dump(const json& j) {
  std::string out;
  detail::write_canonical(out, j, 0);
  out += '\n';
  return out;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

inline json load_json(const std::filesystem::path& path) {
  return parse_json(read_text(path), path.string());
}

inline void save_json(const std::filesystem::path& path, const json& j) {
  write_text(path, canonical_dump(j));
}

}  // namespace astod
