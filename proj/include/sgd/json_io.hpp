#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>

#include <json.hpp>

#include "sgd/error.hpp"

namespace sgd {

using json = nlohmann::json;

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(origin, e.byte, e.what());
  }
}

inline json read_json_file(const std::filesystem::path& path) {
  return parse_json_text(read_text_file(path), path.string());
}

// Writes to a sibling temp file and renames it into place.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw Error("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error("rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

inline void write_json_atomic(const std::filesystem::path& path, const json& j) {
  write_text_atomic(path, j.dump(2) + "\n");
}

// Field access with a ParseError naming the field rather than nlohmann's
// generic type_error text.
template <class T>
T get_field(const json& obj, const char* key, const std::string& origin) {
  if (!obj.is_object()) throw ParseError(origin, 0, "expected a JSON object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(origin, 0, std::string("missing field '") + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(origin, 0, std::string("field '") + key + "': " + e.what());
  }
}

template <class T>
T get_field_or(const json& obj, const char* key, T fallback, const std::string& origin) {
  if (!obj.is_object()) throw ParseError(origin, 0, "expected a JSON object");
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(origin, 0, std::string("field '") + key + "': " + e.what());
  }
}

// Reference to an optional object-valued field; an empty object when absent.
inline const json& object_field(const json& obj, const char* key, const std::string& origin) {
  static const json empty = json::object();
  if (!obj.is_object()) throw ParseError(origin, 0, "expected a JSON object");
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return empty;
  if (!it->is_object()) throw ParseError(origin, 0, std::string("field '") + key + "' must be an object");
  return *it;
}

} // namespace sgd
