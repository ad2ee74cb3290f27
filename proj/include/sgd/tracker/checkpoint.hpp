#pragma once

// Tracker parameters as JSON: every block with its shape, plus the encoder it
// was trained with.

#include <filesystem>
#include <string>

#include "sgd/json_io.hpp"
#include "sgd/tracker/model.hpp"

namespace sgd::tracker {

inline constexpr const char* kCheckpointFormat = "sgd-tracker";
inline constexpr int kCheckpointVersion = 1;

inline json checkpoint_to_json(const TrackerParams& params, const std::string& encoder) {
  json blocks = json::object();
  TrackerParams copy = params;
  copy.for_each_block([&](const std::string& name, double* data, Eigen::Index n) {
    blocks[name] = std::vector<double>(data, data + n);
  });
  return {{"format", kCheckpointFormat}, {"version", kCheckpointVersion}, {"encoder", encoder},
          {"dim", params.d()}, {"blocks", blocks}};
}

struct Checkpoint {
  TrackerParams params;
  std::string encoder;
};

inline Checkpoint checkpoint_from_json(const json& j, const std::string& origin = {}) {
  if (get_field_or<std::string>(j, "format", "", origin) != kCheckpointFormat)
    throw ParseError(origin, 0, "not a tracker checkpoint");
  if (get_field<int>(j, "version", origin) != kCheckpointVersion)
    throw ParseError(origin, 0, "unsupported checkpoint version");
  const int d = get_field<int>(j, "dim", origin);
  if (d < 2) throw ParseError(origin, 0, "checkpoint dimension must be at least 2");
  Checkpoint c{TrackerParams::zeros(d), get_field<std::string>(j, "encoder", origin)};
  const json& blocks = object_field(j, "blocks", origin);
  c.params.for_each_block([&](const std::string& name, double* data, Eigen::Index n) {
    auto v = get_field<std::vector<double>>(blocks, name.c_str(), origin);
    if (static_cast<Eigen::Index>(v.size()) != n)
      throw DimensionMismatch("checkpoint block '" + name + "' has " + std::to_string(v.size()) + " values, expected " +
                              std::to_string(n));
    std::copy(v.begin(), v.end(), data);
  });
  c.params.check();
  return c;
}

inline void save_checkpoint(const std::filesystem::path& file, const TrackerParams& params, const std::string& encoder) {
  write_text_atomic(file, checkpoint_to_json(params, encoder).dump() + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& file) {
  return checkpoint_from_json(read_json_file(file), file.string());
}

} // namespace sgd::tracker
