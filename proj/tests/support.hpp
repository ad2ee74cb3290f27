#pragma once

// Shared test helpers: bundled fixture paths, scratch directories, small
// generated corpora and running the CLI binary.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "sgd/corpus.hpp"
#include "sgd/metrics.hpp"
#include "sgd/outline_check.hpp"
#include "sgd/pipeline.hpp"
#include "sgd/tracker/checkpoint.hpp"
#include "sgd/tracker/train.hpp"
#include "sgd/workbench.hpp"

namespace sgdt {

namespace fs = std::filesystem;

inline fs::path data_dir() { return fs::path(SGD_DATA_DIR); }

inline sgd::FixturePaths bundled_paths() {
  fs::path d = data_dir();
  return {d / "schemas", d / "backends", d / "scenarios.json", d / "templates.json", d / "variations.json",
          d / "automaton.json"};
}

inline const sgd::Fixtures& bundled() {
  static const sgd::Fixtures f = sgd::load_fixtures(bundled_paths(), 11);
  return f;
}

class TempDir {
public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("sgd-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

private:
  fs::path path_;
};

struct CliResult {
  int code = -1;
  std::string output;  // stdout and stderr interleaved
};

inline CliResult run_cli(const std::string& args) {
  static std::atomic<int> counter{0};
  fs::path log = fs::temp_directory_path() / ("sgd-cli-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::string cmd = std::string("\"") + SGD_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  int status = std::system(cmd.c_str());
  CliResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  fs::remove(log);
  return r;
}

// Relative path -> file content for every regular file below `dir`.
inline std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = sgd::read_text_file(e.path());
  return out;
}

inline std::vector<sgd::Dialogue> generated(std::size_t n, std::uint64_t seed) {
  return sgd::generate_corpus(bundled(), n, seed);
}

// Reference states with random damage: wrong intents, dropped or added
// requested slots, typos, case changes, dontcare swaps, dropped and extra
// slots. Returns one prediction per reference frame.
inline std::vector<sgd::tracker::PredictedFrame> perturbed_predictions(const std::vector<sgd::Dialogue>& refs,
                                                                       const sgd::SchemaRegistry& schemas,
                                                                       sgd::Rng& rng, double rate = 0.3) {
  std::vector<sgd::tracker::PredictedFrame> out;
  for (const auto& [key, ref] : sgd::reference_frames(refs)) {
    sgd::FrameState st = ref;
    const auto& schema = schemas.at(key.service);
    auto pick_slot = [&] { return schema.slots[rng.uniform_index(schema.slots.size())].name; };
    if (rng.bernoulli(rate))
      st.active_intent = rng.bernoulli(0.5) ? std::string(sgd::kNoneIntent)
                                            : schema.intents[rng.uniform_index(schema.intents.size())].name;
    if (rng.bernoulli(rate) && !st.requested_slots.empty()) st.requested_slots.erase(st.requested_slots.begin());
    if (rng.bernoulli(rate)) st.requested_slots.insert(pick_slot());
    for (auto it = st.slot_values.begin(); it != st.slot_values.end();) {
      auto& v = it->second;
      double u = rng.uniform();
      if (u < rate * 0.2) {
        it = st.slot_values.erase(it);
        continue;
      }
      std::string& s = v.front();
      if (u < rate * 0.4 && !s.empty()) s[rng.uniform_index(s.size())] = 'x';
      else if (u < rate * 0.6) s = sgd::text::lower(s) + "  ";
      else if (u < rate * 0.7) s = sgd::kDontCare;
      else if (u < rate * 0.8 && s.size() > 3) s = s.substr(0, s.size() - 3);
      else if (u < rate && v.size() > 1) v.erase(v.begin());
      ++it;
    }
    if (rng.bernoulli(rate * 0.5)) st.slot_values[pick_slot()] = {"extra value"};
    out.push_back({key.dialogue_id, key.turn_index, key.service, st});
  }
  rng.shuffle(out);
  return out;
}

inline nlohmann::json public_json(const std::vector<sgd::Dialogue>& ds) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : ds) arr.push_back(sgd::to_json(d));
  return arr;
}

inline nlohmann::json public_json(const sgd::SchemaRegistry& schemas) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [_, s] : schemas) arr.push_back(sgd::to_json(s));
  return arr;
}

} // namespace sgdt
