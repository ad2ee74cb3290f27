#pragma once

// Corpus on disk (sharded dialogue files plus schema.json), statistics and
// train/dev/test splitting with held-out services.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sgd/dialogue.hpp"
#include "sgd/json_io.hpp"
#include "sgd/rng.hpp"
#include "sgd/schema.hpp"
#include "sgd/text.hpp"

namespace sgd {

inline constexpr std::size_t kDialoguesPerShard = 128;

inline std::string shard_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "dialogues_%03zu.json", index + 1);
  return buf;
}

// Writes to a sibling temporary directory and renames it over `dir`, so a
// failed write leaves no partial corpus behind.
inline void write_corpus(std::vector<Dialogue> dialogues, const std::filesystem::path& dir,
                         const std::vector<ServiceSchema>& schemas = {}, const WriteOptions& opt = {}) {
  namespace fs = std::filesystem;
  std::sort(dialogues.begin(), dialogues.end(),
            [](const Dialogue& a, const Dialogue& b) { return a.dialogue_id < b.dialogue_id; });
  for (std::size_t i = 1; i < dialogues.size(); ++i)
    if (dialogues[i].dialogue_id == dialogues[i - 1].dialogue_id)
      throw Error("duplicate dialogue id '" + dialogues[i].dialogue_id + "'");

  fs::path target = fs::absolute(dir).lexically_normal();
  if (target.filename().empty()) target = target.parent_path();
  fs::path tmp = target;
  tmp += ".tmp-" + std::to_string(fnv1a(target.string()) % 1000000);
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  try {
    for (std::size_t s = 0; s * kDialoguesPerShard < dialogues.size(); ++s) {
      json shard = json::array();
      for (std::size_t i = s * kDialoguesPerShard; i < std::min(dialogues.size(), (s + 1) * kDialoguesPerShard); ++i)
        shard.push_back(to_json(dialogues[i], opt));
      write_json_atomic(tmp / shard_name(s), shard);
    }
    if (!schemas.empty()) {
      json js = json::array();
      for (const auto& sc : schemas) js.push_back(to_json(sc));
      write_json_atomic(tmp / "schema.json", js);
    }
    fs::remove_all(target);
    fs::rename(tmp, target);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

inline std::vector<std::filesystem::path> corpus_shards(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("corpus directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && text::starts_with(name, "dialogues_") && e.path().extension() == ".json")
      files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

inline std::vector<Dialogue> read_shard(const std::filesystem::path& file) {
  json j = read_json_file(file);
  if (!j.is_array()) throw ParseError(file.string(), 0, "shard must hold a JSON array of dialogues");
  std::vector<Dialogue> out;
  for (const auto& jd : j) out.push_back(dialogue_from_json(jd, file.string()));
  return out;
}

// Dialogues of every shard, ordered by dialogue id.
inline std::vector<Dialogue> read_corpus(const std::filesystem::path& dir) {
  std::vector<Dialogue> out;
  for (const auto& f : corpus_shards(dir)) {
    auto part = read_shard(f);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  std::stable_sort(out.begin(), out.end(), [](const Dialogue& a, const Dialogue& b) { return a.dialogue_id < b.dialogue_id; });
  return out;
}

// Schemas stored alongside a corpus, if any.
inline std::vector<ServiceSchema> read_corpus_schemas(const std::filesystem::path& dir) {
  auto file = dir / "schema.json";
  if (!std::filesystem::exists(file)) return {};
  return load_schemas(file);
}

// ---------------------------------------------------------------------------
// Statistics

struct CorpusStats {
  std::size_t num_dialogues = 0;
  std::size_t total_turns = 0;
  std::size_t total_tokens = 0;
  double avg_turns_per_dialogue = 0;
  double avg_tokens_per_turn = 0;
  std::size_t unique_tokens = 0;
  std::size_t num_slots = 0;
  std::size_t num_slot_values = 0;
  std::map<std::string, std::size_t> domain_dialogues;
  std::map<std::size_t, std::size_t> dialogue_lengths;  // turns -> dialogues
  std::map<std::string, std::size_t> act_counts;
};

// Mergeable partial statistics. Tokens are lowercased whitespace-delimited units.
class StatsAccumulator {
public:
  void add(const Dialogue& d) {
    ++dialogues_;
    turns_ += d.turns.size();
    ++lengths_[d.turns.size()];
    std::set<std::string> domains;
    for (const auto& s : d.services) domains.insert(service_domain(s));
    for (const auto& dom : domains) ++domains_[dom];
    for (const auto& t : d.turns) {
      for (const auto& tok : text::split_whitespace(t.utterance)) {
        ++tokens_;
        vocab_.insert(text::lower(tok));
      }
      for (const auto& f : t.frames) {
        for (const auto& a : f.actions) {
          ++acts_[act_name(a.act)];
          if (a.has_slot_value()) note_value(f.service, *a.slot, *a.value);
          else if (a.slot && *a.slot != kIntentSlot && *a.slot != kCountSlot) slots_.insert(f.service + "/" + *a.slot);
        }
        if (f.state)
          for (const auto& [slot, values] : f.state->slot_values)
            for (const auto& v : values) note_value(f.service, slot, v);
        for (const auto& s : f.slots) note_value(f.service, s.slot, s.value);
      }
    }
  }

  void merge(const StatsAccumulator& o) {
    dialogues_ += o.dialogues_;
    turns_ += o.turns_;
    tokens_ += o.tokens_;
    vocab_.insert(o.vocab_.begin(), o.vocab_.end());
    slots_.insert(o.slots_.begin(), o.slots_.end());
    values_.insert(o.values_.begin(), o.values_.end());
    for (const auto& [k, v] : o.domains_) domains_[k] += v;
    for (const auto& [k, v] : o.lengths_) lengths_[k] += v;
    for (const auto& [k, v] : o.acts_) acts_[k] += v;
  }

  CorpusStats finish() const {
    CorpusStats s;
    s.num_dialogues = dialogues_;
    s.total_turns = turns_;
    s.total_tokens = tokens_;
    s.avg_turns_per_dialogue = dialogues_ ? static_cast<double>(turns_) / static_cast<double>(dialogues_) : 0.0;
    s.avg_tokens_per_turn = turns_ ? static_cast<double>(tokens_) / static_cast<double>(turns_) : 0.0;
    s.unique_tokens = vocab_.size();
    s.num_slots = slots_.size();
    s.num_slot_values = values_.size();
    s.domain_dialogues = domains_;
    s.dialogue_lengths = lengths_;
    s.act_counts = acts_;
    return s;
  }

private:
  void note_value(const std::string& svc, const std::string& slot, const std::string& value) {
    slots_.insert(svc + "/" + slot);
    if (value != kDontCare) values_.insert(svc + "/" + slot + "=" + value);
  }

  std::size_t dialogues_ = 0, turns_ = 0, tokens_ = 0;
  std::set<std::string> vocab_, slots_, values_;
  std::map<std::string, std::size_t> domains_, acts_;
  std::map<std::size_t, std::size_t> lengths_;
};

inline CorpusStats compute_stats(const std::vector<Dialogue>& dialogues) {
  StatsAccumulator acc;
  for (const auto& d : dialogues) acc.add(d);
  return acc.finish();
}

inline json to_json(const CorpusStats& s) {
  json lengths = json::object();
  for (const auto& [k, v] : s.dialogue_lengths) lengths[std::to_string(k)] = v;
  return {{"num_dialogues", s.num_dialogues},
          {"total_turns", s.total_turns},
          {"total_tokens", s.total_tokens},
          {"avg_turns_per_dialogue", s.avg_turns_per_dialogue},
          {"avg_tokens_per_turn", s.avg_tokens_per_turn},
          {"unique_tokens", s.unique_tokens},
          {"num_slots", s.num_slots},
          {"num_slot_values", s.num_slot_values},
          {"domain_dialogues", s.domain_dialogues},
          {"dialogue_lengths", lengths},
          {"act_counts", s.act_counts}};
}

inline std::string stats_table(const CorpusStats& s) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-28s %12s\n", "metric", "value");
  out << buf;
  auto row = [&](const char* name, const std::string& v) {
    std::snprintf(buf, sizeof buf, "%-28s %12s\n", name, v.c_str());
    out << buf;
  };
  auto fixed2 = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.2f", v);
    return std::string(b);
  };
  row("No. of dialogues", std::to_string(s.num_dialogues));
  row("Total no. of turns", std::to_string(s.total_turns));
  row("Avg. turns per dialogue", fixed2(s.avg_turns_per_dialogue));
  row("Avg. tokens per turn", fixed2(s.avg_tokens_per_turn));
  row("Total unique tokens", std::to_string(s.unique_tokens));
  row("No. of slots", std::to_string(s.num_slots));
  row("No. of slot values", std::to_string(s.num_slot_values));
  if (!s.domain_dialogues.empty()) {
    out << "\n";
    std::snprintf(buf, sizeof buf, "%-28s %12s\n", "domain", "dialogues");
    out << buf;
    for (const auto& [d, n] : s.domain_dialogues) row(d.c_str(), std::to_string(n));
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Splits

struct SplitPolicy {
  std::set<std::string> holdout_services;
  std::set<std::string> holdout_domains;
  double dev_ratio = 0.1;
  double test_ratio = 0.1;
  std::uint64_t seed = 0;
};

struct CorpusSplits {
  std::vector<Dialogue> train, dev, test;
};

// Dialogues touching a held-out service or domain go to dev or test only.
// Assignment depends on the dialogue id and seed, not on input order.
inline CorpusSplits split_corpus(const std::vector<Dialogue>& dialogues, const SchemaRegistry& schemas,
                                 const SplitPolicy& policy) {
  for (const auto& s : policy.holdout_services)
    if (!schemas.count(s)) throw Error("split policy names unknown service '" + s + "'");
  for (const auto& d : policy.holdout_domains) {
    bool any = std::any_of(schemas.begin(), schemas.end(), [&](const auto& e) { return service_domain(e.first) == d; });
    if (!any) throw Error("split policy names unknown domain '" + d + "'");
  }
  if (policy.dev_ratio < 0 || policy.test_ratio < 0 || policy.dev_ratio + policy.test_ratio > 1)
    throw Error("split ratios must be non-negative and sum to at most 1");

  CorpusSplits out;
  for (const auto& d : dialogues) {
    bool held = std::any_of(d.services.begin(), d.services.end(), [&](const std::string& s) {
      return policy.holdout_services.count(s) || policy.holdout_domains.count(service_domain(s));
    });
    Rng rng(derive_seed(policy.seed, fnv1a(d.dialogue_id)));
    double u = rng.uniform();
    if (held) {
      double total = policy.dev_ratio + policy.test_ratio;
      double dev_share = total > 0 ? policy.dev_ratio / total : 0.5;
      (u < dev_share ? out.dev : out.test).push_back(d);
    } else if (u < policy.dev_ratio) {
      out.dev.push_back(d);
    } else if (u < policy.dev_ratio + policy.test_ratio) {
      out.test.push_back(d);
    } else {
      out.train.push_back(d);
    }
  }
  return out;
}

} // namespace sgd
