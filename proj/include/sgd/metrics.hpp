#pragma once

// Dialogue state tracking metrics over frames, i.e. (dialogue, user turn,
// service) triples: active intent accuracy, requested slot F1, average and
// joint goal accuracy, with per-service, per-domain and seen/unseen breakdowns.

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "sgd/dialogue.hpp"
#include "sgd/json_io.hpp"
#include "sgd/schema.hpp"
#include "sgd/text.hpp"
#include "sgd/tracker/model.hpp"

namespace sgd {

inline std::u32string code_points(std::string_view s) {
  std::u32string out;
  for (std::size_t i = 0; i < s.size();) {
    unsigned char c = static_cast<unsigned char>(s[i]);
    int len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : (c >> 3) == 0x1E ? 4 : 1;
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1F) : len == 3 ? (c & 0x0F) : (c & 0x07);
    for (int k = 1; k < len && i + static_cast<std::size_t>(k) < s.size(); ++k)
      cp = (cp << 6) | (static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]) & 0x3F);
    out.push_back(cp);
    i += static_cast<std::size_t>(len);
  }
  return out;
}

inline std::size_t levenshtein(const std::u32string& a, const std::u32string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

// 1 - edit distance / longer length, on lowercased whitespace-collapsed text.
inline double fuzzy_score(std::string_view a, std::string_view b) {
  auto x = code_points(text::normalize(a)), y = code_points(text::normalize(b));
  std::size_t n = std::max(x.size(), y.size());
  if (n == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(x, y)) / static_cast<double>(n);
}

struct EvalOptions {
  bool exact_match = false;
  bool allow_partial = false;
  bool ignore_extra = false;
  double fuzzy_threshold = 0.9;
  std::set<std::string> seen_services;  // empty: no seen/unseen partition
};

// Score of a predicted value list against the acceptable reference values.
inline double slot_score(const std::vector<std::string>& ref, const std::vector<std::string>& hyp, bool categorical,
                         const EvalOptions& opt) {
  double best = 0;
  for (const auto& r : ref)
    for (const auto& h : hyp) {
      double s;
      if (categorical || opt.exact_match || r == kDontCare || h == kDontCare) s = r == h ? 1.0 : 0.0;
      else s = fuzzy_score(r, h);
      best = std::max(best, s);
    }
  return best;
}

struct FrameScore {
  bool intent_correct = false;
  std::optional<double> requested_f1;  // absent when skipped
  std::vector<double> slot_scores;     // one per non-empty reference slot
  bool joint = false;
};

inline FrameScore score_frame(const FrameState& ref, const FrameState& hyp, const ServiceSchema* schema,
                              const EvalOptions& opt) {
  FrameScore fs;
  fs.intent_correct = ref.active_intent == hyp.active_intent;
  if (!ref.requested_slots.empty() || !hyp.requested_slots.empty()) {
    std::size_t tp = 0;
    for (const auto& s : hyp.requested_slots) tp += ref.requested_slots.count(s);
    if (tp == 0) {
      fs.requested_f1 = 0.0;
    } else {
      double p = static_cast<double>(tp) / static_cast<double>(hyp.requested_slots.size());
      double r = static_cast<double>(tp) / static_cast<double>(ref.requested_slots.size());
      fs.requested_f1 = 2 * p * r / (p + r);
    }
  }
  fs.joint = true;
  for (const auto& [slot, values] : ref.slot_values) {
    if (values.empty()) continue;
    bool categorical = schema && schema->is_categorical(slot);
    auto it = hyp.slot_values.find(slot);
    double s = it == hyp.slot_values.end() ? 0.0 : slot_score(values, it->second, categorical, opt);
    fs.slot_scores.push_back(s);
    bool match = categorical || opt.exact_match ? s == 1.0 : s >= opt.fuzzy_threshold;
    if (!match) fs.joint = false;
  }
  if (!opt.ignore_extra)
    for (const auto& [slot, values] : hyp.slot_values) {
      if (values.empty()) continue;
      auto it = ref.slot_values.find(slot);
      if (it == ref.slot_values.end() || it->second.empty()) fs.joint = false;
    }
  return fs;
}

// Mergeable sums behind one set of the four metrics.
struct MetricSums {
  std::size_t frames = 0;
  std::size_t intent_correct = 0;
  double f1_sum = 0;
  std::size_t f1_count = 0;
  double goal_sum = 0;
  std::size_t goal_count = 0;
  std::size_t joint_correct = 0;

  void add(const FrameScore& s) {
    ++frames;
    intent_correct += s.intent_correct;
    if (s.requested_f1) {
      f1_sum += *s.requested_f1;
      ++f1_count;
    }
    for (double v : s.slot_scores) goal_sum += v;
    goal_count += s.slot_scores.size();
    joint_correct += s.joint;
  }
  void merge(const MetricSums& o) {
    frames += o.frames, intent_correct += o.intent_correct, f1_sum += o.f1_sum, f1_count += o.f1_count;
    goal_sum += o.goal_sum, goal_count += o.goal_count, joint_correct += o.joint_correct;
  }
};

struct MetricValues {
  std::optional<double> active_intent_accuracy, requested_slot_f1, average_goal_accuracy, joint_goal_accuracy;
  std::size_t frames = 0;
};

inline MetricValues finish(const MetricSums& s) {
  auto ratio = [](double num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return num / static_cast<double>(den);
  };
  return {ratio(static_cast<double>(s.intent_correct), s.frames), ratio(s.f1_sum, s.f1_count),
          ratio(s.goal_sum, s.goal_count), ratio(static_cast<double>(s.joint_correct), s.frames), s.frames};
}

struct FrameKey {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  std::string service;
  auto operator<=>(const FrameKey&) const = default;
};

inline std::string to_string(const FrameKey& k) {
  return k.dialogue_id + "/" + std::to_string(k.turn_index) + "/" + k.service;
}

struct EvalReport {
  MetricValues overall;
  std::map<std::string, MetricValues> per_service, per_domain;
  std::optional<MetricValues> seen, unseen;
  std::vector<FrameKey> missing;
};

class MissingPredictions : public Error {
public:
  explicit MissingPredictions(std::vector<FrameKey> missing)
      : Error(describe(missing)), missing_(std::move(missing)) {}
  const std::vector<FrameKey>& missing() const noexcept { return missing_; }

private:
  static std::string describe(const std::vector<FrameKey>& m) {
    std::string s = std::to_string(m.size()) + " reference frames have no prediction:";
    for (std::size_t i = 0; i < m.size() && i < 20; ++i) s += "\n  " + to_string(m[i]);
    if (m.size() > 20) s += "\n  ...";
    return s;
  }
  std::vector<FrameKey> missing_;
};

// Reference frames: every user-turn frame carrying a state.
inline std::map<FrameKey, FrameState> reference_frames(const std::vector<Dialogue>& refs) {
  std::map<FrameKey, FrameState> out;
  for (const auto& d : refs)
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      if (d.turns[i].speaker != Speaker::user) continue;
      for (const auto& f : d.turns[i].frames)
        if (f.state) out[{d.dialogue_id, i, f.service}] = *f.state;
    }
  return out;
}

inline EvalReport evaluate(const std::vector<Dialogue>& refs, const std::vector<tracker::PredictedFrame>& hyps,
                           const SchemaRegistry& schemas, const EvalOptions& opt = {}) {
  auto ref = reference_frames(refs);
  std::map<FrameKey, const FrameState*> hyp;
  for (const auto& p : hyps) {
    FrameKey k{p.dialogue_id, p.turn_index, p.service};
    if (!ref.count(k)) throw Error("prediction " + to_string(k) + " has no reference frame");
    if (!hyp.emplace(k, &p.state).second) throw Error("duplicate prediction for " + to_string(k));
  }
  EvalReport rep;
  for (const auto& [k, _] : ref)
    if (!hyp.count(k)) rep.missing.push_back(k);
  if (!rep.missing.empty() && !opt.allow_partial) throw MissingPredictions(rep.missing);

  MetricSums all, seen, unseen;
  std::map<std::string, MetricSums> by_service, by_domain;
  for (const auto& [k, st] : ref) {
    auto it = hyp.find(k);
    if (it == hyp.end()) continue;
    auto sit = schemas.find(k.service);
    FrameScore s = score_frame(st, *it->second, sit == schemas.end() ? nullptr : &sit->second, opt);
    all.add(s);
    by_service[k.service].add(s);
    by_domain[service_domain(k.service)].add(s);
    (opt.seen_services.count(k.service) ? seen : unseen).add(s);
  }
  rep.overall = finish(all);
  for (const auto& [k, v] : by_service) rep.per_service[k] = finish(v);
  for (const auto& [k, v] : by_domain) rep.per_domain[k] = finish(v);
  if (!opt.seen_services.empty()) {
    rep.seen = finish(seen);
    rep.unseen = finish(unseen);
  }
  return rep;
}

inline json to_json(const MetricValues& m) {
  auto v = [](const std::optional<double>& x) -> json { return x ? json(*x) : json(nullptr); };
  return {{"active_intent_accuracy", v(m.active_intent_accuracy)},
          {"requested_slot_f1", v(m.requested_slot_f1)},
          {"average_goal_accuracy", v(m.average_goal_accuracy)},
          {"joint_goal_accuracy", v(m.joint_goal_accuracy)},
          {"frames", m.frames}};
}

inline json to_json(const EvalReport& r) {
  json j = {{"overall", to_json(r.overall)}};
  json ps = json::object(), pd = json::object(), missing = json::array();
  for (const auto& [k, v] : r.per_service) ps[k] = to_json(v);
  for (const auto& [k, v] : r.per_domain) pd[k] = to_json(v);
  for (const auto& k : r.missing) missing.push_back({{"dialogue_id", k.dialogue_id}, {"turn_index", k.turn_index}, {"service", k.service}});
  j["per_service"] = ps;
  j["per_domain"] = pd;
  j["seen"] = r.seen ? to_json(*r.seen) : json(nullptr);
  j["unseen"] = r.unseen ? to_json(*r.unseen) : json(nullptr);
  j["missing"] = missing;
  return j;
}

inline std::string report_table(const EvalReport& r) {
  std::ostringstream out;
  char buf[256];
  auto cell = [](const std::optional<double>& v) {
    char b[16];
    if (!v) return std::string("-");
    std::snprintf(b, sizeof b, "%.3f", *v);
    return std::string(b);
  };
  auto row = [&](const std::string& name, const MetricValues& m) {
    std::snprintf(buf, sizeof buf, "%-24s %10s %10s %10s %10s %8zu\n", name.c_str(), cell(m.active_intent_accuracy).c_str(),
                  cell(m.requested_slot_f1).c_str(), cell(m.average_goal_accuracy).c_str(),
                  cell(m.joint_goal_accuracy).c_str(), m.frames);
    out << buf;
  };
  std::snprintf(buf, sizeof buf, "%-24s %10s %10s %10s %10s %8s\n", "scope", "intent_acc", "req_f1", "avg_ga", "joint_ga",
                "frames");
  out << buf;
  row("all", r.overall);
  if (r.seen) row("seen", *r.seen);
  if (r.unseen) row("unseen", *r.unseen);
  for (const auto& [k, v] : r.per_domain) row("domain:" + k, v);
  for (const auto& [k, v] : r.per_service) row("service:" + k, v);
  if (!r.missing.empty()) out << r.missing.size() << " frames without predictions were skipped\n";
  return out.str();
}

} // namespace sgd
