#pragma once

// From outlines to text: per-dialogue value variation, template rendering with
// spans taken from placeholder offsets, string-search span recovery and the
// verbatim-value check applied to human paraphrases.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sgd/calendar.hpp"
#include "sgd/dialogue.hpp"
#include "sgd/json_io.hpp"
#include "sgd/rng.hpp"
#include "sgd/simulator.hpp"
#include "sgd/text.hpp"

namespace sgd {

// ---------------------------------------------------------------------------
// Value variation

struct VariationTable {
  std::map<std::string, std::vector<std::string>> values;
  bool date_time = false;  // derive variants for ISO dates and HH:MM times

  bool empty() const { return values.empty() && !date_time; }
};

inline std::vector<std::string> date_variants(const std::string& iso) {
  auto d = calendar::parse_iso(iso);
  if (!d) return {};
  std::vector<std::string> out;
  long offset = calendar::days_from_civil(*d) - calendar::days_from_civil(calendar::kCorpusToday);
  if (offset == 0) out.push_back("today");
  if (offset == 1) out.push_back("tomorrow");
  if (offset == 2) out.push_back("day after tomorrow");
  const std::string month = calendar::kMonths[static_cast<std::size_t>(d->month - 1)];
  out.push_back(month + " " + calendar::ordinal(d->day));
  out.push_back("the " + calendar::ordinal(d->day) + " of " + month);
  if (offset > 2 && offset < 7) out.push_back(calendar::kWeekdays[static_cast<std::size_t>(calendar::weekday(*d))]);
  if (offset >= 7 && offset < 14)
    out.push_back("next " + std::string(calendar::kWeekdays[static_cast<std::size_t>(calendar::weekday(*d))]));
  return out;
}

inline std::vector<std::string> time_variants(const std::string& hhmm) {
  auto t = calendar::parse_hhmm(hhmm);
  if (!t) return {};
  int h12 = t->hour % 12 == 0 ? 12 : t->hour % 12;
  const char* ampm = t->hour < 12 ? "am" : "pm";
  const char* part = t->hour < 12 ? "in the morning" : t->hour < 17 ? "in the afternoon" : "in the evening";
  std::vector<std::string> out;
  if (t->minute == 0) {
    out.push_back(std::to_string(h12) + " " + ampm);
    out.push_back(std::to_string(h12) + " o'clock " + part);
  } else {
    char mm[8];
    std::snprintf(mm, sizeof mm, "%02d", t->minute);
    out.push_back(std::to_string(h12) + ":" + mm + " " + ampm);
    if (t->minute == 30) out.push_back("half past " + std::to_string(h12) + " " + part);
    else out.push_back(std::to_string(h12) + ":" + mm + " " + part);
  }
  return out;
}

// The canonical value followed by its distinct variants.
inline std::vector<std::string> surface_choices(const VariationTable& table, const std::string& canonical) {
  std::vector<std::string> out{canonical};
  auto add = [&](const std::string& v) {
    if (!v.empty() && std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  };
  if (auto it = table.values.find(canonical); it != table.values.end())
    for (const auto& v : it->second) add(v);
  if (table.date_time) {
    for (const auto& v : date_variants(canonical)) add(v);
    for (const auto& v : time_variants(canonical)) add(v);
  }
  return out;
}

inline VariationTable variations_from_json(const json& j, const std::string& origin = {}) {
  VariationTable t;
  t.values = get_field_or<std::map<std::string, std::vector<std::string>>>(j, "values", {}, origin);
  t.date_time = get_field_or<bool>(j, "date_time", false, origin);
  for (auto& [canonical, variants] : t.values) {
    std::vector<std::string> unique;
    for (const auto& v : variants)
      if (std::find(unique.begin(), unique.end(), v) == unique.end()) unique.push_back(v);
    if (unique.size() != variants.size())
      throw ParseError(origin, 0, "duplicate variants for '" + canonical + "'");
  }
  return t;
}

inline VariationTable load_variations(const std::filesystem::path& path) {
  return variations_from_json(read_json_file(path), path.string());
}

// One surface per canonical value per dialogue, used at every user-side
// occurrence; system actions keep canonical values. States list the chosen
// surface followed by the canonical value when the two differ.
inline Outline vary_values(const Outline& outline, const VariationTable& table, Rng& rng) {
  Outline out = outline;
  if (table.empty()) return out;
  std::map<std::string, std::string> chosen;
  auto pick = [&](const std::string& canonical) -> const std::string& {
    auto it = chosen.find(canonical);
    if (it != chosen.end()) return it->second;
    auto choices = surface_choices(table, canonical);
    return chosen.emplace(canonical, choices[rng.uniform_index(choices.size())]).first->second;
  };
  for (auto& t : out.turns) {
    if (t.speaker != Speaker::user) continue;
    for (auto& sa : t.actions) {
      if (!sa.action.has_slot_value() || *sa.action.value == kDontCare) continue;
      const std::string& s = pick(*sa.action.value);
      if (s != *sa.action.value) sa.action.surface = s;
    }
  }
  for (auto& t : out.turns)
    for (auto& [svc, st] : t.states)
      for (auto& [slot, values] : st.slot_values) {
        if (values.size() != 1) continue;
        auto it = chosen.find(values.front());
        if (it != chosen.end() && it->second != values.front()) values.insert(values.begin(), it->second);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Templates

class MissingTemplate : public Error {
public:
  explicit MissingTemplate(const std::string& act) : Error("no template for " + act), act_(act) {}
  const std::string& act() const noexcept { return act_; }

private:
  std::string act_;
};

// Keys, most specific first: "svc:ACT(slot=value)", "ACT(slot=value)",
// "svc:ACT(slot)", "ACT(slot)", "ACT(*=value)", "ACT". A key maps to one
// template or a list of alternatives.
struct TemplateSet {
  std::map<std::string, std::vector<std::string>> entries;

  const std::vector<std::string>* lookup(const std::string& service, const Action& a) const {
    const std::string act = act_name(a.act);
    std::vector<std::string> keys;
    if (a.slot && a.value) {
      keys.push_back(service + ":" + act + "(" + *a.slot + "=" + *a.value + ")");
      keys.push_back(act + "(" + *a.slot + "=" + *a.value + ")");
    }
    if (a.slot) {
      keys.push_back(service + ":" + act + "(" + *a.slot + ")");
      keys.push_back(act + "(" + *a.slot + ")");
    }
    if (a.value) keys.push_back(act + "(*=" + *a.value + ")");
    keys.push_back(service + ":" + act);
    keys.push_back(act);
    for (const auto& k : keys)
      if (auto it = entries.find(k); it != entries.end() && !it->second.empty()) return &it->second;
    return nullptr;
  }
};

inline std::string template_act(const std::string& key) {
  std::string k = key.substr(key.find(':') == std::string::npos ? 0 : key.find(':') + 1);
  return k.substr(0, k.find('('));
}

// Every act has a template; keys name known acts; placeholders fit the key.
inline ValidationReport validate_templates(const TemplateSet& set) {
  ValidationReport report;
  std::set<std::string> covered;
  for (const auto& [key, alts] : set.entries) {
    std::string act = template_act(key);
    auto parsed = parse_act(act);
    if (!parsed) {
      report.add(key, "template.act", "unknown act '" + act + "'");
      continue;
    }
    if (alts.empty()) report.add(key, "template.empty", "no template text");
    for (const auto& t : alts) {
      bool uses_value = t.find("$value") != std::string::npos;
      bool uses_slot = t.find("$slot") != std::string::npos;
      Arity ar = act_arity(*parsed);
      if ((uses_value && (ar == Arity::none || ar == Arity::slot)) || (uses_slot && ar == Arity::none))
        report.add(key, "template.placeholder", "placeholder not bindable for " + act);
    }
    if (key.find('(') == std::string::npos) covered.insert(act);
  }
  for (Act a : kAllActs)
    if (!covered.count(act_name(a))) {
      bool any = std::any_of(set.entries.begin(), set.entries.end(),
                             [&](const auto& e) { return template_act(e.first) == act_name(a); });
      if (!any) report.add(act_name(a), "template.missing", std::string("no template for ") + act_name(a));
    }
  return report;
}

inline TemplateSet templates_from_json(const json& j, const std::string& origin = {}) {
  if (!j.is_object()) throw ParseError(origin, 0, "template file must be a JSON object");
  TemplateSet set;
  for (const auto& [key, v] : j.items()) {
    if (v.is_string()) set.entries[key] = {v.get<std::string>()};
    else if (v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_string(); }))
      set.entries[key] = v.get<std::vector<std::string>>();
    else throw ParseError(origin, 0, "template '" + key + "' must be a string or a list of strings");
  }
  return set;
}

inline TemplateSet load_templates(const std::filesystem::path& path) {
  return templates_from_json(read_json_file(path), path.string());
}

struct RenderedAction {
  std::string text;
  std::optional<std::size_t> value_offset;  // where $value landed
};

inline RenderedAction render_action(const std::string& tmpl, const Action& a) {
  RenderedAction r;
  const bool intent_like = a.slot && *a.slot == kIntentSlot;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 6, "$value") == 0) {
      if (!a.value) throw Error("template uses $value but " + to_string(a) + " has none");
      if (!r.value_offset) r.value_offset = r.text.size();
      r.text += intent_like ? text::humanize(*a.value) : a.surface_value();
      i += 6;
    } else if (tmpl.compare(i, 5, "$slot") == 0) {
      if (!a.slot) throw Error("template uses $slot but " + to_string(a) + " has none");
      r.text += text::humanize(*a.slot);
      i += 5;
    } else {
      r.text.push_back(tmpl[i++]);
    }
  }
  return r;
}

// Whether an action's value is a span-bearing (highlighted) slot value.
inline bool spans_value(const Action& a, const SchemaRegistry& schemas, const std::string& service) {
  if (!a.has_slot_value() || *a.value == kDontCare) return false;
  auto it = schemas.find(service);
  if (it == schemas.end()) return false;
  const SlotDef* def = it->second.find_slot(*a.slot);
  return def && !def->is_categorical;
}

inline Turn render_turn(const OutlineTurn& ot, std::size_t turn_index, const TemplateSet& templates,
                        const SchemaRegistry& schemas, const std::vector<std::string>& services) {
  Turn t;
  t.speaker = ot.speaker;
  std::map<std::string, Frame> frames;
  for (std::size_t i = 0; i < ot.actions.size(); ++i) {
    const auto& sa = ot.actions[i];
    const auto* alts = templates.lookup(sa.service, sa.action);
    if (!alts) throw MissingTemplate(act_name(sa.action.act));
    const std::string& tmpl = (*alts)[(turn_index + i) % alts->size()];
    RenderedAction r = render_action(tmpl, sa.action);
    if (!t.utterance.empty()) t.utterance.push_back(' ');
    const std::size_t base = t.utterance.size();
    t.utterance += r.text;
    Frame& f = frames[sa.service];
    f.service = sa.service;
    f.actions.push_back(sa.action);
    if (r.value_offset && spans_value(sa.action, schemas, sa.service)) {
      bool dup = std::any_of(f.slots.begin(), f.slots.end(), [&](const auto& s) { return s.slot == *sa.action.slot; });
      if (!dup) {
        std::size_t start = base + *r.value_offset;
        const std::string& v = sa.action.surface_value();
        f.slots.push_back({*sa.action.slot, start, start + v.size(), v});
      }
    }
  }
  if (t.speaker == Speaker::user) {
    for (const auto& svc : services) {
      Frame& f = frames[svc];
      f.service = svc;
      auto it = ot.states.find(svc);
      f.state = it == ot.states.end() ? FrameState{} : it->second;
    }
  }
  for (const auto& c : ot.calls) {
    Frame& f = frames[c.service];
    f.service = c.service;
    f.service_call = c;
  }
  // Frames follow the dialogue's service order.
  for (const auto& svc : services)
    if (auto it = frames.find(svc); it != frames.end()) t.frames.push_back(std::move(it->second));
  return t;
}

inline Dialogue render_templates(const Outline& o, const TemplateSet& templates, const SchemaRegistry& schemas) {
  Dialogue d;
  d.dialogue_id = o.dialogue_id;
  d.services = o.services;
  for (std::size_t i = 0; i < o.turns.size(); ++i)
    d.turns.push_back(render_turn(o.turns[i], i, templates, schemas, o.services));
  return d;
}

// ---------------------------------------------------------------------------
// Span search and paraphrase validation

struct SlotValue {
  std::string slot;
  std::string value;
  bool operator==(const SlotValue&) const = default;
};

struct SpanSearch {
  std::vector<SlotSpan> spans;        // in the order of `expected`
  std::vector<std::size_t> matched;   // index into `expected` for each span
  std::vector<SlotValue> missing;
};

// Leftmost case-insensitive match per expected value, skipping matches that
// overlap a span claimed by an earlier value. Offsets index `utterance`.
inline SpanSearch find_slot_spans(std::string_view utterance, const std::vector<SlotValue>& expected) {
  SpanSearch out;
  auto overlaps = [&](std::size_t b, std::size_t e) {
    return std::any_of(out.spans.begin(), out.spans.end(), [&](const auto& s) { return b < s.end && s.start < e; });
  };
  for (std::size_t k = 0; k < expected.size(); ++k) {
    const std::string& v = expected[k].value;
    std::size_t pos = v.empty() ? std::string_view::npos : text::ifind(utterance, v);
    while (pos != std::string_view::npos && overlaps(pos, pos + v.size())) pos = text::ifind(utterance, v, pos + 1);
    if (pos == std::string_view::npos) {
      out.missing.push_back(expected[k]);
      continue;
    }
    out.spans.push_back({expected[k].slot, pos, pos + v.size(), std::string(utterance.substr(pos, v.size()))});
    out.matched.push_back(k);
  }
  return out;
}

struct ExpectedValue {
  std::string service;
  std::string slot;
  std::string value;
};

// The highlighted values of a templated turn, in utterance order.
inline std::vector<ExpectedValue> expected_values(const Turn& templated) {
  std::vector<std::pair<std::size_t, ExpectedValue>> tmp;
  for (const auto& f : templated.frames)
    for (const auto& s : f.slots) tmp.push_back({s.start, {f.service, s.slot, s.value}});
  std::stable_sort(tmp.begin(), tmp.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<ExpectedValue> out;
  for (auto& [_, v] : tmp) out.push_back(std::move(v));
  return out;
}

struct ValidationResult {
  bool accepted = false;
  std::vector<std::pair<std::string, SlotSpan>> spans;  // (service, span)
  std::vector<ExpectedValue> missing;
};

inline ValidationResult validate_paraphrase(const Turn& templated, std::string_view text) {
  auto expected = expected_values(templated);
  std::vector<SlotValue> sv;
  for (const auto& e : expected) sv.push_back({e.slot, e.value});
  SpanSearch found = find_slot_spans(text, sv);
  ValidationResult r;
  for (std::size_t i = 0; i < found.spans.size(); ++i)
    r.spans.emplace_back(expected[found.matched[i]].service, found.spans[i]);
  std::vector<bool> hit(expected.size(), false);
  for (auto k : found.matched) hit[k] = true;
  for (std::size_t k = 0; k < expected.size(); ++k)
    if (!hit[k]) r.missing.push_back(expected[k]);
  r.accepted = r.missing.empty() && !text::is_blank(text);
  return r;
}

inline json to_json(const ValidationResult& r) {
  json spans = json::array(), missing = json::array();
  for (const auto& [svc, s] : r.spans)
    spans.push_back({{"service", svc}, {"slot", s.slot}, {"start", s.start}, {"exclusive_end", s.end}, {"value", s.value}});
  for (const auto& m : r.missing) missing.push_back({{"service", m.service}, {"slot", m.slot}, {"value", m.value}});
  return {{"accepted", r.accepted}, {"spans", spans}, {"missing", missing}};
}

class ParaphraseRejected : public Error {
public:
  ParaphraseRejected(std::size_t turn, std::vector<ExpectedValue> missing)
      : Error("paraphrase of turn " + std::to_string(turn) + " drops slot values"), turn_(turn),
        missing_(std::move(missing)) {}
  std::size_t turn() const noexcept { return turn_; }
  const std::vector<ExpectedValue>& missing() const noexcept { return missing_; }

private:
  std::size_t turn_;
  std::vector<ExpectedValue> missing_;
};

// Replaces every utterance and recomputes spans by string search. All other
// annotations are kept.
inline Dialogue apply_paraphrase(const Dialogue& templated, const std::vector<std::string>& texts) {
  if (texts.size() != templated.turns.size())
    throw Error("expected " + std::to_string(templated.turns.size()) + " paraphrased turns, got " +
                std::to_string(texts.size()));
  Dialogue out = templated;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    ValidationResult v = validate_paraphrase(templated.turns[i], texts[i]);
    if (!v.accepted) throw ParaphraseRejected(i, v.missing);
    Turn& t = out.turns[i];
    t.utterance = texts[i];
    for (auto& f : t.frames) f.slots.clear();
    for (const auto& [svc, s] : v.spans)
      for (auto& f : t.frames)
        if (f.service == svc) f.slots.push_back(s);
  }
  return out;
}

} // namespace sgd
