#pragma once

// Dialogues in the public corpus shape: turns with utterances and one frame
// per service carrying spans, actions, state (user turns) and service calls.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sgd/dialogue_act.hpp"
#include "sgd/json_io.hpp"
#include "sgd/schema.hpp"
#include "sgd/text.hpp"

namespace sgd {

// Byte offsets into the owning utterance; `value` is the covered text.
struct SlotSpan {
  std::string slot;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string value;
  bool operator==(const SlotSpan&) const = default;
};

struct Frame {
  std::string service;
  std::vector<SlotSpan> slots;
  std::vector<Action> actions;
  std::optional<FrameState> state;
  std::optional<ServiceCall> service_call;  // results live in service_call->results
  bool operator==(const Frame&) const = default;
};

struct Turn {
  Speaker speaker = Speaker::user;
  std::string utterance;
  std::vector<Frame> frames;
  bool operator==(const Turn&) const = default;

  const Frame* frame(std::string_view service) const {
    for (const auto& f : frames)
      if (f.service == service) return &f;
    return nullptr;
  }
};

struct Dialogue {
  std::string dialogue_id;
  std::vector<std::string> services;
  std::vector<Turn> turns;
  bool operator==(const Dialogue&) const = default;
};

struct WriteOptions {
  bool include_user_actions = false;
};

inline json action_to_json(const Action& a) {
  json values = json::array(), canonical = json::array();
  if (a.value) {
    values.push_back(a.surface_value());
    canonical.push_back(*a.value);
  }
  return {{"act", act_name(a.act)}, {"slot", a.slot.value_or("")}, {"values", values}, {"canonical_values", canonical}};
}

inline Action action_from_public_json(const json& j, const std::string& origin) {
  auto name = get_field<std::string>(j, "act", origin);
  auto act = parse_act(name);
  if (!act) throw ParseError(origin, 0, "unknown dialogue act '" + name + "'");
  Action a = Action::make(*act);
  auto slot = get_field_or<std::string>(j, "slot", "", origin);
  if (!slot.empty()) a.slot = slot;
  auto values = get_field_or<std::vector<std::string>>(j, "values", {}, origin);
  auto canonical = get_field_or<std::vector<std::string>>(j, "canonical_values", {}, origin);
  if (!canonical.empty()) a.value = canonical.front();
  else if (!values.empty()) a.value = values.front();
  if (!values.empty() && values.front() != *a.value) a.surface = values.front();
  return a;
}

inline json to_json(const Dialogue& d, const WriteOptions& opt = {}) {
  json turns = json::array();
  for (const auto& t : d.turns) {
    json frames = json::array();
    for (const auto& f : t.frames) {
      json spans = json::array();
      for (const auto& s : f.slots)
        spans.push_back({{"slot", s.slot},
                         {"start", text::byte_to_char_offset(t.utterance, s.start)},
                         {"exclusive_end", text::byte_to_char_offset(t.utterance, s.end)}});
      json jf = {{"service", f.service}, {"slots", std::move(spans)}};
      if (t.speaker == Speaker::system || opt.include_user_actions) {
        json actions = json::array();
        for (const auto& a : f.actions) actions.push_back(action_to_json(a));
        jf["actions"] = std::move(actions);
      }
      if (f.state) jf["state"] = to_json(*f.state);
      if (f.service_call) {
        jf["service_call"] = {{"method", f.service_call->method}, {"parameters", f.service_call->parameters}};
        jf["service_results"] = f.service_call->results;
      }
      frames.push_back(std::move(jf));
    }
    turns.push_back({{"speaker", speaker_name(t.speaker)}, {"utterance", t.utterance}, {"frames", std::move(frames)}});
  }
  return {{"dialogue_id", d.dialogue_id}, {"services", d.services}, {"turns", std::move(turns)}};
}

inline Dialogue dialogue_from_json(const json& j, const std::string& origin = {}) {
  Dialogue d;
  d.dialogue_id = get_field<std::string>(j, "dialogue_id", origin);
  d.services = get_field<std::vector<std::string>>(j, "services", origin);
  const std::string where = origin.empty() ? d.dialogue_id : origin + " (" + d.dialogue_id + ")";
  for (const auto& jt : get_field<json>(j, "turns", where)) {
    Turn t;
    t.speaker = parse_speaker(get_field<std::string>(jt, "speaker", where));
    t.utterance = get_field<std::string>(jt, "utterance", where);
    for (const auto& jf : get_field<json>(jt, "frames", where)) {
      Frame f;
      f.service = get_field<std::string>(jf, "service", where);
      for (const auto& js : get_field_or<json>(jf, "slots", json::array(), where)) {
        SlotSpan s;
        s.slot = get_field<std::string>(js, "slot", where);
        auto start = get_field<std::size_t>(js, "start", where);
        auto end = get_field<std::size_t>(js, "exclusive_end", where);
        s.start = text::char_to_byte_offset(t.utterance, start);
        s.end = text::char_to_byte_offset(t.utterance, end);
        if (end < start || s.end > t.utterance.size() || (end > start && s.end == s.start))
          throw ParseError(where, 0, "span of '" + s.slot + "' outside its utterance");
        s.value = t.utterance.substr(s.start, s.end - s.start);
        f.slots.push_back(std::move(s));
      }
      for (const auto& ja : get_field_or<json>(jf, "actions", json::array(), where))
        f.actions.push_back(action_from_public_json(ja, where));
      if (jf.contains("state")) f.state = frame_state_from_json(jf["state"], where);
      if (jf.contains("service_call")) {
        const json& jc = jf["service_call"];
        ServiceCall c;
        c.service = f.service;
        c.method = get_field<std::string>(jc, "method", where);
        c.parameters = get_field_or<Record>(jc, "parameters", {}, where);
        c.results = get_field_or<std::vector<Record>>(jf, "service_results", {}, where);
        f.service_call = std::move(c);
      }
      t.frames.push_back(std::move(f));
    }
    d.turns.push_back(std::move(t));
  }
  return d;
}

// Structural checks on one dialogue against the schemas it uses.
inline ValidationReport validate_dialogue(const Dialogue& d, const SchemaRegistry& schemas) {
  ValidationReport report;
  auto at = [&](std::size_t i) { return d.dialogue_id + ":turn " + std::to_string(i); };
  if (d.turns.empty()) report.add(d.dialogue_id, "dialogue.empty", "dialogue has no turns");
  for (const auto& svc : d.services)
    if (!schemas.count(svc)) report.add(d.dialogue_id, "dialogue.service", "no schema for service '" + svc + "'");
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const Turn& t = d.turns[i];
    Speaker want = i % 2 == 0 ? Speaker::user : Speaker::system;
    if (t.speaker != want) report.add(at(i), "alternation", "expected " + std::string(speaker_name(want)));
    if (text::is_blank(t.utterance)) report.add(at(i), "utterance.empty", "empty utterance");
    std::vector<std::pair<std::size_t, std::size_t>> covered;
    for (const auto& f : t.frames) {
      auto sit = schemas.find(f.service);
      if (std::find(d.services.begin(), d.services.end(), f.service) == d.services.end())
        report.add(at(i), "frame.service", "frame for service '" + f.service + "' outside the dialogue");
      const ServiceSchema* schema = sit == schemas.end() ? nullptr : &sit->second;
      for (const auto& s : f.slots) {
        if (s.end <= s.start || s.end > t.utterance.size() ||
            t.utterance.compare(s.start, s.end - s.start, s.value) != 0)
          report.add(at(i), "span.sound", "span of '" + s.slot + "' does not cover its value");
        for (const auto& [a, b] : covered)
          if (s.start < b && a < s.end) report.add(at(i), "span.overlap", "span of '" + s.slot + "' overlaps another");
        covered.emplace_back(s.start, s.end);
        if (schema && !schema->find_slot(s.slot)) report.add(at(i), "span.slot", "unknown slot '" + s.slot + "'");
      }
      for (const auto& a : f.actions) {
        if (!usable_by(a.act, t.speaker))
          report.add(at(i), "act.actor", std::string(act_name(a.act)) + " not usable by " + speaker_name(t.speaker));
        if (schema && a.has_slot_value() && !schema->find_slot(*a.slot))
          report.add(at(i), "act.slot", "unknown slot '" + *a.slot + "'");
      }
      if (t.speaker == Speaker::user && !f.state) report.add(at(i), "state.missing", "user frame without state");
      if (f.state && schema) {
        if (f.state->active_intent != kNoneIntent && !schema->find_intent(f.state->active_intent))
          report.add(at(i), "state.intent", "unknown intent '" + f.state->active_intent + "'");
        for (const auto& r : f.state->requested_slots)
          if (!schema->find_slot(r)) report.add(at(i), "state.requested", "unknown slot '" + r + "'");
        for (const auto& [slot, values] : f.state->slot_values) {
          if (!schema->find_slot(slot)) report.add(at(i), "state.slot", "unknown slot '" + slot + "'");
          if (values.empty()) report.add(at(i), "state.value", "slot '" + slot + "' has no value");
        }
      }
    }
  }
  return report;
}

} // namespace sgd
