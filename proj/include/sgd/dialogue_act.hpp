#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sgd/backend.hpp"
#include "sgd/json_io.hpp"
#include "sgd/schema.hpp"

namespace sgd {

enum class Speaker { user, system };

inline const char* speaker_name(Speaker s) { return s == Speaker::user ? "USER" : "SYSTEM"; }

inline Speaker parse_speaker(std::string_view s) {
  if (s == "USER") return Speaker::user;
  if (s == "SYSTEM") return Speaker::system;
  throw ParseError({}, 0, "unknown speaker '" + std::string(s) + "'");
}

enum class Act {
  inform_intent,
  negate_intent,
  affirm_intent,
  inform,
  request,
  affirm,
  negate,
  select,
  request_alts,
  thank_you,
  goodbye,
  confirm,
  offer,
  notify_success,
  notify_failure,
  inform_count,
  offer_intent,
  req_more,
};

inline constexpr std::array kAllActs = {
    Act::inform_intent, Act::negate_intent, Act::affirm_intent, Act::inform,
    Act::request,       Act::affirm,        Act::negate,        Act::select,
    Act::request_alts,  Act::thank_you,     Act::goodbye,       Act::confirm,
    Act::offer,         Act::notify_success, Act::notify_failure, Act::inform_count,
    Act::offer_intent,  Act::req_more,
};

inline const char* act_name(Act a) {
  switch (a) {
    case Act::inform_intent: return "INFORM_INTENT";
    case Act::negate_intent: return "NEGATE_INTENT";
    case Act::affirm_intent: return "AFFIRM_INTENT";
    case Act::inform: return "INFORM";
    case Act::request: return "REQUEST";
    case Act::affirm: return "AFFIRM";
    case Act::negate: return "NEGATE";
    case Act::select: return "SELECT";
    case Act::request_alts: return "REQUEST_ALTS";
    case Act::thank_you: return "THANK_YOU";
    case Act::goodbye: return "GOODBYE";
    case Act::confirm: return "CONFIRM";
    case Act::offer: return "OFFER";
    case Act::notify_success: return "NOTIFY_SUCCESS";
    case Act::notify_failure: return "NOTIFY_FAILURE";
    case Act::inform_count: return "INFORM_COUNT";
    case Act::offer_intent: return "OFFER_INTENT";
    case Act::req_more: return "REQ_MORE";
  }
  return "?";
}

inline std::optional<Act> parse_act(std::string_view name) {
  for (Act a : kAllActs)
    if (name == act_name(a)) return a;
  return std::nullopt;
}

enum class Actor { user, system, both };

inline Actor act_actor(Act a) {
  switch (a) {
    case Act::inform:
    case Act::request:
    case Act::goodbye: return Actor::both;
    case Act::inform_intent:
    case Act::negate_intent:
    case Act::affirm_intent:
    case Act::affirm:
    case Act::negate:
    case Act::select:
    case Act::request_alts:
    case Act::thank_you: return Actor::user;
    default: return Actor::system;
  }
}

inline bool usable_by(Act a, Speaker s) {
  Actor actor = act_actor(a);
  return actor == Actor::both || (actor == Actor::user) == (s == Speaker::user);
}

// Argument shape of an act. Intent acts carry the intent name under the
// pseudo-slot "intent"; INFORM_COUNT carries its number under "count".
enum class Arity { none, slot, slot_value, optional_slot_value };

inline Arity act_arity(Act a) {
  switch (a) {
    case Act::inform_intent:
    case Act::negate_intent:
    case Act::affirm_intent:
    case Act::offer_intent:
    case Act::inform:
    case Act::confirm:
    case Act::offer:
    case Act::inform_count: return Arity::slot_value;
    case Act::request: return Arity::slot;
    case Act::select: return Arity::optional_slot_value;
    default: return Arity::none;
  }
}

inline constexpr const char* kIntentSlot = "intent";
inline constexpr const char* kCountSlot = "count";

inline bool is_intent_act(Act a) {
  return a == Act::inform_intent || a == Act::negate_intent || a == Act::affirm_intent ||
         a == Act::offer_intent;
}

struct Action {
  Act act;
  std::optional<std::string> slot;
  std::optional<std::string> value;    // canonical value
  std::optional<std::string> surface;  // surface form when it differs from the canonical value

  bool operator==(const Action&) const = default;

  const std::string& surface_value() const { return surface ? *surface : *value; }
  // Whether this action carries a value of a real schema slot.
  bool has_slot_value() const {
    return slot && value && *slot != kIntentSlot && *slot != kCountSlot;
  }

  static Action make(Act act) { return {act, std::nullopt, std::nullopt, std::nullopt}; }
  static Action make(Act act, std::string slot) { return {act, std::move(slot), std::nullopt, std::nullopt}; }
  static Action make(Act act, std::string slot, std::string value) {
    return {act, std::move(slot), std::move(value), std::nullopt};
  }
};

inline bool arity_ok(const Action& a) {
  if (a.value && !a.slot) return false;
  switch (act_arity(a.act)) {
    case Arity::none: return !a.slot && !a.value;
    case Arity::slot: return a.slot && !a.value;
    case Arity::slot_value: return a.slot && a.value;
    case Arity::optional_slot_value: return (!a.slot && !a.value) || (a.slot && a.value);
  }
  return false;
}

inline std::string to_string(const Action& a) {
  std::string out = act_name(a.act);
  if (a.slot) {
    out += "(" + *a.slot;
    if (a.value) out += "=" + *a.value;
    out += ")";
  }
  return out;
}

// Dialogue state of one service frame at a user turn.
struct FrameState {
  std::string active_intent = kNoneIntent;
  std::set<std::string> requested_slots;
  std::map<std::string, std::vector<std::string>> slot_values;

  bool operator==(const FrameState&) const = default;
};

inline json to_json(const FrameState& s) {
  json values = json::object();
  for (const auto& [k, v] : s.slot_values) values[k] = v;
  return {{"active_intent", s.active_intent},
          {"requested_slots", std::vector<std::string>(s.requested_slots.begin(), s.requested_slots.end())},
          {"slot_values", std::move(values)}};
}

inline FrameState frame_state_from_json(const json& j, const std::string& origin = {}) {
  FrameState s;
  s.active_intent = get_field_or<std::string>(j, "active_intent", kNoneIntent, origin);
  auto req = get_field_or<std::vector<std::string>>(j, "requested_slots", {}, origin);
  s.requested_slots = {req.begin(), req.end()};
  s.slot_values =
      get_field_or<std::map<std::string, std::vector<std::string>>>(j, "slot_values", {}, origin);
  return s;
}

struct ServiceAction {
  std::string service;
  Action action;
  bool operator==(const ServiceAction&) const = default;
};

struct ServiceCall {
  std::string service;
  std::string method;
  Record parameters;
  std::vector<Record> results;
  bool operator==(const ServiceCall&) const = default;
};

// Applies one user turn's actions for `service` to the previous state.
// INFORM / SELECT overwrite slot values; REQUEST sets this turn's requested
// slots; INFORM_INTENT / AFFIRM_INTENT switch the active intent.
inline FrameState apply_user_actions(const FrameState& prev, const std::vector<ServiceAction>& actions,
                                     std::string_view service) {
  FrameState next = prev;
  next.requested_slots.clear();
  for (const auto& sa : actions) {
    if (sa.service != service) continue;
    const Action& a = sa.action;
    switch (a.act) {
      case Act::inform:
      case Act::select:
        if (a.has_slot_value()) next.slot_values[*a.slot] = {*a.value};
        break;
      case Act::request:
        if (a.slot) next.requested_slots.insert(*a.slot);
        break;
      case Act::inform_intent:
      case Act::affirm_intent:
        if (a.value) next.active_intent = *a.value;
        break;
      default: break;
    }
  }
  return next;
}

} // namespace sgd
