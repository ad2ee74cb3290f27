#pragma once

// Two-agent dialogue simulator. A user agent seeded with a scenario (a
// sequence of intents) and a system agent with restricted service access
// exchange dialogue acts until the user says goodbye. Every domain-specific
// fact comes from schemas, backends and the scenario catalog; nothing below
// names a service, slot or intent.

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sgd/backend.hpp"
#include "sgd/dialogue_act.hpp"
#include "sgd/json_io.hpp"
#include "sgd/rng.hpp"
#include "sgd/schema.hpp"

namespace sgd {

// ---------------------------------------------------------------------------
// Scenarios

struct IntentRef {
  std::string service;
  std::string intent;
  bool operator==(const IntentRef&) const = default;
};

// Carries the accepted value of `from_slot` (service of intent `into - 1`)
// into `to_slot` (service of intent `into`) when intent `into` starts.
struct SlotTransfer {
  std::size_t into = 1;
  std::string from_slot;
  std::string to_slot;
  bool operator==(const SlotTransfer&) const = default;
};

struct Scenario {
  std::string name;
  std::vector<IntentRef> intents;
  std::vector<SlotTransfer> transfers;
  double weight = 1.0;

  bool operator==(const Scenario&) const = default;

  std::vector<std::string> services() const {
    std::vector<std::string> out;
    for (const auto& r : intents)
      if (std::find(out.begin(), out.end(), r.service) == out.end()) out.push_back(r.service);
    return out;
  }
};

struct Suggestion {
  IntentRef from;
  IntentRef to;
};

struct ScenarioCatalog {
  std::vector<Scenario> scenarios;
  std::vector<Suggestion> suggestions;

  const IntentRef* suggestion_for(const IntentRef& from) const {
    for (const auto& s : suggestions)
      if (s.from == from) return &s.to;
    return nullptr;
  }
};

inline constexpr std::size_t kMaxScenarioIntents = 5;

inline ValidationReport validate_catalog(const ScenarioCatalog& catalog, const SchemaRegistry& schemas) {
  ValidationReport report;
  if (catalog.scenarios.empty()) report.add("catalog", "catalog.empty", "scenario catalog is empty");
  auto check_ref = [&](const std::string& el, const IntentRef& ref) {
    auto it = schemas.find(ref.service);
    if (it == schemas.end())
      report.add(el, "ref.service", "unknown service '" + ref.service + "'");
    else if (!it->second.find_intent(ref.intent))
      report.add(el, "ref.intent", "service '" + ref.service + "' has no intent '" + ref.intent + "'");
  };
  for (std::size_t i = 0; i < catalog.scenarios.size(); ++i) {
    const auto& sc = catalog.scenarios[i];
    const std::string el = "scenario:" + (sc.name.empty() ? std::to_string(i) : sc.name);
    if (sc.intents.empty() || sc.intents.size() > kMaxScenarioIntents)
      report.add(el, "scenario.length", "scenario must hold 1 to 5 intents");
    if (!(sc.weight > 0)) report.add(el, "scenario.weight", "weight must be positive");
    for (const auto& r : sc.intents) check_ref(el, r);
    for (const auto& t : sc.transfers) {
      if (t.into == 0 || t.into >= sc.intents.size()) {
        report.add(el, "transfer.index", "transfer into intent " + std::to_string(t.into) + " out of range");
        continue;
      }
      auto src = schemas.find(sc.intents[t.into - 1].service);
      auto dst = schemas.find(sc.intents[t.into].service);
      if (src != schemas.end() && !src->second.find_slot(t.from_slot))
        report.add(el, "transfer.slot", "unknown source slot '" + t.from_slot + "'");
      if (dst != schemas.end() && !dst->second.find_slot(t.to_slot))
        report.add(el, "transfer.slot", "unknown target slot '" + t.to_slot + "'");
    }
  }
  for (const auto& s : catalog.suggestions) {
    check_ref("suggestion", s.from);
    check_ref("suggestion", s.to);
  }
  return report;
}

inline Scenario sample_scenario(const ScenarioCatalog& catalog, Rng& rng) {
  if (catalog.scenarios.empty()) throw Error("cannot sample from an empty scenario catalog");
  std::vector<double> weights;
  for (const auto& s : catalog.scenarios) weights.push_back(s.weight);
  return catalog.scenarios[rng.weighted_index(weights)];
}

inline IntentRef intent_ref_from_json(const json& j, const std::string& origin) {
  if (j.is_array() && j.size() == 2 && j[0].is_string() && j[1].is_string())
    return {j[0].get<std::string>(), j[1].get<std::string>()};
  return {get_field<std::string>(j, "service", origin), get_field<std::string>(j, "intent", origin)};
}

inline json to_json(const IntentRef& r) { return json::array({r.service, r.intent}); }

inline json to_json(const Scenario& s) {
  json intents = json::array();
  for (const auto& r : s.intents) intents.push_back(to_json(r));
  json transfers = json::array();
  for (const auto& t : s.transfers)
    transfers.push_back({{"into", t.into}, {"from", t.from_slot}, {"to", t.to_slot}});
  return {{"name", s.name}, {"intents", intents}, {"transfers", transfers}, {"weight", s.weight}};
}

inline Scenario scenario_from_json(const json& j, const std::string& origin = {}) {
  Scenario s;
  s.name = get_field_or<std::string>(j, "name", "", origin);
  for (const auto& r : get_field<json>(j, "intents", origin)) s.intents.push_back(intent_ref_from_json(r, origin));
  for (const auto& t : get_field_or<json>(j, "transfers", json::array(), origin))
    s.transfers.push_back({get_field<std::size_t>(t, "into", origin), get_field<std::string>(t, "from", origin),
                           get_field<std::string>(t, "to", origin)});
  s.weight = get_field_or<double>(j, "weight", 1.0, origin);
  return s;
}

inline ScenarioCatalog catalog_from_json(const json& j, const std::string& origin = {}) {
  ScenarioCatalog c;
  for (const auto& s : get_field<json>(j, "scenarios", origin)) c.scenarios.push_back(scenario_from_json(s, origin));
  for (const auto& s : get_field_or<json>(j, "suggestions", json::array(), origin))
    c.suggestions.push_back({intent_ref_from_json(get_field<json>(s, "from", origin), origin),
                             intent_ref_from_json(get_field<json>(s, "to", origin), origin)});
  return c;
}

inline ScenarioCatalog load_catalog(const std::filesystem::path& path) {
  return catalog_from_json(read_json_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Automaton configuration

struct AutomatonConfig {
  std::size_t max_turns = 60;
  int max_inform_per_turn = 3;
  double p_inform_more = 0.35;        // geometric continuation for extra informs
  double p_bare_intent = 0.35;        // announce an intent without any slot
  double p_inform_after_offer = 0.5;  // refine with remaining constraints after an offer
  double p_request_alts = 0.15;
  int max_request_alts = 2;
  double p_user_request = 0.35;
  int max_user_requests = 2;
  double p_request_on_affirm = 0.3;
  double p_inform_count = 0.5;
  double p_offer_intent = 0.8;
  double p_dontcare = 0.08;
  double p_optional_override = 0.3;
  double p_thank_you_first = 0.4;  // THANK_YOU alone before the final GOODBYE
  int system_request_max = 2;
};

inline AutomatonConfig automaton_from_json(const json& j, const std::string& origin = {}) {
  AutomatonConfig c;
  auto num = [&](const char* key, auto& field) {
    field = get_field_or<std::decay_t<decltype(field)>>(j, key, field, origin);
  };
  num("max_turns", c.max_turns);
  num("max_inform_per_turn", c.max_inform_per_turn);
  num("p_inform_more", c.p_inform_more);
  num("p_bare_intent", c.p_bare_intent);
  num("p_inform_after_offer", c.p_inform_after_offer);
  num("p_request_alts", c.p_request_alts);
  num("max_request_alts", c.max_request_alts);
  num("p_user_request", c.p_user_request);
  num("max_user_requests", c.max_user_requests);
  num("p_request_on_affirm", c.p_request_on_affirm);
  num("p_inform_count", c.p_inform_count);
  num("p_offer_intent", c.p_offer_intent);
  num("p_dontcare", c.p_dontcare);
  num("p_optional_override", c.p_optional_override);
  num("p_thank_you_first", c.p_thank_you_first);
  num("system_request_max", c.system_request_max);
  if (c.max_inform_per_turn < 1) throw ParseError(origin, 0, "max_inform_per_turn must be >= 1");
  if (c.system_request_max < 1) throw ParseError(origin, 0, "system_request_max must be >= 1");
  return c;
}

// ---------------------------------------------------------------------------
// Outlines

struct OutlineTurn {
  Speaker speaker = Speaker::user;
  std::vector<ServiceAction> actions;
  std::map<std::string, FrameState> states;  // user turns: one per dialogue service
  std::vector<ServiceCall> calls;            // system turns

  bool operator==(const OutlineTurn&) const = default;

  bool has_act(Act a) const {
    return std::any_of(actions.begin(), actions.end(), [&](const auto& sa) { return sa.action.act == a; });
  }
};

struct Outline {
  std::string dialogue_id;
  std::vector<std::string> services;
  Scenario scenario;
  std::vector<OutlineTurn> turns;

  bool operator==(const Outline&) const = default;
};

class SimulationError : public Error {
public:
  using Error::Error;
};

inline json to_json(const Action& a) {
  json j = {{"act", act_name(a.act)}};
  if (a.slot) j["slot"] = *a.slot;
  if (a.value) j["value"] = *a.value;
  if (a.surface) j["surface"] = *a.surface;
  return j;
}

inline Action action_from_json(const json& j, const std::string& origin = {}) {
  auto name = get_field<std::string>(j, "act", origin);
  auto act = parse_act(name);
  if (!act) throw ParseError(origin, 0, "unknown dialogue act '" + name + "'");
  Action a = Action::make(*act);
  if (j.contains("slot")) a.slot = get_field<std::string>(j, "slot", origin);
  if (j.contains("value")) a.value = get_field<std::string>(j, "value", origin);
  if (j.contains("surface")) a.surface = get_field<std::string>(j, "surface", origin);
  return a;
}

inline json to_json(const ServiceCall& c) {
  return {{"service", c.service}, {"method", c.method}, {"parameters", c.parameters}, {"results", c.results}};
}

inline ServiceCall service_call_from_json(const json& j, const std::string& origin = {}) {
  return {get_field<std::string>(j, "service", origin), get_field<std::string>(j, "method", origin),
          get_field_or<Record>(j, "parameters", {}, origin),
          get_field_or<std::vector<Record>>(j, "results", {}, origin)};
}

inline json to_json(const Outline& o) {
  json turns = json::array();
  for (const auto& t : o.turns) {
    json actions = json::array();
    for (const auto& sa : t.actions) {
      json a = to_json(sa.action);
      a["service"] = sa.service;
      actions.push_back(std::move(a));
    }
    json jt = {{"speaker", speaker_name(t.speaker)}, {"actions", std::move(actions)}};
    if (t.speaker == Speaker::user) {
      json states = json::object();
      for (const auto& [svc, st] : t.states) states[svc] = to_json(st);
      jt["states"] = std::move(states);
    } else {
      json calls = json::array();
      for (const auto& c : t.calls) calls.push_back(to_json(c));
      jt["service_calls"] = std::move(calls);
    }
    turns.push_back(std::move(jt));
  }
  return {{"dialogue_id", o.dialogue_id}, {"services", o.services}, {"scenario", to_json(o.scenario)},
          {"turns", std::move(turns)}};
}

inline Outline outline_from_json(const json& j, const std::string& origin = {}) {
  Outline o;
  o.dialogue_id = get_field<std::string>(j, "dialogue_id", origin);
  o.services = get_field<std::vector<std::string>>(j, "services", origin);
  o.scenario = scenario_from_json(get_field<json>(j, "scenario", origin), origin);
  for (const auto& jt : get_field<json>(j, "turns", origin)) {
    OutlineTurn t;
    t.speaker = parse_speaker(get_field<std::string>(jt, "speaker", origin));
    for (const auto& ja : get_field<json>(jt, "actions", origin))
      t.actions.push_back({get_field<std::string>(ja, "service", origin), action_from_json(ja, origin)});
    for (const auto& [svc, st] : object_field(jt, "states", origin).items())
      t.states[svc] = frame_state_from_json(st, origin);
    for (const auto& jc : get_field_or<json>(jt, "service_calls", json::array(), origin))
      t.calls.push_back(service_call_from_json(jc, origin));
    o.turns.push_back(std::move(t));
  }
  return o;
}

// ---------------------------------------------------------------------------
// Shared helpers

namespace detail {

inline const ServiceBackend& backend_for(const BackendRegistry& backends, const std::string& service) {
  auto it = backends.find(service);
  if (it == backends.end()) throw SimulationError("no backend for service '" + service + "'");
  return it->second;
}

inline const IntentDef& intent_for(const ServiceBackend& b, const std::string& intent) {
  const IntentDef* def = b.schema.find_intent(intent);
  if (!def) throw SimulationError("service '" + b.schema.service_name + "' has no intent '" + intent + "'");
  return *def;
}

// The result slot a system names when offering an entity.
inline std::string offer_slot(const IntentDef& intent) {
  for (const auto& s : intent.result_slots)
    if (!intent.accepts(s)) return s;
  if (!intent.result_slots.empty()) return intent.result_slots.front();
  throw SimulationError("search intent '" + intent.name + "' lists no result slots to offer");
}

inline std::optional<std::string> state_value(const FrameState& st, const std::string& slot) {
  auto it = st.slot_values.find(slot);
  if (it == st.slot_values.end() || it->second.empty()) return std::nullopt;
  return it->second.back();
}

} // namespace detail

// ---------------------------------------------------------------------------
// User agent

class UserAgent {
public:
  UserAgent(Scenario scenario, const BackendRegistry& backends, const AutomatonConfig& config)
      : scenario_(std::move(scenario)), backends_(&backends), config_(&config) {
    if (scenario_.intents.empty()) throw SimulationError("scenario has no intents");
    for (const auto& svc : scenario_.services()) states_[svc] = FrameState{};
  }

  bool finished() const { return phase_ == Phase::done; }
  std::size_t current_intent() const { return current_; }

  // Produces the next user turn given the preceding system turn.
  std::vector<ServiceAction> step(const std::vector<ServiceAction>& system_actions,
                                  const std::vector<ServiceCall>& system_calls, Rng& rng) {
    if (phase_ == Phase::done) throw SimulationError("user agent stepped after goodbye");
    std::vector<ServiceAction> out;
    if (phase_ == Phase::start) {
      announce(0, Act::inform_intent, rng, out);
    } else {
      respond(system_actions, system_calls, rng, out);
    }
    for (auto& [svc, st] : states_) st = apply_user_actions(st, out, svc);
    return out;
  }

private:
  enum class Phase { start, pursuing, between, closing, done };

  const IntentRef& ref() const { return scenario_.intents[current_]; }
  const ServiceBackend& backend() const { return detail::backend_for(*backends_, ref().service); }
  const IntentDef& intent() const { return detail::intent_for(backend(), ref().intent); }
  bool has_next() const { return current_ + 1 < scenario_.intents.size(); }

  void emit(std::vector<ServiceAction>& out, const std::string& svc, Action a) {
    out.push_back({svc, std::move(a)});
  }

  std::string generate_value(const ServiceBackend& b, const std::string& slot, Rng& rng) const {
    if (auto g = b.argument_generators.find(slot); g != b.argument_generators.end()) return g->second.sample(rng);
    const SlotDef* def = b.schema.find_slot(slot);
    if (def && def->is_categorical) return def->possible_values[rng.uniform_index(def->possible_values.size())];
    if (auto c = b.table.column_index(slot); c && !b.table.rows.empty())
      return b.table.rows[rng.uniform_index(b.table.rows.size())][*c];
    throw SimulationError("no value source for slot '" + slot + "' of " + b.schema.service_name);
  }

  std::optional<std::string> known_value(const std::string& svc, const std::string& slot) const {
    if (auto v = detail::state_value(states_.at(svc), slot)) return v;
    if (auto it = accepted_.find(svc); it != accepted_.end())
      if (auto f = it->second.find(slot); f != it->second.end()) return f->second;
    return std::nullopt;
  }

  void build_goal(Rng& rng) {
    goal_.clear();
    goal_order_.clear();
    const ServiceBackend& b = backend();
    const IntentDef& def = intent();
    const FrameState& st = states_.at(ref().service);

    Record fixed;  // values the goal must keep
    for (const auto& t : scenario_.transfers) {
      if (t.into != current_) continue;
      if (auto v = known_value(scenario_.intents[current_ - 1].service, t.from_slot)) {
        fixed[t.to_slot] = *v;
        set_goal(t.to_slot, *v);
      }
    }
    for (const auto& [slot, values] : st.slot_values)
      if (def.accepts(slot) && !values.empty() && !fixed.count(slot)) fixed[slot] = values.back();

    std::optional<Record> entity;
    if (!b.table.rows.empty()) {
      std::vector<std::size_t> candidates;
      for (std::size_t r = 0; r < b.table.rows.size(); ++r) {
        bool ok = true;
        for (const auto& [slot, v] : fixed)
          if (auto c = b.table.column_index(slot); c && v != kDontCare && b.table.rows[r][*c] != v) ok = false;
        if (ok) candidates.push_back(r);
      }
      std::size_t row = candidates.empty() ? rng.uniform_index(b.table.rows.size())
                                           : candidates[rng.uniform_index(candidates.size())];
      entity = b.table.record(row);
    }

    auto value_for = [&](const std::string& slot) -> std::string {
      if (auto f = fixed.find(slot); f != fixed.end()) return f->second;
      if (entity)
        if (auto e = entity->find(slot); e != entity->end()) return e->second;
      if (def.is_transactional)
        if (auto v = known_value(ref().service, slot)) return *v;
      return generate_value(b, slot, rng);
    };
    for (const auto& slot : def.required_slots) set_goal(slot, value_for(slot));
    for (const auto& [slot, dflt] : def.optional_slots) {
      if (fixed.count(slot)) {
        set_goal(slot, fixed[slot]);
        continue;
      }
      if (!def.is_transactional && rng.bernoulli(config_->p_dontcare)) {
        if (dflt != kDontCare) set_goal(slot, kDontCare);
        continue;
      }
      if (rng.bernoulli(config_->p_optional_override)) {
        std::string v = value_for(slot);
        if (v == dflt) {
          // one more draw for a value that actually overrides the default
          std::string alt = generate_value(b, slot, rng);
          if (alt != dflt) v = alt;
        }
        if (v != dflt) set_goal(slot, v);
      }
    }
  }

  void set_goal(const std::string& slot, const std::string& value) {
    if (!goal_.count(slot)) goal_order_.push_back(slot);
    goal_[slot] = value;
  }

  // Goal slots whose value is not yet part of the dialogue state.
  std::vector<std::string> pending() const {
    std::vector<std::string> out;
    const FrameState& st = states_.at(ref().service);
    for (const auto& slot : goal_order_) {
      auto v = detail::state_value(st, slot);
      if (!v || *v != goal_.at(slot)) out.push_back(slot);
    }
    return out;
  }

  void inform_slots(std::vector<std::string> forced, Rng& rng, std::vector<ServiceAction>& out,
                    bool allow_extra = true) {
    auto rest = pending();
    int extra = 0;
    int budget = config_->max_inform_per_turn - static_cast<int>(forced.size());
    if (allow_extra && budget > 0) extra = rng.geometric(config_->p_inform_more, budget);
    if (forced.empty() && !rest.empty()) extra = std::max(extra, 1);
    for (const auto& slot : rest) {
      if (extra <= 0) break;
      if (std::find(forced.begin(), forced.end(), slot) != forced.end()) continue;
      forced.push_back(slot);
      --extra;
    }
    for (const auto& slot : forced) {
      std::string v;
      if (auto g = goal_.find(slot); g != goal_.end()) {
        v = g->second;
      } else {
        v = generate_value(backend(), slot, rng);
        set_goal(slot, v);
      }
      emit(out, ref().service, Action::make(Act::inform, slot, v));
    }
  }

  void announce(std::size_t index, Act act, Rng& rng, std::vector<ServiceAction>& out) {
    current_ = index;
    phase_ = Phase::pursuing;
    alts_used_ = 0;
    requests_used_ = 0;
    offered_.reset();
    build_goal(rng);
    emit(out, ref().service, Action::make(act, kIntentSlot, ref().intent));
    std::vector<std::string> forced;
    for (const auto& t : scenario_.transfers)
      if (t.into == current_ && goal_.count(t.to_slot)) forced.push_back(t.to_slot);
    bool bare = forced.empty() && rng.bernoulli(config_->p_bare_intent);
    if (!bare) inform_slots(forced, rng, out);
  }

  void close(Rng& rng, std::vector<ServiceAction>& out) {
    const std::string& svc = ref().service;
    if (phase_ != Phase::closing && rng.bernoulli(config_->p_thank_you_first)) {
      phase_ = Phase::closing;
      emit(out, svc, Action::make(Act::thank_you));
      return;
    }
    if (phase_ != Phase::closing && rng.bernoulli(0.5)) emit(out, svc, Action::make(Act::thank_you));
    emit(out, svc, Action::make(Act::goodbye));
    phase_ = Phase::done;
  }

  void advance_or_close(Rng& rng, std::vector<ServiceAction>& out) {
    if (phase_ != Phase::closing && has_next()) {
      announce(current_ + 1, Act::inform_intent, rng, out);
    } else {
      close(rng, out);
    }
  }

  void complete(std::optional<Record> accepted) {
    if (accepted) accepted_[ref().service] = *accepted;
    phase_ = Phase::between;
    offered_.reset();
  }

  std::optional<Record> lookup(const std::string& svc, const std::string& slot, const std::string& value) const {
    const auto& b = detail::backend_for(*backends_, svc);
    auto c = b.table.column_index(slot);
    if (!c) return std::nullopt;
    for (std::size_t r = 0; r < b.table.rows.size(); ++r)
      if (b.table.rows[r][*c] == value) return b.table.record(r);
    return std::nullopt;
  }

  std::vector<std::string> requestable() const {
    std::vector<std::string> out;
    const IntentDef& def = intent();
    for (const auto& s : def.result_slots) {
      if (def.accepts(s) || goal_.count(s)) continue;
      if (!def.is_transactional && offered_ && !offered_->count(s)) continue;
      out.push_back(s);
    }
    return out;
  }

  void respond(const std::vector<ServiceAction>& sys, const std::vector<ServiceCall>& calls, Rng& rng,
               std::vector<ServiceAction>& out) {
    std::vector<std::string> requested;
    std::optional<Action> offer, offer_intent;
    bool success = false, failure = false, confirm = false, req_more = false, informed = false;
    for (const auto& sa : sys) {
      const Action& a = sa.action;
      switch (a.act) {
        case Act::request: requested.push_back(*a.slot); break;
        case Act::offer:
          if (!offer) offer = a;
          break;
        case Act::offer_intent: offer_intent = a; break;
        case Act::notify_success: success = true; break;
        case Act::notify_failure: failure = true; break;
        case Act::confirm: confirm = true; break;
        case Act::req_more: req_more = true; break;
        case Act::inform: informed = true; break;
        default: break;
      }
    }

    if (phase_ == Phase::closing || req_more) return advance_or_close(rng, out);

    if (success) {
      std::optional<Record> rec;
      for (const auto& c : calls)
        if (c.service == ref().service && !c.results.empty()) rec = c.results.front();
      complete(rec);
      return advance_or_close(rng, out);
    }
    if (offer_intent) {
      IntentRef target{ref().service, *offer_intent->value};
      for (const auto& sa : sys)
        if (sa.action.act == Act::offer_intent) target.service = sa.service;
      if (has_next() && scenario_.intents[current_ + 1] == target) {
        announce(current_ + 1, Act::affirm_intent, rng, out);
        return;
      }
      emit(out, target.service, Action::make(Act::negate_intent, kIntentSlot, target.intent));
      return advance_or_close(rng, out);
    }
    if (failure) {
      if (!intent().is_transactional && !pending().empty()) return inform_slots({}, rng, out, false);
      complete(std::nullopt);
      return advance_or_close(rng, out);
    }
    if (phase_ == Phase::between) return advance_or_close(rng, out);

    if (confirm) {
      emit(out, ref().service, Action::make(Act::affirm));
      auto req = requestable();
      if (!req.empty() && requests_used_ < config_->max_user_requests && rng.bernoulli(config_->p_request_on_affirm)) {
        ++requests_used_;
        emit(out, ref().service, Action::make(Act::request, req[rng.uniform_index(req.size())]));
      }
      return;
    }
    if (!requested.empty()) return inform_slots(requested, rng, out);

    if (offer) {
      offered_ = lookup(ref().service, *offer->slot, *offer->value);
      if (!offered_) offered_ = Record{{*offer->slot, *offer->value}};
    }
    if (offered_ && (offer || informed)) {
      auto rest = pending();
      if (!rest.empty() && rng.bernoulli(config_->p_inform_after_offer)) return inform_slots({}, rng, out, false);
      if (alts_used_ < config_->max_request_alts && rng.bernoulli(config_->p_request_alts)) {
        ++alts_used_;
        emit(out, ref().service, Action::make(Act::request_alts));
        return;
      }
      auto req = requestable();
      if (!req.empty() && requests_used_ < config_->max_user_requests && rng.bernoulli(config_->p_user_request)) {
        ++requests_used_;
        emit(out, ref().service, Action::make(Act::request, req[rng.uniform_index(req.size())]));
        return;
      }
      const std::string slot = detail::offer_slot(intent());
      auto it = offered_->find(slot);
      if (it == offered_->end()) {
        emit(out, ref().service, Action::make(Act::select));
      } else {
        emit(out, ref().service, Action::make(Act::select, slot, it->second));
      }
      complete(offered_);
      return;
    }
    // Nothing to react to: push the current intent forward.
    if (!pending().empty()) return inform_slots({}, rng, out, false);
    complete(std::nullopt);
    advance_or_close(rng, out);
  }

  Scenario scenario_;
  const BackendRegistry* backends_;
  const AutomatonConfig* config_;
  Phase phase_ = Phase::start;
  std::size_t current_ = 0;
  Record goal_;
  std::vector<std::string> goal_order_;
  std::map<std::string, FrameState> states_;
  std::map<std::string, Record> accepted_;
  std::optional<Record> offered_;
  int alts_used_ = 0;
  int requests_used_ = 0;
};

// ---------------------------------------------------------------------------
// System agent. It only observes user acts and may only call a service once
// every required slot of the intent is known.

class SystemAgent {
public:
  SystemAgent(const BackendRegistry& backends, const ScenarioCatalog& catalog, const AutomatonConfig& config)
      : backends_(&backends), catalog_(&catalog), config_(&config) {}

  std::vector<ServiceAction> step(const std::vector<ServiceAction>& user, Rng& rng, std::vector<ServiceCall>& calls) {
    std::vector<ServiceAction> out;
    for (const auto& sa : user) {
      if (!views_.count(sa.service)) views_[sa.service] = View{};
      if (is_intent_act(sa.action.act) && sa.action.act != Act::negate_intent) focus_ = sa.service;
    }
    if (focus_.empty() && !user.empty()) focus_ = user.front().service;
    for (auto& [svc, v] : views_) v.state = apply_user_actions(v.state, user, svc);

    bool goodbye = false, affirm = false, select = false, negate_intent = false, new_intent = false,
         thank = false, alts = false, informs = false;
    std::vector<std::string> requested;
    for (const auto& sa : user) {
      switch (sa.action.act) {
        case Act::goodbye: goodbye = true; break;
        case Act::affirm: affirm = true; break;
        case Act::select: select = true; break;
        case Act::negate_intent: negate_intent = true; break;
        case Act::inform_intent:
        case Act::affirm_intent: new_intent = true; break;
        case Act::thank_you: thank = true; break;
        case Act::request_alts: alts = true; break;
        case Act::inform: informs = true; break;
        case Act::request:
          if (sa.service == focus_) requested.push_back(*sa.action.slot);
          break;
        default: break;
      }
    }

    if (goodbye) {
      emit(out, Action::make(Act::goodbye));
      return out;
    }
    View& view = views_[focus_];
    const ServiceBackend& b = detail::backend_for(*backends_, focus_);

    if (affirm && view.confirming) {
      view.confirming = false;
      const IntentDef& def = detail::intent_for(b, view.state.active_intent);
      Record args = arguments(view, def);
      bool fail = rng.bernoulli(b.failure_probability);
      QueryResult r = b.invoke(def.name, args, fail);
      calls.push_back({focus_, def.name, args, r.rows});
      if (r.count == 0) {
        emit(out, Action::make(Act::notify_failure));
      } else {
        emit(out, Action::make(Act::notify_success));
        for (const auto& slot : requested)
          if (auto it = r.rows.front().find(slot); it != r.rows.front().end())
            emit(out, Action::make(Act::inform, slot, it->second));
      }
      return out;
    }
    if (select) {
      const IntentRef current{focus_, view.state.active_intent};
      const IntentRef* next = catalog_->suggestion_for(current);
      if (next && !(*next == current) && rng.bernoulli(config_->p_offer_intent)) {
        out.push_back({next->service, Action::make(Act::offer_intent, kIntentSlot, next->intent)});
      } else {
        emit(out, Action::make(Act::req_more));
      }
      return out;
    }
    if ((negate_intent || thank) && !new_intent && !informs) {
      emit(out, Action::make(Act::req_more));
      return out;
    }
    if (alts && !view.results.empty()) {
      ++view.offer_index;
      if (view.offer_index < view.results.size()) {
        offer(view, b, out);
      } else {
        emit(out, Action::make(Act::notify_failure));
      }
      return out;
    }
    if (!requested.empty() && !new_intent && !informs && view.offer_index < view.results.size()) {
      const Record& rec = view.results[view.offer_index];
      for (const auto& slot : requested)
        if (auto it = rec.find(slot); it != rec.end()) emit(out, Action::make(Act::inform, slot, it->second));
      if (out.empty()) emit(out, Action::make(Act::req_more));
      return out;
    }

    if (view.state.active_intent == kNoneIntent) {
      emit(out, Action::make(Act::req_more));
      return out;
    }
    const IntentDef& def = detail::intent_for(b, view.state.active_intent);
    std::vector<std::string> missing;
    for (const auto& slot : def.required_slots)
      if (!detail::state_value(view.state, slot)) missing.push_back(slot);
    if (!missing.empty()) {
      int n = 1 + rng.geometric(0.3, config_->system_request_max - 1);
      for (int i = 0; i < n && i < static_cast<int>(missing.size()); ++i)
        emit(out, Action::make(Act::request, missing[static_cast<std::size_t>(i)]));
      return out;
    }
    if (!def.is_transactional) {
      Record args = arguments(view, def);
      QueryResult r = b.invoke(def.name, args);
      calls.push_back({focus_, def.name, args, r.rows});
      view.results = r.rows;
      view.offer_index = 0;
      if (r.count == 0) {
        emit(out, Action::make(Act::notify_failure));
        return out;
      }
      if (r.count > 1 && rng.bernoulli(config_->p_inform_count))
        emit(out, Action::make(Act::inform_count, kCountSlot, std::to_string(r.count)));
      offer(view, b, out);
      return out;
    }
    Record args = arguments(view, def);
    for (const auto& slot : def.required_slots) emit(out, Action::make(Act::confirm, slot, args.at(slot)));
    for (const auto& [slot, _] : def.optional_slots)
      if (args.count(slot)) emit(out, Action::make(Act::confirm, slot, args.at(slot)));
    view.confirming = true;
    return out;
  }

private:
  struct View {
    FrameState state;
    std::vector<Record> results;
    std::size_t offer_index = 0;
    bool confirming = false;
  };

  void emit(std::vector<ServiceAction>& out, Action a) const { out.push_back({focus_, std::move(a)}); }

  // Call arguments: known values of the intent's slots plus optional defaults.
  static Record arguments(const View& view, const IntentDef& def) {
    Record args;
    for (const auto& slot : def.required_slots)
      if (auto v = detail::state_value(view.state, slot)) args[slot] = *v;
    for (const auto& [slot, dflt] : def.optional_slots) {
      if (auto v = detail::state_value(view.state, slot)) args[slot] = *v;
      else if (def.is_transactional && dflt != kDontCare) args[slot] = dflt;
    }
    return args;
  }

  void offer(const View& view, const ServiceBackend& b, std::vector<ServiceAction>& out) const {
    const IntentDef& def = detail::intent_for(b, view.state.active_intent);
    const std::string slot = detail::offer_slot(def);
    const Record& rec = view.results[view.offer_index];
    auto it = rec.find(slot);
    if (it == rec.end()) throw SimulationError("result record lacks offer slot '" + slot + "'");
    emit(out, Action::make(Act::offer, slot, it->second));
  }

  const BackendRegistry* backends_;
  const ScenarioCatalog* catalog_;
  const AutomatonConfig* config_;
  std::map<std::string, View> views_;
  std::string focus_;
};

// ---------------------------------------------------------------------------

inline Outline generate_outline(const Scenario& scenario, const BackendRegistry& backends,
                                const ScenarioCatalog& catalog, const AutomatonConfig& config, Rng& rng,
                                std::string dialogue_id = {}) {
  Outline o;
  o.dialogue_id = std::move(dialogue_id);
  o.scenario = scenario;
  o.services = scenario.services();
  for (const auto& svc : o.services) detail::backend_for(backends, svc);

  UserAgent user(scenario, backends, config);
  SystemAgent system(backends, catalog, config);
  std::map<std::string, FrameState> states;
  for (const auto& svc : o.services) states[svc] = FrameState{};

  std::vector<ServiceAction> last_system;
  std::vector<ServiceCall> last_calls;
  while (!user.finished()) {
    if (o.turns.size() + 2 > config.max_turns)
      throw SimulationError("dialogue " + o.dialogue_id + " exceeded " + std::to_string(config.max_turns) +
                            " turns without terminating");
    OutlineTurn ut;
    ut.speaker = Speaker::user;
    ut.actions = user.step(last_system, last_calls, rng);
    for (auto& [svc, st] : states) st = apply_user_actions(st, ut.actions, svc);
    ut.states = states;

    OutlineTurn st;
    st.speaker = Speaker::system;
    st.actions = system.step(ut.actions, rng, st.calls);
    last_system = st.actions;
    last_calls = st.calls;
    o.turns.push_back(std::move(ut));
    o.turns.push_back(std::move(st));
  }
  return o;
}

} // namespace sgd
