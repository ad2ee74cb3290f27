#pragma once

// Structural checks over a generated outline: alternation, act legality,
// state replay, required-slot safety, transfer correctness and termination.

#include <string>

#include "sgd/simulator.hpp"

namespace sgd {

namespace detail {

inline bool announces(const OutlineTurn& t, const IntentRef& ref) {
  for (const auto& sa : t.actions)
    if ((sa.action.act == Act::inform_intent || sa.action.act == Act::affirm_intent) && sa.service == ref.service &&
        sa.action.value == ref.intent)
      return true;
  return false;
}

// The entity the user last accepted on `service` before turn `end`: the
// record behind a SELECT, or the result of a successful transaction.
inline std::optional<Record> accepted_record(const Outline& o, const std::string& service, std::size_t end,
                                             const BackendRegistry& backends) {
  std::optional<Record> accepted;
  std::vector<Record> seen;
  for (std::size_t j = 0; j < end; ++j) {
    const auto& t = o.turns[j];
    for (const auto& c : t.calls) {
      if (c.service != service) continue;
      seen.insert(seen.end(), c.results.begin(), c.results.end());
      auto b = backends.find(service);
      const IntentDef* def = b == backends.end() ? nullptr : b->second.schema.find_intent(c.method);
      if (def && def->is_transactional && !c.results.empty()) accepted = c.results.front();
    }
    for (const auto& sa : t.actions) {
      if (sa.service != service || sa.action.act != Act::select || !sa.action.slot) continue;
      for (auto r = seen.rbegin(); r != seen.rend(); ++r)
        if (auto f = r->find(*sa.action.slot); f != r->end() && f->second == sa.action.value) {
          accepted = *r;
          break;
        }
    }
  }
  return accepted;
}

} // namespace detail

inline ValidationReport check_outline(const Outline& o, const BackendRegistry& backends) {
  ValidationReport report;
  const std::string id = o.dialogue_id.empty() ? "outline" : o.dialogue_id;
  auto at = [&](std::size_t i) { return id + ":turn " + std::to_string(i); };

  if (o.turns.empty()) {
    report.add(id, "alternation", "outline has no turns");
    return report;
  }
  for (std::size_t i = 0; i < o.turns.size(); ++i) {
    Speaker want = i % 2 == 0 ? Speaker::user : Speaker::system;
    if (o.turns[i].speaker != want) report.add(at(i), "alternation", "expected " + std::string(speaker_name(want)));
  }

  // Act legality and arity.
  for (std::size_t i = 0; i < o.turns.size(); ++i) {
    const auto& t = o.turns[i];
    if (t.actions.empty()) report.add(at(i), "act.empty", "turn has no actions");
    for (const auto& sa : t.actions) {
      if (!usable_by(sa.action.act, t.speaker))
        report.add(at(i), "act.actor", std::string(act_name(sa.action.act)) + " not usable by " + speaker_name(t.speaker));
      if (!arity_ok(sa.action)) report.add(at(i), "act.arity", "bad arguments for " + to_string(sa.action));
      if (std::find(o.services.begin(), o.services.end(), sa.service) == o.services.end()) {
        report.add(at(i), "act.service", "action on service '" + sa.service + "' outside the dialogue");
        continue;
      }
      auto b = backends.find(sa.service);
      if (b != backends.end() && sa.action.slot && *sa.action.slot != kIntentSlot && *sa.action.slot != kCountSlot &&
          !b->second.schema.find_slot(*sa.action.slot))
        report.add(at(i), "act.slot", "unknown slot '" + *sa.action.slot + "'");
    }
  }

  // State replay.
  std::map<std::string, FrameState> prev;
  for (const auto& svc : o.services) prev[svc] = FrameState{};
  for (std::size_t i = 0; i < o.turns.size(); i += 2) {
    const auto& t = o.turns[i];
    for (const auto& svc : o.services) {
      auto it = t.states.find(svc);
      if (it == t.states.end()) {
        report.add(at(i), "state.missing", "no frame state for " + svc);
        continue;
      }
      FrameState replay = apply_user_actions(prev[svc], t.actions, svc);
      if (!(replay == it->second)) report.add(at(i), "state.replay", "recorded state of " + svc + " differs from replay");
      prev[svc] = it->second;
    }
    if (t.states.size() != o.services.size()) report.add(at(i), "state.extra", "frame states for unknown services");
  }

  // Required-slot safety.
  for (std::size_t i = 1; i < o.turns.size(); i += 2) {
    for (const auto& c : o.turns[i].calls) {
      auto b = backends.find(c.service);
      if (b == backends.end()) {
        report.add(at(i), "call.service", "call to unknown service " + c.service);
        continue;
      }
      const IntentDef* def = b->second.schema.find_intent(c.method);
      if (!def) {
        report.add(at(i), "call.intent", "call to unknown intent " + c.method);
        continue;
      }
      for (const auto& slot : def->required_slots)
        if (!c.parameters.count(slot))
          report.add(at(i), "call.required", c.method + " called without required slot '" + slot + "'");
    }
  }

  // Transfer correctness: at the turn announcing intent k, each transfer into k
  // informs the target slot with the accepted source value.
  const auto& intents = o.scenario.intents;
  std::size_t next = 0;
  for (std::size_t i = 0; i < o.turns.size() && next < intents.size(); i += 2) {
    if (!detail::announces(o.turns[i], intents[next])) continue;
    if (next == 0 && i != 0) report.add(at(i), "start", "first scenario intent not announced in the first turn");
    for (const auto& tr : o.scenario.transfers) {
      if (tr.into != next || next == 0) continue;
      const std::string& src = intents[next - 1].service;
      const std::string& dst = intents[next].service;
      std::optional<std::string> expected;
      if (i >= 2)
        if (auto v = detail::state_value(o.turns[i - 2].states.at(src), tr.from_slot)) expected = v;
      if (!expected)
        if (auto rec = detail::accepted_record(o, src, i, backends))
          if (auto f = rec->find(tr.from_slot); f != rec->end()) expected = f->second;
      std::optional<std::string> informed;
      for (const auto& sa : o.turns[i].actions)
        if (sa.service == dst && sa.action.act == Act::inform && sa.action.slot == tr.to_slot) informed = sa.action.value;
      if (expected && informed != expected)
        report.add(at(i), "transfer", "'" + tr.to_slot + "' not transferred from '" + tr.from_slot + "'");
    }
    ++next;
  }
  if (intents.empty() || !detail::announces(o.turns.front(), intents.front()))
    report.add(at(0), "start", "first turn does not announce the first scenario intent");

  // Termination: the last user turn says goodbye and nothing follows the reply.
  std::size_t last_user = (o.turns.size() - 1) / 2 * 2;
  if (!o.turns[last_user].has_act(Act::goodbye)) report.add(at(last_user), "goodbye", "final user turn lacks GOODBYE");
  for (std::size_t i = 0; i < last_user; i += 2)
    if (o.turns[i].has_act(Act::goodbye)) report.add(at(i), "goodbye", "GOODBYE before the final user turn");
  if (o.turns.size() % 2 != 0) report.add(id, "alternation", "dialogue ends on a user turn");
  return report;
}

} // namespace sgd
