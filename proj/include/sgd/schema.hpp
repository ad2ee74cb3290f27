#pragma once

// Service schemas: intents and slots with natural-language descriptions.
//
// The on-disk format follows the public SGD release: one JSON object per
// service, or a top-level array of them.

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sgd/json_io.hpp"
#include "sgd/text.hpp"

namespace sgd {

inline constexpr const char* kDontCare = "dontcare";
inline constexpr const char* kNoneIntent = "NONE";

struct SlotDef {
  std::string name;
  std::string description;
  bool is_categorical = false;
  std::vector<std::string> possible_values;

  bool operator==(const SlotDef&) const = default;
};

struct IntentDef {
  std::string name;
  std::string description;
  bool is_transactional = false;
  std::vector<std::string> required_slots;
  std::map<std::string, std::string> optional_slots;  // slot -> default value
  std::vector<std::string> result_slots;

  bool operator==(const IntentDef&) const = default;

  bool is_required(std::string_view slot) const {
    return std::find(required_slots.begin(), required_slots.end(), slot) != required_slots.end();
  }
  bool accepts(std::string_view slot) const {
    return is_required(slot) || optional_slots.count(std::string(slot)) > 0;
  }
};

struct ServiceSchema {
  std::string service_name;
  std::string description;
  std::vector<SlotDef> slots;
  std::vector<IntentDef> intents;

  bool operator==(const ServiceSchema&) const = default;

  const SlotDef* find_slot(std::string_view name) const {
    for (const auto& s : slots)
      if (s.name == name) return &s;
    return nullptr;
  }
  const IntentDef* find_intent(std::string_view name) const {
    for (const auto& i : intents)
      if (i.name == name) return &i;
    return nullptr;
  }
  std::size_t num_categorical() const {
    return static_cast<std::size_t>(std::count_if(slots.begin(), slots.end(),
                                                  [](const SlotDef& s) { return s.is_categorical; }));
  }
  std::size_t num_noncategorical() const { return slots.size() - num_categorical(); }
  bool is_categorical(std::string_view slot) const {
    const SlotDef* s = find_slot(slot);
    return s != nullptr && s->is_categorical;
  }
};

// Domain of a service, e.g. "Restaurants_1" -> "Restaurants".
inline std::string service_domain(std::string_view service) {
  auto pos = service.rfind('_');
  if (pos == std::string_view::npos || pos == 0) return std::string(service);
  return std::string(service.substr(0, pos));
}

// ---------------------------------------------------------------------------
// Validation

struct Finding {
  std::string element;  // e.g. "Restaurants_1/slot:city"
  std::string rule;     // short machine-readable rule id
  std::string message;

  bool operator==(const Finding&) const = default;
};

struct ValidationReport {
  std::vector<Finding> findings;

  bool ok() const { return findings.empty(); }
  void add(std::string element, std::string rule, std::string message) {
    findings.push_back({std::move(element), std::move(rule), std::move(message)});
  }
  void append(const ValidationReport& other) {
    findings.insert(findings.end(), other.findings.begin(), other.findings.end());
  }
  std::string to_string() const {
    std::string out;
    for (const auto& f : findings) out += f.element + " [" + f.rule + "] " + f.message + "\n";
    return out;
  }
};

inline json to_json(const ValidationReport& report) {
  json arr = json::array();
  for (const auto& f : report.findings)
    arr.push_back({{"element", f.element}, {"rule", f.rule}, {"message", f.message}});
  return arr;
}

class SchemaValidationError : public Error {
public:
  explicit SchemaValidationError(ValidationReport report)
      : Error("schema validation failed:\n" + report.to_string()), report_(std::move(report)) {}
  const ValidationReport& report() const noexcept { return report_; }

private:
  ValidationReport report_;
};

inline ValidationReport validate_schema(const ServiceSchema& schema) {
  ValidationReport report;
  const std::string svc = schema.service_name.empty() ? "<unnamed>" : schema.service_name;

  if (schema.service_name.empty()) report.add(svc, "service_name.empty", "service name is empty");
  if (text::is_blank(schema.description))
    report.add(svc, "description.empty", "service description is empty");
  if (schema.intents.empty()) report.add(svc, "intents.empty", "service defines no intents");

  std::set<std::string> slot_names;
  for (const auto& slot : schema.slots) {
    const std::string el = svc + "/slot:" + slot.name;
    if (slot.name.empty()) report.add(el, "slot.name.empty", "slot name is empty");
    if (!slot_names.insert(slot.name).second)
      report.add(el, "slot.duplicate", "duplicate slot name '" + slot.name + "'");
    if (text::is_blank(slot.description))
      report.add(el, "slot.description.empty", "slot description is empty");
    if (slot.is_categorical) {
      if (slot.possible_values.empty())
        report.add(el, "slot.values.empty", "categorical slot has no possible values");
      std::set<std::string> seen;
      for (const auto& v : slot.possible_values)
        if (!seen.insert(v).second)
          report.add(el, "slot.values.duplicate", "duplicate possible value '" + v + "'");
    } else if (!slot.possible_values.empty()) {
      report.add(el, "slot.values.noncategorical",
                 "non-categorical slot must not list possible values");
    }
  }

  std::set<std::string> intent_names;
  for (const auto& intent : schema.intents) {
    const std::string el = svc + "/intent:" + intent.name;
    if (intent.name.empty()) report.add(el, "intent.name.empty", "intent name is empty");
    if (!intent_names.insert(intent.name).second)
      report.add(el, "intent.duplicate", "duplicate intent name '" + intent.name + "'");
    if (text::is_blank(intent.description))
      report.add(el, "intent.description.empty", "intent description is empty");

    std::set<std::string> required;
    for (const auto& s : intent.required_slots) {
      if (!required.insert(s).second)
        report.add(el, "intent.required.duplicate", "slot '" + s + "' listed twice as required");
      if (!slot_names.count(s))
        report.add(el, "intent.unknown_slot",
                   "intent '" + intent.name + "' requires unknown slot '" + s + "'");
    }
    for (const auto& [s, def] : intent.optional_slots) {
      if (required.count(s))
        report.add(el, "intent.required_optional_overlap",
                   "slot '" + s + "' is both required and optional");
      const SlotDef* slot = schema.find_slot(s);
      if (slot == nullptr) {
        report.add(el, "intent.unknown_slot",
                   "intent '" + intent.name + "' has unknown optional slot '" + s + "'");
      } else if (slot->is_categorical && def != kDontCare &&
                 std::find(slot->possible_values.begin(), slot->possible_values.end(), def) ==
                     slot->possible_values.end()) {
        report.add(el, "intent.default.invalid",
                   "default '" + def + "' for slot '" + s + "' is not a possible value");
      }
    }
    for (const auto& s : intent.result_slots)
      if (!slot_names.count(s))
        report.add(el, "intent.unknown_slot",
                   "intent '" + intent.name + "' returns unknown slot '" + s + "'");
  }
  return report;
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const ServiceSchema& s) {
  json slots = json::array();
  for (const auto& slot : s.slots)
    slots.push_back({{"name", slot.name},
                     {"description", slot.description},
                     {"is_categorical", slot.is_categorical},
                     {"possible_values", slot.possible_values}});
  json intents = json::array();
  for (const auto& i : s.intents)
    intents.push_back({{"name", i.name},
                       {"description", i.description},
                       {"is_transactional", i.is_transactional},
                       {"required_slots", i.required_slots},
                       {"optional_slots", i.optional_slots},
                       {"result_slots", i.result_slots}});
  return {{"service_name", s.service_name},
          {"description", s.description},
          {"slots", std::move(slots)},
          {"intents", std::move(intents)}};
}

inline ServiceSchema schema_from_json(const json& j, const std::string& origin = {}) {
  ServiceSchema s;
  s.service_name = get_field<std::string>(j, "service_name", origin);
  s.description = get_field<std::string>(j, "description", origin);
  const json slots = get_field<json>(j, "slots", origin);
  const json intents = get_field<json>(j, "intents", origin);
  if (!slots.is_array()) throw ParseError(origin, 0, "field 'slots' must be an array");
  if (!intents.is_array()) throw ParseError(origin, 0, "field 'intents' must be an array");
  for (const auto& js : slots) {
    SlotDef slot;
    slot.name = get_field<std::string>(js, "name", origin);
    slot.description = get_field<std::string>(js, "description", origin);
    slot.is_categorical = get_field_or<bool>(js, "is_categorical", false, origin);
    slot.possible_values =
        get_field_or<std::vector<std::string>>(js, "possible_values", {}, origin);
    s.slots.push_back(std::move(slot));
  }
  for (const auto& ji : intents) {
    IntentDef intent;
    intent.name = get_field<std::string>(ji, "name", origin);
    intent.description = get_field<std::string>(ji, "description", origin);
    intent.is_transactional = get_field_or<bool>(ji, "is_transactional", false, origin);
    intent.required_slots =
        get_field_or<std::vector<std::string>>(ji, "required_slots", {}, origin);
    intent.optional_slots =
        get_field_or<std::map<std::string, std::string>>(ji, "optional_slots", {}, origin);
    intent.result_slots = get_field_or<std::vector<std::string>>(ji, "result_slots", {}, origin);
    s.intents.push_back(std::move(intent));
  }
  return s;
}

// Parses and validates every schema in `text` (object or array).
inline std::vector<ServiceSchema> parse_schemas(const std::string& text, const std::string& origin) {
  json j = parse_json_text(text, origin);
  std::vector<ServiceSchema> out;
  if (j.is_array()) {
    for (const auto& e : j) out.push_back(schema_from_json(e, origin));
  } else {
    out.push_back(schema_from_json(j, origin));
  }
  ValidationReport report;
  for (const auto& s : out) report.append(validate_schema(s));
  if (!report.ok()) throw SchemaValidationError(std::move(report));
  return out;
}

// Loads a single schema file or every *.json file of a directory (sorted).
inline std::vector<ServiceSchema> load_schemas(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  std::vector<ServiceSchema> out;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      auto part = parse_schemas(read_text_file(f), f.string());
      out.insert(out.end(), part.begin(), part.end());
    }
  } else {
    out = parse_schemas(read_text_file(path), path.string());
  }
  std::set<std::string> names;
  for (const auto& s : out)
    if (!names.insert(s.service_name).second)
      throw Error("service '" + s.service_name + "' defined more than once under " + path.string());
  return out;
}

inline ServiceSchema load_schema(const std::filesystem::path& path) {
  auto all = parse_schemas(read_text_file(path), path.string());
  if (all.size() != 1)
    throw ParseError(path.string(), 0, "expected exactly one service, found " + std::to_string(all.size()));
  return std::move(all.front());
}

using SchemaRegistry = std::map<std::string, ServiceSchema>;

inline SchemaRegistry make_registry(const std::vector<ServiceSchema>& schemas) {
  SchemaRegistry reg;
  for (const auto& s : schemas) reg.emplace(s.service_name, s);
  return reg;
}

// ---------------------------------------------------------------------------
// Encoder input pairs for every schema element.

enum class ElementKind { intent, slot, value };

struct SchemaElement {
  ElementKind kind;
  std::string id;  // "intent:X", "slot:x", "value:x=v"
  std::string sequence_1;
  std::string sequence_2;
};

// Intents, then slots, then each categorical slot's values, all in schema order.
inline std::vector<SchemaElement> schema_element_sequences(const ServiceSchema& schema) {
  std::vector<SchemaElement> out;
  for (const auto& i : schema.intents)
    out.push_back({ElementKind::intent, "intent:" + i.name, schema.description, i.description});
  for (const auto& s : schema.slots)
    out.push_back({ElementKind::slot, "slot:" + s.name, schema.description, s.description});
  for (const auto& s : schema.slots)
    if (s.is_categorical)
      for (const auto& v : s.possible_values)
        out.push_back({ElementKind::value, "value:" + s.name + "=" + v, s.description, v});
  return out;
}

} // namespace sgd
