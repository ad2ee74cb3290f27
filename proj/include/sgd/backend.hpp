#pragma once

// Synthetic service implementations: an immutable entity table per service
// plus the intent-invocation contract (required slots must be supplied).

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sgd/calendar.hpp"
#include "sgd/json_io.hpp"
#include "sgd/rng.hpp"
#include "sgd/schema.hpp"

namespace sgd {

using Record = std::map<std::string, std::string>;

struct EntityTable {
  std::string service_name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  bool operator==(const EntityTable&) const = default;

  std::optional<std::size_t> column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    return std::nullopt;
  }
  Record record(std::size_t row) const {
    Record r;
    for (std::size_t c = 0; c < columns.size(); ++c) r[columns[c]] = rows[row][c];
    return r;
  }
};

struct QueryResult {
  std::vector<Record> rows;
  std::size_t count = 0;
};

class MissingRequiredSlot : public Error {
public:
  MissingRequiredSlot(std::string intent, std::string slot)
      : Error("intent '" + intent + "' called without required slot '" + slot + "'"),
        intent_(std::move(intent)),
        slot_(std::move(slot)) {}
  const std::string& intent() const noexcept { return intent_; }
  const std::string& slot() const noexcept { return slot_; }

private:
  std::string intent_, slot_;
};

class UnknownSlot : public Error {
public:
  explicit UnknownSlot(std::string slot, const std::string& context = {})
      : Error("unknown slot '" + slot + "'" + (context.empty() ? "" : " in " + context)),
        slot_(std::move(slot)) {}
  const std::string& slot() const noexcept { return slot_; }

private:
  std::string slot_;
};

class UnknownIntent : public Error {
public:
  explicit UnknownIntent(const std::string& intent) : Error("unknown intent '" + intent + "'") {}
};

inline ValidationReport validate_table(const EntityTable& table, const ServiceSchema& schema) {
  ValidationReport report;
  const std::string el = "table:" + table.service_name;
  if (table.service_name != schema.service_name)
    report.add(el, "table.service", "table belongs to '" + table.service_name +
                                        "' but schema is '" + schema.service_name + "'");
  std::set<std::string> seen;
  for (const auto& c : table.columns) {
    if (!seen.insert(c).second) report.add(el, "table.column.duplicate", "duplicate column '" + c + "'");
    if (!schema.find_slot(c)) report.add(el, "table.column.unknown", "column '" + c + "' is not a slot");
  }
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() != table.columns.size()) {
      report.add(el, "table.row.width", "row " + std::to_string(r) + " has " +
                                            std::to_string(row.size()) + " cells, expected " +
                                            std::to_string(table.columns.size()));
      continue;
    }
    for (std::size_t c = 0; c < row.size(); ++c) {
      const SlotDef* slot = schema.find_slot(table.columns[c]);
      if (slot && slot->is_categorical &&
          std::find(slot->possible_values.begin(), slot->possible_values.end(), row[c]) ==
              slot->possible_values.end())
        report.add(el, "table.value.categorical",
                   "row " + std::to_string(r) + ": '" + row[c] + "' is not a possible value of '" +
                       slot->name + "'");
    }
  }
  return report;
}

// Search intents return every entity matching all constraints (equality on
// canonical values; "dontcare" imposes nothing; constraints on slots that are
// not table columns are not checkable and are ignored). Optional slots missing
// from `args` take their schema default.
//
// Transactional intents return one record: the arguments merged with the
// matching entity, or no record when `fail_transaction` is set or when the
// arguments name an entity that the table does not contain.
inline QueryResult invoke_intent(const ServiceSchema& schema, const EntityTable& table,
                                 std::string_view intent_name, const Record& args,
                                 bool fail_transaction = false) {
  const IntentDef* intent = schema.find_intent(intent_name);
  if (!intent) throw UnknownIntent(std::string(intent_name));
  for (const auto& [slot, _] : args)
    if (!schema.find_slot(slot)) throw UnknownSlot(slot, "call to " + intent->name);
  for (const auto& slot : intent->required_slots)
    if (!args.count(slot)) throw MissingRequiredSlot(intent->name, slot);

  Record effective = args;
  for (const auto& [slot, def] : intent->optional_slots)
    if (!effective.count(slot)) effective[slot] = def;

  std::vector<std::pair<std::size_t, std::string>> constraints;
  for (const auto& [slot, value] : effective) {
    if (value == kDontCare) continue;
    if (auto c = table.column_index(slot)) constraints.emplace_back(*c, value);
  }
  auto matches = [&](const std::vector<std::string>& row) {
    return std::all_of(constraints.begin(), constraints.end(),
                       [&](const auto& c) { return row[c.first] == c.second; });
  };

  QueryResult result;
  if (!intent->is_transactional) {
    for (std::size_t r = 0; r < table.rows.size(); ++r)
      if (matches(table.rows[r])) result.rows.push_back(table.record(r));
  } else if (!fail_transaction) {
    Record out = effective;
    bool found = constraints.empty() || table.rows.empty();
    for (std::size_t r = 0; r < table.rows.size() && !constraints.empty(); ++r) {
      if (matches(table.rows[r])) {
        for (const auto& [k, v] : table.record(r))
          if (!out.count(k) || out[k] == kDontCare) out[k] = v;
        found = true;
        break;
      }
    }
    if (found) result.rows.push_back(std::move(out));
  }
  result.count = result.rows.size();
  return result;
}

// ---------------------------------------------------------------------------
// Value generators for synthetically sampled slots (dates, times, counts...).

struct ValueGenerator {
  std::string kind;  // date | time | int | choice | phone | address | money
  int min = 0;
  int max = 0;
  int step = 1;
  std::vector<std::string> values;

  std::string sample(Rng& rng) const {
    if (kind == "date") {
      return calendar::iso(calendar::add_days(calendar::kCorpusToday, rng.uniform_int(min, max)));
    }
    if (kind == "time") {
      int slots = (max - min) / std::max(step, 1);
      int minute = min + step * rng.uniform_int(0, std::max(slots, 0));
      return calendar::hhmm({minute / 60 % 24, minute % 60});
    }
    if (kind == "int") return std::to_string(rng.uniform_int(min, max));
    if (kind == "money") return "$" + std::to_string(rng.uniform_int(min, max));
    if (kind == "choice") return values.at(rng.uniform_index(values.size()));
    if (kind == "phone") {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%03d-%03d-%04d", rng.uniform_int(201, 989),
                    rng.uniform_int(200, 999), rng.uniform_int(0, 9999));
      return buf;
    }
    if (kind == "address") {
      return std::to_string(rng.uniform_int(std::max(min, 1), std::max(max, 2))) + " " +
             values.at(rng.uniform_index(values.size()));
    }
    throw Error("unknown generator kind '" + kind + "'");
  }
};

inline int parse_minutes(const json& j, const std::string& origin) {
  if (j.is_number_integer()) return j.get<int>();
  auto t = calendar::parse_hhmm(j.get<std::string>());
  if (!t) throw ParseError(origin, 0, "bad HH:MM time '" + j.get<std::string>() + "'");
  return t->hour * 60 + t->minute;
}

inline ValueGenerator generator_from_json(const json& j, const std::string& origin) {
  ValueGenerator g;
  g.kind = get_field<std::string>(j, "kind", origin);
  try {
    if (g.kind == "date") {
      g.min = j.value("min_days", 0);
      g.max = j.value("days", 30);
    } else if (g.kind == "time") {
      g.min = parse_minutes(j.value("start", json("10:00")), origin);
      g.max = parse_minutes(j.value("end", json("22:00")), origin);
      g.step = j.value("step_minutes", 30);
    } else if (g.kind == "int" || g.kind == "money") {
      g.min = j.value("min", 1);
      g.max = j.value("max", 10);
    } else if (g.kind == "choice" || g.kind == "address") {
      g.values = get_field<std::vector<std::string>>(j, g.kind == "choice" ? "values" : "streets", origin);
      g.min = j.value("min", 1);
      g.max = j.value("max", 999);
      if (g.values.empty()) throw ParseError(origin, 0, g.kind + " generator needs values");
    } else if (g.kind != "phone") {
      throw ParseError(origin, 0, "unknown generator kind '" + g.kind + "'");
    }
  } catch (const json::exception& e) {
    throw ParseError(origin, 0, std::string("generator: ") + e.what());
  }
  if (g.max < g.min) throw ParseError(origin, 0, "generator range is empty");
  return g;
}

// ---------------------------------------------------------------------------
// Entity sampling

struct JointPool {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  bool replace = false;
};

struct SamplingSpec {
  std::string service_name;
  std::size_t num_entities = 0;
  std::vector<JointPool> pools;
  std::map<std::string, ValueGenerator> generators;           // table columns
  std::map<std::string, ValueGenerator> argument_generators;  // call arguments outside the table
  double failure_probability = 0.0;
};

inline SamplingSpec sampling_spec_from_json(const json& j, const std::string& origin = {}) {
  SamplingSpec spec;
  spec.service_name = get_field<std::string>(j, "service_name", origin);
  spec.num_entities = get_field<std::size_t>(j, "num_entities", origin);
  for (const auto& p : get_field_or<json>(j, "pools", json::array(), origin)) {
    JointPool pool;
    pool.columns = get_field<std::vector<std::string>>(p, "columns", origin);
    pool.rows = get_field<std::vector<std::vector<std::string>>>(p, "rows", origin);
    pool.replace = get_field_or<bool>(p, "replace", false, origin);
    spec.pools.push_back(std::move(pool));
  }
  for (const auto& [slot, g] : object_field(j, "generators", origin).items())
    spec.generators[slot] = generator_from_json(g, origin);
  for (const auto& [slot, g] :
       object_field(j, "argument_generators", origin).items())
    spec.argument_generators[slot] = generator_from_json(g, origin);
  spec.failure_probability = get_field_or<double>(j, "failure_probability", 0.0, origin);
  return spec;
}

// Deterministic for a fixed seed. A pool row fixes all of its columns at once,
// which keeps correlated attributes (name, cuisine) together.
inline EntityTable sample_entities(const SamplingSpec& spec, const ServiceSchema& schema, Rng& rng) {
  if (spec.service_name != schema.service_name)
    throw Error("sampling spec for '" + spec.service_name + "' paired with schema '" +
                schema.service_name + "'");
  EntityTable table;
  table.service_name = spec.service_name;
  auto add_column = [&](const std::string& c) {
    if (!schema.find_slot(c)) throw UnknownSlot(c, "sampling spec for " + spec.service_name);
    if (table.column_index(c)) throw Error("column '" + c + "' produced twice in sampling spec");
    table.columns.push_back(c);
  };
  for (const auto& pool : spec.pools) {
    for (const auto& c : pool.columns) add_column(c);
    for (const auto& row : pool.rows)
      if (row.size() != pool.columns.size()) throw Error("pool row width mismatch");
    if (pool.rows.empty()) throw Error("empty pool in sampling spec");
    if (!pool.replace && pool.rows.size() < spec.num_entities)
      throw Error("pool of " + std::to_string(pool.rows.size()) + " rows cannot supply " +
                  std::to_string(spec.num_entities) + " entities without replacement");
  }
  for (const auto& [slot, _] : spec.generators) add_column(slot);
  for (const auto& [slot, _] : spec.argument_generators)
    if (!schema.find_slot(slot)) throw UnknownSlot(slot, "sampling spec for " + spec.service_name);

  // Categorical pools must stay inside the declared value sets.
  for (const auto& pool : spec.pools)
    for (std::size_t c = 0; c < pool.columns.size(); ++c) {
      const SlotDef* slot = schema.find_slot(pool.columns[c]);
      if (!slot->is_categorical) continue;
      for (const auto& row : pool.rows)
        if (std::find(slot->possible_values.begin(), slot->possible_values.end(), row[c]) ==
            slot->possible_values.end())
          throw Error("value '" + row[c] + "' is not a possible value of categorical slot '" +
                      slot->name + "'");
    }

  std::vector<std::vector<std::size_t>> orders;
  for (const auto& pool : spec.pools) {
    std::vector<std::size_t> order(pool.rows.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    orders.push_back(std::move(order));
  }

  for (std::size_t e = 0; e < spec.num_entities; ++e) {
    std::vector<std::string> row;
    for (std::size_t p = 0; p < spec.pools.size(); ++p) {
      const auto& pool = spec.pools[p];
      std::size_t pick = pool.replace ? rng.uniform_index(pool.rows.size()) : orders[p][e];
      row.insert(row.end(), pool.rows[pick].begin(), pool.rows[pick].end());
    }
    for (const auto& [slot, gen] : spec.generators) {
      std::string v = gen.sample(rng);
      const SlotDef* def = schema.find_slot(slot);
      if (def->is_categorical &&
          std::find(def->possible_values.begin(), def->possible_values.end(), v) ==
              def->possible_values.end())
        throw Error("generator for '" + slot + "' produced '" + v + "' outside its value set");
      row.push_back(std::move(v));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------
// A service as the simulator sees it.

struct ServiceBackend {
  ServiceSchema schema;
  EntityTable table;
  std::map<std::string, ValueGenerator> argument_generators;
  double failure_probability = 0.0;

  QueryResult invoke(std::string_view intent, const Record& args, bool fail = false) const {
    return invoke_intent(schema, table, intent, args, fail);
  }
};

using BackendRegistry = std::map<std::string, ServiceBackend>;

inline json to_json(const EntityTable& t) {
  return {{"service_name", t.service_name}, {"columns", t.columns}, {"rows", t.rows}};
}

inline EntityTable table_from_json(const json& j, const std::string& origin = {}) {
  EntityTable t;
  t.service_name = get_field<std::string>(j, "service_name", origin);
  t.columns = get_field<std::vector<std::string>>(j, "columns", origin);
  t.rows = get_field<std::vector<std::vector<std::string>>>(j, "rows", origin);
  return t;
}

// A backend file is either an entity table ("rows") or a sampling spec
// ("num_entities"); specs are sampled with `seed`.
inline ServiceBackend load_backend(const std::filesystem::path& path, const SchemaRegistry& schemas,
                                   std::uint64_t seed) {
  const std::string origin = path.string();
  json j = read_json_file(path);
  std::string service = get_field<std::string>(j, "service_name", origin);
  auto it = schemas.find(service);
  if (it == schemas.end()) throw Error(origin + ": no schema for service '" + service + "'");
  ServiceBackend backend;
  backend.schema = it->second;
  if (j.contains("rows")) {
    backend.table = table_from_json(j, origin);
    for (const auto& [slot, g] :
         object_field(j, "argument_generators", origin).items())
      backend.argument_generators[slot] = generator_from_json(g, origin);
    backend.failure_probability = get_field_or<double>(j, "failure_probability", 0.0, origin);
  } else {
    SamplingSpec spec = sampling_spec_from_json(j, origin);
    Rng rng(derive_seed(seed, fnv1a(service)));
    backend.table = sample_entities(spec, backend.schema, rng);
    backend.argument_generators = spec.argument_generators;
    backend.failure_probability = spec.failure_probability;
  }
  ValidationReport report = validate_table(backend.table, backend.schema);
  if (!report.ok()) throw Error(origin + ": invalid entity table\n" + report.to_string());
  return backend;
}

inline BackendRegistry load_backends(const std::filesystem::path& dir, const SchemaRegistry& schemas,
                                     std::uint64_t seed) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  BackendRegistry out;
  for (const auto& f : files) {
    ServiceBackend b = load_backend(f, schemas, seed);
    std::string name = b.schema.service_name;
    if (!out.emplace(name, std::move(b)).second)
      throw Error("two backends for service '" + name + "' in " + dir.string());
  }
  return out;
}

} // namespace sgd
