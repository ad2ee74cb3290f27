#pragma once

// Corpus generation: scenario -> outline -> value variation -> templates,
// one seeded job per dialogue on a bounded worker pool.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sgd/backend.hpp"
#include "sgd/corpus.hpp"
#include "sgd/dialogue.hpp"
#include "sgd/outline_check.hpp"
#include "sgd/paraphrase.hpp"
#include "sgd/schema.hpp"
#include "sgd/simulator.hpp"

namespace sgd {

struct FixturePaths {
  std::filesystem::path schemas, backends, scenarios, templates, variations, automaton;
};

// Everything generation reads; immutable once loaded.
struct Fixtures {
  std::vector<ServiceSchema> schema_list;
  SchemaRegistry schemas;
  BackendRegistry backends;
  ScenarioCatalog catalog;
  AutomatonConfig automaton;
  TemplateSet templates;
  VariationTable variations;
};

class FixtureError : public Error {
public:
  FixtureError(const std::string& what, ValidationReport report)
      : Error(what + ":\n" + report.to_string()), report_(std::move(report)) {}
  const ValidationReport& report() const noexcept { return report_; }

private:
  ValidationReport report_;
};

inline Fixtures load_fixtures(const FixturePaths& paths, std::uint64_t seed) {
  Fixtures f;
  f.schema_list = load_schemas(paths.schemas);
  ValidationReport report;
  for (const auto& s : f.schema_list) report.append(validate_schema(s));
  if (!report.ok()) throw FixtureError("schema validation failed", report);
  f.schemas = make_registry(f.schema_list);
  f.backends = load_backends(paths.backends, f.schemas, derive_seed(seed, 0x6261636bULL));
  f.catalog = load_catalog(paths.scenarios);
  report = validate_catalog(f.catalog, f.schemas);
  if (!report.ok()) throw FixtureError("scenario catalog is invalid", report);
  for (const auto& sc : f.catalog.scenarios)
    for (const auto& svc : sc.services())
      if (!f.backends.count(svc)) throw Error("scenario '" + sc.name + "' uses service '" + svc + "' without a backend");
  if (!paths.automaton.empty()) f.automaton = automaton_from_json(read_json_file(paths.automaton), paths.automaton.string());
  f.templates = load_templates(paths.templates);
  report = validate_templates(f.templates);
  if (!report.ok()) throw FixtureError("template set is invalid", report);
  if (!paths.variations.empty()) f.variations = load_variations(paths.variations);
  return f;
}

// Restricts the catalog to scenarios whose services all belong to `services`.
inline void restrict_services(Fixtures& f, const std::set<std::string>& services) {
  auto& sc = f.catalog.scenarios;
  sc.erase(std::remove_if(sc.begin(), sc.end(),
                          [&](const Scenario& s) {
                            auto svcs = s.services();
                            return std::any_of(svcs.begin(), svcs.end(), [&](const auto& x) { return !services.count(x); });
                          }),
           sc.end());
  auto& sg = f.catalog.suggestions;
  sg.erase(std::remove_if(sg.begin(), sg.end(),
                          [&](const Suggestion& s) {
                            return !services.count(s.from.service) || !services.count(s.to.service);
                          }),
           sg.end());
  if (sc.empty()) throw Error("no scenario uses only the selected services");
}

inline std::string dialogue_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "gen_%06zu", index);
  return buf;
}

// The dialogue at `index` depends only on the fixtures, the seed and the index.
inline Dialogue generate_dialogue(const Fixtures& f, std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed, index));
  Scenario sc = sample_scenario(f.catalog, rng);
  Outline o = generate_outline(sc, f.backends, f.catalog, f.automaton, rng, dialogue_id(index));
  ValidationReport report = check_outline(o, f.backends);
  if (!report.ok()) throw SimulationError("outline failed validity checks:\n" + report.to_string());
  Outline varied = vary_values(o, f.variations, rng);
  Dialogue d = render_templates(varied, f.templates, f.schemas);
  report = validate_dialogue(d, f.schemas);
  if (!report.ok()) throw Error("rendered dialogue is invalid:\n" + report.to_string());
  return d;
}

class GenerationError : public Error {
public:
  GenerationError(std::size_t index, const std::string& what)
      : Error("dialogue " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

// Output order and content do not depend on `workers`. The error reported is
// the one with the lowest dialogue index.
inline std::vector<Dialogue> generate_corpus(const Fixtures& f, std::size_t num, std::uint64_t seed,
                                             std::size_t workers = 1) {
  std::vector<Dialogue> out(num);
  std::vector<std::optional<std::string>> errors(num);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < num; i = next++) {
      try {
        out[i] = generate_dialogue(f, seed, i);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, num));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < num; ++i)
    if (errors[i]) throw GenerationError(i, *errors[i]);
  return out;
}

} // namespace sgd
