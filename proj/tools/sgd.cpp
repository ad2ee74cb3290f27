// sgd: corpus generation, statistics, splitting, tracking and evaluation.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "sgd/corpus.hpp"
#include "sgd/metrics.hpp"
#include "sgd/pipeline.hpp"
#include "sgd/tracker/checkpoint.hpp"
#include "sgd/tracker/train.hpp"
#include "sgd/workbench.hpp"

#ifndef SGD_DATA_DIR
#define SGD_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace sgd;

namespace {

struct Options {
  FixturePaths fixtures{fs::path(SGD_DATA_DIR) / "schemas",        fs::path(SGD_DATA_DIR) / "backends",
                        fs::path(SGD_DATA_DIR) / "scenarios.json", fs::path(SGD_DATA_DIR) / "templates.json",
                        fs::path(SGD_DATA_DIR) / "variations.json", fs::path(SGD_DATA_DIR) / "automaton.json"};
  std::size_t num = 100;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string out;
  std::string corpus;
  std::string schemas_override;
  std::vector<std::string> services;
  bool include_user_actions = false;
  bool json_output = false;

  // split
  std::vector<std::string> holdout_services, holdout_domains;
  double dev_ratio = 0.1, test_ratio = 0.1;

  // train / track / evaluate
  int dim = 64;
  tracker::TrainConfig train;
  std::string checkpoint, predictions, seen_from;
  std::vector<std::string> seen_services;
  EvalOptions eval;

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
};

void emit(const json& j, bool to_stdout = true) { (to_stdout ? std::cout : std::cerr) << j.dump(2) << "\n"; }

// Schemas for a corpus: --schemas when given, else the corpus's schema.json.
SchemaRegistry corpus_schemas(const Options& o, const fs::path& corpus) {
  std::vector<ServiceSchema> list =
      o.schemas_override.empty() ? read_corpus_schemas(corpus) : load_schemas(o.schemas_override);
  if (list.empty()) throw Error("no schemas: pass --schemas or store schema.json in " + corpus.string());
  return make_registry(list);
}

int cmd_generate(const Options& o) {
  if (o.out.empty()) throw Error("--out is required");
  Fixtures f = load_fixtures(o.fixtures, o.seed);
  if (!o.services.empty()) restrict_services(f, {o.services.begin(), o.services.end()});
  auto dialogues = generate_corpus(f, o.num, o.seed, o.workers);
  std::set<std::string> used;
  for (const auto& d : dialogues) used.insert(d.services.begin(), d.services.end());
  std::vector<ServiceSchema> schemas;
  for (const auto& s : f.schema_list)
    if (used.count(s.service_name)) schemas.push_back(s);
  write_corpus(dialogues, o.out, schemas, {o.include_user_actions});
  std::cerr << "wrote " << dialogues.size() << " dialogues to " << o.out << "\n";
  return 0;
}

int cmd_stats(const Options& o) {
  CorpusStats s = compute_stats(read_corpus(o.corpus));
  if (o.json_output) emit(to_json(s));
  else std::cout << stats_table(s);
  return 0;
}

int cmd_split(const Options& o) {
  if (o.out.empty()) throw Error("--out is required");
  auto schemas = corpus_schemas(o, o.corpus);
  SplitPolicy policy{{o.holdout_services.begin(), o.holdout_services.end()},
                     {o.holdout_domains.begin(), o.holdout_domains.end()},
                     o.dev_ratio,
                     o.test_ratio,
                     o.seed};
  CorpusSplits sp = split_corpus(read_corpus(o.corpus), schemas, policy);
  std::vector<ServiceSchema> list;
  for (const auto& [_, s] : schemas) list.push_back(s);
  fs::create_directories(o.out);
  write_corpus(sp.train, fs::path(o.out) / "train", list);
  write_corpus(sp.dev, fs::path(o.out) / "dev", list);
  write_corpus(sp.test, fs::path(o.out) / "test", list);
  emit({{"train", sp.train.size()}, {"dev", sp.dev.size()}, {"test", sp.test.size()}});
  return 0;
}

int cmd_train(const Options& o) {
  if (o.checkpoint.empty()) throw Error("--checkpoint is required");
  auto schemas = corpus_schemas(o, o.corpus);
  auto dialogues = read_corpus(o.corpus);
  tracker::HashedPairEncoder enc(o.dim);
  tracker::TrainConfig cfg = o.train;
  cfg.seed = o.seed;
  cfg.on_epoch = [](int epoch, double loss) { std::cerr << "epoch " << epoch + 1 << " loss " << loss << "\n"; };
  auto res = tracker::train_tracker(enc, schemas, dialogues, cfg);
  tracker::save_checkpoint(o.checkpoint, res.params, enc.name());
  std::cerr << "trained on " << res.num_examples << " frames; checkpoint " << o.checkpoint << "\n";
  return 0;
}

int cmd_track(const Options& o) {
  if (o.checkpoint.empty() || o.predictions.empty()) throw Error("--checkpoint and --predictions are required");
  auto schemas = corpus_schemas(o, o.corpus);
  auto ck = tracker::load_checkpoint(o.checkpoint);
  if (ck.encoder != "hashed") throw Error("checkpoint uses unsupported encoder '" + ck.encoder + "'");
  tracker::HashedPairEncoder enc(ck.params.d());
  tracker::Tracker t(enc, ck.params);
  t.add_schemas(schemas);
  write_text_atomic(o.predictions, tracker::predictions_to_json(tracker::track_corpus(t, read_corpus(o.corpus))).dump(1) + "\n");
  return 0;
}

int cmd_evaluate(const Options& o) {
  if (o.predictions.empty()) throw Error("--predictions is required");
  auto schemas = corpus_schemas(o, o.corpus);
  EvalOptions opt = o.eval;
  opt.seen_services.insert(o.seen_services.begin(), o.seen_services.end());
  if (!o.seen_from.empty())
    for (const auto& d : read_corpus(o.seen_from)) opt.seen_services.insert(d.services.begin(), d.services.end());
  auto preds = tracker::predictions_from_json(read_json_file(o.predictions), o.predictions);
  EvalReport rep = evaluate(read_corpus(o.corpus), preds, schemas, opt);
  if (o.json_output) emit(to_json(rep));
  else std::cout << report_table(rep);
  return 0;
}

int cmd_validate(const Options& o) {
  ValidationReport report;
  std::vector<ServiceSchema> list = load_schemas(o.fixtures.schemas);
  for (const auto& s : list) report.append(validate_schema(s));
  if (report.ok()) {
    auto schemas = make_registry(list);
    if (fs::exists(o.fixtures.scenarios)) report.append(validate_catalog(load_catalog(o.fixtures.scenarios), schemas));
    if (fs::exists(o.fixtures.templates)) report.append(validate_templates(load_templates(o.fixtures.templates)));
    if (!o.corpus.empty())
      for (const auto& d : read_corpus(o.corpus)) report.append(validate_dialogue(d, schemas));
  }
  emit({{"ok", report.ok()}, {"findings", to_json(report)}});
  return report.ok() ? 0 : 2;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const Options& o) {
  Workbench wb(o.corpus);
  httplib::Server server;
  wb.mount(server);
  server.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
  });
  if (!server.bind_to_port(o.host, o.port)) throw Error("cannot bind " + o.host + ":" + std::to_string(o.port));
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  std::cerr << "serving " << o.corpus << " on http://" << o.host << ":" << o.port << "\n";
  server.listen_after_bind();
  return 0;
}

void add_fixture_flags(CLI::App* c, Options& o) {
  c->add_option("--schemas", o.fixtures.schemas, "schema file or directory");
  c->add_option("--backends", o.fixtures.backends, "backend directory");
  c->add_option("--scenarios", o.fixtures.scenarios, "scenario catalog");
  c->add_option("--templates", o.fixtures.templates, "template file");
  c->add_option("--variations", o.fixtures.variations, "value variation table");
  c->add_option("--automaton", o.fixtures.automaton, "automaton probabilities");
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Schema-guided dialogue corpus and tracking toolkit"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "simulate and render a templated corpus");
  add_fixture_flags(gen, o);
  gen->add_option("--num", o.num, "number of dialogues");
  gen->add_option("--seed", o.seed, "master seed");
  gen->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  gen->add_option("--out", o.out, "output corpus directory")->required();
  gen->add_option("--services", o.services, "only scenarios using these services");
  gen->add_flag("--include-user-actions", o.include_user_actions, "keep user dialogue acts in the output");

  auto* stats = app.add_subcommand("stats", "corpus statistics");
  stats->add_option("corpus", o.corpus)->required();
  stats->add_flag("--json", o.json_output);

  auto* split = app.add_subcommand("split", "train/dev/test split with held-out services");
  split->add_option("corpus", o.corpus)->required();
  split->add_option("--out", o.out)->required();
  split->add_option("--schemas", o.schemas_override);
  split->add_option("--holdout-service", o.holdout_services);
  split->add_option("--holdout-domain", o.holdout_domains);
  split->add_option("--dev-ratio", o.dev_ratio);
  split->add_option("--test-ratio", o.test_ratio);
  split->add_option("--seed", o.seed);

  auto* train = app.add_subcommand("train", "fit tracker parameters on a corpus");
  train->add_option("corpus", o.corpus)->required();
  train->add_option("--schemas", o.schemas_override);
  train->add_option("--checkpoint", o.checkpoint)->required();
  train->add_option("--dim", o.dim)->check(CLI::Range(2, 4096));
  train->add_option("--epochs", o.train.epochs);
  train->add_option("--batch-size", o.train.batch_size);
  train->add_option("--learning-rate", o.train.learning_rate);
  train->add_option("--seed", o.seed);

  auto* track = app.add_subcommand("track", "predict dialogue states");
  track->add_option("corpus", o.corpus)->required();
  track->add_option("--schemas", o.schemas_override);
  track->add_option("--checkpoint", o.checkpoint)->required();
  track->add_option("--predictions", o.predictions, "output prediction file")->required();

  auto* eval = app.add_subcommand("evaluate", "score predictions against a reference corpus");
  eval->add_option("corpus", o.corpus)->required();
  eval->add_option("--schemas", o.schemas_override);
  eval->add_option("--predictions", o.predictions)->required();
  eval->add_flag("--exact-match", o.eval.exact_match);
  eval->add_flag("--allow-partial", o.eval.allow_partial);
  eval->add_flag("--ignore-extra", o.eval.ignore_extra);
  eval->add_option("--fuzzy-threshold", o.eval.fuzzy_threshold)->check(CLI::Range(0.0, 1.0));
  eval->add_option("--seen-service", o.seen_services);
  eval->add_option("--seen-from", o.seen_from, "training corpus whose services count as seen");
  eval->add_flag("--json", o.json_output);

  auto* serve = app.add_subcommand("serve", "paraphrase workbench HTTP API");
  serve->add_option("corpus", o.corpus)->required();
  serve->add_option("--port", o.port);
  serve->add_option("--host", o.host);

  auto* validate = app.add_subcommand("validate", "check schemas, scenarios, templates and optionally a corpus");
  add_fixture_flags(validate, o);
  validate->add_option("--corpus", o.corpus);

  CLI11_PARSE(app, argc, argv);
  try {
    if (gen->parsed()) return cmd_generate(o);
    if (stats->parsed()) return cmd_stats(o);
    if (split->parsed()) return cmd_split(o);
    if (train->parsed()) return cmd_train(o);
    if (track->parsed()) return cmd_track(o);
    if (eval->parsed()) return cmd_evaluate(o);
    if (serve->parsed()) return cmd_serve(o);
    if (validate->parsed()) return cmd_validate(o);
  } catch (const FixtureError& e) {
    emit({{"error", "invalid fixtures"}, {"findings", to_json(e.report())}}, false);
    return 2;
  } catch (const SchemaValidationError& e) {
    emit({{"error", "invalid fixtures"}, {"findings", to_json(e.report())}}, false);
    return 2;
  } catch (const MissingPredictions& e) {
    json missing = json::array();
    for (const auto& k : e.missing()) missing.push_back(to_string(k));
    emit({{"error", "missing predictions"}, {"missing", missing}}, false);
    return 1;
  } catch (const std::exception& e) {
    emit({{"error", e.what()}}, false);
    return 1;
  }
  return 1;
}
