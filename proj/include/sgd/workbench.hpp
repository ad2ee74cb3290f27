#pragma once

// Paraphrase workbench API over a templated corpus. Accepted paraphrases are
// stored one dialogue per file under <corpus>/paraphrased/.
//
//   GET  /api/tasks/next           first dialogue without a stored paraphrase
//   GET  /api/tasks/{id}           templated turns with highlighted values
//   POST /api/tasks/{id}/validate  {"texts": [...]} -> per-turn verdicts
//   POST /api/tasks/{id}/submit    stores the paraphrase if every turn passes
//   GET  /api/progress             {"total", "completed", "pending"}

#include <httplib.h>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "sgd/corpus.hpp"
#include "sgd/dialogue.hpp"
#include "sgd/json_io.hpp"
#include "sgd/paraphrase.hpp"

namespace sgd {

struct ApiResponse {
  int status = 200;
  json body;
};

class Workbench {
public:
  explicit Workbench(std::filesystem::path corpus_dir)
      : dir_(std::move(corpus_dir)), out_dir_(dir_ / "paraphrased") {
    for (auto& d : read_corpus(dir_)) {
      ids_.push_back(d.dialogue_id);
      locks_.emplace(d.dialogue_id, std::make_unique<std::mutex>());
      dialogues_.emplace(d.dialogue_id, std::move(d));
    }
  }

  std::filesystem::path stored_path(const std::string& id) const { return out_dir_ / (id + ".json"); }
  bool completed(const std::string& id) const { return std::filesystem::exists(stored_path(id)); }

  ApiResponse next_task() const {
    for (const auto& id : ids_)
      if (!completed(id)) return {200, task_json(dialogues_.at(id))};
    return {200, {{"done", true}}};
  }

  ApiResponse get_task(const std::string& id) const {
    auto it = dialogues_.find(id);
    if (it == dialogues_.end()) return not_found(id);
    return {200, task_json(it->second)};
  }

  ApiResponse validate(const std::string& id, const std::string& body) const {
    auto it = dialogues_.find(id);
    if (it == dialogues_.end()) return not_found(id);
    std::vector<std::string> texts;
    if (auto err = parse_texts(it->second, body, texts)) return *err;
    return {200, verdicts(it->second, texts).second};
  }

  // Re-submission overwrites; submissions to one dialogue are serialized.
  ApiResponse submit(const std::string& id, const std::string& body) {
    auto it = dialogues_.find(id);
    if (it == dialogues_.end()) return not_found(id);
    std::vector<std::string> texts;
    if (auto err = parse_texts(it->second, body, texts)) return *err;
    auto [ok, report] = verdicts(it->second, texts);
    if (!ok) {
      report["error"] = "every highlighted value must appear verbatim in its turn";
      return {422, report};
    }
    Dialogue out = apply_paraphrase(it->second, texts);
    std::lock_guard<std::mutex> lock(*locks_.at(id));
    std::filesystem::create_directories(out_dir_);
    write_json_atomic(stored_path(id), to_json(out));
    return {200, {{"id", id}, {"status", "completed"}}};
  }

  ApiResponse progress() const {
    std::size_t done = 0;
    for (const auto& id : ids_) done += completed(id);
    return {200, {{"total", ids_.size()}, {"completed", done}, {"pending", ids_.size() - done}}};
  }

  // Registers the routes on `server`.
  void mount(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const ApiResponse& r) {
      res.status = r.status;
      res.set_content(r.body.dump(), "application/json");
    };
    auto guarded = [reply](auto&& fn) {
      return [reply, fn](const httplib::Request& req, httplib::Response& res) {
        try {
          reply(res, fn(req));
        } catch (const std::exception& e) {
          reply(res, {500, {{"error", e.what()}}});
        }
      };
    };
    server.Get("/api/tasks/next", guarded([this](const httplib::Request&) { return next_task(); }));
    server.Get("/api/progress", guarded([this](const httplib::Request&) { return progress(); }));
    server.Get(R"(/api/tasks/([^/]+))",
               guarded([this](const httplib::Request& r) { return get_task(r.matches[1].str()); }));
    server.Post(R"(/api/tasks/([^/]+)/validate)",
                guarded([this](const httplib::Request& r) { return validate(r.matches[1].str(), r.body); }));
    server.Post(R"(/api/tasks/([^/]+)/submit)",
                guarded([this](const httplib::Request& r) { return submit(r.matches[1].str(), r.body); }));
    server.set_error_handler([reply](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) reply(res, {res.status, {{"error", httplib::status_message(res.status)}}});
    });
  }

private:
  static ApiResponse not_found(const std::string& id) { return {404, {{"error", "unknown task '" + id + "'"}}}; }

  // Offsets in API payloads count code points, like the corpus files.
  static json span_json(const std::string& service, const SlotSpan& s, std::string_view utterance) {
    return {{"service", service},
            {"slot", s.slot},
            {"value", s.value},
            {"start", text::byte_to_char_offset(utterance, s.start)},
            {"exclusive_end", text::byte_to_char_offset(utterance, s.end)}};
  }

  static json task_json(const Dialogue& d) {
    json turns = json::array();
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      const Turn& t = d.turns[i];
      std::vector<std::pair<std::size_t, json>> vals;
      for (const auto& f : t.frames)
        for (const auto& s : f.slots) vals.emplace_back(s.start, span_json(f.service, s, t.utterance));
      std::stable_sort(vals.begin(), vals.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      json values = json::array();
      for (auto& [_, v] : vals) values.push_back(std::move(v));
      turns.push_back({{"index", i}, {"speaker", speaker_name(t.speaker)}, {"text", t.utterance}, {"values", values}});
    }
    return {{"id", d.dialogue_id}, {"services", d.services}, {"turns", turns}};
  }

  static std::optional<ApiResponse> parse_texts(const Dialogue& d, const std::string& body,
                                                std::vector<std::string>& texts) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("texts") || !j["texts"].is_array())
      return ApiResponse{400, {{"error", "body must be a JSON object with a 'texts' array"}}};
    for (const auto& t : j["texts"]) {
      if (!t.is_string()) return ApiResponse{400, {{"error", "'texts' must hold strings"}}};
      texts.push_back(t.get<std::string>());
    }
    if (texts.size() != d.turns.size())
      return ApiResponse{400, {{"error", "expected " + std::to_string(d.turns.size()) + " texts, got " +
                                             std::to_string(texts.size())}}};
    return std::nullopt;
  }

  static std::pair<bool, json> verdicts(const Dialogue& d, const std::vector<std::string>& texts) {
    json turns = json::array();
    bool all = true;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      ValidationResult v = validate_paraphrase(d.turns[i], texts[i]);
      json spans = json::array(), missing = json::array();
      for (const auto& [svc, s] : v.spans) spans.push_back(span_json(svc, s, texts[i]));
      for (const auto& m : v.missing) missing.push_back({{"service", m.service}, {"slot", m.slot}, {"value", m.value}});
      turns.push_back({{"index", i}, {"accepted", v.accepted}, {"spans", spans}, {"missing", missing}});
      all = all && v.accepted;
    }
    return {all, {{"id", d.dialogue_id}, {"accepted", all}, {"turns", turns}}};
  }

  std::filesystem::path dir_, out_dir_;
  std::vector<std::string> ids_;
  std::map<std::string, Dialogue> dialogues_;
  std::map<std::string, std::unique_ptr<std::mutex>> locks_;
};

} // namespace sgd
