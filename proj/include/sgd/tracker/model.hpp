#pragma once

// Schema-guided tracker: schema element embeddings, the five prediction heads,
// decoding and per-service goal accumulation.

#include <Eigen/Dense>

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sgd/dialogue.hpp"
#include "sgd/schema.hpp"
#include "sgd/tracker/encoder.hpp"
#include "sgd/tracker/projection.hpp"

namespace sgd::tracker {

// ---------------------------------------------------------------------------
// Schema embeddings

struct SchemaEmbeddings {
  std::string service;
  Mat intents;                          // d x I
  Mat slots;                            // d x S
  Mat noncat;                           // d x N
  std::vector<std::size_t> noncat_slot;  // schema slot index of each noncat column
  std::vector<std::size_t> cat_slot;     // schema slot index of each categorical slot
  std::vector<Mat> values;               // per categorical slot: d x V^k

  std::size_t num_elements() const {
    std::size_t n = static_cast<std::size_t>(intents.cols() + slots.cols());
    for (const auto& v : values) n += static_cast<std::size_t>(v.cols());
    return n;
  }
};

inline SchemaEmbeddings embed_schema(const PairEncoder& enc, const ServiceSchema& schema) {
  const int d = enc.dim();
  SchemaEmbeddings e;
  e.service = schema.service_name;
  e.intents = Mat::Zero(d, static_cast<Eigen::Index>(schema.intents.size()));
  e.slots = Mat::Zero(d, static_cast<Eigen::Index>(schema.slots.size()));
  std::map<std::string, std::size_t> slot_index;
  for (std::size_t i = 0; i < schema.slots.size(); ++i) {
    slot_index[schema.slots[i].name] = i;
    if (schema.slots[i].is_categorical) {
      e.cat_slot.push_back(i);
      e.values.emplace_back(Mat::Zero(d, static_cast<Eigen::Index>(schema.slots[i].possible_values.size())));
    } else {
      e.noncat_slot.push_back(i);
    }
  }
  std::size_t ni = 0, ns = 0;
  std::map<std::string, std::size_t> value_pos;  // slot -> next value column
  for (const auto& el : schema_element_sequences(schema)) {
    Vec u = enc.encode(el.sequence_1, el.sequence_2).u;
    switch (el.kind) {
      case ElementKind::intent: e.intents.col(static_cast<Eigen::Index>(ni++)) = u; break;
      case ElementKind::slot: e.slots.col(static_cast<Eigen::Index>(ns++)) = u; break;
      case ElementKind::value: {
        const std::string slot = el.id.substr(6, el.id.find('=') - 6);
        std::size_t k = static_cast<std::size_t>(
            std::find(e.cat_slot.begin(), e.cat_slot.end(), slot_index.at(slot)) - e.cat_slot.begin());
        e.values[k].col(static_cast<Eigen::Index>(value_pos[slot]++)) = u;
        break;
      }
    }
  }
  e.noncat = Mat::Zero(d, static_cast<Eigen::Index>(e.noncat_slot.size()));
  for (std::size_t j = 0; j < e.noncat_slot.size(); ++j)
    e.noncat.col(static_cast<Eigen::Index>(j)) = e.slots.col(static_cast<Eigen::Index>(e.noncat_slot[j]));
  return e;
}

// ---------------------------------------------------------------------------
// Parameters

enum class Status { none = 0, dontcare = 1, active = 2 };

inline const char* status_name(Status s) {
  switch (s) {
    case Status::none: return "none";
    case Status::dontcare: return "dontcare";
    case Status::active: return "active";
  }
  return "?";
}

struct TrackerParams {
  Projection intent, requested, status, value, start, end;
  Vec none_intent;  // i_0

  static TrackerParams zeros(int d) {
    return {Projection::zeros(d, 1), Projection::zeros(d, 1), Projection::zeros(d, 3), Projection::zeros(d, 1),
            Projection::zeros(d, 1), Projection::zeros(d, 1), Vec::Zero(d)};
  }

  static TrackerParams random(int d, Rng& rng) {
    TrackerParams t{Projection::random(d, 1, rng), Projection::random(d, 1, rng), Projection::random(d, 3, rng),
                    Projection::random(d, 1, rng), Projection::random(d, 1, rng), Projection::random(d, 1, rng),
                    Vec::Zero(d)};
    for (Eigen::Index i = 0; i < d; ++i) t.none_intent[i] = rng.normal() * 0.5;
    return t;
  }

  int d() const { return static_cast<int>(none_intent.size()); }

  // Calls f(name, data, size) for every parameter block.
  template <class F>
  void for_each_block(F&& f) {
    auto proj = [&](const std::string& name, Projection& P) {
      f(name + ".W1", P.W1.data(), P.W1.size());
      f(name + ".b1", P.b1.data(), P.b1.size());
      f(name + ".W2", P.W2.data(), P.W2.size());
      f(name + ".b2", P.b2.data(), P.b2.size());
      f(name + ".W3", P.W3.data(), P.W3.size());
      f(name + ".b3", P.b3.data(), P.b3.size());
    };
    proj("intent", intent);
    proj("requested", requested);
    proj("status", status);
    proj("value", value);
    proj("start", start);
    proj("end", end);
    f("none_intent", none_intent.data(), none_intent.size());
  }

  void check() const {
    for (const Projection* P : {&intent, &requested, &status, &value, &start, &end}) {
      P->check();
      if (P->d() != d()) throw DimensionMismatch("tracker heads disagree on dimension");
    }
    if (status.p() != 3) throw DimensionMismatch("status head must have 3 outputs");
    for (const Projection* P : {&intent, &requested, &value, &start, &end})
      if (P->p() != 1) throw DimensionMismatch("scalar heads must have 1 output");
  }
};

// ---------------------------------------------------------------------------
// Heads

inline Vec softmax(const Vec& logits) {
  if (logits.size() == 0) return logits;
  Vec e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

inline double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// First index of the maximum.
inline Eigen::Index argmax(const Vec& v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline Mat intent_candidates(const SchemaEmbeddings& e, const TrackerParams& params) {
  Mat Y(params.d(), e.intents.cols() + 1);
  Y.col(0) = params.none_intent;
  Y.rightCols(e.intents.cols()) = e.intents;
  return Y;
}

// Distribution over NONE followed by the schema's intents.
inline Vec intent_distribution(const Vec& u, const SchemaEmbeddings& e, const TrackerParams& params) {
  PairCache c = project_pairs(params.intent, u, intent_candidates(e, params));
  return softmax(c.logits.row(0).transpose());
}

inline Vec requested_scores(const Vec& u, const SchemaEmbeddings& e, const TrackerParams& params) {
  PairCache c = project_pairs(params.requested, u, e.slots);
  return c.logits.row(0).transpose().unaryExpr([](double v) { return sigmoid(v); });
}

// 3 x S; column j is the none/dontcare/active distribution of slot j.
inline Mat status_distributions(const Vec& u, const SchemaEmbeddings& e, const TrackerParams& params) {
  PairCache c = project_pairs(params.status, u, e.slots);
  Mat out(3, c.logits.cols());
  for (Eigen::Index j = 0; j < c.logits.cols(); ++j) out.col(j) = softmax(c.logits.col(j));
  return out;
}

inline Vec value_distribution(const Vec& u, const Mat& values, const TrackerParams& params) {
  PairCache c = project_pairs(params.value, u, values);
  return softmax(c.logits.row(0).transpose());
}

// Start and end distributions over the M tokens for one non-categorical slot.
inline std::pair<Vec, Vec> span_distributions(const Mat& tokens, const Vec& slot, const TrackerParams& params) {
  PairCache s = project_pairs(params.start, tokens, slot);
  PairCache t = project_pairs(params.end, tokens, slot);
  return {softmax(s.logits.row(0).transpose()), softmax(t.logits.row(0).transpose())};
}

// Indices p <= q maximizing start[p] + end[q] in one pass. Ties go to the
// smallest q, then the smallest p.
inline std::pair<std::size_t, std::size_t> decode_span(const Vec& start, const Vec& end) {
  if (start.size() == 0 || start.size() != end.size()) throw DimensionMismatch("span distributions must be non-empty and equal length");
  std::size_t best_p = 0, best_q = 0, run_p = 0;
  double best = start[0] + end[0];
  for (Eigen::Index q = 0; q < start.size(); ++q) {
    if (start[q] > start[static_cast<Eigen::Index>(run_p)]) run_p = static_cast<std::size_t>(q);
    double score = start[static_cast<Eigen::Index>(run_p)] + end[q];
    if (score > best) {
      best = score;
      best_p = run_p;
      best_q = static_cast<std::size_t>(q);
    }
  }
  return {best_p, best_q};
}

// ---------------------------------------------------------------------------
// Turn predictions and state

struct SlotUpdate {
  Status status = Status::none;
  std::string value;  // set for active / dontcare
  std::optional<std::pair<std::size_t, std::size_t>> span;
};

struct TurnPrediction {
  std::string active_intent = kNoneIntent;
  Vec intent_probs;
  std::set<std::string> requested;
  std::map<std::string, SlotUpdate> updates;  // every schema slot
};

using DialogueState = std::map<std::string, std::string>;

// Slots with status none keep their prior value; dontcare/active overwrite.
inline DialogueState accumulate_state(const DialogueState& prev, const std::map<std::string, SlotUpdate>& updates) {
  DialogueState out = prev;
  for (const auto& [slot, u] : updates) {
    if (u.status == Status::none) continue;
    out[slot] = u.status == Status::dontcare ? std::string(kDontCare) : u.value;
  }
  return out;
}

inline TurnPrediction predict_turn(const Encoding& enc, std::string_view seq1, std::string_view seq2,
                                   const ServiceSchema& schema, const SchemaEmbeddings& e, const TrackerParams& params) {
  TurnPrediction tp;
  tp.intent_probs = intent_distribution(enc.u, e, params);
  Eigen::Index ai = argmax(tp.intent_probs);
  tp.active_intent = ai == 0 ? std::string(kNoneIntent) : schema.intents[static_cast<std::size_t>(ai - 1)].name;

  Vec req = requested_scores(enc.u, e, params);
  for (std::size_t j = 0; j < schema.slots.size(); ++j)
    if (req[static_cast<Eigen::Index>(j)] > 0.5) tp.requested.insert(schema.slots[j].name);

  Mat status = status_distributions(enc.u, e, params);
  for (std::size_t j = 0; j < schema.slots.size(); ++j) {
    SlotUpdate up;
    up.status = static_cast<Status>(argmax(status.col(static_cast<Eigen::Index>(j))));
    tp.updates[schema.slots[j].name] = up;
  }
  for (std::size_t k = 0; k < e.cat_slot.size(); ++k) {
    const SlotDef& def = schema.slots[e.cat_slot[k]];
    SlotUpdate& up = tp.updates[def.name];
    if (up.status == Status::dontcare) up.value = kDontCare;
    if (up.status != Status::active) continue;
    Vec dist = value_distribution(enc.u, e.values[k], params);
    up.value = def.possible_values[static_cast<std::size_t>(argmax(dist))];
  }
  for (std::size_t j = 0; j < e.noncat_slot.size(); ++j) {
    const SlotDef& def = schema.slots[e.noncat_slot[j]];
    SlotUpdate& up = tp.updates[def.name];
    if (up.status == Status::dontcare) up.value = kDontCare;
    if (up.status != Status::active) continue;
    if (enc.pieces.empty()) {
      up.status = Status::none;
      continue;
    }
    auto [start, end] = span_distributions(enc.tokens, e.noncat.col(static_cast<Eigen::Index>(j)), params);
    auto pq = decode_span(start, end);
    up.span = pq;
    up.value = span_text(enc, pq.first, pq.second, seq1, seq2);
  }
  return tp;
}

struct ServiceModel {
  ServiceSchema schema;
  SchemaEmbeddings embeddings;
};

// Encoder, parameters and embedded schemas; immutable while tracking.
class Tracker {
public:
  Tracker(const PairEncoder& encoder, TrackerParams params) : encoder_(&encoder), params_(std::move(params)) {
    params_.check();
    if (params_.d() != encoder.dim())
      throw DimensionMismatch("parameters have dimension " + std::to_string(params_.d()) + " but the encoder has " +
                              std::to_string(encoder.dim()));
  }

  void add_schema(const ServiceSchema& schema) {
    models_[schema.service_name] = {schema, embed_schema(*encoder_, schema)};
  }
  void add_schemas(const SchemaRegistry& schemas) {
    for (const auto& [_, s] : schemas) add_schema(s);
  }

  const ServiceModel& model(const std::string& service) const {
    auto it = models_.find(service);
    if (it == models_.end()) throw Error("no schema for service '" + service + "'");
    return it->second;
  }
  const TrackerParams& params() const { return params_; }
  const PairEncoder& encoder() const { return *encoder_; }

  struct FramePrediction {
    std::string dialogue_id;
    std::size_t turn_index = 0;
    std::string service;
    FrameState state;
    TurnPrediction turn;
  };

  // Each user turn is encoded with the preceding system utterance (empty for
  // the first turn); one frame per dialogue service.
  std::vector<FramePrediction> track(const Dialogue& d) const {
    for (const auto& svc : d.services) model(svc);
    std::vector<FramePrediction> out;
    std::map<std::string, DialogueState> goals;
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      const Turn& t = d.turns[i];
      if (t.speaker != Speaker::user) continue;
      std::string_view sys = i > 0 && d.turns[i - 1].speaker == Speaker::system ? std::string_view(d.turns[i - 1].utterance)
                                                                               : std::string_view();
      Encoding enc = encoder_->encode(sys, t.utterance);
      for (const auto& svc : d.services) {
        const ServiceModel& m = model(svc);
        FramePrediction fp;
        fp.dialogue_id = d.dialogue_id;
        fp.turn_index = i;
        fp.service = svc;
        fp.turn = predict_turn(enc, sys, t.utterance, m.schema, m.embeddings, params_);
        goals[svc] = accumulate_state(goals[svc], fp.turn.updates);
        fp.state.active_intent = fp.turn.active_intent;
        fp.state.requested_slots = fp.turn.requested;
        for (const auto& [slot, v] : goals[svc]) fp.state.slot_values[slot] = {v};
        out.push_back(std::move(fp));
      }
    }
    return out;
  }

private:
  const PairEncoder* encoder_;
  TrackerParams params_;
  std::map<std::string, ServiceModel> models_;
};

// ---------------------------------------------------------------------------
// Prediction files

struct PredictedFrame {
  std::string dialogue_id;
  std::size_t turn_index = 0;
  std::string service;
  FrameState state;
  bool operator==(const PredictedFrame&) const = default;
};

inline json predictions_to_json(const std::vector<PredictedFrame>& preds) {
  json arr = json::array();
  for (const auto& p : preds)
    arr.push_back({{"dialogue_id", p.dialogue_id}, {"turn_index", p.turn_index}, {"service", p.service},
                   {"state", to_json(p.state)}});
  return {{"predictions", arr}};
}

inline std::vector<PredictedFrame> predictions_from_json(const json& j, const std::string& origin = {}) {
  std::vector<PredictedFrame> out;
  for (const auto& jp : get_field<json>(j, "predictions", origin))
    out.push_back({get_field<std::string>(jp, "dialogue_id", origin), get_field<std::size_t>(jp, "turn_index", origin),
                   get_field<std::string>(jp, "service", origin),
                   frame_state_from_json(get_field<json>(jp, "state", origin), origin)});
  return out;
}

inline std::vector<PredictedFrame> track_corpus(const Tracker& tracker, const std::vector<Dialogue>& dialogues) {
  std::vector<PredictedFrame> out;
  for (const auto& d : dialogues)
    for (auto& fp : tracker.track(d)) out.push_back({fp.dialogue_id, fp.turn_index, fp.service, std::move(fp.state)});
  return out;
}

} // namespace sgd::tracker
