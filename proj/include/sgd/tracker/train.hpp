#pragma once

// Supervised training of the tracker heads from annotated dialogues.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "sgd/dialogue.hpp"
#include "sgd/paraphrase.hpp"
#include "sgd/rng.hpp"
#include "sgd/tracker/model.hpp"

namespace sgd::tracker {

// Targets for one (user turn, service) frame. -1 marks an absent target.
struct FrameExample {
  std::size_t encoding = 0;  // index into TrainingSet::encodings
  std::string service;
  int intent = 0;                                // 0 = NONE
  std::vector<double> requested;                 // per slot, 0 or 1
  std::vector<int> status;                       // per slot
  std::vector<int> value;                        // per categorical slot
  std::vector<std::pair<int, int>> span;         // per non-categorical slot, token indices
};

struct TrainingSet {
  std::vector<Encoding> encodings;
  std::vector<FrameExample> examples;
  std::size_t missing_spans = 0;  // active non-categorical targets without a locatable span
};

// Token indices covering byte range [start, end) of one segment.
inline std::optional<std::pair<int, int>> tokens_covering(const Encoding& enc, int segment, std::size_t start,
                                                          std::size_t end) {
  int p = -1, q = -1;
  for (std::size_t k = 0; k < enc.pieces.size(); ++k) {
    const Token& t = enc.pieces[k];
    if (t.segment != segment || t.end <= start || t.start >= end) continue;
    if (p < 0) p = static_cast<int>(k);
    q = static_cast<int>(k);
  }
  if (p < 0) return std::nullopt;
  return std::make_pair(p, q);
}

inline std::string last_value(const std::vector<std::string>& v) { return v.empty() ? std::string() : v.back(); }

// Span of `slot` in the user utterance (annotation, then text search), then in
// the preceding system utterance.
inline std::optional<std::pair<int, int>> locate_value(const Encoding& enc, const std::string& slot,
                                                       const std::vector<std::string>& values, const Turn& user,
                                                       const Turn* system, const std::string& service) {
  auto annotated = [&](const Turn& t, int seg) -> std::optional<std::pair<int, int>> {
    if (const Frame* f = t.frame(service))
      for (const auto& s : f->slots)
        if (s.slot == slot && std::find(values.begin(), values.end(), s.value) != values.end())
          return tokens_covering(enc, seg, s.start, s.end);
    return std::nullopt;
  };
  auto searched = [&](const Turn& t, int seg) -> std::optional<std::pair<int, int>> {
    for (auto it = values.rbegin(); it != values.rend(); ++it) {
      if (text::is_blank(*it)) continue;
      std::size_t at = text::ifind(t.utterance, *it);
      if (at != std::string::npos) return tokens_covering(enc, seg, at, at + it->size());
    }
    return std::nullopt;
  };
  if (auto r = annotated(user, 2)) return r;
  if (auto r = searched(user, 2)) return r;
  if (system) {
    if (auto r = annotated(*system, 1)) return r;
    if (auto r = searched(*system, 1)) return r;
  }
  return std::nullopt;
}

inline TrainingSet build_training_set(const PairEncoder& encoder, const std::map<std::string, ServiceModel>& models,
                                      const std::vector<Dialogue>& dialogues) {
  TrainingSet ts;
  for (const auto& d : dialogues) {
    std::map<std::string, FrameState> prev;
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      const Turn& t = d.turns[i];
      if (t.speaker != Speaker::user) continue;
      const Turn* sys = i > 0 && d.turns[i - 1].speaker == Speaker::system ? &d.turns[i - 1] : nullptr;
      ts.encodings.push_back(encoder.encode(sys ? std::string_view(sys->utterance) : std::string_view(), t.utterance));
      const Encoding& enc = ts.encodings.back();
      for (const auto& f : t.frames) {
        if (!f.state) continue;
        auto mit = models.find(f.service);
        if (mit == models.end()) throw Error("no schema for service '" + f.service + "' in dialogue " + d.dialogue_id);
        const ServiceSchema& schema = mit->second.schema;
        const SchemaEmbeddings& emb = mit->second.embeddings;
        const FrameState& st = *f.state;
        const FrameState& before = prev[f.service];

        FrameExample ex;
        ex.encoding = ts.encodings.size() - 1;
        ex.service = f.service;
        if (st.active_intent != kNoneIntent)
          for (std::size_t k = 0; k < schema.intents.size(); ++k)
            if (schema.intents[k].name == st.active_intent) ex.intent = static_cast<int>(k + 1);
        ex.requested.assign(schema.slots.size(), 0.0);
        ex.status.assign(schema.slots.size(), static_cast<int>(Status::none));
        for (std::size_t j = 0; j < schema.slots.size(); ++j) {
          const std::string& name = schema.slots[j].name;
          if (st.requested_slots.count(name)) ex.requested[j] = 1.0;
          auto cur = st.slot_values.find(name);
          if (cur == st.slot_values.end() || cur->second.empty()) continue;
          auto old = before.slot_values.find(name);
          if (old != before.slot_values.end() && old->second == cur->second) continue;
          ex.status[j] = static_cast<int>(last_value(cur->second) == kDontCare ? Status::dontcare : Status::active);
        }
        ex.value.assign(emb.cat_slot.size(), -1);
        for (std::size_t k = 0; k < emb.cat_slot.size(); ++k) {
          std::size_t j = emb.cat_slot[k];
          if (ex.status[j] != static_cast<int>(Status::active)) continue;
          const auto& pv = schema.slots[j].possible_values;
          for (auto it = st.slot_values.at(schema.slots[j].name).rbegin();
               it != st.slot_values.at(schema.slots[j].name).rend() && ex.value[k] < 0; ++it) {
            auto pos = std::find(pv.begin(), pv.end(), *it);
            if (pos != pv.end()) ex.value[k] = static_cast<int>(pos - pv.begin());
          }
        }
        ex.span.assign(emb.noncat_slot.size(), {-1, -1});
        for (std::size_t k = 0; k < emb.noncat_slot.size(); ++k) {
          std::size_t j = emb.noncat_slot[k];
          if (ex.status[j] != static_cast<int>(Status::active)) continue;
          const std::string& name = schema.slots[j].name;
          auto span = locate_value(enc, name, st.slot_values.at(name), t, sys, f.service);
          if (span) ex.span[k] = *span;
          else ++ts.missing_spans;
        }
        ts.examples.push_back(std::move(ex));
        prev[f.service] = st;
      }
    }
  }
  return ts;
}

// Softmax cross-entropy over the entries of `logits`; writes dL/dlogits.
inline double softmax_xent(const Vec& logits, int target, Vec& dlogits) {
  dlogits = softmax(logits);
  double loss = -std::log(std::max(dlogits[target], 1e-300));
  dlogits[target] -= 1.0;
  return loss;
}

// Loss of one frame; parameter gradients are added to `grad`.
inline double frame_loss(const FrameExample& ex, const Encoding& enc, const SchemaEmbeddings& emb,
                         const TrackerParams& params, TrackerParams& grad) {
  double loss = 0;
  Vec dl;

  // Intent over [i0, intents].
  {
    PairCache c = project_pairs(params.intent, enc.u, intent_candidates(emb, params));
    loss += softmax_xent(c.logits.row(0).transpose(), ex.intent, dl);
    Mat dY;
    project_pairs_backward(params.intent, c, dl.transpose(), grad.intent, nullptr, &dY);
    grad.none_intent += dY.col(0);
  }
  if (emb.slots.cols() > 0) {
    PairCache c = project_pairs(params.requested, enc.u, emb.slots);
    Mat dL(1, c.logits.cols());
    for (Eigen::Index j = 0; j < c.logits.cols(); ++j) {
      double z = c.logits(0, j), t = ex.requested[static_cast<std::size_t>(j)];
      loss += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
      dL(0, j) = sigmoid(z) - t;
    }
    project_pairs_backward(params.requested, c, dL, grad.requested);

    PairCache s = project_pairs(params.status, enc.u, emb.slots);
    Mat dS(3, s.logits.cols());
    for (Eigen::Index j = 0; j < s.logits.cols(); ++j) {
      loss += softmax_xent(s.logits.col(j), ex.status[static_cast<std::size_t>(j)], dl);
      dS.col(j) = dl;
    }
    project_pairs_backward(params.status, s, dS, grad.status);
  }
  for (std::size_t k = 0; k < emb.cat_slot.size(); ++k) {
    if (ex.value[k] < 0) continue;
    PairCache c = project_pairs(params.value, enc.u, emb.values[k]);
    loss += softmax_xent(c.logits.row(0).transpose(), ex.value[k], dl);
    project_pairs_backward(params.value, c, dl.transpose(), grad.value);
  }
  const Eigen::Index m = enc.tokens.cols(), n = emb.noncat.cols();
  bool any_span = std::any_of(ex.span.begin(), ex.span.end(), [](const auto& s) { return s.first >= 0; });
  if (any_span && m > 0) {
    for (int side = 0; side < 2; ++side) {
      const Projection& P = side == 0 ? params.start : params.end;
      PairCache c = project_pairs(P, enc.tokens, emb.noncat);
      Mat dL = Mat::Zero(1, m * n);
      for (Eigen::Index j = 0; j < n; ++j) {
        auto [p, q] = ex.span[static_cast<std::size_t>(j)];
        if (p < 0) continue;
        Vec logits(m);
        for (Eigen::Index x = 0; x < m; ++x) logits[x] = c.logit(x, j);
        loss += softmax_xent(logits, side == 0 ? p : q, dl);
        for (Eigen::Index x = 0; x < m; ++x) dL(0, x * n + j) = dl[x];
      }
      project_pairs_backward(P, c, dL, side == 0 ? grad.start : grad.end);
    }
  }
  return loss;
}

struct TrainConfig {
  int epochs = 12;
  std::size_t batch_size = 16;
  double learning_rate = 2e-3;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  std::function<void(int epoch, double mean_loss)> on_epoch;
};

struct TrainResult {
  TrackerParams params;
  std::vector<double> epoch_loss;
  std::size_t num_examples = 0;
  std::size_t missing_spans = 0;
};

namespace detail {
using Blocks = std::vector<std::pair<double*, Eigen::Index>>;

inline Blocks blocks(TrackerParams& p) {
  Blocks out;
  p.for_each_block([&](const std::string&, double* data, Eigen::Index n) { out.emplace_back(data, n); });
  return out;
}
} // namespace detail

inline TrainResult train_tracker(const PairEncoder& encoder, const SchemaRegistry& schemas,
                                 const std::vector<Dialogue>& dialogues, const TrainConfig& cfg) {
  if (cfg.batch_size == 0 || cfg.epochs < 0) throw Error("batch size must be positive and epochs non-negative");
  std::map<std::string, ServiceModel> models;
  for (const auto& [name, s] : schemas) models[name] = {s, embed_schema(encoder, s)};
  TrainingSet ts = build_training_set(encoder, models, dialogues);

  Rng rng(cfg.seed);
  TrainResult res{TrackerParams::random(encoder.dim(), rng), {}, ts.examples.size(), ts.missing_spans};
  TrackerParams grad = TrackerParams::zeros(encoder.dim());
  TrackerParams m1 = TrackerParams::zeros(encoder.dim()), m2 = TrackerParams::zeros(encoder.dim());
  auto pb = detail::blocks(res.params), gb = detail::blocks(grad), mb = detail::blocks(m1), vb = detail::blocks(m2);

  std::vector<std::size_t> order(ts.examples.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      grad = TrackerParams::zeros(encoder.dim());
      gb = detail::blocks(grad);
      for (std::size_t i = b; i < e; ++i) {
        const FrameExample& ex = ts.examples[order[i]];
        total += frame_loss(ex, ts.encodings[ex.encoding], models.at(ex.service).embeddings, res.params, grad);
      }
      const double scale = 1.0 / static_cast<double>(e - b);
      double sq = 0;
      for (auto [g, n] : gb)
        for (Eigen::Index k = 0; k < n; ++k) sq += g[k] * g[k] * scale * scale;
      const double clip = std::sqrt(sq) > cfg.clip_norm ? cfg.clip_norm / std::sqrt(sq) : 1.0;
      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      for (std::size_t blk = 0; blk < pb.size(); ++blk) {
        double *p = pb[blk].first, *g = gb[blk].first, *m = mb[blk].first, *v = vb[blk].first;
        for (Eigen::Index k = 0; k < pb[blk].second; ++k) {
          double gk = g[k] * scale * clip;
          m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * gk;
          v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * gk * gk;
          p[k] -= cfg.learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.epsilon);
        }
      }
    }
    double mean = order.empty() ? 0.0 : total / static_cast<double>(order.size());
    res.epoch_loss.push_back(mean);
    if (cfg.on_epoch) cfg.on_epoch(epoch, mean);
  }
  return res;
}

} // namespace sgd::tracker
