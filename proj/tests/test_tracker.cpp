#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"

using namespace sgd;
using namespace sgd::tracker;

namespace {

Projection random_projection(int d, int p, Rng& rng, double scale = 1.0) {
  Projection P = Projection::random(d, p, rng);
  for (Vec* b : {&P.b1, &P.b2, &P.b3})
    for (Eigen::Index i = 0; i < b->size(); ++i) (*b)[i] = rng.normal() * 0.3 * scale;
  return P;
}

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-6); }

// u = (1 if the user side says "set", 1); token k = (1 if a capitalized user-side word, 0).
class RiggedEncoder : public PairEncoder {
public:
  int dim() const override { return 2; }
  std::string name() const override { return "rigged"; }
  Encoding encode(std::string_view seq1, std::string_view seq2) const override {
    Encoding e;
    e.pieces = tokenize(seq1, 1);
    auto two = tokenize(seq2, 2);
    e.pieces.insert(e.pieces.end(), two.begin(), two.end());
    e.u = Vec::Zero(2);
    e.u[1] = 1.0;
    e.tokens = Mat::Zero(2, static_cast<Eigen::Index>(e.pieces.size()));
    for (std::size_t k = 0; k < e.pieces.size(); ++k) {
      const auto& t = e.pieces[k];
      if (t.segment == 2 && t.text == "set") e.u[0] = 1.0;
      if (t.segment == 2 && t.text[0] >= 'A' && t.text[0] <= 'Z') e.tokens(0, static_cast<Eigen::Index>(k)) = 1.0;
    }
    return e;
  }
};

// Heads that read only x (W2 = [0 | I]) or only y (W2 = [I | 0]).
Projection reads_x(int p) {
  Projection P = Projection::zeros(2, p);
  P.W1 = Mat::Identity(2, 2);
  P.W2.rightCols(2) = Mat::Identity(2, 2);
  return P;
}

TrackerParams rigged_params() {
  TrackerParams t = TrackerParams::zeros(2);
  t.intent.W2.leftCols(2) = Mat::Identity(2, 2);
  t.intent.W3 << 0, 1;
  t.status = reads_x(3);
  t.status.W3 << 0, 0, 0, 0, 5, 0;
  t.status.b3 << 0.1, -10, 0;
  t.start = reads_x(1);
  t.start.W3 << 5, 0;
  t.end = reads_x(1);
  t.end.W3 << 5, 0;
  return t;
}

ServiceSchema toy_schema() {
  ServiceSchema s;
  s.service_name = "Toy_1";
  s.description = "toy service";
  s.slots = {{"city", "city name", false, {}}};
  s.intents = {{"Go", "go somewhere", false, {"city"}, {}, {}}};
  return s;
}

Dialogue toy_dialogue(const std::vector<std::string>& user, std::vector<std::string> services = {"Toy_1"}) {
  Dialogue d;
  d.dialogue_id = "toy";
  d.services = std::move(services);
  for (const auto& u : user) {
    Turn t;
    t.speaker = Speaker::user;
    t.utterance = u;
    d.turns.push_back(t);
    Turn s;
    s.speaker = Speaker::system;
    s.utterance = "ok then";
    d.turns.push_back(s);
  }
  return d;
}

ServiceSchema sized_schema(std::size_t intents, std::size_t slots) {
  ServiceSchema s;
  s.service_name = "Dyn_1";
  s.description = "a service that grows";
  for (std::size_t i = 0; i < slots; ++i)
    s.slots.push_back({"slot" + std::to_string(i), "slot number " + std::to_string(i), i == 0,
                       i == 0 ? std::vector<std::string>{"a", "b", "c"} : std::vector<std::string>{}});
  for (std::size_t i = 0; i < intents; ++i)
    s.intents.push_back({"Intent" + std::to_string(i), "intent number " + std::to_string(i), false, {}, {}, {}});
  return s;
}

} // namespace

// ---------------------------------------------------------------------------
// activation

TEST(Gelu, MatchesNormalCdfOracle) {
  EXPECT_NEAR(gelu(2.0), oracle::gelu(2.0), 1e-6);
  EXPECT_NEAR(gelu(2.0), 1.9545, 1e-4);
  for (double x = -4; x <= 4; x += 0.37) EXPECT_NEAR(gelu(x), oracle::gelu(x), 1e-6) << x;
}

// gelu has a single minimum near x = -0.7518: decreasing before, increasing after.
TEST(Gelu, ZeroAndSingleMinimumOnGrid) {
  EXPECT_EQ(gelu(0.0), 0.0);
  for (double x = -5; x < -0.77; x += 0.01) EXPECT_GE(gelu(x), gelu(x + 0.01) - 1e-12) << x;
  for (double x = -0.74; x < 5; x += 0.01) EXPECT_LE(gelu(x), gelu(x + 0.01) + 1e-12) << x;
  EXPECT_LT(gelu(-0.7518), gelu(-0.7));
  EXPECT_LT(gelu(-0.7518), gelu(-0.8));
}

TEST(Gelu, TanhApproximationAgrees) {
  for (double x = -6; x <= 6; x += 0.05) EXPECT_NEAR(gelu(x), gelu_tanh(x), 1e-3) << x;
}

TEST(Gelu, DerivativeMatchesFiniteDifference) {
  for (double x = -4; x <= 4; x += 0.25) EXPECT_NEAR(gelu_grad(x), (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6, 1e-7);
}

// ---------------------------------------------------------------------------
// projection

TEST(Projection, ZeroParametersGiveZero) {
  Rng rng(1);
  Projection P = Projection::zeros(4, 3);
  Vec l = project(P, random_mat(4, 1, rng).col(0), random_mat(4, 1, rng).col(0));
  EXPECT_EQ(l, Vec::Zero(3));
}

TEST(Projection, OneDimensionalExampleIsGeluOfTwo) {
  // Weight 1 on y and 0 on A(W1 x + b1), in (y, h1) concatenation order.
  Projection P = Projection::zeros(1, 1);
  P.W1 << 1;
  P.W2 << 1, 0;
  P.W3 << 1;
  Vec x(1), y(1);
  x << 0;
  y << 2;
  EXPECT_NEAR(project(P, x, y)[0], oracle::gelu(2.0), 1e-6);
  EXPECT_NEAR(oracle::gelu(2.0), 1.9545, 1e-4);
}

TEST(Projection, MatchesTheFormulaOnRandomInputs) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    int d = 1 + static_cast<int>(rng.uniform_index(5)), p = 1 + static_cast<int>(rng.uniform_index(3));
    Projection P = random_projection(d, p, rng);
    Vec x = random_mat(d, 1, rng).col(0), y = random_mat(d, 1, rng).col(0);
    auto A = [](Vec v) { return v.unaryExpr([](double t) { return oracle::gelu(t); }).eval(); };
    Vec cat(2 * d);
    cat << y, A(P.W1 * x + P.b1);
    Vec want = P.W3 * A(P.W2 * cat + P.b2) + P.b3;
    Vec got = project(P, x, y);
    for (int k = 0; k < p; ++k) EXPECT_NEAR(got[k], want[k], 1e-6);
  }
}

TEST(Projection, BatchedPairsEqualSinglePairs) {
  Rng rng(3);
  Projection P = random_projection(5, 2, rng);
  Mat X = random_mat(5, 3, rng), Y = random_mat(5, 4, rng);
  PairCache c = project_pairs(P, X, Y);
  for (Eigen::Index x = 0; x < 3; ++x)
    for (Eigen::Index y = 0; y < 4; ++y) {
      Vec l = project(P, X.col(x), Y.col(y));
      for (int k = 0; k < 2; ++k) EXPECT_NEAR(c.logit(x, y, k), l[k], 1e-12);
    }
}

TEST(Projection, DimensionMismatchThrows) {
  Projection P = Projection::zeros(3, 1);
  EXPECT_THROW(project(P, Vec::Zero(2), Vec::Zero(3)), DimensionMismatch);
  EXPECT_THROW(project_pairs(P, Mat::Zero(3, 2), Mat::Zero(4, 1)), DimensionMismatch);
}

TEST(ProjectionProperty, GradientMatchesCentralDifferences) {
  Rng rng(4);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    int d = 1 + static_cast<int>(rng.uniform_index(4)), p = 1 + static_cast<int>(rng.uniform_index(3));
    Eigen::Index nx = 1 + static_cast<Eigen::Index>(rng.uniform_index(3)), ny = 1 + static_cast<Eigen::Index>(rng.uniform_index(3));
    Projection P = random_projection(d, p, rng);
    Mat X = random_mat(d, nx, rng), Y = random_mat(d, ny, rng);
    Mat G = random_mat(p, nx * ny, rng);
    auto loss = [&](const Projection& Q, const Mat& A, const Mat& B) {
      return project_pairs(Q, A, B).logits.cwiseProduct(G).sum();
    };
    Projection grad = Projection::zeros(d, p);
    Mat dX, dY;
    project_pairs_backward(P, project_pairs(P, X, Y), G, grad, &dX, &dY);

    const double h = 1e-5;
    auto check = [&](double* param, double analytic, auto&& eval) {
      double keep = *param;
      *param = keep + h;
      double up = eval();
      *param = keep - h;
      double down = eval();
      *param = keep;
      double numeric = (up - down) / (2 * h);
      double e = rel_err(analytic, numeric);
      if (std::abs(analytic - numeric) > 1e-8) worst = std::max(worst, e);
    };
    auto eval = [&] { return loss(P, X, Y); };
    P.zip(grad, [&](auto& block, auto& g) {
      for (Eigen::Index i = 0; i < block.size(); ++i) check(block.data() + i, g.data()[i], eval);
    });
    for (Eigen::Index i = 0; i < X.size(); ++i) check(X.data() + i, dX.data()[i], eval);
    for (Eigen::Index i = 0; i < Y.size(); ++i) check(Y.data() + i, dY.data()[i], eval);
  }
  EXPECT_LT(worst, 1e-4);
}

// ---------------------------------------------------------------------------
// heads

TEST(Heads, SoftmaxIsADistribution) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Vec l = random_mat(1 + static_cast<Eigen::Index>(rng.uniform_index(10)), 1, rng).col(0) * 30.0;
    Vec p = softmax(l);
    EXPECT_NEAR(p.sum(), 1.0, 1e-6);
    EXPECT_GE(p.minCoeff(), 0.0);
  }
}

TEST(Heads, AllHeadsProduceDistributions) {
  HashedPairEncoder enc(16);
  Rng rng(6);
  TrackerParams params = TrackerParams::random(16, rng);
  const auto& schema = sgdt::bundled().schemas.at("Restaurants_1");
  SchemaEmbeddings e = embed_schema(enc, schema);
  Encoding x = enc.encode("Which city?", "Find me Thai food in San Jose");
  EXPECT_NEAR(intent_distribution(x.u, e, params).sum(), 1.0, 1e-6);
  EXPECT_EQ(intent_distribution(x.u, e, params).size(), static_cast<Eigen::Index>(schema.intents.size() + 1));
  Mat st = status_distributions(x.u, e, params);
  for (Eigen::Index j = 0; j < st.cols(); ++j) EXPECT_NEAR(st.col(j).sum(), 1.0, 1e-6);
  for (const auto& v : e.values) EXPECT_NEAR(value_distribution(x.u, v, params).sum(), 1.0, 1e-6);
  for (Eigen::Index j = 0; j < e.noncat.cols(); ++j) {
    auto [s, t] = span_distributions(x.tokens, e.noncat.col(j), params);
    EXPECT_NEAR(s.sum(), 1.0, 1e-6);
    EXPECT_NEAR(t.sum(), 1.0, 1e-6);
  }
  Vec r = requested_scores(x.u, e, params);
  EXPECT_GE(r.minCoeff(), 0.0);
  EXPECT_LE(r.maxCoeff(), 1.0);
}

TEST(Heads, EqualIntentLogitsPickNone) {
  HashedPairEncoder enc(8);
  ServiceSchema s = sized_schema(1, 1);
  SchemaEmbeddings e = embed_schema(enc, s);
  TrackerParams params = TrackerParams::zeros(8);
  Encoding x = enc.encode("", "anything");
  TurnPrediction tp = predict_turn(x, "", "anything", s, e, params);
  EXPECT_NEAR(tp.intent_probs[0], 0.5, 1e-12);
  EXPECT_NEAR(tp.intent_probs[1], 0.5, 1e-12);
  EXPECT_EQ(tp.active_intent, kNoneIntent);
}

TEST(Heads, ZeroRequestLogitIsNotRequested) {
  HashedPairEncoder enc(8);
  ServiceSchema s = sized_schema(1, 3);
  SchemaEmbeddings e = embed_schema(enc, s);
  TrackerParams params = TrackerParams::zeros(8);
  Encoding x = enc.encode("", "what is it");
  EXPECT_DOUBLE_EQ(requested_scores(x.u, e, params)[0], 0.5);
  EXPECT_TRUE(predict_turn(x, "", "what is it", s, e, params).requested.empty());
}

TEST(Heads, LargeLogitForOneSlotRequestsOnlyIt) {
  HashedPairEncoder enc(8);
  ServiceSchema s = sized_schema(1, 3);
  SchemaEmbeddings e = embed_schema(enc, s);
  TrackerParams params = TrackerParams::zeros(8);
  // logit = w . gelu(y) + b with w aimed at slot 2's embedding.
  params.requested.W2.leftCols(8) = Mat::Identity(8, 8);
  Vec target = e.slots.col(2).unaryExpr([](double v) { return gelu(v); });
  Mat others(8, 2);
  others << e.slots.col(0).unaryExpr([](double v) { return gelu(v); }), e.slots.col(1).unaryExpr([](double v) { return gelu(v); });
  Vec w = target - others.rowwise().mean();
  params.requested.W3 = 50.0 * w.transpose();
  params.requested.b3[0] = -50.0 * (w.dot(target) + w.dot(others.col(0)) + w.dot(others.col(1))) / 3.0;
  Encoding x = enc.encode("", "what is it");
  Vec r = requested_scores(x.u, e, params);
  ASSERT_GT(r[2], 0.5);
  auto req = predict_turn(x, "", "what is it", s, e, params).requested;
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(req.count("slot" + std::to_string(j)) > 0, r[static_cast<Eigen::Index>(j)] > 0.5);
  EXPECT_TRUE(req.count("slot2"));
}

TEST(Heads, EqualStatusLogitsLeaveSlotUnchanged) {
  HashedPairEncoder enc(8);
  ServiceSchema s = sized_schema(1, 2);
  SchemaEmbeddings e = embed_schema(enc, s);
  TrackerParams params = TrackerParams::zeros(8);
  Encoding x = enc.encode("", "hello there");
  Mat st = status_distributions(x.u, e, params);
  for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(st(k, 0), 1.0 / 3, 1e-12);
  TurnPrediction tp = predict_turn(x, "", "hello there", s, e, params);
  for (const auto& [_, u] : tp.updates) EXPECT_EQ(u.status, Status::none);
  DialogueState prev{{"slot1", "kept"}};
  EXPECT_EQ(accumulate_state(prev, tp.updates), prev);
}

// ---------------------------------------------------------------------------
// span decoding

TEST(SpanDecoding, WorkedExample) {
  Vec s(3), e(3);
  s << 0.1, 0.6, 0.3;
  e << 0.2, 0.1, 0.7;
  EXPECT_EQ(decode_span(s, e), std::make_pair(std::size_t{1}, std::size_t{2}));
}

TEST(SpanDecoding, SingleTokenIsForced) {
  Vec s(1), e(1);
  s << 1.0;
  e << 1.0;
  EXPECT_EQ(decode_span(s, e), std::make_pair(std::size_t{0}, std::size_t{0}));
  EXPECT_THROW(decode_span(Vec(0), Vec(0)), DimensionMismatch);
}

TEST(SpanDecoding, EndBeforeStartIsNeverChosen) {
  Vec s(3), e(3);
  s << 0.0, 0.0, 1.0;
  e << 1.0, 0.0, 0.0;
  auto pq = decode_span(s, e);
  EXPECT_LE(pq.first, pq.second);
}

TEST(SpanDecodingProperty, EqualsExhaustiveSearch) {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    for (Eigen::Index m = 1; m <= 12; ++m) {
      Vec a(m), b(m);
      bool coarse = trial % 3 == 0;  // integer logits make ties common
      for (Eigen::Index i = 0; i < m; ++i) {
        a[i] = coarse ? static_cast<double>(rng.uniform_int(0, 2)) : rng.normal() * 3;
        b[i] = coarse ? static_cast<double>(rng.uniform_int(0, 2)) : rng.normal() * 3;
      }
      Vec s = softmax(a), e = softmax(b);
      ASSERT_EQ(decode_span(s, e), oracle::exhaustive_span(s, e, static_cast<std::size_t>(m))) << trial << "/" << m;
    }
  }
}

// ---------------------------------------------------------------------------
// state accumulation

TEST(AccumulateState, Examples) {
  EXPECT_TRUE(accumulate_state({}, {}).empty());
  DialogueState la{{"city", "LA"}};
  EXPECT_EQ(accumulate_state(la, {{"city", SlotUpdate{Status::none, "", std::nullopt}}}), la);
  EXPECT_EQ(accumulate_state(la, {{"city", SlotUpdate{Status::active, "SF", std::nullopt}}}),
            (DialogueState{{"city", "SF"}}));
  EXPECT_EQ(accumulate_state(la, {{"cuisine", SlotUpdate{Status::dontcare, "", std::nullopt}}}),
            (DialogueState{{"city", "LA"}, {"cuisine", "dontcare"}}));
  EXPECT_EQ(accumulate_state({}, {{"city", SlotUpdate{Status::none, "", std::nullopt}}}), DialogueState{});
}

TEST(AccumulateState, NoneUpdatesAreIdempotent) {
  DialogueState prev{{"a", "1"}, {"b", "2"}};
  std::map<std::string, SlotUpdate> none{{"a", {}}, {"c", {}}};
  auto once = accumulate_state(prev, none);
  EXPECT_EQ(accumulate_state(once, none), once);
  EXPECT_EQ(once, prev);
}

// ---------------------------------------------------------------------------
// schema embeddings

TEST(SchemaEmbedding, CountsFollowTheSchema) {
  HashedPairEncoder enc(16);
  ServiceSchema s = sized_schema(2, 3);
  s.slots[0].possible_values = {"a", "b", "c", "d"};
  SchemaEmbeddings e = embed_schema(enc, s);
  EXPECT_EQ(e.intents.cols(), 2);
  EXPECT_EQ(e.slots.cols(), 3);
  ASSERT_EQ(e.values.size(), 1u);
  EXPECT_EQ(e.values[0].cols(), 4);
  EXPECT_EQ(e.noncat.cols(), 2);
  EXPECT_EQ(e.num_elements(), 9u);
}

TEST(SchemaEmbedding, SameDescriptionSameVectorAndEditsStayLocal) {
  HashedPairEncoder enc(16);
  ServiceSchema s = sized_schema(2, 3);
  s.slots[1].description = s.slots[2].description;
  SchemaEmbeddings a = embed_schema(enc, s);
  EXPECT_EQ(a.slots.col(1), a.slots.col(2));
  s.slots[2].description = "something else";
  SchemaEmbeddings b = embed_schema(enc, s);
  EXPECT_EQ(a.slots.col(0), b.slots.col(0));
  EXPECT_EQ(a.slots.col(1), b.slots.col(1));
  EXPECT_NE(a.slots.col(2), b.slots.col(2));
  EXPECT_EQ(a.intents, b.intents);
  EXPECT_EQ(a.values[0], b.values[0]);
}

TEST(SchemaEmbedding, DynamicSchemasChangeOnlyArity) {
  HashedPairEncoder enc(16);
  Rng rng(8);
  TrackerParams params = TrackerParams::random(16, rng);
  Encoding x = enc.encode("", "book it");
  for (std::size_t intents = 1; intents <= 4; ++intents)
    for (std::size_t slots = 1; slots <= 4; ++slots) {
      ServiceSchema s = sized_schema(intents, slots);
      SchemaEmbeddings e = embed_schema(enc, s);
      TurnPrediction tp = predict_turn(x, "", "book it", s, e, params);
      EXPECT_EQ(tp.intent_probs.size(), static_cast<Eigen::Index>(intents + 1));
      EXPECT_EQ(tp.updates.size(), slots);
      for (const auto& r : tp.requested) EXPECT_TRUE(s.find_slot(r));
    }
}

// ---------------------------------------------------------------------------
// tracking

TEST(Tracking, RiggedParametersGiveHandDerivedStates) {
  RiggedEncoder enc;
  Tracker tr(enc, rigged_params());
  tr.add_schema(toy_schema());
  auto frames = tr.track(toy_dialogue({"set SF please", "thanks", "set LA now"}));
  ASSERT_EQ(frames.size(), 3u);
  EXPECT_EQ(frames[0].turn_index, 0u);
  EXPECT_EQ(frames[1].turn_index, 2u);
  EXPECT_EQ(frames[2].turn_index, 4u);
  for (const auto& f : frames) {
    EXPECT_EQ(f.state.active_intent, "Go");
    EXPECT_TRUE(f.state.requested_slots.empty());
  }
  EXPECT_EQ(frames[0].turn.updates.at("city").status, Status::active);
  EXPECT_EQ(frames[1].turn.updates.at("city").status, Status::none);
  EXPECT_EQ(frames[0].state.slot_values.at("city"), std::vector<std::string>{"SF"});
  EXPECT_EQ(frames[1].state.slot_values.at("city"), std::vector<std::string>{"SF"});
  EXPECT_EQ(frames[2].state.slot_values.at("city"), std::vector<std::string>{"LA"});
}

TEST(Tracking, FirstTurnPairsAnEmptySystemUtterance) {
  RiggedEncoder enc;
  Tracker tr(enc, rigged_params());
  tr.add_schema(toy_schema());
  auto frames = tr.track(toy_dialogue({"set SF please"}));
  ASSERT_EQ(frames.size(), 1u);
  ASSERT_TRUE(frames[0].turn.updates.at("city").span);
  // Token indices start at the user utterance because segment 1 is empty.
  EXPECT_EQ(frames[0].turn.updates.at("city").span->first, 1u);
}

TEST(Tracking, OneFramePerServicePerUserTurn) {
  HashedPairEncoder enc(16);
  Rng rng(9);
  Tracker tr(enc, TrackerParams::random(16, rng));
  tr.add_schemas(sgdt::bundled().schemas);
  Dialogue d = toy_dialogue({"find food", "and a ride"}, {"Restaurants_1", "RideSharing_1"});
  auto frames = tr.track(d);
  ASSERT_EQ(frames.size(), 4u);
  EXPECT_EQ(frames[0].service, "Restaurants_1");
  EXPECT_EQ(frames[1].service, "RideSharing_1");
  for (const auto& f : frames) {
    const auto& schema = sgdt::bundled().schemas.at(f.service);
    for (const auto& [slot, _] : f.state.slot_values) EXPECT_TRUE(schema.find_slot(slot)) << slot;
  }
}

TEST(Tracking, UnknownServiceIsAnError) {
  HashedPairEncoder enc(16);
  Tracker tr(enc, TrackerParams::zeros(16));
  EXPECT_THROW(tr.track(toy_dialogue({"hi"}, {"Nope_1"})), Error);
  EXPECT_THROW(Tracker(enc, TrackerParams::zeros(8)), DimensionMismatch);
}

TEST(Tracking, DeterministicPredictionFile) {
  HashedPairEncoder enc(16);
  Rng rng(10);
  Tracker tr(enc, TrackerParams::random(16, rng));
  tr.add_schemas(sgdt::bundled().schemas);
  auto ds = sgdt::generated(5, 3);
  auto a = predictions_to_json(track_corpus(tr, ds)).dump();
  auto b = predictions_to_json(track_corpus(tr, ds)).dump();
  EXPECT_EQ(a, b);
  EXPECT_EQ(predictions_from_json(json::parse(a)), track_corpus(tr, ds));
}

// ---------------------------------------------------------------------------
// checkpoints and training

TEST(Checkpoint, RoundTripsExactly) {
  Rng rng(11);
  TrackerParams p = TrackerParams::random(8, rng);
  sgdt::TempDir tmp;
  save_checkpoint(tmp / "m.json", p, "hashed");
  Checkpoint c = load_checkpoint(tmp / "m.json");
  EXPECT_EQ(c.encoder, "hashed");
  TrackerParams q = c.params;
  std::vector<double> a, b;
  p.for_each_block([&](const std::string&, double* d, Eigen::Index n) { a.insert(a.end(), d, d + n); });
  q.for_each_block([&](const std::string&, double* d, Eigen::Index n) { b.insert(b.end(), d, d + n); });
  EXPECT_EQ(a, b);
}

TEST(Checkpoint, BadShapeOrFormatIsRejected) {
  Rng rng(12);
  json j = checkpoint_to_json(TrackerParams::random(4, rng), "hashed");
  json short_block = j;
  short_block["blocks"]["status.W3"].erase(0);
  EXPECT_THROW(checkpoint_from_json(short_block), DimensionMismatch);
  json wrong = j;
  wrong["format"] = "other";
  EXPECT_THROW(checkpoint_from_json(wrong), ParseError);
  json missing = j;
  missing["blocks"].erase("none_intent");
  EXPECT_THROW(checkpoint_from_json(missing), ParseError);
}

TEST(Training, FrameLossGradientMatchesFiniteDifferences) {
  HashedPairEncoder enc(6);
  const auto& f = sgdt::bundled();
  std::map<std::string, ServiceModel> models;
  for (const auto& [n, s] : f.schemas) models[n] = {s, embed_schema(enc, s)};
  TrainingSet ts = build_training_set(enc, models, sgdt::generated(3, 4));
  ASSERT_FALSE(ts.examples.empty());
  Rng rng(13);
  TrackerParams params = TrackerParams::random(6, rng);
  double worst = 0;
  for (std::size_t k = 0; k < ts.examples.size(); k += 7) {
    const FrameExample& ex = ts.examples[k];
    const SchemaEmbeddings& emb = models.at(ex.service).embeddings;
    TrackerParams grad = TrackerParams::zeros(6);
    frame_loss(ex, ts.encodings[ex.encoding], emb, params, grad);
    std::vector<double*> pp, gg;
    params.for_each_block([&](const std::string&, double* d, Eigen::Index n) {
      for (Eigen::Index i = 0; i < n; i += 5) pp.push_back(d + i);
    });
    grad.for_each_block([&](const std::string&, double* d, Eigen::Index n) {
      for (Eigen::Index i = 0; i < n; i += 5) gg.push_back(d + i);
    });
    for (std::size_t i = 0; i < pp.size(); ++i) {
      double keep = *pp[i];
      TrackerParams scratch = TrackerParams::zeros(6);
      *pp[i] = keep + 1e-5;
      double up = frame_loss(ex, ts.encodings[ex.encoding], emb, params, scratch);
      *pp[i] = keep - 1e-5;
      double down = frame_loss(ex, ts.encodings[ex.encoding], emb, params, scratch);
      *pp[i] = keep;
      double numeric = (up - down) / 2e-5;
      if (std::abs(numeric - *gg[i]) > 1e-7) worst = std::max(worst, rel_err(*gg[i], numeric));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Training, TargetsFollowStateChanges) {
  HashedPairEncoder enc(8);
  const auto& f = sgdt::bundled();
  std::map<std::string, ServiceModel> models;
  for (const auto& [n, s] : f.schemas) models[n] = {s, embed_schema(enc, s)};
  auto ds = sgdt::generated(20, 5);
  TrainingSet ts = build_training_set(enc, models, ds);
  std::size_t frames = 0;
  for (const auto& d : ds)
    for (const auto& t : d.turns)
      if (t.speaker == Speaker::user) frames += d.services.size();
  EXPECT_EQ(ts.examples.size(), frames);
  EXPECT_EQ(ts.missing_spans, 0u);
  for (const auto& ex : ts.examples) {
    const auto& schema = f.schemas.at(ex.service);
    EXPECT_EQ(ex.status.size(), schema.slots.size());
    EXPECT_EQ(ex.requested.size(), schema.slots.size());
    EXPECT_LE(ex.intent, static_cast<int>(schema.intents.size()));
  }
}

TEST(Training, LossDecreases) {
  HashedPairEncoder enc(32);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.seed = 1;
  auto res = train_tracker(enc, sgdt::bundled().schemas, sgdt::generated(60, 6), cfg);
  ASSERT_EQ(res.epoch_loss.size(), 4u);
  EXPECT_LT(res.epoch_loss.back(), res.epoch_loss.front());
  EXPECT_GT(res.num_examples, 0u);
  auto again = train_tracker(enc, sgdt::bundled().schemas, sgdt::generated(60, 6), cfg);
  EXPECT_EQ(again.epoch_loss, res.epoch_loss);
}
