#include <gtest/gtest.h>

#include "oracles.hpp"
#include "support.hpp"

using namespace sgd;
namespace fs = std::filesystem;

namespace {

const Fixtures& fx() { return sgdt::bundled(); }

Outline raw_outline(std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed, index));
  Scenario sc = sample_scenario(fx().catalog, rng);
  return generate_outline(sc, fx().backends, fx().catalog, fx().automaton, rng, dialogue_id(index));
}

TemplateSet paper_templates() {
  TemplateSet t;
  t.entries["REQUEST(location)"] = {"Which city are you in?"};
  t.entries["INFORM(location)"] = {"I want to eat in $value."};
  t.entries["INFORM(cuisine)"] = {"I like $value food."};
  return t;
}

SchemaRegistry eat_schema() {
  ServiceSchema s;
  s.service_name = "Eat_1";
  s.description = "find places to eat";
  s.slots = {{"location", "city of the restaurant", false, {}}, {"cuisine", "type of food", false, {}}};
  s.intents = {{"Find", "find a restaurant", false, {"location"}, {}, {"location"}}};
  return {{s.service_name, s}};
}

Turn templated_user_turn(const std::vector<ServiceAction>& acts) {
  OutlineTurn ot;
  ot.speaker = Speaker::user;
  ot.actions = acts;
  ot.states["Eat_1"] = apply_user_actions(FrameState{}, acts, "Eat_1");
  return render_turn(ot, 0, paper_templates(), eat_schema(), {"Eat_1"});
}

Dialogue small_dialogue(const std::string& id, std::size_t turns) {
  Dialogue d;
  d.dialogue_id = id;
  d.services = {"Restaurants_1"};
  for (std::size_t i = 0; i < turns; ++i) {
    Turn t;
    t.speaker = i % 2 ? Speaker::system : Speaker::user;
    t.utterance = "turn " + std::to_string(i);
    d.turns.push_back(t);
  }
  return d;
}

} // namespace

// ---------------------------------------------------------------------------
// value variation

TEST(VaryValues, EmptyTableIsIdentity) {
  Outline o = raw_outline(1, 0);
  Rng rng(1);
  EXPECT_EQ(vary_values(o, VariationTable{}, rng), o);
}

TEST(VaryValues, OneSurfacePerCanonicalValueAcrossUserTurns) {
  std::size_t checked = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    Outline o = raw_outline(2, i);
    Rng rng(derive_seed(3, i));
    Outline v = vary_values(o, fx().variations, rng);
    ASSERT_EQ(v.turns.size(), o.turns.size());
    std::map<std::string, std::set<std::string>> surfaces;
    for (std::size_t t = 0; t < v.turns.size(); ++t) {
      ASSERT_EQ(v.turns[t].actions.size(), o.turns[t].actions.size());
      for (std::size_t k = 0; k < v.turns[t].actions.size(); ++k) {
        const Action& a = v.turns[t].actions[k].action;
        const Action& b = o.turns[t].actions[k].action;
        EXPECT_EQ(a.act, b.act);
        EXPECT_EQ(a.slot, b.slot);
        EXPECT_EQ(a.value, b.value);
        if (v.turns[t].speaker == Speaker::system) EXPECT_FALSE(a.surface);
        else if (a.has_slot_value()) surfaces[*a.value].insert(a.surface_value());
      }
    }
    for (const auto& [canonical, used] : surfaces) {
      EXPECT_EQ(used.size(), 1u) << canonical;
      auto choices = surface_choices(fx().variations, canonical);
      EXPECT_NE(std::find(choices.begin(), choices.end(), *used.begin()), choices.end());
      if (choices.size() > 1) ++checked;
    }
  }
  EXPECT_GT(checked, 50u);
}

TEST(VaryValues, SanFranciscoBecomesOneOfItsVariantsEverywhere) {
  for (std::size_t i = 0; i < 500; ++i) {
    Outline o = raw_outline(4, i);
    Rng rng(derive_seed(5, i));
    Outline v = vary_values(o, fx().variations, rng);
    std::set<std::string> seen;
    for (const auto& t : v.turns)
      if (t.speaker == Speaker::user)
        for (const auto& sa : t.actions)
          if (sa.action.value == std::optional<std::string>("San Francisco")) seen.insert(sa.action.surface_value());
    if (seen.empty()) continue;
    EXPECT_EQ(seen.size(), 1u);
    std::set<std::string> allowed{"San Francisco", "SF", "San Fran", "Frisco"};
    EXPECT_TRUE(allowed.count(*seen.begin()));
    return;
  }
  FAIL() << "no dialogue mentions San Francisco";
}

TEST(VaryValues, StatesListSurfaceThenCanonical) {
  for (std::size_t i = 0; i < 100; ++i) {
    Outline o = raw_outline(6, i);
    Rng rng(derive_seed(7, i));
    Outline v = vary_values(o, fx().variations, rng);
    for (std::size_t t = 0; t < v.turns.size(); ++t)
      for (const auto& [svc, st] : v.turns[t].states)
        for (const auto& [slot, values] : st.slot_values) {
          const auto& before = o.turns[t].states.at(svc).slot_values.at(slot);
          EXPECT_EQ(values.back(), before.back());
          EXPECT_LE(values.size(), 2u);
        }
  }
}

TEST(Variation, DateVariantsAreRelativeToCorpusDate) {
  auto v = date_variants("2019-03-02");
  EXPECT_NE(std::find(v.begin(), v.end(), "tomorrow"), v.end());
  EXPECT_NE(std::find(v.begin(), v.end(), "March 2nd"), v.end());
  EXPECT_TRUE(date_variants("not a date").empty());
}

TEST(Variation, CanonicalIsAlwaysAChoiceAndChoicesAreDistinct) {
  for (const auto& [canonical, _] : fx().variations.values) {
    auto c = surface_choices(fx().variations, canonical);
    EXPECT_EQ(c.front(), canonical);
    EXPECT_EQ(std::set<std::string>(c.begin(), c.end()).size(), c.size());
  }
}

TEST(Variation, DuplicateVariantsAreRejected) {
  EXPECT_THROW(variations_from_json(json::parse(R"({"values": {"Los Angeles": ["LA", "LA"]}})")), ParseError);
}

// ---------------------------------------------------------------------------
// templates

TEST(Templates, RequestLocation) {
  Turn t = templated_user_turn({{"Eat_1", Action::make(Act::request, "location")}});
  EXPECT_EQ(t.utterance, "Which city are you in?");
  EXPECT_TRUE(t.frames.at(0).slots.empty());
}

TEST(Templates, InformLocationCarriesSpan) {
  Turn t = templated_user_turn({{"Eat_1", Action::make(Act::inform, "location", "Oakland")}});
  EXPECT_EQ(t.utterance, "I want to eat in Oakland.");
  ASSERT_EQ(t.frames.at(0).slots.size(), 1u);
  const SlotSpan& s = t.frames[0].slots[0];
  EXPECT_EQ(s.slot, "location");
  EXPECT_EQ(t.utterance.substr(s.start, s.end - s.start), "Oakland");
}

TEST(Templates, ActionsAreJoinedWithSingleSpaces) {
  Turn t = templated_user_turn({{"Eat_1", Action::make(Act::inform, "location", "Oakland")},
                                {"Eat_1", Action::make(Act::inform, "cuisine", "Thai")}});
  EXPECT_EQ(t.utterance, "I want to eat in Oakland. I like Thai food.");
  ASSERT_EQ(t.frames.at(0).slots.size(), 2u);
  auto a = t.frames[0].slots[0], b = t.frames[0].slots[1];
  EXPECT_EQ(a.start, 17u);
  EXPECT_EQ(a.end, 24u);
  EXPECT_EQ(b.start, 33u);
  EXPECT_EQ(b.end, 37u);
  EXPECT_TRUE(a.end <= b.start);
}

TEST(Templates, MissingTemplateNamesTheAct) {
  try {
    templated_user_turn({{"Eat_1", Action::make(Act::thank_you)}});
    FAIL();
  } catch (const MissingTemplate& e) {
    EXPECT_NE(std::string(e.what()).find("THANK_YOU"), std::string::npos);
  }
}

TEST(Templates, MostSpecificKeyWins) {
  TemplateSet t;
  t.entries["INFORM"] = {"generic"};
  t.entries["INFORM(city)"] = {"slot"};
  t.entries["INFORM(city=SF)"] = {"value"};
  t.entries["Svc_1:INFORM(city=SF)"] = {"service"};
  EXPECT_EQ(t.lookup("Svc_1", Action::make(Act::inform, "city", "SF"))->front(), "service");
  EXPECT_EQ(t.lookup("Svc_2", Action::make(Act::inform, "city", "SF"))->front(), "value");
  EXPECT_EQ(t.lookup("Svc_2", Action::make(Act::inform, "city", "LA"))->front(), "slot");
  EXPECT_EQ(t.lookup("Svc_2", Action::make(Act::inform, "area", "LA"))->front(), "generic");
}

TEST(Templates, BundledSetCoversEveryAct) {
  EXPECT_TRUE(validate_templates(fx().templates).ok()) << validate_templates(fx().templates).to_string();
  TemplateSet partial = fx().templates;
  for (auto it = partial.entries.begin(); it != partial.entries.end();)
    it = template_act(it->first) == "GOODBYE" ? partial.entries.erase(it) : std::next(it);
  EXPECT_FALSE(validate_templates(partial).ok());
}

TEST(TemplatesProperty, RenderingPreservesAnnotationsAndSpansAreSound) {
  for (std::size_t i = 0; i < 200; ++i) {
    Outline o = raw_outline(8, i);
    Rng rng(derive_seed(9, i));
    Outline v = vary_values(o, fx().variations, rng);
    Dialogue d = render_templates(v, fx().templates, fx().schemas);
    ASSERT_EQ(d.turns.size(), v.turns.size());
    EXPECT_TRUE(validate_dialogue(d, fx().schemas).ok()) << validate_dialogue(d, fx().schemas).to_string();
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      std::vector<Action> flat;
      for (const auto& f : d.turns[t].frames) flat.insert(flat.end(), f.actions.begin(), f.actions.end());
      EXPECT_EQ(flat.size(), v.turns[t].actions.size());
      for (const auto& f : d.turns[t].frames) {
        if (d.turns[t].speaker == Speaker::user) EXPECT_EQ(*f.state, v.turns[t].states.at(f.service));
        for (const auto& s : f.slots) EXPECT_EQ(d.turns[t].utterance.substr(s.start, s.end - s.start), s.value);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// span search

TEST(SpanSearch, CountsCharactersOfTheExample) {
  auto r = find_slot_spans("I want to eat in Oakland.", {{"location", "Oakland"}});
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(r.spans[0].start, 17u);
  EXPECT_EQ(r.spans[0].end, 24u);
  EXPECT_TRUE(r.missing.empty());
}

TEST(SpanSearch, AbsentValueIsMissing) {
  auto r = find_slot_spans("I want to eat.", {{"location", "Oakland"}});
  EXPECT_TRUE(r.spans.empty());
  ASSERT_EQ(r.missing.size(), 1u);
  EXPECT_EQ(r.missing[0].value, "Oakland");
}

TEST(SpanSearch, RepeatedValueTakesLeftmost) {
  auto r = find_slot_spans("From LA to LA please", {{"city", "LA"}});
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(r.spans[0].start, 5u);
}

TEST(SpanSearch, CaseInsensitiveWithOriginalOffsetsAndText) {
  auto r = find_slot_spans("going to oakland now", {{"city", "Oakland"}});
  ASSERT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(r.spans[0].start, 9u);
  EXPECT_EQ(r.spans[0].value, "oakland");
}

TEST(SpanSearch, LaterValuesSkipClaimedText) {
  auto r = find_slot_spans("SF to SF", {{"origin", "SF"}, {"destination", "SF"}});
  ASSERT_EQ(r.spans.size(), 2u);
  EXPECT_EQ(r.spans[0].start, 0u);
  EXPECT_EQ(r.spans[1].start, 6u);
}

TEST(SpanSearchProperty, AgreesWithBruteForce) {
  Rng rng(99);
  const std::vector<std::string> words{"la", "LA", "sf", "Oak", "oakland", "at", "a", "6 pm", "pm", " "};
  for (int trial = 0; trial < 2000; ++trial) {
    std::string text;
    std::size_t n = 1 + rng.uniform_index(8);
    for (std::size_t k = 0; k < n; ++k) text += words[rng.uniform_index(words.size())] + (rng.bernoulli(0.5) ? " " : "");
    std::vector<SlotValue> expected;
    std::vector<std::string> values;
    std::size_t m = 1 + rng.uniform_index(3);
    for (std::size_t k = 0; k < m; ++k) {
      std::string v = words[rng.uniform_index(words.size() - 1)];
      expected.push_back({"s" + std::to_string(k), v});
      values.push_back(v);
    }
    auto got = find_slot_spans(text, expected);
    auto want = oracle::brute_spans(text, values);
    std::size_t found = 0;
    for (std::size_t k = 0; k < m; ++k) {
      if (!want[k]) continue;
      ASSERT_LT(found, got.spans.size()) << text;
      EXPECT_EQ(got.matched[found], k);
      EXPECT_EQ(got.spans[found].start, want[k]->start) << text << " / " << values[k];
      EXPECT_EQ(got.spans[found].end, want[k]->end);
      ++found;
    }
    EXPECT_EQ(found, got.spans.size());
    EXPECT_EQ(got.missing.size(), m - found);
  }
}

// ---------------------------------------------------------------------------
// paraphrase validation

TEST(ParaphraseValidation, AllValuesRepeatedIsAccepted) {
  Turn t = templated_user_turn({{"Eat_1", Action::make(Act::inform, "location", "Oakland")},
                                {"Eat_1", Action::make(Act::inform, "cuisine", "Thai")}});
  auto r = validate_paraphrase(t, "Any Thai spots in Oakland?");
  EXPECT_TRUE(r.accepted);
  EXPECT_EQ(r.spans.size(), 2u);
}

TEST(ParaphraseValidation, SemanticEquivalentIsNotEnough) {
  Turn t = templated_user_turn({{"Eat_1", Action::make(Act::inform, "location", "LA")}});
  auto r = validate_paraphrase(t, "I want to eat in Los Angeles.");
  EXPECT_FALSE(r.accepted);
  ASSERT_EQ(r.missing.size(), 1u);
  EXPECT_EQ(r.missing[0].value, "LA");
}

TEST(ParaphraseValidation, EmptyTextIsRejected) {
  Turn t = templated_user_turn({{"Eat_1", Action::make(Act::inform, "location", "Oakland")}});
  EXPECT_FALSE(validate_paraphrase(t, "").accepted);
  Turn bare = templated_user_turn({{"Eat_1", Action::make(Act::request, "location")}});
  EXPECT_FALSE(validate_paraphrase(bare, "   ").accepted);
  EXPECT_TRUE(validate_paraphrase(bare, "Where are you?").accepted);
}

TEST(ParaphraseValidation, AcceptedTextYieldsSpansForEveryValue) {
  for (std::size_t i = 0; i < 50; ++i) {
    Dialogue d = generate_dialogue(fx(), 10, i);
    for (const auto& t : d.turns) {
      auto r = validate_paraphrase(t, "Well, " + t.utterance);
      ASSERT_TRUE(r.accepted) << t.utterance;
      EXPECT_EQ(r.spans.size(), expected_values(t).size());
    }
  }
}

TEST(ApplyParaphrase, ReplacesTextAndRecomputesSpans) {
  Dialogue d = generate_dialogue(fx(), 11, 0);
  std::vector<std::string> texts;
  for (const auto& t : d.turns) texts.push_back("Okay. " + t.utterance);
  Dialogue p = apply_paraphrase(d, texts);
  ASSERT_EQ(p.turns.size(), d.turns.size());
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    EXPECT_EQ(p.turns[i].utterance, texts[i]);
    for (std::size_t f = 0; f < d.turns[i].frames.size(); ++f) {
      EXPECT_EQ(p.turns[i].frames[f].actions, d.turns[i].frames[f].actions);
      EXPECT_EQ(p.turns[i].frames[f].state, d.turns[i].frames[f].state);
      for (const auto& s : p.turns[i].frames[f].slots)
        EXPECT_EQ(p.turns[i].utterance.substr(s.start, s.end - s.start), s.value);
    }
  }
  EXPECT_TRUE(validate_dialogue(p, fx().schemas).ok());
}

TEST(ApplyParaphrase, RejectsDroppedValueAndWrongTurnCount) {
  Dialogue d = generate_dialogue(fx(), 12, 0);
  std::vector<std::string> texts;
  for (const auto& t : d.turns) texts.push_back(t.utterance);
  EXPECT_THROW(apply_paraphrase(d, std::vector<std::string>(texts.begin(), texts.end() - 1)), Error);
  for (std::size_t i = 0; i < d.turns.size(); ++i)
    if (!expected_values(d.turns[i]).empty()) {
      texts[i] = "something else entirely";
      try {
        apply_paraphrase(d, texts);
        FAIL();
      } catch (const ParaphraseRejected& e) {
        EXPECT_EQ(e.turn(), i);
        EXPECT_FALSE(e.missing().empty());
      }
      return;
    }
  FAIL() << "no turn with values";
}

// ---------------------------------------------------------------------------
// corpus files

TEST(CorpusIO, RoundTripWithUserActions) {
  auto ds = sgdt::generated(300, 13);
  sgdt::TempDir tmp;
  WriteOptions opt;
  opt.include_user_actions = true;
  write_corpus(ds, tmp / "c", fx().schema_list, opt);
  auto back = read_corpus(tmp / "c");
  ASSERT_EQ(back.size(), ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(back[i], ds[i]) << ds[i].dialogue_id;
  EXPECT_GE(corpus_shards(tmp / "c").size(), 3u);
  EXPECT_EQ(read_corpus_schemas(tmp / "c").size(), fx().schema_list.size());
}

TEST(CorpusIO, PublicFormatWithholdsUserActions) {
  auto ds = sgdt::generated(5, 14);
  sgdt::TempDir tmp;
  write_corpus(ds, tmp / "c");
  auto back = read_corpus(tmp / "c");
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t t = 0; t < ds[i].turns.size(); ++t)
      for (std::size_t f = 0; f < ds[i].turns[t].frames.size(); ++f) {
        const Frame& a = back[i].turns[t].frames[f];
        const Frame& b = ds[i].turns[t].frames[f];
        if (ds[i].turns[t].speaker == Speaker::user) EXPECT_TRUE(a.actions.empty());
        else EXPECT_EQ(a.actions, b.actions);
        EXPECT_EQ(a.slots, b.slots);
        EXPECT_EQ(a.state, b.state);
      }
}

TEST(CorpusIO, OutputIsOrderedById) {
  auto ds = sgdt::generated(20, 15);
  std::reverse(ds.begin(), ds.end());
  sgdt::TempDir tmp;
  write_corpus(ds, tmp / "c");
  auto back = read_corpus(tmp / "c");
  EXPECT_TRUE(std::is_sorted(back.begin(), back.end(),
                             [](const Dialogue& a, const Dialogue& b) { return a.dialogue_id < b.dialogue_id; }));
}

TEST(CorpusIO, DuplicateIdsAreRefused) {
  auto ds = sgdt::generated(2, 16);
  ds[1].dialogue_id = ds[0].dialogue_id;
  sgdt::TempDir tmp;
  EXPECT_THROW(write_corpus(ds, tmp / "c"), Error);
  EXPECT_FALSE(fs::exists(tmp / "c"));
}

TEST(CorpusIO, TruncatedShardNamesTheFile) {
  auto ds = sgdt::generated(3, 17);
  sgdt::TempDir tmp;
  write_corpus(ds, tmp / "c");
  auto shard = corpus_shards(tmp / "c").front();
  std::string text = read_text_file(shard);
  std::ofstream(shard, std::ios::trunc) << text.substr(0, text.size() / 2);
  try {
    read_corpus(tmp / "c");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(shard.filename().string()), std::string::npos) << e.what();
  }
}

TEST(CorpusIO, MissingDirectoryIsAnError) {
  EXPECT_THROW(read_corpus("/nonexistent/corpus/dir"), Error);
}

TEST(CorpusIO, UnicodeSpansRoundTripAsCodePointOffsets) {
  Dialogue d = small_dialogue("u1", 2);
  d.turns[0].utterance = "Café in Zürich please";
  Frame f;
  f.service = "Restaurants_1";
  f.state = FrameState{};
  std::size_t start = d.turns[0].utterance.find("Zürich");
  f.slots.push_back({"city", start, start + std::string("Zürich").size(), "Zürich"});
  d.turns[0].frames.push_back(f);
  json j = to_json(d);
  EXPECT_EQ(j["turns"][0]["frames"][0]["slots"][0]["start"], 8);
  EXPECT_EQ(j["turns"][0]["frames"][0]["slots"][0]["exclusive_end"], 14);
  EXPECT_EQ(dialogue_from_json(j), d);
}

// ---------------------------------------------------------------------------
// statistics

TEST(CorpusStats, FourAndSixTurnsAverageFive) {
  auto s = compute_stats({small_dialogue("a", 4), small_dialogue("b", 6)});
  EXPECT_EQ(s.num_dialogues, 2u);
  EXPECT_EQ(s.total_turns, 10u);
  EXPECT_DOUBLE_EQ(s.avg_turns_per_dialogue, 5.0);
  EXPECT_EQ(s.total_tokens, 20u);
  EXPECT_DOUBLE_EQ(s.avg_tokens_per_turn, 2.0);
  EXPECT_EQ(s.unique_tokens, 7u);  // "turn" and 0..5
  EXPECT_EQ(s.dialogue_lengths.at(4), 1u);
  EXPECT_EQ(s.dialogue_lengths.at(6), 1u);
  EXPECT_EQ(s.domain_dialogues.at("Restaurants"), 2u);
}

TEST(CorpusStats, EmptyCorpusIsAllZero) {
  auto s = compute_stats({});
  EXPECT_EQ(s.num_dialogues, 0u);
  EXPECT_EQ(s.total_turns, 0u);
  EXPECT_EQ(s.avg_turns_per_dialogue, 0.0);
  EXPECT_EQ(s.avg_tokens_per_turn, 0.0);
  EXPECT_TRUE(s.dialogue_lengths.empty());
  EXPECT_TRUE(s.act_counts.empty());
}

TEST(CorpusStats, TokensAreLowercasedWhitespaceUnits) {
  Dialogue d = small_dialogue("t", 2);
  d.turns[0].utterance = "Hello  hello\tHELLO";
  d.turns[1].utterance = "bye.";
  auto s = compute_stats({d});
  EXPECT_EQ(s.total_tokens, 4u);
  EXPECT_EQ(s.unique_tokens, 2u);
}

TEST(CorpusStatsProperty, HistogramsSumToTotals) {
  auto ds = sgdt::generated(200, 18);
  auto s = compute_stats(ds);
  std::size_t dialogues = 0, turns = 0, acts = 0, expected_acts = 0;
  for (const auto& [len, n] : s.dialogue_lengths) dialogues += n, turns += len * n;
  for (const auto& [_, n] : s.act_counts) acts += n;
  for (const auto& d : ds)
    for (const auto& t : d.turns)
      for (const auto& f : t.frames) expected_acts += f.actions.size();
  EXPECT_EQ(dialogues, s.num_dialogues);
  EXPECT_EQ(turns, s.total_turns);
  EXPECT_EQ(acts, expected_acts);
}

TEST(CorpusStatsProperty, DisjointUnionAddsUp) {
  auto ds = sgdt::generated(120, 19);
  std::vector<Dialogue> a(ds.begin(), ds.begin() + 50), b(ds.begin() + 50, ds.end());
  auto sa = compute_stats(a), sb = compute_stats(b), su = compute_stats(ds);
  EXPECT_EQ(su.num_dialogues, sa.num_dialogues + sb.num_dialogues);
  EXPECT_EQ(su.total_turns, sa.total_turns + sb.total_turns);
  EXPECT_EQ(su.total_tokens, sa.total_tokens + sb.total_tokens);
  EXPECT_DOUBLE_EQ(su.avg_turns_per_dialogue, static_cast<double>(su.total_turns) / su.num_dialogues);
  for (const auto& [k, n] : su.act_counts)
    EXPECT_EQ(n, (sa.act_counts.count(k) ? sa.act_counts.at(k) : 0) + (sb.act_counts.count(k) ? sb.act_counts.at(k) : 0));

  StatsAccumulator x, y;
  for (const auto& d : a) x.add(d);
  for (const auto& d : b) y.add(d);
  x.merge(y);
  EXPECT_EQ(to_json(x.finish()), to_json(su));
}

// ---------------------------------------------------------------------------
// splits

TEST(Split, HoldingOutPaymentKeepsItOutOfTrain) {
  auto ds = sgdt::generated(300, 20);
  SplitPolicy p;
  p.holdout_services = {"Payment_1"};
  p.seed = 3;
  auto s = split_corpus(ds, fx().schemas, p);
  EXPECT_EQ(s.train.size() + s.dev.size() + s.test.size(), ds.size());
  std::size_t touching = 0;
  for (const auto& d : ds) touching += std::count(d.services.begin(), d.services.end(), "Payment_1");
  ASSERT_GT(touching, 0u);
  for (const auto& d : s.train) EXPECT_EQ(std::count(d.services.begin(), d.services.end(), "Payment_1"), 0);
  EXPECT_LE(s.train.size(), ds.size() - touching);
}

TEST(Split, DomainHoldoutCoversEveryServiceOfTheDomain) {
  auto ds = sgdt::generated(300, 21);
  SplitPolicy p;
  p.holdout_domains = {"Restaurants"};
  auto s = split_corpus(ds, fx().schemas, p);
  for (const auto& d : s.train)
    for (const auto& svc : d.services) EXPECT_NE(service_domain(svc), "Restaurants");
}

TEST(Split, EmptyHoldoutIsAPlainRatioSplit) {
  auto ds = sgdt::generated(400, 22);
  SplitPolicy p;
  p.dev_ratio = 0.2;
  p.test_ratio = 0.3;
  auto s = split_corpus(ds, fx().schemas, p);
  EXPECT_NEAR(s.dev.size() / 400.0, 0.2, 0.07);
  EXPECT_NEAR(s.test.size() / 400.0, 0.3, 0.07);
  EXPECT_EQ(s.train.size() + s.dev.size() + s.test.size(), 400u);
}

TEST(Split, AssignmentIgnoresInputOrder) {
  auto ds = sgdt::generated(100, 23);
  SplitPolicy p;
  p.seed = 5;
  auto a = split_corpus(ds, fx().schemas, p);
  std::reverse(ds.begin(), ds.end());
  auto b = split_corpus(ds, fx().schemas, p);
  auto ids = [](const std::vector<Dialogue>& v) {
    std::set<std::string> s;
    for (const auto& d : v) s.insert(d.dialogue_id);
    return s;
  };
  EXPECT_EQ(ids(a.train), ids(b.train));
  EXPECT_EQ(ids(a.test), ids(b.test));
}

TEST(Split, UnknownServiceOrBadRatiosAreErrors) {
  SplitPolicy p;
  p.holdout_services = {"Nope_9"};
  EXPECT_THROW(split_corpus({}, fx().schemas, p), Error);
  SplitPolicy q;
  q.holdout_domains = {"Nope"};
  EXPECT_THROW(split_corpus({}, fx().schemas, q), Error);
  SplitPolicy r;
  r.dev_ratio = 0.8;
  r.test_ratio = 0.5;
  EXPECT_THROW(split_corpus({}, fx().schemas, r), Error);
}
