#include <doctest.h>

#include <sstream>

#include "sgr/direct.hpp"
#include "support.hpp"

using namespace sgr;

namespace {

KnowledgeGraph capitals_graph() {
  std::istringstream in(
      "paris\tcapital_of\tfrance\n"
      "lyon\tlocated_in\tfrance\n"
      "berlin\tcapital_of\tgermany\n"
      "france\thas_currency\teuro\n");
  return load_triples(in);
}

QuestionSchema capital_schema() {
  QuestionSchema schema;
  schema.triples.push_back(
      SchemaTriple{{true, "?x"}, "capital_of", {false, "france"}});
  schema.answer_variable = "?x";
  return schema;
}

CandidateAnswer candidate(const std::string& value, double p) {
  return CandidateAnswer{value, p, AnswerSource::direct, std::nullopt};
}

}  // namespace

TEST_CASE("validate: satisfiable substitution scores 1") {
  KnowledgeGraph g = capitals_graph();
  QuestionSchema schema = capital_schema();
  CHECK(direct::validate(candidate("paris", 1.0), schema, g) == 1);
  CHECK(direct::validate(candidate("lyon", 1.0), schema, g) == 0);
  CHECK(direct::validate(candidate("berlin", 1.0), schema, g) == 0);
  CHECK(direct::validate(candidate("atlantis", 1.0), schema, g) == 0);
}

TEST_CASE("validate: equality constraints bind variables") {
  KnowledgeGraph g = capitals_graph();
  QuestionSchema schema;
  schema.triples.push_back(
      SchemaTriple{{true, "?x"}, "capital_of", {true, "?c"}});
  schema.answer_variable = "?x";
  CHECK(direct::validate(candidate("paris", 1.0), schema, g) == 1);

  schema.constraints.push_back(
      Constraint{Constraint::Kind::equality, "?c", "germany"});
  CHECK(direct::validate(candidate("paris", 1.0), schema, g) == 0);
  CHECK(direct::validate(candidate("berlin", 1.0), schema, g) == 1);

  // unresolvable constraint value fails closed
  schema.constraints.back().value = "nonexistent_place";
  CHECK(direct::validate(candidate("paris", 1.0), schema, g) == 0);

  // type hints are ignored
  schema.constraints.back() =
      Constraint{Constraint::Kind::type_hint, "?x", "city"};
  CHECK(direct::validate(candidate("paris", 1.0), schema, g) == 1);
}

TEST_CASE("validate: constraint conflicting with the answer binding") {
  KnowledgeGraph g = capitals_graph();
  QuestionSchema schema = capital_schema();
  schema.constraints.push_back(
      Constraint{Constraint::Kind::equality, "?x", "lyon"});
  // ?x is pinned to the candidate; a different equality on it cannot hold
  CHECK(direct::validate(candidate("paris", 1.0), schema, g) == 0);
  CHECK(direct::validate(candidate("lyon", 1.0), schema, g) == 0);  // no edge
}

TEST_CASE("valid_set preserves candidate order") {
  KnowledgeGraph g = capitals_graph();
  QuestionSchema schema = capital_schema();
  std::vector<CandidateAnswer> in{candidate("lyon", 0.9),
                                  candidate("paris", 0.1),
                                  candidate("berlin", 0.5)};
  auto out = direct::valid_set(in, schema, g);
  REQUIRE(out.size() == 1);
  CHECK(out[0].value == "paris");
}

TEST_CASE("select_validated: argmax with lexicographic ties") {
  std::vector<CandidateAnswer> v{candidate("b", 0.5), candidate("a", 0.5),
                                 candidate("c", 0.4)};
  CHECK(direct::select_validated(v).value == "a");
  v.push_back(candidate("z", 0.9));
  CHECK(direct::select_validated(v).value == "z");
  CHECK_THROWS_AS(direct::select_validated({}), std::invalid_argument);
}

TEST_CASE("direct_answers: executes the compiled query and ranks") {
  KnowledgeGraph g = capitals_graph();
  QuestionSchema schema = capital_schema();
  MockAdapter mock;
  MockAdapter::Rule rule;
  rule.kind = RequestKind::AnswerRank;
  rule.body = {{"scores", {0.8}}};
  mock.add_rule(rule);
  std::string compiled;
  auto candidates = direct::direct_answers("q", schema, g, mock, &compiled);
  REQUIRE(candidates.size() == 1);
  CHECK(candidates[0].value == "paris");
  CHECK(candidates[0].model_prob == 0.8);
  CHECK(compiled.find("capital_of") != std::string::npos);
}

TEST_CASE("direct_answers: object-form scores keyed by value") {
  std::istringstream in("a\tr\thub\nb\tr\thub\n");
  KnowledgeGraph g = load_triples(in);
  QuestionSchema schema;
  schema.triples.push_back(SchemaTriple{{true, "?x"}, "r", {false, "hub"}});
  schema.answer_variable = "?x";
  MockAdapter mock;
  MockAdapter::Rule rule;
  rule.kind = RequestKind::AnswerRank;
  rule.body = {{"scores", {{"a", 0.2}, {"b", 0.9}}}};
  mock.add_rule(rule);
  auto candidates = direct::direct_answers("q", schema, g, mock);
  REQUIRE(candidates.size() == 2);
  for (const CandidateAnswer& c : candidates)
    CHECK(c.model_prob == (c.value == "b" ? 0.9 : 0.2));
}

TEST_CASE("direct_answers: ranking failure falls back to uniform") {
  std::istringstream in("a\tr\thub\nb\tr\thub\n");
  KnowledgeGraph g = load_triples(in);
  QuestionSchema schema;
  schema.triples.push_back(SchemaTriple{{true, "?x"}, "r", {false, "hub"}});
  schema.answer_variable = "?x";

  // strict mock with no AnswerRank rule throws inside ranking
  MockAdapter mock;
  mock.set_strict(true);
  std::vector<std::string> warnings;
  auto candidates =
      direct::direct_answers("q", schema, g, mock, nullptr, &warnings);
  REQUIRE(candidates.size() == 2);
  CHECK(candidates[0].model_prob == 0.5);
  CHECK(candidates[1].model_prob == 0.5);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("uniform fallback") != std::string::npos);
}

TEST_CASE("direct_answers: duplicate answer values collapse") {
  // two bindings of an intermediate variable reach the same answer entity
  std::istringstream in(
      "x\tr1\tm1\nx\tr1\tm2\nm1\tr2\tgoal\nm2\tr2\tgoal\n");
  KnowledgeGraph g = load_triples(in);
  QuestionSchema schema;
  schema.triples.push_back(SchemaTriple{{false, "x"}, "r1", {true, "?m"}});
  schema.triples.push_back(SchemaTriple{{true, "?m"}, "r2", {true, "?a"}});
  schema.answer_variable = "?a";
  MockAdapter mock;
  auto candidates = direct::direct_answers("q", schema, g, mock);
  REQUIRE(candidates.size() == 1);
  CHECK(candidates[0].value == "goal");
}

TEST_CASE("direct_stage: validated answer vs needs_refinement") {
  KnowledgeGraph g = capitals_graph();
  MockAdapter mock;

  QuestionSchema schema = capital_schema();
  direct::DirectOutcome ok = direct::direct_stage("q", schema, g, mock);
  CHECK_FALSE(ok.needs_refinement);
  REQUIRE(ok.answer.has_value());
  CHECK(ok.answer->value == "paris");
  CHECK(ok.valid.size() == 1);

  // a constraint no candidate can satisfy empties the valid set
  schema.constraints.push_back(
      Constraint{Constraint::Kind::equality, "?x", "lyon"});
  direct::DirectOutcome bad = direct::direct_stage("q", schema, g, mock);
  CHECK(bad.needs_refinement);
  CHECK_FALSE(bad.answer.has_value());
  CHECK_FALSE(bad.candidates.empty());  // retrieval worked, validation failed
  CHECK(bad.valid.empty());
}

TEST_CASE("direct_stage: empty retrieval also needs refinement") {
  KnowledgeGraph g = capitals_graph();
  QuestionSchema schema;
  schema.triples.push_back(
      SchemaTriple{{true, "?x"}, "capital_of", {false, "euro"}});
  schema.answer_variable = "?x";
  MockAdapter mock;
  direct::DirectOutcome out = direct::direct_stage("q", schema, g, mock);
  CHECK(out.needs_refinement);
  CHECK(out.candidates.empty());
}

TEST_CASE("coherence: executor rows and validator agree on random schemas") {
  // every answer the compiled query returns must validate to 1, and every
  // graph entity validating to 1 must appear among the query's answers
  // (constraint-free schemas; constraints are validation-only by design)
  sgr_test::Rng rng(73);
  MockAdapter mock;
  for (int trial = 0; trial < 100; ++trial) {
    int nv = sgr_test::rand_int(rng, 3, 8);
    int nr = sgr_test::rand_int(rng, 1, 3);
    KnowledgeGraph g = sgr_test::random_graph(rng, nv, nr, 20);
    int len = sgr_test::rand_int(rng, 1, 3);

    QuestionSchema schema;
    std::string prev = "?v0";
    for (int i = 0; i < len; ++i) {
      std::string next = "?v" + std::to_string(i + 1);
      std::string rel = "r" + std::to_string(sgr_test::rand_int(rng, 0, nr - 1));
      bool fwd = sgr_test::rand_int(rng, 0, 1) == 0;
      if (fwd)
        schema.triples.push_back(SchemaTriple{{true, prev}, rel, {true, next}});
      else
        schema.triples.push_back(SchemaTriple{{true, next}, rel, {true, prev}});
      prev = next;
    }
    // occasionally ground the start
    if (sgr_test::rand_int(rng, 0, 2) == 0) {
      SchemaNode& start = schema.triples[0].head.text == "?v0"
                              ? schema.triples[0].head
                              : schema.triples[0].tail;
      start = SchemaNode{false,
                         "t" + std::to_string(sgr_test::rand_int(rng, 0, nv - 1))};
    }
    schema.answer_variable = prev;

    auto candidates = direct::direct_answers("q", schema, g, mock);
    std::set<std::string> from_query;
    for (const CandidateAnswer& c : candidates) {
      from_query.insert(c.value);
      CHECK(direct::validate(c, schema, g) == 1);
    }
    std::set<std::string> from_validator;
    for (const Entity& e : g.entities())
      if (direct::validate(candidate(e.canonical_name, 1.0), schema, g) == 1)
        from_validator.insert(e.canonical_name);
    CHECK(from_query == from_validator);
  }
}
