#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgr/adapter.hpp"
#include "sgr/gql.hpp"
#include "sgr/kg.hpp"
#include "sgr/reasoner.hpp"
#include "sgr/schema.hpp"

namespace sgr {
namespace direct {

namespace detail {

// Backtracking satisfiability of the schema triples against the graph under
// pre-fixed variable bindings. Independent of the query compiler so the
// executor-validator coherence property checks two routes.
inline bool satisfiable(const QuestionSchema& schema,
                        const KnowledgeGraph& graph,
                        std::map<std::string, EntityId> bound,
                        std::size_t index = 0) {
  if (index == schema.triples.size()) return true;
  const SchemaTriple& st = schema.triples[index];
  auto rel = graph.find_relation(st.relation);
  if (!rel) return false;
  auto endpoint_ok = [&](const SchemaNode& n, EntityId e) {
    if (!n.is_variable) return graph.entity_name(e) == n.text;
    auto it = bound.find(n.text);
    return it == bound.end() || it->second == e;
  };
  for (std::size_t ti : graph.triples_by_relation(*rel)) {
    const Triple& t = graph.triples()[ti];
    if (!endpoint_ok(st.head, t.head) || !endpoint_ok(st.tail, t.tail))
      continue;
    std::map<std::string, EntityId> next = bound;
    if (st.head.is_variable) next[st.head.text] = t.head;
    if (st.tail.is_variable) next[st.tail.text] = t.tail;
    if (satisfiable(schema, graph, std::move(next), index + 1)) return true;
  }
  return false;
}

}  // namespace detail

// V(a, S_q, G): 1 iff substituting the candidate for the answer variable
// leaves the whole schema jointly satisfiable and every equality constraint
// holds. All failures encode as 0.
inline int validate(const CandidateAnswer& candidate,
                    const QuestionSchema& schema,
                    const KnowledgeGraph& graph) {
  if (!schema.usable()) return 0;
  auto answer_id = graph.find_entity(candidate.value);
  if (!answer_id) return 0;
  std::map<std::string, EntityId> bound{{schema.answer_variable, *answer_id}};
  for (const Constraint& c : schema.constraints) {
    if (c.kind != Constraint::Kind::equality) continue;  // hints don't bind
    std::string subject = c.subject;
    if (!subject.empty() && subject.front() != '?') subject = "?" + subject;
    auto value_id = graph.find_entity(c.value);
    if (!value_id) return 0;
    auto [it, inserted] = bound.emplace(subject, *value_id);
    if (!inserted && it->second != *value_id) return 0;
  }
  return detail::satisfiable(schema, graph, std::move(bound)) ? 1 : 0;
}

// Order-preserving filter by validate = 1.
inline std::vector<CandidateAnswer> valid_set(
    const std::vector<CandidateAnswer>& candidates,
    const QuestionSchema& schema, const KnowledgeGraph& graph) {
  std::vector<CandidateAnswer> out;
  for (const CandidateAnswer& c : candidates)
    if (validate(c, schema, graph) == 1) out.push_back(c);
  return out;
}

// argmax by model_prob; ties by lexicographic answer value.
inline CandidateAnswer select_validated(
    const std::vector<CandidateAnswer>& valid) {
  if (valid.empty())
    throw std::invalid_argument("select_validated on empty set");
  const CandidateAnswer* best = &valid.front();
  for (const CandidateAnswer& c : valid) {
    if (c.model_prob > best->model_prob ||
        (c.model_prob == best->model_prob && c.value < best->value))
      best = &c;
  }
  return *best;
}

// Compile, execute, and rank. Candidates survive adapter failure with a
// uniform fallback probability.
inline std::vector<CandidateAnswer> direct_answers(
    const std::string& question, const QuestionSchema& schema,
    const KnowledgeGraph& graph, Adapter& adapter,
    std::string* compiled_query = nullptr,
    std::vector<std::string>* warnings = nullptr) {
  gql::QueryAst ast = gql::compile_schema(schema);
  if (compiled_query) *compiled_query = gql::print_query(ast);
  gql::ExecResult exec = gql::execute(ast, graph);
  if (warnings)
    warnings->insert(warnings->end(), exec.warnings.begin(),
                     exec.warnings.end());

  std::string answer_var = schema.answer_variable;
  if (!answer_var.empty() && answer_var.front() == '?')
    answer_var.erase(answer_var.begin());

  std::vector<CandidateAnswer> candidates;
  for (const gql::BindingRow& row : exec.rows) {
    std::string value = graph.entity_name(row.at(answer_var));
    bool seen = std::any_of(
        candidates.begin(), candidates.end(),
        [&](const CandidateAnswer& c) { return c.value == value; });
    if (seen) continue;
    candidates.push_back(
        CandidateAnswer{value, 0.0, AnswerSource::direct, std::nullopt});
  }
  if (candidates.empty()) return candidates;

  nlohmann::json candidate_names = nlohmann::json::array();
  for (const CandidateAnswer& c : candidates) candidate_names.push_back(c.value);
  nlohmann::json schema_json = nlohmann::json::array();
  for (const SchemaTriple& st : schema.triples)
    schema_json.push_back({st.head.text, st.relation, st.tail.text});
  nlohmann::json payload = {
      {"candidates", candidate_names},
      {"schema", schema_json},
      {"template", std::string(prompt_template(RequestKind::AnswerRank))}};

  double uniform = 1.0 / static_cast<double>(candidates.size());
  try {
    AdapterResponse response = adapter.complete(
        make_request(RequestKind::AnswerRank, question, payload));
    const nlohmann::json& scores = response.body.at("scores");
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (scores.is_array())
        candidates[i].model_prob =
            i < scores.size() ? scores[i].get<double>() : 0.0;
      else
        candidates[i].model_prob = scores.value(candidates[i].value, 0.0);
    }
  } catch (const AdapterError&) {
    if (warnings)
      warnings->push_back("answer ranking failed, uniform fallback");
    for (CandidateAnswer& c : candidates) c.model_prob = uniform;
  }
  return candidates;
}

struct DirectOutcome {
  bool needs_refinement = false;
  std::optional<CandidateAnswer> answer;
  std::vector<CandidateAnswer> candidates;   // A_q
  std::vector<CandidateAnswer> valid;        // A_q+
  std::string compiled_query;
  std::vector<std::string> warnings;
};

// A_q+ non-empty => Answer; otherwise NeedsRefinement.
inline DirectOutcome direct_stage(const std::string& question,
                                  const QuestionSchema& schema,
                                  const KnowledgeGraph& graph,
                                  Adapter& adapter) {
  DirectOutcome outcome;
  outcome.candidates = direct_answers(question, schema, graph, adapter,
                                      &outcome.compiled_query,
                                      &outcome.warnings);
  outcome.valid = valid_set(outcome.candidates, schema, graph);
  if (outcome.valid.empty()) {
    outcome.needs_refinement = true;
  } else {
    outcome.answer = select_validated(outcome.valid);
  }
  return outcome;
}

}  // namespace direct
}  // namespace sgr
