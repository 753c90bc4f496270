#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sgr/adapter.hpp"
#include "sgr/kg.hpp"
#include "sgr/relevance.hpp"
#include "sgr/schema.hpp"
#include "sgr/text.hpp"

namespace sgr {

struct ReasoningState {
  int step_index = 1;  // t >= 1
  std::string text;
  double confidence = 0.0;  // in [0,1]
  Triple triple;
};

enum class AnswerSource { direct, collaborative, stepwise };

inline std::string to_string(AnswerSource s) {
  switch (s) {
    case AnswerSource::direct: return "direct";
    case AnswerSource::collaborative: return "collaborative";
    case AnswerSource::stepwise: return "stepwise";
  }
  return "?";
}

struct CandidateAnswer {
  std::string value;  // normalized, non-empty
  double model_prob = 0.0;
  AnswerSource source = AnswerSource::direct;
  std::optional<int> path_id;
};

struct ReasoningPath {
  std::vector<ReasoningState> steps;
  std::optional<CandidateAnswer> answer;
  double trajectory_prob = 1.0;  // product of step confidences
  double consistency = 0.0;
};

class SchemaExtractionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline SchemaNode ground_node(std::string_view raw,
                              const KnowledgeGraph& graph) {
  std::string text(raw);
  if (!text.empty() && text.front() == '?') {
    std::string name = normalize_text(text.substr(1));
    std::replace(name.begin(), name.end(), ' ', '_');
    return SchemaNode{true, "?" + name};
  }
  std::string name = normalize_text(text);
  if (auto id = graph.find_entity(name))
    return SchemaNode{false, graph.entity_name(*id)};
  // unresolvable grounded names are kept as variables
  std::replace(name.begin(), name.end(), ' ', '_');
  return SchemaNode{true, "?" + name};
}

// Best-effort recovery of `node|relation|node` lines plus an `ANSWER: ?v`
// line from free text.
inline void parse_schema_text(std::string_view text, nlohmann::json& triples,
                              std::string& answer_variable) {
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    std::string trimmed = normalize_text(line);
    if (trimmed.rfind("answer", 0) == 0) {
      auto q = line.find('?');
      if (q != std::string::npos)
        answer_variable = normalize_text(line.substr(q + 1)).empty()
                              ? answer_variable
                              : "?" + normalize_text(line.substr(q + 1));
      continue;
    }
    auto bar1 = line.find('|');
    auto bar2 = bar1 == std::string::npos ? std::string::npos
                                          : line.find('|', bar1 + 1);
    if (bar1 == std::string::npos || bar2 == std::string::npos) continue;
    triples.push_back({line.substr(0, bar1),
                       line.substr(bar1 + 1, bar2 - bar1 - 1),
                       line.substr(bar2 + 1)});
  }
}

}  // namespace detail

// One SchemaExtraction request; the structured reply is parsed into a
// QuestionSchema with grounded names validated against the alias table.
inline QuestionSchema extract_schema(const std::string& question,
                                     Adapter& adapter,
                                     const KnowledgeGraph& graph,
                                     std::size_t exemplar_count = 8) {
  nlohmann::json exemplars = nlohmann::json::array();
  for (std::size_t i = 0; i < graph.triples().size() && i < exemplar_count; ++i)
    exemplars.push_back(graph.verbalize(graph.triples()[i]));
  nlohmann::json payload = {
      {"exemplar_triples", exemplars},
      {"template", std::string(prompt_template(RequestKind::SchemaExtraction))}};
  AdapterResponse response = adapter.complete(
      make_request(RequestKind::SchemaExtraction, question, payload));

  nlohmann::json triples = nlohmann::json::array();
  std::string answer_variable;
  const nlohmann::json& body = response.body;
  if (body.is_object() && body.contains("triples") &&
      !body["triples"].empty()) {
    triples = body["triples"];
    answer_variable = body.value("answer_variable", "");
  } else if (body.is_object() && body.contains("text")) {
    detail::parse_schema_text(body["text"].get<std::string>(), triples,
                              answer_variable);
  }
  if (triples.empty())
    throw SchemaExtractionError("adapter reply parses to zero schema triples");

  QuestionSchema schema;
  for (const auto& t : triples) {
    if (!t.is_array() || t.size() != 3)
      throw SchemaExtractionError("malformed schema triple in reply");
    SchemaTriple st{detail::ground_node(t[0].get<std::string>(), graph),
                    normalize_text(t[1].get<std::string>()),
                    detail::ground_node(t[2].get<std::string>(), graph)};
    if (!st.head.is_variable) schema.entities.insert(st.head.text);
    if (!st.tail.is_variable) schema.entities.insert(st.tail.text);
    schema.relations.insert(st.relation);
    schema.triples.push_back(std::move(st));
  }
  if (body.is_object() && body.contains("constraints")) {
    for (const auto& c : body["constraints"]) {
      Constraint constraint;
      constraint.kind = c.value("kind", "equality") == "type-hint"
                            ? Constraint::Kind::type_hint
                            : Constraint::Kind::equality;
      constraint.subject = c.value("subject", "");
      constraint.value = c.value("value", "");
      schema.constraints.push_back(std::move(constraint));
    }
  }

  if (!answer_variable.empty() && answer_variable.front() != '?')
    answer_variable = "?" + answer_variable;
  schema.answer_variable = answer_variable;
  bool answer_in_triples = false;
  for (const SchemaTriple& st : schema.triples)
    for (const SchemaNode* n : {&st.head, &st.tail})
      if (n->is_variable && n->text == schema.answer_variable)
        answer_in_triples = true;
  if (schema.answer_variable.empty() || !answer_in_triples)
    throw SchemaExtractionError("reply names no usable answer variable");
  return schema;
}

// One Step request; z_t from the question, prior states, and the triple
// consumed at this step.
inline ReasoningState step(Adapter& adapter, const std::string& question,
                           const std::vector<ReasoningState>& prior,
                           const Triple& triple, const KnowledgeGraph& graph) {
  nlohmann::json prior_json = nlohmann::json::array();
  for (const ReasoningState& s : prior)
    prior_json.push_back({{"step_index", s.step_index},
                          {"text", s.text},
                          {"confidence", s.confidence},
                          {"triple", graph.verbalize(s.triple)}});
  nlohmann::json payload = {
      {"prior_states", prior_json},
      {"triple", graph.verbalize(triple)},
      {"template", std::string(prompt_template(RequestKind::Step))}};
  AdapterResponse response =
      adapter.complete(make_request(RequestKind::Step, question, payload));

  ReasoningState state;
  state.step_index = static_cast<int>(prior.size()) + 1;
  state.text = response.body.value("text", "");
  state.confidence = response.body.value("confidence", 0.0);
  state.triple = triple;
  return state;
}

// Fraction of path steps whose triple belongs to the subgraph.
inline double path_consistency(const ReasoningPath& path,
                               const Subgraph& subgraph) {
  if (path.steps.empty())
    throw std::invalid_argument("path_consistency of empty path");
  std::size_t hits = 0;
  for (const ReasoningState& s : path.steps)
    if (subgraph.contains(s.triple)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(path.steps.size());
}

// argmax over model_prob * path_consistency; ties by smallest answer value,
// then lowest path_id.
inline CandidateAnswer select_answer_joint(
    const std::vector<std::pair<CandidateAnswer, ReasoningPath>>& candidates,
    const Subgraph& subgraph) {
  if (candidates.empty())
    throw std::invalid_argument("select_answer_joint on empty candidate list");
  const CandidateAnswer* best = nullptr;
  double best_score = -1.0;
  for (const auto& [answer, path] : candidates) {
    double joint = answer.model_prob * path_consistency(path, subgraph);
    bool better = joint > best_score;
    if (!better && joint == best_score && best) {
      if (answer.value != best->value)
        better = answer.value < best->value;
      else
        better = answer.path_id.value_or(0) < best->path_id.value_or(0);
    }
    if (better) {
      best = &answer;
      best_score = joint;
    }
  }
  return *best;
}

// Walks the schema chain over subgraph triples, branching on every
// compatible triple, capped at `max_branches` per step and `max_depth`
// steps. Each complete walk issues Step requests in order and yields the
// entity bound to the answer variable.
inline std::vector<std::pair<CandidateAnswer, ReasoningPath>>
enumerate_stepwise_paths(const std::string& question,
                         const QuestionSchema& schema,
                         const Subgraph& subgraph,
                         const KnowledgeGraph& graph, Adapter& adapter,
                         std::size_t max_branches = 8,
                         std::size_t max_depth = 6) {
  std::vector<std::pair<CandidateAnswer, ReasoningPath>> out;
  if (!schema.usable() || schema.triples.size() > max_depth) return out;

  struct Frame {
    std::map<std::string, EntityId> bound;  // variable -> entity
    std::vector<Triple> consumed;
  };
  std::vector<Frame> frontier{Frame{}};
  for (const SchemaTriple& st : schema.triples) {
    auto rel = graph.find_relation(st.relation);
    std::vector<Frame> next;
    if (rel) {
      for (const Frame& frame : frontier) {
        std::size_t branches = 0;
        for (const Triple& t : subgraph.triples) {  // (h,r,t)-sorted
          if (t.relation != *rel) continue;
          auto endpoint_ok = [&](const SchemaNode& n, EntityId e) {
            if (!n.is_variable) return graph.entity_name(e) == n.text;
            auto it = frame.bound.find(n.text);
            return it == frame.bound.end() || it->second == e;
          };
          if (!endpoint_ok(st.head, t.head) || !endpoint_ok(st.tail, t.tail))
            continue;
          if (branches >= max_branches) break;
          ++branches;
          Frame child = frame;
          if (st.head.is_variable) child.bound[st.head.text] = t.head;
          if (st.tail.is_variable) child.bound[st.tail.text] = t.tail;
          child.consumed.push_back(t);
          next.push_back(std::move(child));
        }
      }
    }
    frontier = std::move(next);
    if (frontier.empty()) return out;
  }

  int path_id = 0;
  for (const Frame& frame : frontier) {
    auto it = frame.bound.find(schema.answer_variable);
    if (it == frame.bound.end()) continue;
    ReasoningPath path;
    for (const Triple& t : frame.consumed) {
      path.steps.push_back(step(adapter, question, path.steps, t, graph));
    }
    path.trajectory_prob = 1.0;
    for (const ReasoningState& s : path.steps)
      path.trajectory_prob *= s.confidence;
    path.consistency = path_consistency(path, subgraph);
    CandidateAnswer answer;
    answer.value = graph.entity_name(it->second);
    answer.model_prob =
        path.steps.empty() ? 0.0 : path.steps.back().confidence;
    answer.source = AnswerSource::stepwise;
    answer.path_id = path_id++;
    path.answer = answer;
    out.emplace_back(std::move(answer), std::move(path));
  }
  return out;
}

}  // namespace sgr
