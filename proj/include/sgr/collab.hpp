#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgr/adapter.hpp"
#include "sgr/kg.hpp"
#include "sgr/reasoner.hpp"
#include "sgr/relevance.hpp"
#include "sgr/text.hpp"

namespace sgr {
namespace collab {

struct Hypothesis {
  int iteration = 1;  // t >= 1
  std::string text;
  std::optional<std::string> proposed_answer;  // normalized
  double confidence = 0.0;
};

struct EvidenceSet {
  int iteration = 1;
  std::vector<Triple> triples;  // ordered by (head, relation, tail)
};

// Strictly alternating h_1, E_1, ..., h_T, E_T.
struct CollabPath {
  std::vector<Hypothesis> hypotheses;
  std::vector<EvidenceSet> evidence;
  std::optional<CandidateAnswer> answer;  // nullopt = sentinel no-answer
  double score_beta = 0.0;
  bool failed = false;
  int instance = 0;

  std::size_t iterations() const { return hypotheses.size(); }
};

// One Hypothesis request carrying the question plus serialized priors.
inline Hypothesis hypothesize(Adapter& adapter, const std::string& question,
                              const std::vector<EvidenceSet>& prior_evidence,
                              const std::vector<Hypothesis>& prior_hypotheses,
                              const KnowledgeGraph& graph, int instance = 0) {
  nlohmann::json evidence_json = nlohmann::json::array();
  for (const EvidenceSet& e : prior_evidence) {
    nlohmann::json triples = nlohmann::json::array();
    for (const Triple& t : e.triples) triples.push_back(graph.verbalize(t));
    evidence_json.push_back({{"iteration", e.iteration}, {"triples", triples}});
  }
  nlohmann::json hypotheses_json = nlohmann::json::array();
  for (const Hypothesis& h : prior_hypotheses)
    hypotheses_json.push_back({{"iteration", h.iteration},
                               {"text", h.text},
                               {"confidence", h.confidence}});
  nlohmann::json payload = {
      {"prior_evidence", evidence_json},
      {"prior_hypotheses", hypotheses_json},
      {"instance", instance},
      {"template", std::string(prompt_template(RequestKind::Hypothesis))}};
  AdapterResponse response = adapter.complete(
      make_request(RequestKind::Hypothesis, question, payload));

  Hypothesis hyp;
  hyp.iteration = static_cast<int>(prior_hypotheses.size()) + 1;
  hyp.text = response.body.value("text", "");
  hyp.confidence = response.body.value("confidence", 0.0);
  if (response.body.contains("proposed_answer")) {
    std::string answer =
        normalize_text(response.body["proposed_answer"].get<std::string>());
    if (!answer.empty()) hyp.proposed_answer = answer;
  }
  return hyp;
}

// Links entities in the hypothesis text, returns their 1-hop neighborhood
// capped at the 16 triples most relevant to the hypothesis, ordered by
// triple id tuple.
inline EvidenceSet retrieve_evidence(const Hypothesis& hypothesis,
                                     const KnowledgeGraph& graph,
                                     std::size_t cap = 16) {
  EvidenceSet evidence;
  evidence.iteration = hypothesis.iteration;
  std::vector<EntityId> seeds = link_entities(hypothesis.text, graph);
  if (seeds.empty()) return evidence;

  std::vector<std::pair<Triple, double>> scored;
  for (const Triple& t : neighborhood(graph, seeds, 1))
    scored.emplace_back(t, score_triple(t, hypothesis.text, graph));
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (scored.size() > cap) scored.resize(cap);
  for (auto& [t, _] : scored) evidence.triples.push_back(t);
  std::sort(evidence.triples.begin(), evidence.triples.end());
  return evidence;
}

struct IterateConfig {
  int t_max = 5;
  int m = 3;
  double early_stop_conf = 0.7;
  bool retrieval_enabled = true;
};

// M independent hypothesize/retrieve loops. Each loop feeds all accumulated
// evidence back, stops at t_max or when a hypothesis carries a
// sufficiently confident proposed answer. A failed instance marks its path
// failed; the others proceed.
inline std::vector<CollabPath> iterate(const std::string& question,
                                       const KnowledgeGraph& graph,
                                       Adapter& adapter,
                                       const IterateConfig& config) {
  std::vector<CollabPath> paths;
  for (int instance = 0; instance < config.m; ++instance) {
    CollabPath path;
    path.instance = instance;
    try {
      for (int t = 1; t <= config.t_max; ++t) {
        Hypothesis hyp = hypothesize(adapter, question, path.evidence,
                                     path.hypotheses, graph, instance);
        path.hypotheses.push_back(hyp);
        EvidenceSet evidence =
            config.retrieval_enabled
                ? retrieve_evidence(hyp, graph)
                : EvidenceSet{hyp.iteration, {}};
        path.evidence.push_back(std::move(evidence));
        if (hyp.proposed_answer && hyp.confidence >= config.early_stop_conf)
          break;
      }
    } catch (const AdapterError&) {
      path.failed = true;
    }
    // path answer = last proposed answer, if any
    for (auto it = path.hypotheses.rbegin(); it != path.hypotheses.rend();
         ++it) {
      if (it->proposed_answer) {
        CandidateAnswer answer;
        answer.value = *it->proposed_answer;
        answer.model_prob = it->confidence;
        answer.source = AnswerSource::collaborative;
        answer.path_id = instance;
        path.answer = answer;
        break;
      }
    }
    paths.push_back(std::move(path));
  }
  return paths;
}

// Fraction of iterations whose entire evidence set is contained in the
// graph (vacuously true for empty sets).
inline double graph_consistency(const CollabPath& path,
                                const KnowledgeGraph& graph) {
  if (path.evidence.empty())
    throw std::invalid_argument("graph_consistency of empty path");
  std::size_t contained = 0;
  for (const EvidenceSet& e : path.evidence) {
    bool all = std::all_of(e.triples.begin(), e.triples.end(),
                           [&](const Triple& t) { return graph.contains(t); });
    if (all) ++contained;
  }
  return static_cast<double>(contained) /
         static_cast<double>(path.evidence.size());
}

// lambda-blend of answer confidence and graph consistency; the beta_i /
// alpha_i weighting shared by both integration stages.
inline double blend_score(double confidence, double consistency,
                          double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw std::invalid_argument("lambda out of [0,1]");
  return lambda * confidence + (1.0 - lambda) * consistency;
}

inline double path_score(const CollabPath& path, const KnowledgeGraph& graph,
                         double lambda) {
  double confidence = path.answer ? path.answer->model_prob : 0.0;
  return blend_score(confidence, graph_consistency(path, graph), lambda);
}

// Weighted vote: sums scores per distinct answer value, argmax with ties by
// lexicographically smallest value. Callers exclude sentinel entries before
// calling; an empty input yields no winner.
inline std::optional<CandidateAnswer> aggregate(
    const std::vector<std::pair<CandidateAnswer, double>>& scored) {
  std::map<std::string, double> mass;
  std::map<std::string, const CandidateAnswer*> representative;
  for (const auto& [answer, score] : scored) {
    mass[answer.value] += score;
    auto [it, inserted] = representative.emplace(answer.value, &answer);
    (void)it;
    (void)inserted;
  }
  if (mass.empty()) return std::nullopt;
  // std::map iterates in value order, so the first max is the tie winner
  std::string best;
  double best_mass = -1.0;
  for (const auto& [value, m] : mass) {
    if (m > best_mass) {
      best = value;
      best_mass = m;
    }
  }
  CandidateAnswer out = *representative.at(best);
  out.model_prob = best_mass;
  return out;
}

}  // namespace collab
}  // namespace sgr
