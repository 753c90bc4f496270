#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sgr/kg.hpp"
#include "sgr/schema.hpp"
#include "sgr/text.hpp"

namespace sgr {

inline constexpr std::size_t kDefaultEmbeddingDim = 256;

using EmbeddingVector = std::vector<double>;

// Deterministic hashed bag-of-tokens embedding: each normalized token is
// FNV-1a hashed into one of D buckets with a sign taken from the hash,
// then the vector is L2-normalized when nonzero.
inline EmbeddingVector encode(std::string_view text,
                              std::size_t dim = kDefaultEmbeddingDim) {
  EmbeddingVector v(dim, 0.0);
  for (const std::string& token : tokenize_normalized(text)) {
    std::uint64_t h = fnv1a64(token);
    std::size_t bucket = static_cast<std::size_t>(h % dim);
    double sign = ((h / dim) & 1u) ? 1.0 : -1.0;
    v[bucket] += sign;
  }
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& x : v) x /= norm;
  return v;
}

// Cosine similarity; 0 when either vector is zero.
inline double similarity(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.size() != v.size())
    throw std::invalid_argument("embedding dimension mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

inline double score_triple(const Triple& triple, std::string_view question,
                           const KnowledgeGraph& graph) {
  return similarity(encode(graph.verbalize(triple)), encode(question));
}

struct SelectionPolicy {
  enum class Mode { threshold, topk };
  Mode mode = Mode::topk;
  double tau = 0.3;
  std::size_t k = 32;
};

struct Subgraph {
  std::vector<Triple> triples;  // sorted by (head, relation, tail)
  std::set<EntityId> entities;
  std::set<RelationId> relations;
  std::map<Triple, double> scores;

  bool contains(const Triple& t) const { return scores.count(t) > 0; }
  bool empty() const { return triples.empty(); }
};

inline Subgraph make_subgraph(std::vector<std::pair<Triple, double>> kept) {
  Subgraph sg;
  std::sort(kept.begin(), kept.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& [t, s] : kept) {
    if (sg.scores.emplace(t, s).second) {
      sg.triples.push_back(t);
      sg.entities.insert(t.head);
      sg.entities.insert(t.tail);
      sg.relations.insert(t.relation);
    }
  }
  return sg;
}

// Candidate pool is the k-hop neighborhood of the schema's grounded
// entities (linked through the alias table); selection keeps either every
// candidate scoring >= tau or the top-k, ties broken by triple id tuple.
inline Subgraph select_subgraph(const KnowledgeGraph& graph,
                                const QuestionSchema& schema,
                                std::string_view question,
                                const SelectionPolicy& policy, int hops) {
  std::vector<EntityId> seeds;
  for (const std::string& name : schema.entities)
    if (auto id = graph.find_entity(name)) seeds.push_back(*id);
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  std::vector<std::pair<Triple, double>> scored;
  for (const Triple& t : neighborhood(graph, seeds, hops))
    scored.emplace_back(t, score_triple(t, question, graph));

  std::vector<std::pair<Triple, double>> kept;
  if (policy.mode == SelectionPolicy::Mode::threshold) {
    for (const auto& cand : scored)
      if (cand.second >= policy.tau) kept.push_back(cand);
  } else {
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    std::size_t n = std::min(policy.k, scored.size());
    kept.assign(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n));
  }
  return make_subgraph(std::move(kept));
}

}  // namespace sgr
