#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <deque>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sgr/text.hpp"

namespace sgr {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Entity {
  EntityId id = 0;
  std::string canonical_name;            // normalized, non-empty
  std::set<std::string> aliases;         // includes canonical_name
};

struct Relation {
  RelationId id = 0;
  std::string name;                      // normalized, unique
};

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;
  auto operator<=>(const Triple&) const = default;
};

class KgError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Immutable after load; construction-time mutation only.
class KnowledgeGraph {
 public:
  EntityId intern_entity(std::string_view raw_name) {
    std::string name = normalize_text(raw_name);
    if (name.empty()) throw KgError("empty entity name");
    auto it = alias_to_entity_.find(name);
    if (it != alias_to_entity_.end()) return it->second;
    EntityId id = static_cast<EntityId>(entities_.size());
    entities_.push_back(Entity{id, name, {name}});
    alias_to_entity_.emplace(std::move(name), id);
    return id;
  }

  RelationId intern_relation(std::string_view raw_name) {
    std::string name = normalize_text(raw_name);
    if (name.empty()) throw KgError("empty relation name");
    auto it = relation_by_name_.find(name);
    if (it != relation_by_name_.end()) return it->second;
    RelationId id = static_cast<RelationId>(relations_.size());
    relations_.push_back(Relation{id, name});
    relation_by_name_.emplace(std::move(name), id);
    return id;
  }

  void add_alias(std::string_view raw_alias, std::string_view raw_canonical) {
    std::string alias = normalize_text(raw_alias);
    std::string canonical = normalize_text(raw_canonical);
    auto it = alias_to_entity_.find(canonical);
    if (it == alias_to_entity_.end())
      throw KgError("alias target not in graph: " + canonical);
    auto [pos, inserted] = alias_to_entity_.emplace(alias, it->second);
    if (!inserted && pos->second != it->second)
      throw KgError("alias '" + alias + "' maps to two different entities");
    entities_[it->second].aliases.insert(alias);
  }

  void add_triple(Triple t) {
    if (t.head >= entities_.size() || t.tail >= entities_.size())
      throw KgError("triple references unknown entity");
    if (t.relation >= relations_.size())
      throw KgError("triple references unknown relation");
    if (triple_set_.insert(t).second) dirty_ = true;
  }

  // Rebuilds the sorted triple list and adjacency indexes.
  void freeze() {
    triples_.assign(triple_set_.begin(), triple_set_.end());
    by_head_.assign(entities_.size(), {});
    by_tail_.assign(entities_.size(), {});
    by_relation_.assign(relations_.size(), {});
    for (std::size_t i = 0; i < triples_.size(); ++i) {
      by_head_[triples_[i].head].push_back(i);
      by_tail_[triples_[i].tail].push_back(i);
      by_relation_[triples_[i].relation].push_back(i);
    }
    dirty_ = false;
  }

  const std::vector<Entity>& entities() const { return entities_; }
  const std::vector<Relation>& relations() const { return relations_; }
  const std::vector<Triple>& triples() const {
    check_frozen();
    return triples_;
  }

  const std::vector<std::size_t>& triples_by_head(EntityId e) const {
    check_frozen();
    return by_head_.at(e);
  }
  const std::vector<std::size_t>& triples_by_tail(EntityId e) const {
    check_frozen();
    return by_tail_.at(e);
  }
  const std::vector<std::size_t>& triples_by_relation(RelationId r) const {
    check_frozen();
    return by_relation_.at(r);
  }

  bool contains(const Triple& t) const { return triple_set_.count(t) > 0; }

  std::optional<EntityId> find_entity(std::string_view name) const {
    auto it = alias_to_entity_.find(normalize_text(name));
    if (it == alias_to_entity_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<RelationId> find_relation(std::string_view name) const {
    auto it = relation_by_name_.find(normalize_text(name));
    if (it == relation_by_name_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& entity_name(EntityId e) const {
    return entities_.at(e).canonical_name;
  }
  const std::string& relation_name(RelationId r) const {
    return relations_.at(r).name;
  }

  // "head relation tail" with underscores in the relation spelled as spaces.
  std::string verbalize(const Triple& t) const {
    std::string rel = relation_name(t.relation);
    std::replace(rel.begin(), rel.end(), '_', ' ');
    return entity_name(t.head) + " " + rel + " " + entity_name(t.tail);
  }

  void serialize(std::ostream& out) const {
    check_frozen();
    for (const Triple& t : triples_) {
      out << entity_name(t.head) << '\t' << relation_name(t.relation) << '\t'
          << entity_name(t.tail) << '\n';
    }
  }

 private:
  void check_frozen() const {
    if (dirty_) throw KgError("graph mutated since last freeze()");
  }

  std::vector<Entity> entities_;
  std::vector<Relation> relations_;
  std::set<Triple> triple_set_;
  std::vector<Triple> triples_;  // sorted (head, relation, tail)
  std::vector<std::vector<std::size_t>> by_head_, by_tail_, by_relation_;
  std::unordered_map<std::string, EntityId> alias_to_entity_;
  std::unordered_map<std::string, RelationId> relation_by_name_;
  bool dirty_ = false;
};

// Triple file: one `head<TAB>relation<TAB>tail` per line, '#' comments.
inline KnowledgeGraph load_triples(std::istream& in) {
  KnowledgeGraph g;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    auto tab1 = line.find('\t');
    auto tab2 = tab1 == std::string::npos ? std::string::npos
                                          : line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos)
      throw KgError("malformed triple at line " + std::to_string(line_no));
    std::string head = line.substr(0, tab1);
    std::string rel = line.substr(tab1 + 1, tab2 - tab1 - 1);
    std::string tail = line.substr(tab2 + 1);
    if (normalize_text(head).empty() || normalize_text(rel).empty() ||
        normalize_text(tail).empty())
      throw KgError("empty field at line " + std::to_string(line_no));
    EntityId h = g.intern_entity(head);
    RelationId r = g.intern_relation(rel);
    EntityId t = g.intern_entity(tail);
    g.add_triple(Triple{h, r, t});
  }
  g.freeze();
  return g;
}

// Alias file: `alias<TAB>canonical_name` per line.
inline void load_aliases(KnowledgeGraph& g, std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw KgError("malformed alias at line " + std::to_string(line_no));
    g.add_alias(line.substr(0, tab), line.substr(tab + 1));
  }
}

// Maximal token-span alias matching; longest span wins on overlap.
// Result is sorted by entity id, duplicate-free.
inline std::vector<EntityId> link_entities(std::string_view question,
                                           const KnowledgeGraph& graph) {
  auto q_tokens = tokenize_normalized(question);
  if (q_tokens.empty()) return {};

  struct Span {
    std::size_t start, len;
    EntityId entity;
  };
  std::vector<Span> spans;
  for (const Entity& e : graph.entities()) {
    for (const std::string& alias : e.aliases) {
      auto a_tokens = tokenize_normalized(alias);
      if (a_tokens.empty() || a_tokens.size() > q_tokens.size()) continue;
      for (std::size_t s = 0; s + a_tokens.size() <= q_tokens.size(); ++s) {
        if (std::equal(a_tokens.begin(), a_tokens.end(),
                       q_tokens.begin() + static_cast<std::ptrdiff_t>(s)))
          spans.push_back(Span{s, a_tokens.size(), e.id});
      }
    }
  }
  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) {
    if (a.len != b.len) return a.len > b.len;
    if (a.start != b.start) return a.start < b.start;
    return a.entity < b.entity;
  });
  std::vector<bool> taken(q_tokens.size(), false);
  std::set<EntityId> result;
  for (const Span& sp : spans) {
    bool free = true;
    for (std::size_t i = sp.start; i < sp.start + sp.len; ++i)
      if (taken[i]) free = false;
    if (!free) continue;
    for (std::size_t i = sp.start; i < sp.start + sp.len; ++i) taken[i] = true;
    result.insert(sp.entity);
  }
  return {result.begin(), result.end()};
}

// Triples reachable by BFS from seeds within `hops` edge traversals.
// Reachability is undirected; stored direction is preserved in the output,
// which is ordered by (head, relation, tail).
inline std::vector<Triple> neighborhood(const KnowledgeGraph& graph,
                                        const std::vector<EntityId>& seeds,
                                        int hops) {
  if (hops < 1) throw KgError("hops must be >= 1");
  constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(graph.entities().size(), kUnreached);
  std::deque<EntityId> frontier;
  for (EntityId s : seeds) {
    if (s >= graph.entities().size()) throw KgError("unknown seed id");
    dist[s] = 0;
    frontier.push_back(s);
  }
  while (!frontier.empty()) {
    EntityId v = frontier.front();
    frontier.pop_front();
    if (dist[v] >= static_cast<std::size_t>(hops)) continue;
    auto visit = [&](EntityId u) {
      if (dist[u] == kUnreached) {
        dist[u] = dist[v] + 1;
        frontier.push_back(u);
      }
    };
    for (std::size_t i : graph.triples_by_head(v))
      visit(graph.triples()[i].tail);
    for (std::size_t i : graph.triples_by_tail(v))
      visit(graph.triples()[i].head);
  }
  std::vector<Triple> out;
  for (const Triple& t : graph.triples()) {
    std::size_t d = std::min(dist[t.head], dist[t.tail]);
    if (d != kUnreached && d + 1 <= static_cast<std::size_t>(hops))
      out.push_back(t);
  }
  return out;  // graph.triples() is already (h, r, t)-sorted
}

}  // namespace sgr
