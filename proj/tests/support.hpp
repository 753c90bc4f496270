#pragma once

// Shared test-only helpers: random generators and independent oracles.
// Oracles are deliberately naive (exhaustive enumeration, full sorts) and
// must stay independent of the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sgr/gql.hpp"
#include "sgr/kg.hpp"
#include "sgr/schema.hpp"
#include "sgr/text.hpp"

namespace sgr_test {

using Rng = std::mt19937;

inline int rand_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Random graph with nv entities named t0..t(nv-1), nr relations r0.., and up
// to nt distinct triples.
inline sgr::KnowledgeGraph random_graph(Rng& rng, int nv, int nr, int nt) {
  sgr::KnowledgeGraph g;
  for (int i = 0; i < nv; ++i) g.intern_entity("t" + std::to_string(i));
  for (int i = 0; i < nr; ++i) g.intern_relation("r" + std::to_string(i));
  for (int i = 0; i < nt; ++i) {
    sgr::Triple t;
    t.head = static_cast<sgr::EntityId>(rand_int(rng, 0, nv - 1));
    t.tail = static_cast<sgr::EntityId>(rand_int(rng, 0, nv - 1));
    t.relation = static_cast<sgr::RelationId>(rand_int(rng, 0, nr - 1));
    g.add_triple(t);
  }
  g.freeze();
  return g;
}

// Random linear chain pattern of `steps` steps over the graph's relation
// vocabulary; some nodes get name bindings (usually to existing entities).
inline sgr::gql::QueryAst random_chain_query(Rng& rng,
                                             const sgr::KnowledgeGraph& g,
                                             int steps) {
  sgr::gql::QueryAst ast;
  auto node = [&](int index) {
    sgr::gql::NodePattern n;
    n.variable = "v" + std::to_string(index);
    if (rand_int(rng, 0, 3) == 0) {
      if (rand_int(rng, 0, 4) == 0) {
        n.bound_name = "absent_entity";
      } else {
        int e = rand_int(rng, 0, static_cast<int>(g.entities().size()) - 1);
        n.bound_name = g.entities()[static_cast<std::size_t>(e)].canonical_name;
      }
    }
    return n;
  };
  sgr::gql::NodePattern current = node(0);
  for (int i = 0; i < steps; ++i) {
    sgr::gql::PathStep s;
    s.source = current;
    int r = rand_int(rng, 0, static_cast<int>(g.relations().size()) - 1);
    s.relation_name = g.relations()[static_cast<std::size_t>(r)].name;
    s.direction = rand_int(rng, 0, 1) ? sgr::gql::Direction::forward
                                      : sgr::gql::Direction::backward;
    s.target = node(i + 1);
    ast.pattern.push_back(s);
    current = s.target;
  }
  int ret = rand_int(rng, 0, steps);
  ast.returns.push_back("v" + std::to_string(ret));
  return ast;
}

// Exhaustive-assignment oracle: tries every assignment of entities to the
// pattern's variables and keeps those satisfying all steps.
inline std::set<sgr::gql::BindingRow> oracle_execute(
    const sgr::gql::QueryAst& ast, const sgr::KnowledgeGraph& g) {
  auto vars = sgr::gql::pattern_variables(ast);
  std::set<sgr::gql::BindingRow> rows;
  std::size_t nv = g.entities().size();
  if (nv == 0) return rows;

  std::vector<std::size_t> assignment(vars.size(), 0);
  while (true) {
    sgr::gql::BindingRow row;
    for (std::size_t i = 0; i < vars.size(); ++i)
      row[vars[i]] = static_cast<sgr::EntityId>(assignment[i]);
    bool ok = true;
    for (const sgr::gql::PathStep& s : ast.pattern) {
      sgr::EntityId src = row.at(s.source.variable);
      sgr::EntityId dst = row.at(s.target.variable);
      if (s.source.bound_name) {
        auto id = g.find_entity(*s.source.bound_name);
        if (!id || *id != src) ok = false;
      }
      if (s.target.bound_name) {
        auto id = g.find_entity(*s.target.bound_name);
        if (!id || *id != dst) ok = false;
      }
      if (!ok) break;
      sgr::Triple want;
      if (s.direction == sgr::gql::Direction::forward)
        want = sgr::Triple{src, 0, dst};
      else
        want = sgr::Triple{dst, 0, src};
      auto rel = g.find_relation(s.relation_name);
      if (!rel) {
        ok = false;
        break;
      }
      want.relation = *rel;
      if (!g.contains(want)) {
        ok = false;
        break;
      }
    }
    if (ok) rows.insert(row);
    // odometer increment
    std::size_t i = 0;
    for (; i < assignment.size(); ++i) {
      if (++assignment[i] < nv) break;
      assignment[i] = 0;
    }
    if (i == assignment.size()) break;
  }
  return rows;
}

// Brute-force BFS over the explicit edge list, ignoring indexes.
inline std::vector<sgr::Triple> oracle_neighborhood(
    const sgr::KnowledgeGraph& g, const std::vector<sgr::EntityId>& seeds,
    int hops) {
  std::set<sgr::EntityId> frontier(seeds.begin(), seeds.end());
  std::set<sgr::EntityId> reached = frontier;
  std::set<sgr::Triple> collected;
  for (int h = 0; h < hops; ++h) {
    std::set<sgr::EntityId> next;
    for (const sgr::Triple& t : g.triples()) {
      if (frontier.count(t.head)) {
        collected.insert(t);
        if (!reached.count(t.tail)) next.insert(t.tail);
      }
      if (frontier.count(t.tail)) {
        collected.insert(t);
        if (!reached.count(t.head)) next.insert(t.head);
      }
    }
    reached.insert(next.begin(), next.end());
    frontier = next;
  }
  return {collected.begin(), collected.end()};
}

// Straight-line scalar reimplementation of the hashed-bag cosine score.
inline double oracle_hashed_bag_cosine(const std::string& a,
                                       const std::string& b,
                                       std::size_t dim = 256) {
  auto embed = [&](const std::string& text) {
    std::vector<double> v(dim, 0.0);
    std::istringstream in(sgr::normalize_text(text));
    std::string token;
    while (in >> token) {
      std::uint64_t h = 14695981039346656037ull;
      for (unsigned char c : token) {
        h ^= c;
        h *= 1099511628211ull;
      }
      v[h % dim] += ((h / dim) & 1u) ? 1.0 : -1.0;
    }
    return v;
  };
  auto va = embed(a), vb = embed(b);
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < dim; ++i) {
    dot += va[i] * vb[i];
    na += va[i] * va[i];
    nb += vb[i] * vb[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace sgr_test
