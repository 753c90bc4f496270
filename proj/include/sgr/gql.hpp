#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sgr/kg.hpp"
#include "sgr/schema.hpp"

namespace sgr {
namespace gql {

struct NodePattern {
  std::string variable;
  std::optional<std::string> bound_name;

  bool operator==(const NodePattern&) const = default;
};

enum class Direction { forward, backward };

struct PathStep {
  NodePattern source;
  std::string relation_name;
  Direction direction = Direction::forward;
  NodePattern target;

  bool operator==(const PathStep&) const = default;
};

struct QueryAst {
  std::vector<PathStep> pattern;
  std::vector<std::string> returns;

  bool operator==(const QueryAst&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, std::size_t pos)
      : std::runtime_error(msg + " at position " + std::to_string(pos)),
        position(pos) {}
  std::size_t position;
};

// Variables in first-appearance order across the pattern.
inline std::vector<std::string> pattern_variables(const QueryAst& ast) {
  std::vector<std::string> vars;
  auto add = [&](const std::string& v) {
    if (std::find(vars.begin(), vars.end(), v) == vars.end())
      vars.push_back(v);
  };
  for (const PathStep& s : ast.pattern) {
    add(s.source.variable);
    add(s.target.variable);
  }
  return vars;
}

// Structural checks shared by the parser and the schema compiler:
// non-empty chained pattern, returns bound in the pattern.
inline void validate_ast(const QueryAst& ast) {
  if (ast.returns.empty()) throw ParseError("no return variable", 0);
  auto vars = pattern_variables(ast);
  for (const std::string& r : ast.returns)
    if (std::find(vars.begin(), vars.end(), r) == vars.end())
      throw ParseError("unbound return variable '" + r + "'", 0);
  if (ast.pattern.empty()) throw ParseError("empty pattern", 0);
  for (std::size_t i = 1; i < ast.pattern.size(); ++i)
    if (ast.pattern[i].source != ast.pattern[i - 1].target)
      throw ParseError("broken chain between steps " + std::to_string(i - 1) +
                           " and " + std::to_string(i),
                       0);
  std::map<std::string, std::optional<std::string>> binding;
  for (const PathStep& s : ast.pattern) {
    for (const NodePattern& n : {s.source, s.target}) {
      auto [it, inserted] = binding.emplace(n.variable, n.bound_name);
      if (!inserted && it->second != n.bound_name)
        throw ParseError("variable '" + n.variable +
                             "' bound to conflicting names",
                         0);
    }
  }
}

namespace detail {

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }

  bool try_consume(std::string_view literal) {
    skip_ws();
    if (text_.substr(pos_, literal.size()) == literal) {
      pos_ += literal.size();
      return true;
    }
    return false;
  }

  void expect(std::string_view literal) {
    if (!try_consume(literal))
      throw ParseError("expected '" + std::string(literal) + "'", pos_);
  }

  std::string ident() {
    skip_ws();
    std::size_t start = pos_;
    auto head = [](unsigned char c) { return std::isalpha(c) || c == '_'; };
    auto body = [](unsigned char c) { return std::isalnum(c) || c == '_'; };
    if (pos_ >= text_.size() ||
        !head(static_cast<unsigned char>(text_[pos_])))
      throw ParseError("expected identifier", pos_);
    ++pos_;
    while (pos_ < text_.size() && body(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  std::string string_literal() {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != '"')
      throw ParseError("expected string literal", pos_);
    ++pos_;
    std::string out;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      char c = text_[pos_++];
      if (c == '\\') {
        if (pos_ >= text_.size()) throw ParseError("dangling escape", pos_);
        char e = text_[pos_++];
        if (e != '"' && e != '\\')
          throw ParseError("bad escape in string", pos_ - 1);
        out.push_back(e);
      } else {
        out.push_back(c);
      }
    }
    if (pos_ >= text_.size()) throw ParseError("unterminated string", pos_);
    ++pos_;  // closing quote
    return out;
  }

  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }

  std::size_t pos() const { return pos_; }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
};

inline NodePattern parse_node(Lexer& lex) {
  lex.expect("(");
  NodePattern node;
  node.variable = lex.ident();
  if (lex.try_consume("{")) {
    lex.expect("name:");
    node.bound_name = lex.string_literal();
    lex.expect("}");
  }
  lex.expect(")");
  return node;
}

}  // namespace detail

// query := "MATCH" pattern "RETURN" var
// pattern := node (edge node)+ ; edge := -[IDENT]-> | <-[IDENT]-
inline QueryAst parse_query(std::string_view text) {
  detail::Lexer lex(text);
  lex.expect("MATCH");
  QueryAst ast;
  NodePattern current = detail::parse_node(lex);
  while (true) {
    lex.skip_ws();
    Direction dir;
    if (lex.try_consume("-[")) {
      dir = Direction::forward;
    } else if (lex.try_consume("<-[")) {
      dir = Direction::backward;
    } else {
      break;
    }
    std::string rel = lex.ident();
    lex.expect(dir == Direction::forward ? "]->" : "]-");
    NodePattern next = detail::parse_node(lex);
    ast.pattern.push_back(PathStep{current, rel, dir, next});
    current = next;
  }
  lex.expect("RETURN");
  ast.returns.push_back(lex.ident());
  if (!lex.at_end()) throw ParseError("trailing input", lex.pos());
  validate_ast(ast);
  return ast;
}

inline std::string print_query(const QueryAst& ast) {
  auto escape = [](const std::string& s) {
    std::string out;
    for (char c : s) {
      if (c == '"' || c == '\\') out.push_back('\\');
      out.push_back(c);
    }
    return out;
  };
  auto node = [&](const NodePattern& n) {
    std::string out = "(" + n.variable;
    if (n.bound_name) out += " {name: \"" + escape(*n.bound_name) + "\"}";
    return out + ")";
  };
  std::string out = "MATCH " + node(ast.pattern.front().source);
  for (const PathStep& s : ast.pattern) {
    out += s.direction == Direction::forward
               ? " -[" + s.relation_name + "]-> "
               : " <-[" + s.relation_name + "]- ";
    out += node(s.target);
  }
  out += " RETURN " + ast.returns.front();
  return out;
}

// Deterministic schema -> query compilation. Mirrors the schema triples in
// order; grounded names become bound node patterns; the answer variable is
// the sole return. The chain is walked so that each step starts from the
// previous step's target (first step prefers a grounded endpoint as
// source for selectivity).
inline QueryAst compile_schema(const QuestionSchema& schema) {
  if (schema.triples.empty()) throw ParseError("schema has zero triples", 0);
  if (schema.answer_variable.empty())
    throw ParseError("schema has no answer variable", 0);

  std::map<std::string, NodePattern> nodes;  // schema node text -> pattern
  int grounded_count = 0;
  auto pattern_for = [&](const SchemaNode& n) -> NodePattern {
    auto it = nodes.find(n.text);
    if (it != nodes.end()) return it->second;
    NodePattern p;
    if (n.is_variable) {
      p.variable = n.text;
      if (!p.variable.empty() && p.variable.front() == '?')
        p.variable.erase(p.variable.begin());
    } else {
      p.variable = "g" + std::to_string(grounded_count++);
      p.bound_name = n.text;
    }
    nodes.emplace(n.text, p);
    return p;
  };

  QueryAst ast;
  for (std::size_t i = 0; i < schema.triples.size(); ++i) {
    const SchemaTriple& st = schema.triples[i];
    NodePattern head = pattern_for(st.head);
    NodePattern tail = pattern_for(st.tail);
    bool head_as_source;
    if (i == 0) {
      // orient so the chain can continue: the endpoint shared with the next
      // triple becomes the target; otherwise seed from a grounded endpoint
      auto appears_later = [&](const SchemaNode& n) {
        if (schema.triples.size() < 2) return false;
        const SchemaTriple& next = schema.triples[1];
        return next.head.text == n.text || next.tail.text == n.text;
      };
      bool head_later = appears_later(st.head);
      bool tail_later = appears_later(st.tail);
      if (head_later != tail_later)
        head_as_source = tail_later;
      else
        head_as_source = head.bound_name.has_value() || !tail.bound_name;
    } else {
      const NodePattern& prev = ast.pattern.back().target;
      if (head == prev)
        head_as_source = true;
      else if (tail == prev)
        head_as_source = false;
      else
        throw ParseError("schema triples do not chain at step " +
                             std::to_string(i),
                         0);
    }
    if (head_as_source)
      ast.pattern.push_back(PathStep{head, st.relation, Direction::forward, tail});
    else
      ast.pattern.push_back(
          PathStep{tail, st.relation, Direction::backward, head});
  }

  std::string answer = schema.answer_variable;
  if (!answer.empty() && answer.front() == '?') answer.erase(answer.begin());
  ast.returns.push_back(answer);
  validate_ast(ast);
  return ast;
}

// Map from variable name to its entity binding; covers exactly the
// pattern's variables.
using BindingRow = std::map<std::string, EntityId>;

struct ExecResult {
  std::vector<BindingRow> rows;
  std::vector<std::string> warnings;
};

namespace detail {

// (head entity, tail entity) as seen from the step's source side.
inline std::pair<EntityId, EntityId> step_endpoints(const PathStep& s,
                                                    const Triple& t) {
  if (s.direction == Direction::forward) return {t.head, t.tail};
  return {t.tail, t.head};
}

}  // namespace detail

// All and only the binding rows satisfying every step, sorted
// lexicographically over the bound ids in variable order, duplicate-free.
// An unknown relation name yields an empty result with a warning: absence
// of knowledge is a legal outcome, not an error.
inline ExecResult execute(const QueryAst& ast, const KnowledgeGraph& graph) {
  validate_ast(ast);
  ExecResult result;

  std::vector<RelationId> step_relation(ast.pattern.size());
  for (std::size_t i = 0; i < ast.pattern.size(); ++i) {
    auto rel = graph.find_relation(ast.pattern[i].relation_name);
    if (!rel) {
      result.warnings.push_back("relation not in graph: " +
                                ast.pattern[i].relation_name);
      return result;
    }
    step_relation[i] = *rel;
  }

  // Resolve name-bound variables up front; an unresolvable bound name makes
  // the pattern unsatisfiable.
  std::map<std::string, EntityId> fixed;
  for (const PathStep& s : ast.pattern) {
    for (const NodePattern& n : {s.source, s.target}) {
      if (!n.bound_name) continue;
      auto id = graph.find_entity(*n.bound_name);
      if (!id) return result;
      fixed[n.variable] = *id;
    }
  }

  // Evaluate steps starting from the most selective one (a step with a
  // name-bound endpoint), then sweep left and right along the chain.
  std::size_t seed = 0;
  for (std::size_t i = 0; i < ast.pattern.size(); ++i) {
    const PathStep& s = ast.pattern[i];
    if (s.source.bound_name || s.target.bound_name) {
      seed = i;
      break;
    }
  }
  std::vector<std::size_t> order;
  order.push_back(seed);
  for (std::size_t d = 1; d < ast.pattern.size(); ++d) {
    if (seed + d < ast.pattern.size()) order.push_back(seed + d);
    if (seed >= d) order.push_back(seed - d);
  }

  std::set<BindingRow> rows;
  BindingRow partial = fixed;
  auto backtrack = [&](auto&& self, std::size_t depth) -> void {
    if (depth == order.size()) {
      rows.insert(partial);
      return;
    }
    const PathStep& s = ast.pattern[order[depth]];
    const auto& indexes = graph.triples_by_relation(step_relation[order[depth]]);
    for (std::size_t ti : indexes) {
      auto [src, dst] = detail::step_endpoints(s, graph.triples()[ti]);
      auto src_it = partial.find(s.source.variable);
      auto dst_it = partial.find(s.target.variable);
      if (src_it != partial.end() && src_it->second != src) continue;
      if (dst_it != partial.end() && dst_it->second != dst) continue;
      bool added_src = src_it == partial.end();
      bool added_dst = false;
      if (added_src) partial[s.source.variable] = src;
      if (partial.find(s.target.variable) == partial.end()) {
        partial[s.target.variable] = dst;
        added_dst = true;
      } else if (partial[s.target.variable] != dst) {
        if (added_src) partial.erase(s.source.variable);
        continue;
      }
      self(self, depth + 1);
      if (added_src) partial.erase(s.source.variable);
      if (added_dst) partial.erase(s.target.variable);
    }
  };
  backtrack(backtrack, 0);

  // Canonical order: lexicographic over ids in variable first-appearance
  // order.
  auto vars = pattern_variables(ast);
  std::vector<BindingRow> ordered(rows.begin(), rows.end());
  std::sort(ordered.begin(), ordered.end(),
            [&](const BindingRow& a, const BindingRow& b) {
              for (const std::string& v : vars) {
                EntityId x = a.at(v), y = b.at(v);
                if (x != y) return x < y;
              }
              return false;
            });
  result.rows = std::move(ordered);
  return result;
}

}  // namespace gql
}  // namespace sgr
