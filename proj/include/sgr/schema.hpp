#pragma once

#include <set>
#include <string>
#include <vector>

namespace sgr {

// One endpoint of a schema triple: either a grounded canonical entity name
// or a variable (spelled with a leading '?').
struct SchemaNode {
  bool is_variable = false;
  std::string text;

  bool operator==(const SchemaNode&) const = default;
};

struct SchemaTriple {
  SchemaNode head;
  std::string relation;
  SchemaNode tail;

  bool operator==(const SchemaTriple&) const = default;
};

struct Constraint {
  enum class Kind { equality, type_hint };
  Kind kind = Kind::equality;
  std::string subject;  // variable name
  std::string value;

  bool operator==(const Constraint&) const = default;
};

// Structured skeleton of a question: grounded entities, relations,
// constraints and an ordered chain of schema triples with one answer slot.
struct QuestionSchema {
  std::set<std::string> entities;
  std::set<std::string> relations;
  std::vector<Constraint> constraints;
  std::vector<SchemaTriple> triples;
  std::string answer_variable;

  bool usable() const { return !triples.empty() && !answer_variable.empty(); }
};

}  // namespace sgr
