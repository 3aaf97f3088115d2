#pragma once

// Closed-domain knowledge base and the evaluation semantics of grounded
// FunQL, plus the bounded search for surrogate forms used when training
// from denotations.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "funql.hpp"

namespace sempar {

struct KnowledgeBase {
  std::set<std::string> entities;
  std::map<std::string, std::set<std::string>> unary;  // relation -> extension
  std::map<std::string, std::set<std::pair<std::string, std::string>>> binary;
  std::map<std::pair<std::string, std::string>, double> magnitudes;  // (entity, attribute) -> value

  bool has_relation(const std::string& name) const { return unary.count(name) || binary.count(name); }

  void add_unary(const std::string& rel, const std::string& e);
  void add_binary(const std::string& rel, const std::string& a, const std::string& b);
  void add_attribute(const std::string& e, const std::string& attr, double value);

  // All relation symbols, sorted; these form the grounded-term vocabulary.
  std::vector<std::string> relation_names() const;

  // Line format: `unary <rel> <entity>` / `binary <rel> <e1> <e2>` /
  // `attr <entity> <name> <number>`; `#` starts a comment.
  static KnowledgeBase load(const std::string& path);
  static KnowledgeBase parse(const std::string& text);
};

class Denotation {
 public:
  Denotation() : is_count_(false) {}
  static Denotation of_set(std::set<std::string> entities);
  static Denotation of_count(std::int64_t n);

  bool is_count() const { return is_count_; }
  const std::set<std::string>& entities() const;
  std::int64_t count() const;

  bool operator==(const Denotation& o) const;
  bool operator!=(const Denotation& o) const { return !(*this == o); }

  std::string to_string() const;  // "{a, b}" or "4"
  static Denotation parse(const std::string& text);

 private:
  bool is_count_;
  std::set<std::string> set_;
  std::int64_t count_ = 0;
};

struct ExecOptions {
  // Attribute used by largest/smallest to rank entities.
  std::string rank_attribute = "size";
};

// Bottom-up evaluation of a grounded form.  Throws Error(Execution) on
// unknown predicates, count results fed to set operators, missing magnitudes,
// or type predicates over absent entities.
Denotation execute(const LogicalForm& g, const KnowledgeBase& kb, const ExecOptions& opts = {});

struct EntityAnnotation {
  Span span;
  std::string entity;
  double score = 1.0;
};

struct SurrogateLimits {
  std::size_t max_depth = 4;       // nodes on the longest root-to-leaf path
  std::size_t max_predicates = 4;  // internal nodes, answer included
};

// All grounded forms within the limits, built from the annotated entities,
// the KB's relations and the domain-general predicates, whose execution
// equals `y`.  Deterministic: sorted by canonical text.
std::vector<LogicalForm> surrogate_search(const std::vector<std::string>& tokens,
                                          const std::vector<EntityAnnotation>& annotations,
                                          const Denotation& y, const KnowledgeBase& kb,
                                          const SurrogateLimits& limits = {},
                                          const ExecOptions& exec = {});

}  // namespace sempar
