#pragma once

// FunQL trees: a variable-free query language where every predicate is a
// function symbol over an ordered argument list.  The same tree type carries
// ungrounded forms (natural-language predicates) and grounded forms
// (knowledge-base symbols); the two differ only in the kind of lexical terms
// at corresponding nodes.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "common.hpp"

namespace sempar {

enum class TermKind {
  NaturalLanguagePredicate,  // a word from the utterance acting as a predicate
  DomainGeneralPredicate,    // closed inventory: answer, type preds, aggregations, connectives
  GroundedPredicate,         // a knowledge-base relation symbol
  Entity,
  AllMarker,                 // the special terminal `all`
};

struct Span {
  std::size_t begin = 0;  // token index, inclusive
  std::size_t end = 0;    // token index, exclusive

  bool operator==(const Span& o) const { return begin == o.begin && end == o.end; }
};

struct Term {
  TermKind kind;
  std::string label;
  std::optional<Span> span;  // for NL predicates and entities

  static Term general(std::string label) { return {TermKind::DomainGeneralPredicate, std::move(label), {}}; }
  static Term nl(std::string label, std::optional<Span> span = {}) {
    return {TermKind::NaturalLanguagePredicate, std::move(label), span};
  }
  static Term grounded(std::string label) { return {TermKind::GroundedPredicate, std::move(label), {}}; }
  static Term entity(std::string label, std::optional<Span> span = {}) {
    return {TermKind::Entity, std::move(label), span};
  }
  static Term all() { return {TermKind::AllMarker, "all", {}}; }

  bool is_predicate() const {
    return kind == TermKind::NaturalLanguagePredicate || kind == TermKind::DomainGeneralPredicate ||
           kind == TermKind::GroundedPredicate;
  }
  bool is_leaf_term() const { return kind == TermKind::Entity || kind == TermKind::AllMarker; }

  // Structural equality ignores spans: two parses of the same text are equal.
  bool same(const Term& o) const { return kind == o.kind && label == o.label; }
};

// The closed inventory of domain-general predicates.  The core is fixed;
// type sub-predicates (stateid, cityid, ...) are configurable per domain.
class GeneralInventory {
 public:
  GeneralInventory();
  explicit GeneralInventory(std::set<std::string> type_predicates);

  static const GeneralInventory& standard();

  bool contains(const std::string& label) const;
  bool is_type_predicate(const std::string& label) const { return type_predicates_.count(label) > 0; }
  bool is_connective(const std::string& label) const;   // intersect / union / exclude
  bool is_aggregation(const std::string& label) const;  // count / largest / smallest

  // Children required by a domain-general predicate; 0 means unconstrained.
  std::size_t arity(const std::string& label) const;

  const std::set<std::string>& type_predicates() const { return type_predicates_; }

  // Labels usable as a non-terminal choice (everything except `all`), sorted.
  std::vector<std::string> nonterminal_labels() const;

 private:
  std::set<std::string> type_predicates_;
};

class LogicalForm {
 public:
  // Leaf (entity or all).
  explicit LogicalForm(Term head);
  // Predicate node; validates arity of domain-general predicates.
  LogicalForm(Term head, std::vector<LogicalForm> children,
              const GeneralInventory& inv = GeneralInventory::standard());

  const Term& head() const { return node_->head; }
  const std::vector<LogicalForm>& children() const { return node_->children; }
  bool is_leaf() const { return node_->children.empty(); }

  std::size_t node_count() const;
  std::size_t depth() const;              // nodes on the longest root-to-leaf path
  std::size_t predicate_count() const;    // internal (predicate) nodes

  // Pre-order list of this node and descendants.
  void visit(const std::function<void(const LogicalForm&)>& fn) const;

  bool operator==(const LogicalForm& o) const;  // structural, spans ignored
  bool operator!=(const LogicalForm& o) const { return !(*this == o); }

 private:
  struct Node {
    Term head;
    std::vector<LogicalForm> children;
  };
  std::shared_ptr<const Node> node_;
};

// Concrete syntax: lowercase identifiers, parenthesized comma-separated
// argument lists, e.g. answer(exclude(state(all), next_to(texas))).
// Bare identifiers parse as entities (`all` as the all-marker); identifiers
// with argument lists parse as predicates.  Non-inventory predicates get
// `lexical_kind` (natural-language by default; pass GroundedPredicate when
// reading knowledge-base forms).
LogicalForm parse_funql(const std::string& text,
                        TermKind lexical_kind = TermKind::NaturalLanguagePredicate,
                        const GeneralInventory& inv = GeneralInventory::standard());

std::string print_funql(const LogicalForm& form);

// A complete form is one whose root predicate is `answer`.
bool is_complete_form(const LogicalForm& form);

// True iff the trees have identical shape, identical domain-general
// predicates at corresponding nodes, and lexical/entity terms aligned
// node-for-node.
bool is_isomorphic(const LogicalForm& u, const LogicalForm& g);

// Replaces natural-language predicate terms according to `mapping` (keyed by
// label); entity labels present in the mapping are replaced as well.
// Missing mapping entries for NL predicates are an error.
LogicalForm substitute_terms(const LogicalForm& u, const std::map<std::string, Term>& mapping);

// Positional variant: `assign(preorder_index, term)` may return a replacement
// for any node's term; the tree shape is preserved.
LogicalForm substitute_terms(const LogicalForm& u,
                             const std::function<std::optional<Term>(std::size_t, const Term&)>& assign);

}  // namespace sempar
