#pragma once

// The NT/TER/RED transition system.  NT pushes an open non-terminal
// predicate, TER pushes a terminal (entity or `all`), RED pops items down to
// the nearest open non-terminal and pushes the completed subtree back.
// Buffer tokens are candidates, never consumed; states are values.

#include <optional>
#include <string>
#include <vector>

#include "funql.hpp"
#include "kb.hpp"

namespace sempar {

enum class ActionKind { NT, TER, RED };

enum class SlotKind { NLPredicate, DomainGeneral, Entity, All };

struct Action {
  ActionKind kind;
  std::optional<SlotKind> slot;  // empty for RED

  static Action nt(SlotKind s) { return {ActionKind::NT, s}; }
  static Action ter(SlotKind s) { return {ActionKind::TER, s}; }
  static Action red() { return {ActionKind::RED, std::nullopt}; }
};

const char* action_kind_name(ActionKind k);

struct TransitionLimits {
  std::size_t max_depth = 8;   // open non-terminals at once
  std::size_t max_steps = 60;  // actions per derivation
};

class ParserState {
 public:
  struct StackItem {
    bool open = false;
    Term nonterminal;                  // valid when open
    std::optional<LogicalForm> tree;   // valid when completed
  };

  static ParserState initial(std::vector<std::size_t> nt_candidates,
                             std::vector<EntityAnnotation> ter_candidates,
                             TransitionLimits limits = {},
                             const GeneralInventory* inv = nullptr);

  // Legal action kinds, in NT < TER < RED order.  Error when finished.
  std::vector<ActionKind> legal_actions() const;
  bool is_legal(ActionKind k) const;

  // Returns the successor state; `term` must be supplied iff kind != RED.
  ParserState apply(ActionKind kind, const std::optional<Term>& term) const;

  bool finished() const { return finished_; }
  std::size_t open_count() const { return open_count_; }
  std::size_t step() const { return step_; }
  const std::vector<StackItem>& stack() const { return stack_; }
  const std::vector<std::size_t>& nt_candidates() const { return nt_candidates_; }
  const std::vector<EntityAnnotation>& ter_candidates() const { return ter_candidates_; }
  const TransitionLimits& limits() const { return limits_; }

  // Top open non-terminal and the number of completed items above it.
  const Term* top_open() const;
  std::size_t completed_above_open() const;

  // Single completed tree of a finished state.
  const LogicalForm& result() const;

  // Bracketed rendering of the partial tree, e.g. "answer ( exclude ( states ( all )".
  std::string render_stack() const;

 private:
  std::vector<StackItem> stack_;
  std::vector<std::size_t> nt_candidates_;
  std::vector<EntityAnnotation> ter_candidates_;
  std::size_t open_count_ = 0;
  std::size_t step_ = 0;
  bool finished_ = false;
  bool reduced_once_ = false;
  TransitionLimits limits_;
  const GeneralInventory* inv_ = nullptr;
};

struct Derivation {
  std::vector<Action> actions;
  std::vector<Term> terms;  // aligned with the non-RED actions, in order

  // One action per line: "NT answer", "TER texas", "RED".
  std::string to_text() const;
};

SlotKind slot_for_term(const Term& t);

// Pre-order traversal of `form`: NT at internal nodes, TER at leaves, RED on
// subtree completion.  NL predicates are located among `tokens` (first
// match), entities among `annotations` (by entity id); terms that already
// carry spans keep them.  Locating is skipped when the respective candidate
// list is empty.
Derivation oracle(const LogicalForm& form, const std::vector<std::string>& tokens,
                  const std::vector<EntityAnnotation>& annotations);

// Replays a derivation and returns the resulting tree.
LogicalForm reconstruct(const Derivation& derivation, TransitionLimits limits = {});

// Non-terminal buffer candidates: token positions outside entity annotation
// spans and not in the punctuation stoplist.
std::vector<std::size_t> nonterminal_candidates(const std::vector<std::string>& tokens,
                                                const std::vector<EntityAnnotation>& annotations);

}  // namespace sempar
