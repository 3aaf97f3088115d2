#pragma once

// Differentiable scoring of transition actions and term choices: buffer
// encoder, stack encoder with pointer rewind, additive attention, the
// composition function, and the four softmax heads.

#include <vector>

#include "model.hpp"
#include "transitions.hpp"

namespace sempar {

struct LstmState {
  ad::Tape::Var h = 0, c = 0;
};

LstmState lstm_step(ad::Tape& tape, LstmParams& p, ad::Tape::Var x, const LstmState& prev,
                    std::size_t hidden);

// One contextual vector per token: [forward state ; backward state].
std::vector<ad::Tape::Var> encode_buffer(ad::Tape& tape, Model& m,
                                         const std::vector<std::string>& tokens);

// Stack-structured recurrence: push advances the state, pop rewinds the
// pointer to the exact previous state.  Copies share the underlying tape, so
// beam expansion can fork cheaply.
class StackEncoder {
 public:
  StackEncoder(ad::Tape& tape, Model& m);

  void push(ad::Tape::Var item);  // item vector, entity-sized
  ad::Tape::Var pop();            // returns the popped item vector
  ad::Tape::Var state() const;    // s_t: recurrent state at the stack top
  ad::Tape::Var item(std::size_t depth_from_top = 0) const;
  std::size_t size() const { return items_.size(); }

 private:
  ad::Tape* tape_;
  Model* model_;
  std::vector<LstmState> states_;       // states_[0] is the learned initial state
  std::vector<ad::Tape::Var> items_;
};

// Composition applied on reduce: tanh(W [pred ; mean(children)] + b).
ad::Tape::Var compose(ad::Tape& tape, Model& m, ad::Tape::Var predicate,
                      const std::vector<ad::Tape::Var>& children);

// Additive attention over buffer vectors conditioned on the stack state;
// returns the weighted buffer summary b_t.
ad::Tape::Var attend(ad::Tape& tape, Model& m, const std::vector<ad::Tape::Var>& buffer_context,
                     ad::Tape::Var stack_state);

ad::Tape::Var attention_weights(ad::Tape& tape, Model& m,
                                const std::vector<ad::Tape::Var>& buffer_context,
                                ad::Tape::Var stack_state);

// e_t = [b_t ; s_t].
ad::Tape::Var step_encoding(ad::Tape& tape, Model& m, const std::vector<ad::Tape::Var>& buffer_context,
                            ad::Tape::Var stack_state);

// Log-probabilities over `legal` action kinds (softmax of the action head
// restricted to the legal set), aligned with `legal`'s order.
ad::Tape::Var action_log_probs(ad::Tape& tape, Model& m, ad::Tape::Var e_t,
                               const std::vector<ActionKind>& legal);

// Log-probabilities over rows of the joint general+entity term head,
// restricted to `candidate_rows` (see Vocabulary::term_head_*).
ad::Tape::Var general_term_log_probs(ad::Tape& tape, Model& m, ad::Tape::Var e_t,
                                     const std::vector<std::size_t>& candidate_rows);

// Log-probabilities over candidate buffer positions: score_i = x_i . (W s_t).
ad::Tape::Var nl_term_log_probs(ad::Tape& tape, Model& m, ad::Tape::Var stack_state,
                                const std::vector<ad::Tape::Var>& buffer_context,
                                const std::vector<std::size_t>& candidate_positions);

// Raw (pre-softmax) scores for the same candidates; used for joint
// normalization with the general head during decoding.
std::vector<ad::Tape::Var> nl_term_scores(ad::Tape& tape, Model& m, ad::Tape::Var stack_state,
                                          const std::vector<ad::Tape::Var>& buffer_context,
                                          const std::vector<std::size_t>& candidate_positions);

// Bilinear grounding: log p(g | u) over candidate grounded term ids given the
// contextual vector of the ungrounded term.
ad::Tape::Var ground_log_probs(ad::Tape& tape, Model& m, ad::Tape::Var u_context,
                               const std::vector<std::size_t>& grounded_ids);

// The NT term choice normalizes once over both candidate families: the
// domain-general rows (scored by the term head) and the buffer positions
// (scored by the selection head).  Entries align general-first.
ad::Tape::Var nt_union_log_probs(ad::Tape& tape, Model& m, ad::Tape::Var e_t, ad::Tape::Var stack_state,
                                 const std::vector<ad::Tape::Var>& buffer_context,
                                 const std::vector<std::size_t>& general_rows,
                                 const std::vector<std::size_t>& candidate_positions);

struct SequenceLogProb {
  double log_prob = 0.0;
  std::size_t action_terms = 0;
  std::size_t term_terms = 0;
};

// log p(U | x) of a full ungrounded derivation: per-step action
// log-probabilities plus term log-probabilities at NT/TER steps.
SequenceLogProb sequence_log_prob(Model& m, const std::vector<std::string>& tokens,
                                  const std::vector<EntityAnnotation>& annotations,
                                  const Derivation& derivation, TransitionLimits limits = {});

// Drives StackEncoder in lockstep with a ParserState.  Training replay and
// decoding share this.
class TransitionRunner {
 public:
  TransitionRunner(ad::Tape& tape, Model& m, const std::vector<std::string>& tokens,
                   std::vector<EntityAnnotation> annotations, TransitionLimits limits = {});

  // Reuses an already-encoded buffer (several replays over one example).
  TransitionRunner(ad::Tape& tape, Model& m, std::shared_ptr<const std::vector<ad::Tape::Var>> ctx,
                   const std::vector<std::string>& tokens, std::vector<EntityAnnotation> annotations,
                   TransitionLimits limits = {});

  // Forked copies share the tape (persistent-state beam expansion).
  TransitionRunner(const TransitionRunner&) = default;
  TransitionRunner& operator=(const TransitionRunner&) = default;

  const ParserState& state() const { return state_; }
  const std::vector<ad::Tape::Var>& buffer_context() const { return *ctx_; }
  ad::Tape::Var stack_state() const { return encoder_.state(); }
  ad::Tape::Var step_encoding_now();

  // Item vector for a term about to be pushed.
  ad::Tape::Var item_vector(const Term& term);

  void apply(ActionKind kind, const std::optional<Term>& term);

  // Term-head candidate sets for the current step.
  std::vector<std::size_t> general_nt_candidate_rows() const;  // root -> {answer}
  std::vector<std::size_t> terminal_candidate_rows() const;    // {all} + annotated entities
  std::vector<std::size_t> nl_candidate_positions() const;

  const std::vector<EntityAnnotation>& annotations() const { return annotations_; }
  std::shared_ptr<const std::vector<ad::Tape::Var>> shared_context() const { return ctx_; }

 private:
  ad::Tape* tape_;
  Model* model_;
  std::shared_ptr<const std::vector<ad::Tape::Var>> ctx_;  // shared across beam forks
  std::vector<EntityAnnotation> annotations_;
  ParserState state_;
  StackEncoder encoder_;
};

}  // namespace sempar
