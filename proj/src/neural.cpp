#include "neural.hpp"

#include <algorithm>

namespace sempar {

using Var = ad::Tape::Var;

LstmState lstm_step(ad::Tape& tape, LstmParams& p, Var x, const LstmState& prev, std::size_t hidden) {
  Var gates = tape.add(tape.add(tape.matvec(p.wx, x), tape.matvec(p.wh, prev.h)), tape.param(p.b));
  Var i = tape.sigmoid_of(tape.slice(gates, 0, hidden));
  Var f = tape.sigmoid_of(tape.slice(gates, hidden, hidden));
  Var o = tape.sigmoid_of(tape.slice(gates, 2 * hidden, hidden));
  Var g = tape.tanh_of(tape.slice(gates, 3 * hidden, hidden));
  Var c = tape.add(tape.cmul(f, prev.c), tape.cmul(i, g));
  Var h = tape.cmul(o, tape.tanh_of(c));
  return {h, c};
}

std::vector<Var> encode_buffer(ad::Tape& tape, Model& m, const std::vector<std::string>& tokens) {
  if (tokens.empty()) fail(ErrorCode::Invalid, "cannot encode an empty utterance");
  std::size_t n = tokens.size();
  std::vector<Var> embs(n);
  for (std::size_t i = 0; i < n; ++i)
    embs[i] = tape.param_row(m.word_emb, m.vocab.word_id(tokens[i]));

  LstmState zero{tape.constant(std::vector<double>(m.dims.lstm, 0.0)),
                 tape.constant(std::vector<double>(m.dims.lstm, 0.0))};
  std::vector<Var> fw(n), bw(n);
  LstmState s = zero;
  for (std::size_t i = 0; i < n; ++i) {
    s = lstm_step(tape, m.buf_fw, embs[i], s, m.dims.lstm);
    fw[i] = s.h;
  }
  s = zero;
  for (std::size_t i = n; i-- > 0;) {
    s = lstm_step(tape, m.buf_bw, embs[i], s, m.dims.lstm);
    bw[i] = s.h;
  }
  std::vector<Var> ctx(n);
  for (std::size_t i = 0; i < n; ++i) ctx[i] = tape.concat({fw[i], bw[i]});
  return ctx;
}

StackEncoder::StackEncoder(ad::Tape& tape, Model& m) : tape_(&tape), model_(&m) {
  states_.push_back({tape.param(m.stack_h0), tape.param(m.stack_c0)});
}

void StackEncoder::push(Var item) {
  states_.push_back(lstm_step(*tape_, model_->stack, item, states_.back(), model_->dims.lstm));
  items_.push_back(item);
}

Var StackEncoder::pop() {
  if (items_.empty()) fail(ErrorCode::Internal, "pop on an empty stack encoder");
  Var item = items_.back();
  items_.pop_back();
  states_.pop_back();
  return item;
}

Var StackEncoder::state() const { return states_.back().h; }

Var StackEncoder::item(std::size_t depth_from_top) const {
  return items_.at(items_.size() - 1 - depth_from_top);
}

Var compose(ad::Tape& tape, Model& m, Var predicate, const std::vector<Var>& children) {
  Var kids = tape.mean(children);
  Var in = tape.concat({predicate, kids});
  return tape.tanh_of(tape.add(tape.matvec(m.comp_w, in), tape.param(m.comp_b)));
}

Var attention_weights(ad::Tape& tape, Model& m, const std::vector<Var>& buffer_context, Var stack_state) {
  Var s_proj = tape.matvec(m.att_ws, stack_state);
  Var v = tape.param(m.att_v);
  std::vector<Var> scores;
  scores.reserve(buffer_context.size());
  for (Var x : buffer_context)
    scores.push_back(tape.dot(v, tape.tanh_of(tape.add(tape.matvec(m.att_wx, x), s_proj))));
  return tape.softmax(tape.stack_scalars(scores));
}

Var attend(ad::Tape& tape, Model& m, const std::vector<Var>& buffer_context, Var stack_state) {
  Var w = attention_weights(tape, m, buffer_context, stack_state);
  return tape.weighted_sum(w, buffer_context);
}

Var step_encoding(ad::Tape& tape, Model& m, const std::vector<Var>& buffer_context, Var stack_state) {
  Var b_t = attend(tape, m, buffer_context, stack_state);
  return tape.concat({b_t, stack_state});
}

namespace {

std::size_t action_row(ActionKind k) {
  switch (k) {
    case ActionKind::NT: return 0;
    case ActionKind::TER: return 1;
    case ActionKind::RED: return 2;
  }
  return 0;
}

}  // namespace

Var action_log_probs(ad::Tape& tape, Model& m, Var e_t, const std::vector<ActionKind>& legal) {
  if (legal.empty()) fail(ErrorCode::Invalid, "no legal actions to score");
  Var logits = tape.matvec(m.w_action, e_t);
  std::vector<std::size_t> rows;
  rows.reserve(legal.size());
  for (ActionKind k : legal) rows.push_back(action_row(k));
  return tape.log_softmax(tape.gather(logits, rows));
}

Var general_term_log_probs(ad::Tape& tape, Model& m, Var e_t, const std::vector<std::size_t>& candidate_rows) {
  if (candidate_rows.empty()) fail(ErrorCode::Invalid, "empty term candidate set");
  Var logits = tape.matvec(m.w_term, e_t);
  return tape.log_softmax(tape.gather(logits, candidate_rows));
}

std::vector<Var> nl_term_scores(ad::Tape& tape, Model& m, Var stack_state,
                                const std::vector<Var>& buffer_context,
                                const std::vector<std::size_t>& candidate_positions) {
  Var key = tape.matvec(m.w_select, stack_state);
  std::vector<Var> scores;
  scores.reserve(candidate_positions.size());
  for (std::size_t pos : candidate_positions) scores.push_back(tape.dot(buffer_context.at(pos), key));
  return scores;
}

Var nl_term_log_probs(ad::Tape& tape, Model& m, Var stack_state, const std::vector<Var>& buffer_context,
                      const std::vector<std::size_t>& candidate_positions) {
  if (candidate_positions.empty()) fail(ErrorCode::Invalid, "no buffer candidates to score");
  return tape.log_softmax(
      tape.stack_scalars(nl_term_scores(tape, m, stack_state, buffer_context, candidate_positions)));
}

Var ground_log_probs(ad::Tape& tape, Model& m, Var u_context, const std::vector<std::size_t>& grounded_ids) {
  if (grounded_ids.empty()) fail(ErrorCode::Invalid, "empty grounded candidate vocabulary");
  Var key = tape.vecmat(u_context, m.w_ground);  // u W, then dotted with each grounded embedding
  std::vector<Var> scores;
  scores.reserve(grounded_ids.size());
  for (std::size_t gid : grounded_ids) scores.push_back(tape.dot(key, tape.param_row(m.grounded_emb, gid)));
  return tape.log_softmax(tape.stack_scalars(scores));
}

Var nt_union_log_probs(ad::Tape& tape, Model& m, Var e_t, Var stack_state,
                       const std::vector<Var>& buffer_context,
                       const std::vector<std::size_t>& general_rows,
                       const std::vector<std::size_t>& candidate_positions) {
  if (general_rows.empty() && candidate_positions.empty())
    fail(ErrorCode::Invalid, "no non-terminal candidates to score");
  std::vector<Var> scores;
  scores.reserve(general_rows.size() + candidate_positions.size());
  if (!general_rows.empty()) {
    Var logits = tape.matvec(m.w_term, e_t);
    for (std::size_t r : general_rows) scores.push_back(tape.pick(logits, r));
  }
  auto nl = nl_term_scores(tape, m, stack_state, buffer_context, candidate_positions);
  scores.insert(scores.end(), nl.begin(), nl.end());
  return tape.log_softmax(tape.stack_scalars(scores));
}

TransitionRunner::TransitionRunner(ad::Tape& tape, Model& m, const std::vector<std::string>& tokens,
                                   std::vector<EntityAnnotation> annotations, TransitionLimits limits)
    : TransitionRunner(tape, m, std::make_shared<std::vector<Var>>(encode_buffer(tape, m, tokens)), tokens,
                       std::move(annotations), limits) {}

TransitionRunner::TransitionRunner(ad::Tape& tape, Model& m, std::shared_ptr<const std::vector<Var>> ctx,
                                   const std::vector<std::string>& tokens,
                                   std::vector<EntityAnnotation> annotations, TransitionLimits limits)
    : tape_(&tape),
      model_(&m),
      ctx_(std::move(ctx)),
      annotations_(std::move(annotations)),
      state_(ParserState::initial(nonterminal_candidates(tokens, annotations_), annotations_, limits,
                                  &m.inventory)),
      encoder_(tape, m) {}

Var TransitionRunner::step_encoding_now() {
  return step_encoding(*tape_, *model_, *ctx_, encoder_.state());
}

Var TransitionRunner::item_vector(const Term& term) {
  switch (term.kind) {
    case TermKind::DomainGeneralPredicate:
    case TermKind::AllMarker: {
      auto gid = model_->vocab.general_id(term.label);
      if (!gid) fail(ErrorCode::Data, "domain-general term '" + term.label + "' is out of vocabulary");
      return tape_->param_row(model_->general_emb, *gid);
    }
    case TermKind::Entity: {
      auto eid = model_->vocab.entity_id(term.label);
      if (!eid) fail(ErrorCode::Data, "entity '" + term.label + "' is out of vocabulary");
      return tape_->param_row(model_->entity_emb, *eid);
    }
    case TermKind::NaturalLanguagePredicate: {
      if (!term.span) fail(ErrorCode::Invalid, "natural-language term '" + term.label + "' has no span");
      Var x = ctx_->at(term.span->begin);
      return tape_->tanh_of(
          tape_->add(tape_->matvec(model_->nl_proj_w, x), tape_->param(model_->nl_proj_b)));
    }
    case TermKind::GroundedPredicate: {
      auto gid = model_->vocab.grounded_id(term.label);
      if (!gid) fail(ErrorCode::Data, "grounded term '" + term.label + "' is out of vocabulary");
      return tape_->param_row(model_->grounded_emb, *gid);
    }
  }
  fail(ErrorCode::Internal, "unreachable");
}

void TransitionRunner::apply(ActionKind kind, const std::optional<Term>& term) {
  if (kind == ActionKind::RED) {
    std::size_t n_children = state_.completed_above_open();
    state_ = state_.apply(kind, std::nullopt);
    std::vector<Var> children(n_children);
    for (std::size_t i = n_children; i-- > 0;) children[i] = encoder_.pop();
    Var pred = encoder_.pop();
    encoder_.push(compose(*tape_, *model_, pred, children));
    return;
  }
  state_ = state_.apply(kind, term);
  encoder_.push(item_vector(*term));
}

std::vector<std::size_t> TransitionRunner::general_nt_candidate_rows() const {
  const Vocabulary& v = model_->vocab;
  std::vector<std::size_t> rows;
  if (state_.step() == 0) {
    auto gid = v.general_id("answer");
    if (!gid) fail(ErrorCode::Data, "'answer' missing from the general vocabulary");
    rows.push_back(v.term_head_general(*gid));
    return rows;
  }
  for (const std::string& label : model_->inventory.nonterminal_labels()) {
    if (label == "answer") continue;  // root only
    if (auto gid = v.general_id(label)) rows.push_back(v.term_head_general(*gid));
  }
  return rows;
}

std::vector<std::size_t> TransitionRunner::terminal_candidate_rows() const {
  const Vocabulary& v = model_->vocab;
  std::vector<std::size_t> rows;
  if (auto all_id = v.general_id("all")) rows.push_back(v.term_head_general(*all_id));
  std::set<std::size_t> seen;
  for (const auto& a : annotations_) {
    if (auto eid = v.entity_id(a.entity)) {
      if (seen.insert(*eid).second) rows.push_back(v.term_head_entity(*eid));
    }
  }
  return rows;
}

std::vector<std::size_t> TransitionRunner::nl_candidate_positions() const {
  return state_.nt_candidates();
}

SequenceLogProb sequence_log_prob(Model& m, const std::vector<std::string>& tokens,
                                  const std::vector<EntityAnnotation>& annotations,
                                  const Derivation& derivation, TransitionLimits limits) {
  ad::Tape tape(/*record_grads=*/false);
  TransitionRunner runner(tape, m, tokens, annotations, limits);
  SequenceLogProb out;
  std::size_t ti = 0;
  for (const Action& a : derivation.actions) {
    auto legal = runner.state().legal_actions();
    Var e_t = runner.step_encoding_now();
    Var alp = action_log_probs(tape, m, e_t, legal);
    auto it = std::find(legal.begin(), legal.end(), a.kind);
    if (it == legal.end()) fail(ErrorCode::Invalid, "derivation applies an illegal action");
    out.log_prob += tape.value(alp)[static_cast<std::size_t>(it - legal.begin())];
    out.action_terms += 1;

    if (a.kind == ActionKind::RED) {
      runner.apply(a.kind, std::nullopt);
      continue;
    }
    const Term& term = derivation.terms.at(ti++);
    if (a.kind == ActionKind::NT) {
      auto rows = runner.general_nt_candidate_rows();
      auto positions = runner.state().step() == 0 ? std::vector<std::size_t>{}
                                                  : runner.nl_candidate_positions();
      Var lp = nt_union_log_probs(tape, m, e_t, runner.stack_state(), runner.buffer_context(), rows,
                                  positions);
      std::size_t index;
      if (term.kind == TermKind::DomainGeneralPredicate) {
        auto gid = m.vocab.general_id(term.label);
        if (!gid) fail(ErrorCode::Data, "term '" + term.label + "' is out of vocabulary");
        auto pos = std::find(rows.begin(), rows.end(), m.vocab.term_head_general(*gid));
        if (pos == rows.end()) fail(ErrorCode::Invalid, "'" + term.label + "' is not a candidate here");
        index = static_cast<std::size_t>(pos - rows.begin());
      } else {
        if (!term.span) fail(ErrorCode::Invalid, "term '" + term.label + "' has no buffer span");
        auto pos = std::find(positions.begin(), positions.end(), term.span->begin);
        if (pos == positions.end())
          fail(ErrorCode::Invalid, "position of '" + term.label + "' is not a buffer candidate");
        index = rows.size() + static_cast<std::size_t>(pos - positions.begin());
      }
      out.log_prob += tape.value(lp)[index];
    } else {
      auto rows = runner.terminal_candidate_rows();
      std::size_t want;
      if (term.kind == TermKind::AllMarker) {
        auto gid = m.vocab.general_id("all");
        if (!gid) fail(ErrorCode::Data, "'all' is out of vocabulary");
        want = m.vocab.term_head_general(*gid);
      } else {
        auto eid = m.vocab.entity_id(term.label);
        if (!eid) fail(ErrorCode::Data, "entity '" + term.label + "' is out of vocabulary");
        want = m.vocab.term_head_entity(*eid);
      }
      auto pos = std::find(rows.begin(), rows.end(), want);
      if (pos == rows.end()) fail(ErrorCode::Invalid, "'" + term.label + "' is not a candidate here");
      Var lp = general_term_log_probs(tape, m, e_t, rows);
      out.log_prob += tape.value(lp)[static_cast<std::size_t>(pos - rows.begin())];
    }
    out.term_terms += 1;
    runner.apply(a.kind, term);
  }
  return out;
}

}  // namespace sempar
