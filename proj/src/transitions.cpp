#include "transitions.hpp"

#include <algorithm>

namespace sempar {

const char* action_kind_name(ActionKind k) {
  switch (k) {
    case ActionKind::NT: return "NT";
    case ActionKind::TER: return "TER";
    case ActionKind::RED: return "RED";
  }
  return "?";
}

ParserState ParserState::initial(std::vector<std::size_t> nt_candidates,
                                 std::vector<EntityAnnotation> ter_candidates, TransitionLimits limits,
                                 const GeneralInventory* inv) {
  ParserState s;
  s.nt_candidates_ = std::move(nt_candidates);
  s.ter_candidates_ = std::move(ter_candidates);
  s.limits_ = limits;
  s.inv_ = inv ? inv : &GeneralInventory::standard();
  return s;
}

const Term* ParserState::top_open() const {
  for (auto it = stack_.rbegin(); it != stack_.rend(); ++it)
    if (it->open) return &it->nonterminal;
  return nullptr;
}

std::size_t ParserState::completed_above_open() const {
  std::size_t n = 0;
  for (auto it = stack_.rbegin(); it != stack_.rend(); ++it) {
    if (it->open) return n;
    ++n;
  }
  return n;
}

std::vector<ActionKind> ParserState::legal_actions() const {
  if (finished_) fail(ErrorCode::Invalid, "legal_actions on a finished state");
  std::vector<ActionKind> out;

  // Arity bookkeeping for the top open non-terminal: fixed-arity
  // domain-general predicates admit no extra children once saturated and
  // cannot reduce before saturation.
  std::size_t have = completed_above_open();
  std::size_t want = 0;  // 0 = unconstrained
  if (const Term* top = top_open()) {
    if (top->kind == TermKind::DomainGeneralPredicate) want = inv_->arity(top->label);
  }
  bool saturated = want != 0 && have >= want;

  if (open_count_ < limits_.max_depth && !saturated) out.push_back(ActionKind::NT);
  if (open_count_ >= 1 && !saturated) out.push_back(ActionKind::TER);
  if (open_count_ >= 1 && !stack_.empty() && !stack_.back().open && (want == 0 || have >= want))
    out.push_back(ActionKind::RED);
  return out;
}

bool ParserState::is_legal(ActionKind k) const {
  auto legal = legal_actions();
  return std::find(legal.begin(), legal.end(), k) != legal.end();
}

ParserState ParserState::apply(ActionKind kind, const std::optional<Term>& term) const {
  if (!is_legal(kind))
    fail(ErrorCode::Invalid, std::string("illegal action ") + action_kind_name(kind));
  if (step_ >= limits_.max_steps) fail(ErrorCode::Invalid, "step limit exceeded");
  ParserState next = *this;
  next.step_ = step_ + 1;
  switch (kind) {
    case ActionKind::NT: {
      if (!term || !term->is_predicate())
        fail(ErrorCode::Invalid, "NT requires a predicate term");
      next.stack_.push_back({true, *term, std::nullopt});
      next.open_count_ = open_count_ + 1;
      break;
    }
    case ActionKind::TER: {
      if (!term || !term->is_leaf_term())
        fail(ErrorCode::Invalid, "TER requires an entity or the all marker");
      next.stack_.push_back({false, {}, LogicalForm(*term)});
      break;
    }
    case ActionKind::RED: {
      if (term) fail(ErrorCode::Invalid, "RED carries no term");
      std::vector<LogicalForm> children;
      while (!next.stack_.empty() && !next.stack_.back().open) {
        children.push_back(*next.stack_.back().tree);
        next.stack_.pop_back();
      }
      std::reverse(children.begin(), children.end());
      Term head = next.stack_.back().nonterminal;
      next.stack_.pop_back();
      LogicalForm tree(std::move(head), std::move(children), *inv_);
      next.stack_.push_back({false, {}, std::move(tree)});
      next.open_count_ = open_count_ - 1;
      next.reduced_once_ = true;
      if (next.open_count_ == 0) next.finished_ = true;
      break;
    }
  }
  return next;
}

const LogicalForm& ParserState::result() const {
  if (!finished_ || stack_.size() != 1 || stack_[0].open)
    fail(ErrorCode::Invalid, "state has no single completed tree");
  return *stack_[0].tree;
}

std::string ParserState::render_stack() const {
  std::string out;
  std::function<void(const LogicalForm&)> render_tree = [&](const LogicalForm& f) {
    out += f.head().label;
    if (!f.is_leaf()) {
      out += " (";
      for (std::size_t i = 0; i < f.children().size(); ++i) {
        if (i) out += " ,";
        out += " ";
        render_tree(f.children()[i]);
      }
      out += " )";
    }
  };
  bool prev_completed = false;
  for (const auto& item : stack_) {
    if (!out.empty()) {
      if (prev_completed) out += " ,";
      out += " ";
    }
    if (item.open) {
      out += item.nonterminal.label + " (";
    } else {
      render_tree(*item.tree);
    }
    prev_completed = !item.open;
  }
  return out;
}

std::string Derivation::to_text() const {
  std::string out;
  std::size_t ti = 0;
  for (const auto& a : actions) {
    out += action_kind_name(a.kind);
    if (a.kind != ActionKind::RED) out += " " + terms.at(ti++).label;
    out += "\n";
  }
  return out;
}

SlotKind slot_for_term(const Term& t) {
  switch (t.kind) {
    case TermKind::DomainGeneralPredicate: return SlotKind::DomainGeneral;
    case TermKind::NaturalLanguagePredicate:
    case TermKind::GroundedPredicate: return SlotKind::NLPredicate;
    case TermKind::Entity: return SlotKind::Entity;
    case TermKind::AllMarker: return SlotKind::All;
  }
  fail(ErrorCode::Internal, "unreachable");
}

namespace {

Term locate(Term t, const std::vector<std::string>& tokens,
            const std::vector<EntityAnnotation>& annotations) {
  if (t.span) return t;
  if (t.kind == TermKind::NaturalLanguagePredicate && !tokens.empty()) {
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (tokens[i] == t.label) {
        t.span = Span{i, i + 1};
        return t;
      }
    }
    fail(ErrorCode::Data, "term '" + t.label + "' is not locatable among the tokens");
  }
  if (t.kind == TermKind::Entity && !annotations.empty()) {
    for (const auto& a : annotations) {
      if (a.entity == t.label) {
        t.span = a.span;
        return t;
      }
    }
    fail(ErrorCode::Data, "entity '" + t.label + "' is not locatable among the annotations");
  }
  return t;
}

void emit(const LogicalForm& f, const std::vector<std::string>& tokens,
          const std::vector<EntityAnnotation>& annotations, Derivation& d) {
  Term t = locate(f.head(), tokens, annotations);
  if (f.is_leaf()) {
    d.actions.push_back(Action::ter(slot_for_term(t)));
    d.terms.push_back(std::move(t));
    return;
  }
  d.actions.push_back(Action::nt(slot_for_term(t)));
  d.terms.push_back(std::move(t));
  for (const auto& c : f.children()) emit(c, tokens, annotations, d);
  d.actions.push_back(Action::red());
}

}  // namespace

Derivation oracle(const LogicalForm& form, const std::vector<std::string>& tokens,
                  const std::vector<EntityAnnotation>& annotations) {
  Derivation d;
  emit(form, tokens, annotations, d);
  return d;
}

LogicalForm reconstruct(const Derivation& derivation, TransitionLimits limits) {
  ParserState state = ParserState::initial({}, {}, limits);
  std::size_t ti = 0;
  for (const auto& a : derivation.actions) {
    if (state.finished()) fail(ErrorCode::Invalid, "actions continue past a finished derivation");
    std::optional<Term> term;
    if (a.kind != ActionKind::RED) {
      if (ti >= derivation.terms.size()) fail(ErrorCode::Invalid, "derivation is missing term choices");
      term = derivation.terms[ti++];
    }
    state = state.apply(a.kind, term);
  }
  if (ti != derivation.terms.size()) fail(ErrorCode::Invalid, "derivation has unused term choices");
  if (!state.finished()) fail(ErrorCode::Invalid, "derivation never finishes");
  return state.result();
}

std::vector<std::size_t> nonterminal_candidates(const std::vector<std::string>& tokens,
                                                const std::vector<EntityAnnotation>& annotations) {
  static const std::set<std::string> kStoplist = {".", ",", "?", "!", ";", ":", "'", "\"", "(", ")"};
  std::vector<bool> in_entity(tokens.size(), false);
  for (const auto& a : annotations)
    for (std::size_t i = a.span.begin; i < a.span.end && i < tokens.size(); ++i) in_entity[i] = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (!in_entity[i] && !kStoplist.count(tokens[i])) out.push_back(i);
  return out;
}

}  // namespace sempar
