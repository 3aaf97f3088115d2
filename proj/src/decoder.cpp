#include "decoder.hpp"

#include <algorithm>
#include <cmath>

namespace sempar {

using Var = ad::Tape::Var;

namespace {

struct Hypothesis {
  TransitionRunner runner;
  Derivation derivation;
  double score = 0.0;
};

struct Expansion {
  std::size_t hyp = 0;
  ActionKind kind = ActionKind::NT;
  std::optional<Term> term;
  double score = 0.0;
};

Term term_for_row(const Model& m, std::size_t row, const std::vector<EntityAnnotation>& annotations) {
  const Vocabulary& v = m.vocab;
  if (row < v.general.size()) {
    const std::string& label = v.general[row];
    return label == "all" ? Term::all() : Term::general(label);
  }
  const std::string& entity = v.entities[row - v.general.size()];
  Term t = Term::entity(entity);
  for (const auto& a : annotations) {
    if (a.entity == entity) {
      t.span = a.span;
      break;
    }
  }
  return t;
}

}  // namespace

DecodeResult decode(Model& m, const std::vector<std::string>& tokens,
                    const std::vector<EntityAnnotation>& annotations, const DecodeOptions& opts) {
  ad::Tape tape(/*record_grads=*/false);
  std::vector<Hypothesis> beam;
  beam.push_back({TransitionRunner(tape, m, tokens, annotations, opts.limits), {}, 0.0});

  std::vector<Hypothesis> finished;
  for (std::size_t step = 0; step < opts.limits.max_steps && !beam.empty(); ++step) {
    std::vector<Expansion> expansions;
    for (std::size_t h = 0; h < beam.size(); ++h) {
      TransitionRunner& runner = beam[h].runner;
      const auto legal = runner.state().legal_actions();
      Var e_t = runner.step_encoding_now();
      Var action_lp = action_log_probs(tape, m, e_t, legal);
      for (std::size_t a = 0; a < legal.size(); ++a) {
        double alp = tape.value(action_lp)[a];
        switch (legal[a]) {
          case ActionKind::RED:
            expansions.push_back({h, ActionKind::RED, std::nullopt, beam[h].score + alp});
            break;
          case ActionKind::NT: {
            // One normalization over the union of domain-general choices and
            // buffer positions; the chosen term determines the placeholder.
            auto rows = runner.general_nt_candidate_rows();
            std::vector<std::size_t> positions =
                runner.state().step() == 0 ? std::vector<std::size_t>{} : runner.nl_candidate_positions();
            if (rows.empty() && positions.empty()) break;
            Var lp = nt_union_log_probs(tape, m, e_t, runner.stack_state(), runner.buffer_context(),
                                        rows, positions);
            for (std::size_t i = 0; i < rows.size(); ++i)
              expansions.push_back({h, ActionKind::NT, term_for_row(m, rows[i], annotations),
                                    beam[h].score + alp + tape.value(lp)[i]});
            for (std::size_t i = 0; i < positions.size(); ++i) {
              std::size_t pos = positions[i];
              Term t = Term::nl(tokens.at(pos), Span{pos, pos + 1});
              expansions.push_back(
                  {h, ActionKind::NT, std::move(t), beam[h].score + alp + tape.value(lp)[rows.size() + i]});
            }
            break;
          }
          case ActionKind::TER: {
            auto rows = runner.terminal_candidate_rows();
            if (rows.empty()) break;
            Var lp = general_term_log_probs(tape, m, e_t, rows);
            for (std::size_t i = 0; i < rows.size(); ++i)
              expansions.push_back({h, ActionKind::TER, term_for_row(m, rows[i], annotations),
                                    beam[h].score + alp + tape.value(lp)[i]});
            break;
          }
        }
      }
    }
    if (expansions.empty()) break;
    std::stable_sort(expansions.begin(), expansions.end(),
                     [](const Expansion& a, const Expansion& b) { return a.score > b.score; });
    if (expansions.size() > opts.beam) expansions.resize(opts.beam);

    std::vector<Hypothesis> next;
    for (const auto& e : expansions) {
      Hypothesis h = beam[e.hyp];
      h.runner.apply(e.kind, e.term);
      h.derivation.actions.push_back(e.kind == ActionKind::RED
                                         ? Action::red()
                                         : Action{e.kind, slot_for_term(*e.term)});
      if (e.term) h.derivation.terms.push_back(*e.term);
      h.score = e.score;
      if (h.runner.state().finished())
        finished.push_back(std::move(h));
      else
        next.push_back(std::move(h));
    }
    beam = std::move(next);
    if (finished.size() >= opts.beam) break;
  }

  if (finished.empty()) fail(ErrorCode::NoParse, "no finished derivation within the step limit");
  std::stable_sort(finished.begin(), finished.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.score > b.score; });
  const Hypothesis& best = finished.front();
  return {best.derivation, best.runner.state().result(), best.score};
}

double FeatureVector::operator[](std::size_t i) const {
  switch (i) {
    case 0: return entity_linker_score;
    case 1: return aggregated_likelihood;
    case 2: return rel_utterance_similarity;
    case 3: return rel_questionword_similarity;
    case 4: return answer_type_match;
  }
  fail(ErrorCode::Invalid, "feature index out of range");
}

namespace {

struct Slot {
  std::size_t preorder = 0;       // node index in pre-order
  std::size_t position = 0;       // buffer token position of the NL term
  bool child_is_all = false;      // single child is the all marker
  std::size_t n_children = 0;
};

void collect_slots(const LogicalForm& f, std::size_t& index, std::vector<Slot>& slots) {
  std::size_t my_index = index++;
  if (f.head().kind == TermKind::NaturalLanguagePredicate) {
    if (!f.head().span)
      fail(ErrorCode::Invalid, "ungrounded term '" + f.head().label + "' has no buffer span");
    Slot s;
    s.preorder = my_index;
    s.position = f.head().span->begin;
    s.n_children = f.children().size();
    s.child_is_all = f.children().size() == 1 && f.children()[0].head().kind == TermKind::AllMarker;
    slots.push_back(s);
  }
  for (const auto& c : f.children()) collect_slots(c, index, slots);
}

}  // namespace

std::vector<GroundedCandidate> enumerate_groundings(Model& m, const std::vector<std::string>& tokens,
                                                    const DecodeResult& decoded, const GroundingOptions& opts,
                                                    const KnowledgeBase* kb) {
  std::vector<Slot> slots;
  std::size_t index = 0;
  collect_slots(decoded.form, index, slots);

  ad::Tape tape(/*record_grads=*/false);
  auto ctx = encode_buffer(tape, m, tokens);

  // Per slot: top-k (grounded id, log prob), best first.
  std::vector<std::vector<std::pair<std::size_t, double>>> per_slot;
  for (const auto& s : slots) {
    std::vector<std::size_t> gids;
    for (std::size_t g = 0; g < m.vocab.grounded.size(); ++g) {
      if (kb) {
        const std::string& name = m.vocab.grounded[g];
        bool is_unary = kb->unary.count(name) > 0;
        bool is_binary = kb->binary.count(name) > 0;
        if (s.n_children != 1) {
          continue;  // no relation takes more than one argument
        }
        if (s.child_is_all ? !is_unary : !is_binary) continue;
      }
      gids.push_back(g);
    }
    if (gids.empty())
      fail(ErrorCode::NoParse, "empty grounded candidate vocabulary for an ungrounded term");
    Var lp = ground_log_probs(tape, m, ctx.at(s.position), gids);
    std::vector<std::pair<std::size_t, double>> scored;
    for (std::size_t i = 0; i < gids.size(); ++i) scored.push_back({gids[i], tape.value(lp)[i]});
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (scored.size() > opts.k_per_term) scored.resize(opts.k_per_term);
    per_slot.push_back(std::move(scored));
  }

  // Beam over slot positions.
  struct Partial {
    std::vector<std::size_t> choice;  // index into per_slot[i]
    double log_prob = 0.0;
  };
  std::vector<Partial> beam{{{}, 0.0}};
  for (std::size_t s = 0; s < per_slot.size(); ++s) {
    std::vector<Partial> next;
    for (const auto& p : beam) {
      for (std::size_t i = 0; i < per_slot[s].size(); ++i) {
        Partial q = p;
        q.choice.push_back(i);
        q.log_prob += per_slot[s][i].second;
        next.push_back(std::move(q));
      }
    }
    std::stable_sort(next.begin(), next.end(),
                     [](const Partial& a, const Partial& b) { return a.log_prob > b.log_prob; });
    if (next.size() > opts.beam) next.resize(opts.beam);
    beam = std::move(next);
  }

  std::vector<GroundedCandidate> out;
  for (const auto& p : beam) {
    std::map<std::size_t, Term> by_preorder;
    for (std::size_t s = 0; s < slots.size(); ++s) {
      const std::string& name = m.vocab.grounded[per_slot[s][p.choice[s]].first];
      by_preorder[slots[s].preorder] = Term::grounded(name);
    }
    LogicalForm grounded = substitute_terms(
        decoded.form, [&](std::size_t preorder, const Term&) -> std::optional<Term> {
          auto it = by_preorder.find(preorder);
          if (it == by_preorder.end()) return std::nullopt;
          return it->second;
        });
    GroundedCandidate c{grounded, decoded.log_prob + p.log_prob, {}, {}};
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace sempar
