#include "training.hpp"

#include <algorithm>
#include <cmath>

namespace sempar {

using Var = ad::Tape::Var;

void Adam::step(const std::vector<ad::Tensor*>& params) {
  if (m_.empty()) {
    for (const ad::Tensor* t : params) {
      m_.emplace_back(t->size(), 0.0);
      v_.emplace_back(t->size(), 0.0);
    }
  }
  if (m_.size() != params.size()) fail(ErrorCode::Internal, "Adam state does not match parameters");
  ++t_;
  double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    ad::Tensor& t = *params[p];
    for (std::size_t i = 0; i < t.size(); ++i) {
      double g = t.grad[i];
      m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g;
      v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g * g;
      double mhat = m_[p][i] / c1;
      double vhat = v_[p][i] / c2;
      t.value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

namespace {

struct SampleReplay {
  std::vector<Var> action_ces;     // per-step action cross-entropies
  std::vector<Var> term_ces;       // forced-term and grounding cross-entropies
  std::vector<Var> mass_nlls;      // -log union mass on buffer positions, per latent slot
  std::vector<Var> sampled_logps;  // log q of the sampled latent choices (restricted)
  double reward = 0.0;             // sum of gold grounding log-probs under the sample
  double action_nll = 0.0;
  double term_nll = 0.0;
  double mass_nll = 0.0;
  std::size_t action_steps = 0;
  std::size_t term_steps = 0;
};

SampleReplay replay_sample(ad::Tape& tape, Model& m, TransitionRunner runner,
                           const std::vector<std::string>& tokens, const Derivation& derivation,
                           Rng& rng) {
  SampleReplay out;
  std::vector<std::size_t> all_grounded(m.vocab.grounded.size());
  for (std::size_t i = 0; i < all_grounded.size(); ++i) all_grounded[i] = i;

  std::size_t ti = 0;
  for (const Action& a : derivation.actions) {
    auto legal = runner.state().legal_actions();
    Var e_t = runner.step_encoding_now();
    Var alp = action_log_probs(tape, m, e_t, legal);
    auto it = std::find(legal.begin(), legal.end(), a.kind);
    if (it == legal.end()) fail(ErrorCode::Invalid, "gold derivation applies an illegal action");
    Var a_ce = tape.scale(tape.pick(alp, static_cast<std::size_t>(it - legal.begin())), -1.0);
    out.action_ces.push_back(a_ce);
    out.action_nll += tape.scalar(a_ce);
    out.action_steps += 1;

    if (a.kind == ActionKind::RED) {
      runner.apply(a.kind, std::nullopt);
      continue;
    }
    const Term& gold = derivation.terms.at(ti++);
    if (a.kind == ActionKind::TER) {
      auto rows = runner.terminal_candidate_rows();
      std::size_t want;
      if (gold.kind == TermKind::Entity) {
        auto eid = m.vocab.entity_id(gold.label);
        if (!eid) fail(ErrorCode::Data, "entity '" + gold.label + "' is out of vocabulary");
        want = m.vocab.term_head_entity(*eid);
      } else {
        auto gid = m.vocab.general_id(gold.label);
        if (!gid) fail(ErrorCode::Data, "term '" + gold.label + "' is out of vocabulary");
        want = m.vocab.term_head_general(*gid);
      }
      auto pos = std::find(rows.begin(), rows.end(), want);
      if (pos == rows.end())
        fail(ErrorCode::Data, "gold term '" + gold.label + "' is not among the step's candidates");
      Var lp = general_term_log_probs(tape, m, e_t, rows);
      Var ce = tape.scale(tape.pick(lp, static_cast<std::size_t>(pos - rows.begin())), -1.0);
      out.term_ces.push_back(ce);
      out.term_nll += tape.scalar(ce);
      out.term_steps += 1;
      runner.apply(a.kind, gold);
      continue;
    }

    // NT: one normalization over domain-general candidates and buffer
    // positions.
    auto rows = runner.general_nt_candidate_rows();
    auto positions = runner.state().step() == 0 ? std::vector<std::size_t>{}
                                                : runner.nl_candidate_positions();
    Var union_lp = nt_union_log_probs(tape, m, e_t, runner.stack_state(), runner.buffer_context(), rows,
                                      positions);
    if (gold.kind == TermKind::DomainGeneralPredicate) {
      auto gid = m.vocab.general_id(gold.label);
      if (!gid) fail(ErrorCode::Data, "term '" + gold.label + "' is out of vocabulary");
      auto pos = std::find(rows.begin(), rows.end(), m.vocab.term_head_general(*gid));
      if (pos == rows.end())
        fail(ErrorCode::Data, "gold term '" + gold.label + "' is not among the step's candidates");
      Var ce = tape.scale(tape.pick(union_lp, static_cast<std::size_t>(pos - rows.begin())), -1.0);
      out.term_ces.push_back(ce);
      out.term_nll += tape.scalar(ce);
      out.term_steps += 1;
      runner.apply(a.kind, gold);
      continue;
    }

    // The gold term is the grounded relation; the ungrounded token is latent.
    // Sample a buffer position from the union distribution restricted to
    // positions, score the grounding of the gold relation against that
    // token's context, and push the token.  The mass the union puts on the
    // positions enters the bound as its own factor.
    if (positions.empty()) fail(ErrorCode::Data, "no legal ungrounded term for '" + gold.label + "'");
    std::vector<std::size_t> block(positions.size());
    for (std::size_t i = 0; i < block.size(); ++i) block[i] = rows.size() + i;
    Var mass_lp = tape.logsumexp(tape.gather(union_lp, block));
    out.mass_nlls.push_back(tape.scale(mass_lp, -1.0));
    out.mass_nll -= tape.scalar(mass_lp);

    std::vector<double> probs(positions.size());
    for (std::size_t i = 0; i < probs.size(); ++i)
      probs[i] = std::exp(tape.value(union_lp)[rows.size() + i]);
    std::size_t choice = rng.categorical(probs);
    out.sampled_logps.push_back(tape.sub(tape.pick(union_lp, rows.size() + choice), mass_lp));

    auto gid = m.vocab.grounded_id(gold.label);
    if (!gid) fail(ErrorCode::Data, "grounded term '" + gold.label + "' is out of vocabulary");
    std::size_t pos = positions[choice];
    Var glp = ground_log_probs(tape, m, runner.buffer_context().at(pos), all_grounded);
    Var ce = tape.scale(tape.pick(glp, *gid), -1.0);
    out.term_ces.push_back(ce);
    out.reward += tape.value(glp)[*gid];
    out.term_nll += tape.scalar(ce);
    out.term_steps += 1;

    runner.apply(a.kind, Term::nl(tokens.at(pos), Span{pos, pos + 1}));
  }
  return out;
}

}  // namespace

ExampleLoss example_loss(ad::Tape& tape, Model& m, const TrainingExample& ex, const LogicalForm& grounded,
                         std::size_t latent_samples, Rng& rng, double* baseline,
                         const TransitionLimits& limits) {
  if (latent_samples < 1) fail(ErrorCode::Invalid, "latent_samples must be at least 1");
  Derivation derivation = oracle(grounded, ex.tokens, ex.annotations);
  auto ctx = std::make_shared<std::vector<Var>>(encode_buffer(tape, m, ex.tokens));

  ExampleLoss out;
  double reward_sum = 0.0;
  std::vector<SampleReplay> replays;
  for (std::size_t s = 0; s < latent_samples; ++s) {
    TransitionRunner runner(tape, m, ctx, ex.tokens, ex.annotations, limits);
    replays.push_back(replay_sample(tape, m, runner, ex.tokens, derivation, rng));
    reward_sum += replays.back().reward;
  }
  double b = baseline && *baseline == *baseline ? *baseline : reward_sum / latent_samples;
  double inv_m = 1.0 / static_cast<double>(latent_samples);
  std::vector<Var> action_parts, term_parts, mass_parts, score_parts;
  for (const auto& r : replays) {
    action_parts.push_back(tape.sum(r.action_ces));
    term_parts.push_back(tape.sum(r.term_ces));
    if (!r.mass_nlls.empty()) mass_parts.push_back(tape.sum(r.mass_nlls));
    if (!r.sampled_logps.empty()) {
      // Score-function term: descend on -(reward - baseline) * log q(u).
      score_parts.push_back(tape.scale(tape.sum(r.sampled_logps), -(r.reward - b)));
    }
    out.values.action_nll += r.action_nll * inv_m;
    out.values.term_nll += r.term_nll * inv_m;
    out.values.mass_nll += r.mass_nll * inv_m;
    out.values.action_steps = r.action_steps;
    out.values.term_steps = r.term_steps;
  }
  out.action = tape.scale(tape.sum(action_parts), inv_m);
  out.term = tape.scale(tape.sum(term_parts), inv_m);
  out.mass = mass_parts.empty() ? tape.constant({0.0}) : tape.scale(tape.sum(mass_parts), inv_m);
  Var total = tape.add(tape.add(out.action, out.term), out.mass);
  if (!score_parts.empty()) total = tape.add(total, tape.scale(tape.sum(score_parts), inv_m));
  out.backprop = total;
  if (baseline) {
    double mean_reward = reward_sum * inv_m;
    *baseline = *baseline == *baseline ? 0.9 * *baseline + 0.1 * mean_reward : mean_reward;
  }
  return out;
}

double action_loss(Model& m, const TrainingExample& ex, const LogicalForm& grounded, Rng& rng,
                   const TransitionLimits& limits) {
  ad::Tape tape;
  return example_loss(tape, m, ex, grounded, 1, rng, nullptr, limits).values.action_nll;
}

double term_loss_expected(Model& m, const TrainingExample& ex, const LogicalForm& grounded,
                          std::size_t latent_samples, Rng& rng, const TransitionLimits& limits) {
  ad::Tape tape;
  return example_loss(tape, m, ex, grounded, latent_samples, rng, nullptr, limits).values.term_nll;
}

TrainResult train(Model& m, const std::vector<TrainingExample>& dataset, const KnowledgeBase& kb,
                  const TrainingConfig& config) {
  if (dataset.empty()) fail(ErrorCode::Data, "empty dataset");
  if (config.batch_size != 1) fail(ErrorCode::Invalid, "only batch size 1 is supported");
  Rng rng(config.seed);

  // Resolve supervision once: gold forms are checked against the oracle and
  // the vocabulary, denotations get their surrogate sets.
  auto form_usable = [&](const TrainingExample& ex, const LogicalForm& form) {
    try {
      Derivation d = oracle(form, ex.tokens, ex.annotations);
      if (reconstruct(d, config.limits) != form) return false;
      bool ok = true;
      form.visit([&](const LogicalForm& n) {
        const Term& t = n.head();
        if (t.kind == TermKind::Entity && !m.vocab.entity_id(t.label)) ok = false;
        if (t.kind == TermKind::GroundedPredicate && !m.vocab.grounded_id(t.label)) ok = false;
        if ((t.kind == TermKind::DomainGeneralPredicate || t.kind == TermKind::AllMarker) &&
            !m.vocab.general_id(t.label))
          ok = false;
      });
      return ok;
    } catch (const Error&) {
      return false;
    }
  };

  struct Prepared {
    std::size_t index;
    std::optional<LogicalForm> gold;
    std::vector<LogicalForm> surrogates;
  };
  std::vector<Prepared> usable;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const TrainingExample& ex = dataset[i];
    if (ex.gold_form && form_usable(ex, *ex.gold_form)) {
      usable.push_back({i, ex.gold_form, {}});
    } else if (!ex.gold_form && ex.gold_denotation) {
      auto forms = surrogate_search(ex.tokens, ex.annotations, *ex.gold_denotation, kb,
                                    config.surrogate_limits, config.exec);
      std::erase_if(forms, [&](const LogicalForm& f) { return !form_usable(ex, f); });
      // Keep only the smallest surrogates: epoch-to-epoch supervision stays
      // structurally consistent and the multiplicity stays low.
      if (!forms.empty()) {
        std::size_t best = SIZE_MAX;
        for (const auto& f : forms) best = std::min(best, f.predicate_count());
        std::erase_if(forms, [&](const LogicalForm& f) { return f.predicate_count() != best; });
      }
      if (forms.empty()) {
        ++skipped;
      } else {
        usable.push_back({i, std::nullopt, std::move(forms)});
      }
    } else {
      ++skipped;
    }
  }
  if (usable.empty()) fail(ErrorCode::Data, "all examples were skipped");

  Adam adam(config.learning_rate, config.beta1, config.beta2);
  auto params = m.parameters();
  // One running reward baseline per example: rewards are sums over a
  // derivation's latent slots, so their scale varies with derivation length.
  std::vector<double> baselines(usable.size(), std::nan(""));

  TrainResult result;
  result.skipped_examples = skipped;
  std::size_t surrogate_users = 0, surrogate_total = 0;
  for (const auto& prep : usable) {
    if (!prep.gold) {
      ++surrogate_users;
      surrogate_total += prep.surrogates.size();
    }
  }
  if (surrogate_users)
    result.surrogate_multiplicity = static_cast<double>(surrogate_total) / surrogate_users;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(usable.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t oi : order) {
      const Prepared& prep = usable[oi];
      const TrainingExample& ex = dataset[prep.index];
      const LogicalForm& grounded =
          prep.gold ? *prep.gold : prep.surrogates[rng.below(prep.surrogates.size())];
      ad::Tape tape;
      ExampleLoss loss = example_loss(tape, m, ex, grounded, config.latent_samples, rng, &baselines[oi],
                                      config.limits);
      m.zero_grads();
      tape.backward(loss.backprop);
      adam.step(params);
      loss_sum += loss.values.total();
    }
    result.history.push_back({epoch, loss_sum / usable.size(), usable.size(), skipped});
  }
  return result;
}

}  // namespace sempar
