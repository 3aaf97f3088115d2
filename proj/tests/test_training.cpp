#include <cmath>

#include "doctest.h"
#include "pipeline.hpp"
#include "test_util.hpp"
#include "training.hpp"

using namespace sempar;
using ad::Tape;
using test_util::four_state_kb;

namespace {

TrainingExample make_example(const std::string& tokens, const std::string& annotations,
                             const std::string& supervision) {
  auto parsed = parse_dataset(tokens + "\t" + annotations + "\t" + supervision);
  return parsed.at(0);
}

Model small_model(const std::vector<TrainingExample>& dataset, const KnowledgeBase& kb,
                  std::uint64_t seed = 21, std::size_t width = 8) {
  ModelDims dims;
  dims.word = width;
  dims.lstm = width;
  dims.entity = width;
  dims.general = width;
  dims.grounded = width;
  dims.attention = width > 2 ? width - 2 : width;
  Rng rng(seed);
  return Model(dims, build_vocabulary(dataset, kb, GeneralInventory::standard()),
               GeneralInventory::standard(), rng);
}

// Exhaustive enumeration of latent assignments: probability of the branch,
// its forced-term log-likelihood, and its grounding reward.
struct Branch {
  double p = 1.0;
  double forced_logp = 0.0;
  double reward = 0.0;
};

void enumerate_branches(Tape& tape, Model& m, TransitionRunner runner, const Derivation& d,
                        std::size_t step, std::size_t ti, Branch acc, std::vector<Branch>& out) {
  if (step == d.actions.size()) {
    out.push_back(acc);
    return;
  }
  const Action& a = d.actions[step];
  Tape::Var e_t = runner.step_encoding_now();
  if (a.kind == ActionKind::RED) {
    runner.apply(a.kind, std::nullopt);
    enumerate_branches(tape, m, std::move(runner), d, step + 1, ti, acc, out);
    return;
  }
  const Term& gold = d.terms.at(ti);
  if (slot_for_term(gold) != SlotKind::NLPredicate) {
    std::vector<std::size_t> rows = gold.kind == TermKind::DomainGeneralPredicate
                                        ? runner.general_nt_candidate_rows()
                                        : runner.terminal_candidate_rows();
    std::size_t want = gold.kind == TermKind::Entity
                           ? m.vocab.term_head_entity(*m.vocab.entity_id(gold.label))
                           : m.vocab.term_head_general(*m.vocab.general_id(gold.label));
    auto pos = std::find(rows.begin(), rows.end(), want);
    REQUIRE(pos != rows.end());
    auto lp = general_term_log_probs(tape, m, e_t, rows);
    acc.forced_logp += tape.value(lp)[static_cast<std::size_t>(pos - rows.begin())];
    runner.apply(a.kind, gold);
    enumerate_branches(tape, m, std::move(runner), d, step + 1, ti + 1, acc, out);
    return;
  }
  auto rows = runner.general_nt_candidate_rows();
  auto positions = runner.nl_candidate_positions();
  auto union_lp = nt_union_log_probs(tape, m, e_t, runner.stack_state(), runner.buffer_context(), rows,
                                     positions);
  double mass = 0.0;
  for (std::size_t c = 0; c < positions.size(); ++c) mass += std::exp(tape.value(union_lp)[rows.size() + c]);
  std::vector<std::size_t> all_grounded(m.vocab.grounded.size());
  for (std::size_t i = 0; i < all_grounded.size(); ++i) all_grounded[i] = i;
  for (std::size_t c = 0; c < positions.size(); ++c) {
    Branch next = acc;
    next.p *= std::exp(tape.value(union_lp)[rows.size() + c]) / mass;
    std::size_t pos = positions[c];
    auto glp = ground_log_probs(tape, m, runner.buffer_context().at(pos), all_grounded);
    next.reward += tape.value(glp)[*m.vocab.grounded_id(gold.label)];
    TransitionRunner fork = runner;
    // Tokens are addressed by position; the pushed label is the token itself.
    fork.apply(a.kind, Term::nl("tok" + std::to_string(pos), Span{pos, pos + 1}));
    enumerate_branches(tape, m, std::move(fork), d, step + 1, ti + 1, next, out);
  }
}

std::vector<Branch> enumerate_example(Model& m, const TrainingExample& ex, const LogicalForm& grounded) {
  Tape tape(/*record_grads=*/false);
  TransitionRunner runner(tape, m, ex.tokens, ex.annotations);
  Derivation d = oracle(grounded, ex.tokens, ex.annotations);
  std::vector<Branch> out;
  enumerate_branches(tape, m, std::move(runner), d, 0, 0, Branch{}, out);
  return out;
}

}  // namespace

TEST_CASE("action loss at zero action weights is uniform over legal kinds") {
  KnowledgeBase kb = four_state_kb();
  auto ex = make_example("which states border texas_tok", "3:4:texas:1.0", "lf answer(next_to(texas))");
  Model m = small_model({ex}, kb);
  std::fill(m.w_action.value.begin(), m.w_action.value.end(), 0.0);

  // Expected: sum of log legal-set sizes along the gold derivation.
  Derivation d = oracle(*ex.gold_form, ex.tokens, ex.annotations);
  ParserState s = ParserState::initial(nonterminal_candidates(ex.tokens, ex.annotations), ex.annotations);
  double expect = 0.0;
  std::size_t ti = 0;
  for (const auto& a : d.actions) {
    expect += std::log(static_cast<double>(s.legal_actions().size()));
    std::optional<Term> term;
    if (a.kind != ActionKind::RED) term = d.terms[ti++];
    if (term && term->kind == TermKind::GroundedPredicate) term = Term::nl("x", Span{0, 1});
    s = s.apply(a.kind, term);
  }

  Rng rng(5);
  CHECK(action_loss(m, ex, *ex.gold_form, rng) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("gold derivation contributes one action factor per action") {
  KnowledgeBase kb = four_state_kb();
  auto ex = make_example("which states do not border texas_tok", "5:6:texas:1.0",
                         "lf answer(exclude(state(all), next_to(texas)))");
  Model m = small_model({ex}, kb);
  Tape tape;
  Rng rng(6);
  auto loss = example_loss(tape, m, ex, *ex.gold_form, 1, rng, nullptr);
  CHECK(loss.values.action_steps == 10);
  CHECK(loss.values.term_steps == 6);
  CHECK(std::isfinite(loss.values.total()));
}

TEST_CASE("optimizing one example decreases the loss monotonically") {
  KnowledgeBase kb = four_state_kb();
  // One buffer candidate only: the latent choice is deterministic.
  auto ex = make_example("border texas_tok", "1:2:texas:1.0", "lf answer(next_to(texas))");
  Model m = small_model({ex}, kb);
  Adam adam(0.01, 0.9, 0.999);
  auto params = m.parameters();
  Rng rng(7);
  double prev = 1e300;
  for (int iter = 0; iter < 50; ++iter) {
    Tape tape;
    auto loss = example_loss(tape, m, ex, *ex.gold_form, 1, rng, nullptr);
    CHECK(loss.values.total() < prev + 1e-12);
    prev = loss.values.total();
    m.zero_grads();
    tape.backward(loss.backprop);
    adam.step(params);
  }
}

TEST_CASE("term loss is exactly the supervised cross-entropy with singleton candidates") {
  KnowledgeBase kb = four_state_kb();
  auto ex = make_example("border texas_tok", "1:2:texas:1.0", "lf answer(next_to(texas))");
  Model m = small_model({ex}, kb);
  auto branches = enumerate_example(m, ex, *ex.gold_form);
  REQUIRE(branches.size() == 1);  // singleton latent space
  CHECK(branches[0].p == doctest::Approx(1.0));
  double direct = -branches[0].forced_logp - branches[0].reward;
  Rng rng(8);
  CHECK(term_loss_expected(m, ex, *ex.gold_form, 1, rng) == doctest::Approx(direct).epsilon(1e-9));
  Rng rng2(99);
  CHECK(term_loss_expected(m, ex, *ex.gold_form, 7, rng2) == doctest::Approx(direct).epsilon(1e-9));
}

TEST_CASE("Monte-Carlo term loss approaches the enumerated expectation") {
  KnowledgeBase kb = four_state_kb();
  // Two buffer candidates -> two latent sequences.
  auto ex = make_example("states border texas_tok", "2:3:texas:1.0", "lf answer(next_to(texas))");
  Model m = small_model({ex}, kb);
  auto branches = enumerate_example(m, ex, *ex.gold_form);
  REQUIRE(branches.size() == 2);
  double p_total = 0.0;
  double exact = 0.0;
  for (const auto& b : branches) {
    p_total += b.p;
    exact += b.p * (-b.forced_logp - b.reward);
  }
  CHECK(p_total == doctest::Approx(1.0).epsilon(1e-9));

  Rng rng(9);
  double mc = 0.0;
  const int chunks = 100, per_chunk = 100;  // 10000 samples, bounded tape sizes
  for (int c = 0; c < chunks; ++c) mc += term_loss_expected(m, ex, *ex.gold_form, per_chunk, rng);
  mc /= chunks;
  CHECK(std::abs(mc - exact) / std::abs(exact) < 0.02);
}

TEST_CASE("the expected term log-likelihood lower-bounds the marginal") {
  KnowledgeBase kb = four_state_kb();
  auto ex = make_example("states border near texas_tok", "3:4:texas:1.0", "lf answer(next_to(texas))");
  Model m = small_model({ex}, kb);
  auto branches = enumerate_example(m, ex, *ex.gold_form);
  REQUIRE(branches.size() == 3);
  double expected = 0.0;   // E_u[log p(g | u, x)]
  double marginal = 0.0;   // p(g | x)
  for (const auto& b : branches) {
    expected += b.p * (b.forced_logp + b.reward);
    marginal += b.p * std::exp(b.forced_logp + b.reward);
  }
  CHECK(expected <= std::log(marginal) + 1e-12);
}

TEST_CASE("Adam leaves parameters unchanged under zero gradients") {
  KnowledgeBase kb = four_state_kb();
  auto ex = make_example("border texas_tok", "1:2:texas:1.0", "lf answer(next_to(texas))");
  Model m = small_model({ex}, kb);
  auto before = m.w_action.value;
  Adam adam(0.001, 0.99, 0.999);
  m.zero_grads();
  adam.step(m.parameters());
  CHECK(m.w_action.value == before);
}

TEST_CASE("training is deterministic and reports stable skip counts") {
  KnowledgeBase kb = four_state_kb();
  std::vector<TrainingExample> dataset = {
      make_example("which states border texas_tok", "3:4:texas:1.0", "lf answer(next_to(texas))"),
      make_example("name all states", "-", "lf answer(state(all))"),
      // Unreachable denotation: skipped, but counted the same way every run.
      make_example("mystery", "-", "den {atlantis}"),
  };
  TrainingConfig config;
  config.epochs = 2;
  config.seed = 33;
  config.latent_samples = 2;

  Model m1 = small_model(dataset, kb);
  auto r1 = train(m1, dataset, kb, config);
  Model m2 = small_model(dataset, kb);
  auto r2 = train(m2, dataset, kb, config);
  REQUIRE(r1.history.size() == 2);
  CHECK(r1.skipped_examples == 1);
  CHECK(r2.skipped_examples == 1);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(r1.history[e].mean_loss == r2.history[e].mean_loss);
    CHECK(r1.history[e].skipped == 1);
  }
  CHECK(m1.w_action.value == m2.w_action.value);
  CHECK(std::isfinite(r1.history[0].mean_loss));
}

TEST_CASE("initial loss is finite on every bundled fixture") {
  KnowledgeBase kb = KnowledgeBase::load(test_util::fixture_path("toy_geo.kb"));
  for (const char* name : {"overfit50.tsv", "denotation_train.tsv", "oracle_fixture.tsv"}) {
    auto dataset = load_dataset(test_util::fixture_path(name));
    Model m = small_model(dataset, kb, 77, 8);
    TrainingConfig config;
    config.epochs = 1;
    config.seed = 3;
    config.latent_samples = 1;
    auto result = train(m, dataset, kb, config);
    CHECK(std::isfinite(result.history.front().mean_loss));
    CHECK(result.history.front().used > 0);
  }
}

TEST_CASE("training rejects an empty dataset and all-skipped datasets") {
  KnowledgeBase kb = four_state_kb();
  TrainingConfig config;
  config.seed = 1;
  Model m = small_model({}, kb);
  CHECK_THROWS_AS(train(m, {}, kb, config), Error);
  std::vector<TrainingExample> hopeless = {make_example("mystery", "-", "den {atlantis}")};
  Model m2 = small_model(hopeless, kb);
  CHECK_THROWS_AS(train(m2, hopeless, kb, config), Error);
}

TEST_CASE("a few epochs on a small corpus drive the loss down and recover forms") {
  KnowledgeBase kb = four_state_kb();
  std::vector<TrainingExample> dataset = {
      make_example("which states border texas_tok", "3:4:texas:1.0", "lf answer(next_to(texas))"),
      make_example("which states border oklahoma_tok", "3:4:oklahoma:1.0", "lf answer(next_to(oklahoma))"),
      make_example("which states do not border texas_tok", "5:6:texas:1.0",
                   "lf answer(exclude(state(all), next_to(texas)))"),
      make_example("name all states", "-", "lf answer(state(all))"),
      make_example("how many states are there", "-", "lf answer(count(state(all)))"),
      make_example("what is the largest state", "-", "lf answer(largest(state(all)))"),
  };
  Model m = small_model(dataset, kb, 21, 12);
  TrainingConfig config;
  config.epochs = 300;
  config.seed = 17;
  config.latent_samples = 3;
  config.learning_rate = 0.005;
  auto result = train(m, dataset, kb, config);
  CHECK(result.history.back().mean_loss < 0.5 * result.history.front().mean_loss);

  std::size_t exact = 0;
  for (const auto& ex : dataset) {
    try {
      DecodeResult u = decode(m, ex.tokens, ex.annotations);
      auto candidates = enumerate_groundings(m, ex.tokens, u, {}, &kb);
      if (!candidates.empty() &&
          print_funql(candidates.front().form) == print_funql(*ex.gold_form))
        ++exact;
    } catch (const Error&) {
    }
  }
  CHECK(exact >= 5);  // at least five of six memorized
}
