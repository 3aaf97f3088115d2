#include <cmath>

#include "decoder.hpp"
#include "doctest.h"
#include "neural.hpp"
#include "test_util.hpp"

using namespace sempar;
using ad::Tape;
using test_util::tiny_model;

namespace {

double prob_sum(const std::vector<double>& log_probs) {
  double s = 0;
  for (double lp : log_probs) s += std::exp(lp);
  return s;
}

}  // namespace

TEST_CASE("buffer encoding shapes") {
  Model m = tiny_model();
  Tape t;
  std::vector<std::string> six = {"w0", "w1", "w2", "w3", "w4", "w5"};
  auto ctx = encode_buffer(t, m, six);
  REQUIRE(ctx.size() == 6);
  for (auto v : ctx) CHECK(t.value(v).size() == m.dims.context());
  CHECK_THROWS_AS(encode_buffer(t, m, {}), Error);
}

TEST_CASE("length-one buffer equals a single cell application per direction") {
  Model m = tiny_model();
  Tape t;
  auto ctx = encode_buffer(t, m, {"w3"});
  LstmState zero{t.constant(std::vector<double>(m.dims.lstm, 0.0)),
                 t.constant(std::vector<double>(m.dims.lstm, 0.0))};
  auto emb = t.param_row(m.word_emb, m.vocab.word_id("w3"));
  auto fw = lstm_step(t, m.buf_fw, emb, zero, m.dims.lstm);
  auto bw = lstm_step(t, m.buf_bw, emb, zero, m.dims.lstm);
  auto expect = t.value(t.concat({fw.h, bw.h}));
  CHECK(t.value(ctx[0]) == expect);
}

TEST_CASE("permuting interior tokens changes their contextual vectors") {
  Model m = tiny_model();
  Tape t;
  auto a = encode_buffer(t, m, {"w0", "w1", "w2", "w3"});
  auto b = encode_buffer(t, m, {"w0", "w2", "w1", "w3"});
  CHECK(t.value(a[1]) != t.value(b[1]));
  CHECK(t.value(a[2]) != t.value(b[2]));
}

TEST_CASE("stack encoder push/pop rewinds the state exactly") {
  Model m = tiny_model();
  Tape t;
  StackEncoder enc(t, m);
  auto s0 = t.value(enc.state());
  CHECK(s0 == m.stack_h0.value);  // learned initial state

  auto x = t.constant(std::vector<double>(m.dims.entity, 0.25));
  enc.push(x);
  CHECK(t.value(enc.state()) != s0);
  enc.pop();
  CHECK(t.value(enc.state()) == s0);  // bit-exact rewind
}

TEST_CASE("composition is deterministic and symmetric under child order") {
  Model m = tiny_model();
  Tape t;
  Rng rng(3);
  std::vector<double> pv(m.dims.entity), c1(m.dims.entity), c2(m.dims.entity);
  for (auto* v : {&pv, &c1, &c2})
    for (auto& x : *v) x = rng.uniform(-1, 1);
  auto p = t.constant(pv);
  auto a = t.constant(c1);
  auto b = t.constant(c2);
  auto ab = t.value(compose(t, m, p, {a, b}));
  auto ab2 = t.value(compose(t, m, p, {a, b}));
  auto ba = t.value(compose(t, m, p, {b, a}));
  CHECK(ab == ab2);
  CHECK(ab == ba);  // children are averaged before composition
  CHECK(ab.size() == m.dims.entity);
}

TEST_CASE("attention reduces to the arithmetic mean with zeroed score parameters") {
  Model m = tiny_model();
  std::fill(m.att_v.value.begin(), m.att_v.value.end(), 0.0);
  Tape t;
  auto ctx = encode_buffer(t, m, {"w0", "w1", "w2"});
  auto b_t = attend(t, m, ctx, t.param(m.stack_h0));
  auto mean = t.value(t.mean({ctx[0], ctx[1], ctx[2]}));
  auto got = t.value(b_t);
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(mean[i]).epsilon(1e-12));
}

TEST_CASE("attention over a single token returns that token") {
  Model m = tiny_model();
  Tape t;
  auto ctx = encode_buffer(t, m, {"w1"});
  auto b_t = attend(t, m, ctx, t.param(m.stack_h0));
  CHECK(t.value(b_t) == t.value(ctx[0]));
}

TEST_CASE("attention weights sum to one on random inputs") {
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    Model m = tiny_model(rng.next());
    Tape t;
    std::vector<std::string> tokens;
    for (std::size_t i = 0; i < 1 + rng.below(5); ++i) tokens.push_back("w" + std::to_string(rng.below(6)));
    auto ctx = encode_buffer(t, m, tokens);
    auto w = attention_weights(t, m, ctx, t.param(m.stack_h0));
    double s = 0;
    for (double x : t.value(w)) {
      CHECK(x >= 0.0);
      s += x;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("action head masks illegal kinds and is uniform at zero weights") {
  Model m = tiny_model();
  std::fill(m.w_action.value.begin(), m.w_action.value.end(), 0.0);
  Tape t;
  TransitionRunner runner(t, m, {"w0", "w1"}, {});
  auto e = runner.step_encoding_now();

  auto legal = runner.state().legal_actions();
  CHECK(legal == std::vector<ActionKind>{ActionKind::NT});  // initial state: NT only
  auto lp = action_log_probs(t, m, e, legal);
  CHECK(t.value(lp)[0] == doctest::Approx(0.0));  // all mass on NT

  auto three = action_log_probs(t, m, e, {ActionKind::NT, ActionKind::TER, ActionKind::RED});
  for (double x : t.value(three)) CHECK(std::exp(x) == doctest::Approx(1.0 / 3));
}

TEST_CASE("action head gradient matches finite differences") {
  Model m = tiny_model();
  auto loss = [&] {
    Tape t;
    TransitionRunner runner(t, m, {"w0", "w1", "w2"}, {});
    auto e = runner.step_encoding_now();
    auto lp = action_log_probs(t, m, e, {ActionKind::NT, ActionKind::TER, ActionKind::RED});
    return -t.scalar(t.pick(lp, 2));
  };
  m.zero_grads();
  {
    Tape t;
    TransitionRunner runner(t, m, {"w0", "w1", "w2"}, {});
    auto e = runner.step_encoding_now();
    auto lp = action_log_probs(t, m, e, {ActionKind::NT, ActionKind::TER, ActionKind::RED});
    t.backward(t.scale(t.pick(lp, 2), -1.0));
  }
  auto rep = test_util::fd_check({&m.w_action, &m.att_v, &m.stack_h0, &m.w_select}, loss);
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("general term head: restriction, uniformity, singleton") {
  Model m = tiny_model();
  std::fill(m.w_term.value.begin(), m.w_term.value.end(), 0.0);
  Tape t;
  TransitionRunner runner(t, m, {"w0"}, {});
  auto e = runner.step_encoding_now();
  std::vector<std::size_t> rows = {0, 3, 5, 9};
  auto lp = general_term_log_probs(t, m, e, rows);
  for (double x : t.value(lp)) CHECK(std::exp(x) == doctest::Approx(0.25));
  auto single = general_term_log_probs(t, m, e, {7});
  CHECK(t.value(single)[0] == doctest::Approx(0.0));
  CHECK_THROWS_AS(general_term_log_probs(t, m, e, {}), Error);
}

TEST_CASE("general term head gradient matches finite differences") {
  Model m = tiny_model();
  auto build = [&](Tape& t) {
    TransitionRunner runner(t, m, {"w0", "w2"}, {});
    auto e = runner.step_encoding_now();
    auto lp = general_term_log_probs(t, m, e, {1, 4, 8});
    return t.scale(t.pick(lp, 0), -1.0);
  };
  m.zero_grads();
  {
    Tape t;
    t.backward(build(t));
  }
  auto rep = test_util::fd_check({&m.w_term, &m.word_emb, &m.buf_fw.wx}, [&] {
    Tape t;
    return t.scalar(build(t));
  });
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("selection head over buffer positions") {
  Model m = tiny_model();
  Tape t;
  TransitionRunner runner(t, m, {"w0", "w1", "w2", "w3"}, {});
  auto single = nl_term_log_probs(t, m, runner.stack_state(), runner.buffer_context(), {2});
  CHECK(t.value(single)[0] == doctest::Approx(0.0));  // sole candidate gets probability 1

  std::fill(m.w_select.value.begin(), m.w_select.value.end(), 0.0);
  Model zeroed = m;
  Tape t2;
  TransitionRunner runner2(t2, zeroed, {"w0", "w1", "w2", "w3"}, {});
  auto lp = nl_term_log_probs(t2, zeroed, runner2.stack_state(), runner2.buffer_context(), {0, 1, 3});
  for (double x : t2.value(lp)) CHECK(std::exp(x) == doctest::Approx(1.0 / 3));
}

TEST_CASE("selection head gradient matches finite differences") {
  Model m = tiny_model();
  auto build = [&](Tape& t) {
    TransitionRunner runner(t, m, {"w0", "w1", "w2"}, {});
    auto lp = nl_term_log_probs(t, m, runner.stack_state(), runner.buffer_context(), {0, 1, 2});
    return t.scale(t.pick(lp, 1), -1.0);
  };
  m.zero_grads();
  {
    Tape t;
    t.backward(build(t));
  }
  auto rep = test_util::fd_check({&m.w_select, &m.stack_h0, &m.word_emb}, [&] {
    Tape t;
    return t.scalar(build(t));
  });
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("grounding head: uniform at zero, aligned under identity") {
  Model m = tiny_model();
  std::fill(m.w_ground.value.begin(), m.w_ground.value.end(), 0.0);
  Tape t;
  auto u = t.constant(std::vector<double>(m.dims.context(), 0.3));
  auto lp = ground_log_probs(t, m, u, {0, 1, 2});
  for (double x : t.value(lp)) CHECK(std::exp(x) == doctest::Approx(1.0 / 3));

  // One-hot grounded embeddings, identity-like mapping: the grounded term
  // whose hot coordinate matches the context's dominant coordinate wins.
  ModelDims dims;
  dims.word = 4;
  dims.lstm = 2;  // context = 4
  dims.entity = 4;
  dims.general = 4;
  dims.grounded = 4;
  dims.attention = 3;
  Vocabulary vocab;
  vocab.add_word("w0");
  vocab.general = {"all", "answer"};
  vocab.grounded = {"g0", "g1", "g2"};
  Rng rng(11);
  Model toy(dims, vocab, GeneralInventory(std::set<std::string>{}), rng);
  std::fill(toy.w_ground.value.begin(), toy.w_ground.value.end(), 0.0);
  for (std::size_t i = 0; i < 4; ++i) toy.w_ground.at(i, i) = 1.0;  // identity
  std::fill(toy.grounded_emb.value.begin(), toy.grounded_emb.value.end(), 0.0);
  toy.grounded_emb.at(0, 0) = 1.0;
  toy.grounded_emb.at(1, 1) = 1.0;
  toy.grounded_emb.at(2, 2) = 1.0;
  Tape t2;
  auto u2 = t2.constant({0.1, 0.9, 0.2, 0.0});  // dominant coordinate 1
  auto lp2 = ground_log_probs(t2, toy, u2, {0, 1, 2});
  auto v = t2.value(lp2);
  CHECK(v[1] > v[0]);
  CHECK(v[1] > v[2]);
}

TEST_CASE("grounding head gradient matches finite differences") {
  Model m = tiny_model();
  auto build = [&](Tape& t) {
    TransitionRunner runner(t, m, {"w0", "w1"}, {});
    auto lp = ground_log_probs(t, m, runner.buffer_context()[1], {0, 1, 2});
    return t.scale(t.pick(lp, 2), -1.0);
  };
  m.zero_grads();
  {
    Tape t;
    t.backward(build(t));
  }
  auto rep = test_util::fd_check({&m.w_ground, &m.grounded_emb, &m.word_emb}, [&] {
    Tape t;
    return t.scalar(build(t));
  });
  CHECK(rep.max_rel < 1e-4);
}

TEST_CASE("all heads normalize within 1e-6 on random configurations") {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    Model m = tiny_model(rng.next());
    Tape t;
    std::vector<std::string> tokens = {"w0", "w5", "w2"};
    std::vector<EntityAnnotation> anns = {{Span{2, 3}, "texas", 0.9}};
    TransitionRunner runner(t, m, tokens, anns);
    auto e = runner.step_encoding_now();
    auto check_lp = [&](Tape::Var lp) { CHECK(prob_sum(t.value(lp)) == doctest::Approx(1.0).epsilon(1e-6)); };
    check_lp(action_log_probs(t, m, e, {ActionKind::NT}));
    check_lp(general_term_log_probs(t, m, e, {0, 2, 4, 6}));
    check_lp(nl_term_log_probs(t, m, runner.stack_state(), runner.buffer_context(), {0, 1}));
    check_lp(ground_log_probs(t, m, runner.buffer_context()[0], {0, 1, 2}));
    double s = 0;
    for (double x : t.value(attention_weights(t, m, runner.buffer_context(), runner.stack_state()))) s += x;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("sequence probability counts action and term factors") {
  Model m = tiny_model();
  std::vector<std::string> tokens = {"which", "states", "w0", "w1", "border", "texas_tok"};
  std::vector<EntityAnnotation> anns = {{Span{5, 6}, "texas", 1.0}};

  LogicalForm u = parse_funql("answer(exclude(states(all), border(texas)))");
  Derivation d = oracle(u, tokens, anns);
  auto run = sequence_log_prob(m, tokens, anns, d);
  CHECK(run.action_terms == 10);
  CHECK(run.term_terms == 6);
  CHECK(std::exp(run.log_prob) <= 1.0);
  CHECK(std::isfinite(run.log_prob));

  LogicalForm tiny = parse_funql("answer(texas)");
  Derivation d2 = oracle(tiny, tokens, anns);
  auto run2 = sequence_log_prob(m, tokens, anns, d2);
  CHECK(run2.action_terms == 3);
  CHECK(run2.term_terms == 2);  // NT answer + TER texas; RED carries no term
}

TEST_CASE("greedy decoding is deterministic") {
  Model m = tiny_model();
  std::vector<std::string> tokens = {"which", "states", "border", "texas_tok"};
  std::vector<EntityAnnotation> anns = {{Span{3, 4}, "texas", 1.0}};
  DecodeResult a = decode(m, tokens, anns);
  DecodeResult b = decode(m, tokens, anns);
  CHECK(print_funql(a.form) == print_funql(b.form));
  CHECK(a.log_prob == b.log_prob);
  CHECK(is_complete_form(a.form));
}

TEST_CASE("beam decoding never scores below greedy and stays deterministic") {
  Rng rng(71);
  for (int trial = 0; trial < 10; ++trial) {
    Model m = tiny_model(rng.next());
    std::vector<std::string> tokens = {"which", "states", "border", "texas_tok"};
    std::vector<EntityAnnotation> anns = {{Span{3, 4}, "texas", 1.0}};
    DecodeOptions greedy;
    DecodeOptions wide;
    wide.beam = 8;
    DecodeResult g = decode(m, tokens, anns, greedy);
    DecodeResult w1 = decode(m, tokens, anns, wide);
    DecodeResult w2 = decode(m, tokens, anns, wide);
    CHECK(w1.log_prob >= g.log_prob - 1e-12);
    CHECK(print_funql(w1.form) == print_funql(w2.form));
    CHECK(w1.log_prob == w2.log_prob);
  }
}

TEST_CASE("decoding reports no-parse when the step limit cuts every hypothesis") {
  Model m = tiny_model();
  DecodeOptions opts;
  opts.limits.max_steps = 2;  // far too few to close any tree
  CHECK_THROWS_AS(decode(m, {"which", "states"}, {}, opts), Error);
  try {
    decode(m, {"which", "states"}, {}, opts);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoParse);
  }
}
