#include "doctest.h"
#include "pipeline.hpp"
#include "test_util.hpp"

using namespace sempar;

TEST_CASE("dataset records parse and format back") {
  auto ex = parse_dataset(
      "which states border texas\t3:4:texas:0.9\tlf answer(next_to(texas))\n"
      "# a comment line\n"
      "how many states\t-\tden 4\n");
  REQUIRE(ex.size() == 2);
  CHECK(ex[0].tokens.size() == 4);
  CHECK(ex[0].annotations.size() == 1);
  CHECK(ex[0].annotations[0].entity == "texas");
  CHECK(ex[0].annotations[0].score == doctest::Approx(0.9));
  REQUIRE(ex[0].gold_form.has_value());
  CHECK(ex[0].gold_form->head().label == "answer");
  CHECK(*ex[1].gold_denotation == Denotation::of_count(4));

  CHECK(format_example(ex[0]) == "which states border texas\t3:4:texas:0.9\tlf answer(next_to(texas))");
  CHECK(format_example(ex[1]) == "how many states\t-\tden 4");
}

TEST_CASE("dataset error reporting") {
  CHECK_THROWS_AS(parse_dataset("just tokens\t-\n"), Error);                       // missing field
  CHECK_THROWS_AS(parse_dataset("a b\t5:6:texas:1\tlf answer(x(all))\n"), Error);  // span out of range
  CHECK_THROWS_AS(parse_dataset("a b\t0:1:t:1;0:2:u:1\tden {}\n"), Error);         // overlap
  CHECK_THROWS_AS(parse_dataset("a b\t-\tlf answer(\n"), Error);                   // bad funql
  CHECK_THROWS_AS(parse_dataset("a b\t-\tguess 4\n"), Error);                      // bad supervision
  CHECK_THROWS_AS(parse_dataset("\t-\tden 4\n"), Error);                           // no tokens
}

TEST_CASE("checkpoint save/load round-trips bit-exactly") {
  KnowledgeBase kb = test_util::four_state_kb();
  auto dataset = parse_dataset("which states border texas\t3:4:texas:1.0\tlf answer(next_to(texas))\n");
  Model m = [&] {
    ModelDims dims;
    dims.word = 7;
    dims.lstm = 5;
    dims.entity = 6;
    dims.general = 6;
    dims.grounded = 6;
    dims.attention = 4;
    Rng rng(3);
    return Model(dims, build_vocabulary(dataset, kb, GeneralInventory::standard()),
                 GeneralInventory::standard(), rng);
  }();

  test_util::TempFile f("model.ckpt");
  m.save(f.path);
  Model back = Model::load(f.path);
  CHECK(back.dims.word == m.dims.word);
  CHECK(back.vocab.words == m.vocab.words);
  CHECK(back.vocab.entities == m.vocab.entities);
  CHECK(back.vocab.grounded == m.vocab.grounded);
  for (std::size_t i = 0; i < m.parameters().size(); ++i)
    CHECK(back.parameters()[i]->value == m.parameters()[i]->value);

  // Saving the loaded model reproduces the file byte for byte.
  test_util::TempFile g("model2.ckpt");
  back.save(g.path);
  CHECK(test_util::slurp(f.path) == test_util::slurp(g.path));

  test_util::TempFile bad("bad.ckpt", "not a checkpoint\n");
  CHECK_THROWS_AS(Model::load(bad.path), Error);
}

TEST_CASE("pretrained embeddings override matching rows only") {
  KnowledgeBase kb = test_util::four_state_kb();
  auto dataset = parse_dataset("which states border texas\t3:4:texas:1.0\tlf answer(next_to(texas))\n");
  ModelDims dims;
  dims.word = 3;
  dims.lstm = 4;
  dims.entity = 4;
  dims.general = 4;
  dims.grounded = 4;
  dims.attention = 3;
  Rng rng(4);
  Model m(dims, build_vocabulary(dataset, kb, GeneralInventory::standard()), GeneralInventory::standard(),
          rng);
  auto before = m.word_emb.value;

  test_util::TempFile emb("glove.txt",
                          "states 1.5 -0.5 2.0\n"
                          "unknown_token 9 9 9\n");
  CHECK(m.load_pretrained_words(emb.path) == 1);
  std::size_t id = m.vocab.word_id("states");
  CHECK(m.word_emb.at(id, 0) == doctest::Approx(1.5));
  CHECK(m.word_emb.at(id, 2) == doctest::Approx(2.0));
  // Rows for other tokens keep their random initialization.
  std::size_t other = m.vocab.word_id("border");
  CHECK(m.word_emb.at(other, 0) == before[other * dims.word]);

  test_util::TempFile short_line("glove_bad.txt", "states 1.0\n");
  CHECK_THROWS_AS(m.load_pretrained_words(short_line.path), Error);
}

TEST_CASE("option strings parse with overrides and comments") {
  auto opts = parse_options("seed = 7\nepochs=3  # short run\n\nbeam = 4\n");
  CHECK(opts.at("seed") == "7");
  CHECK(opts.at("epochs") == "3");
  CHECK(opts.at("beam") == "4");
  CHECK_THROWS_AS(parse_options("no_equals_here\n"), Error);

  PipelineConfig c = PipelineConfig::from_options(opts);
  CHECK(c.seed_set);
  CHECK(c.training.seed == 7);
  CHECK(c.training.epochs == 3);
  CHECK(c.decode.beam == 4);
  CHECK_THROWS_AS(PipelineConfig::from_options({{"bogus", "1"}}), Error);
  CHECK_THROWS_AS(PipelineConfig::from_options({{"epochs", "many"}}), Error);
}

TEST_CASE("oracle-check pipeline reports round trips and per-line failures") {
  auto dataset = parse_dataset(
      "which states border texas\t3:4:texas:1.0\tlf answer(next_to(texas))\n"
      "name all states\t-\tlf answer(state(all))\n"
      "how many states\t-\tden 4\n");
  auto outcome = run_oracle_check(dataset);
  CHECK(outcome.total == 2);  // the denotation example has no form to check
  CHECK(outcome.ok == 2);
  CHECK(outcome.errors.empty());
  CHECK(outcome.report.find("failures: 0") != std::string::npos);

  // An entity that is not annotated cannot be located.
  auto broken = parse_dataset("which states border texas\t3:4:utah:1.0\tlf answer(next_to(texas))\n");
  auto bad = run_oracle_check(broken);
  CHECK(bad.total == 1);
  CHECK(bad.ok == 0);
  REQUIRE(bad.errors.size() == 1);
  CHECK(bad.errors[0].find("line 1") != std::string::npos);

  auto empty = run_oracle_check({});
  CHECK(empty.total == 0);
  CHECK(empty.report.find("forms: 0") != std::string::npos);
}

TEST_CASE("parse pipeline applies reranker weights and dumps candidates") {
  KnowledgeBase kb = test_util::four_state_kb();
  auto dataset = parse_dataset("which states border texas\t3:4:texas:1.0\tlf answer(next_to(texas))\n");
  Model m = [&] {
    ModelDims dims;
    dims.word = 8;
    dims.lstm = 8;
    dims.entity = 8;
    dims.general = 8;
    dims.grounded = 8;
    dims.attention = 6;
    Rng rng(31);
    return Model(dims, build_vocabulary(dataset, kb, GeneralInventory::standard()),
                 GeneralInventory::standard(), rng);
  }();

  PipelineConfig config;
  config.dump_candidates = true;
  config.grounding.k_per_term = 2;
  RerankerWeights weights{{0.0, 1.0, 0.0, 0.0, 0.0}, 0.0};  // rank purely by likelihood
  ParseOutcome out = run_parse(m, &kb, dataset[0].tokens, dataset[0].annotations, config, &weights);
  REQUIRE(out.selected.has_value());
  CHECK(*out.selected == 0);  // likelihood order and likelihood feature agree
  CHECK(out.report.find("candidates:\n") != std::string::npos);
  for (const auto& c : out.candidates)
    CHECK(out.report.find(print_funql(c.form)) != std::string::npos);
  CHECK(out.report.find("ungrounded: ") != std::string::npos);
}

TEST_CASE("derivation trace renders stack, action, and choices") {
  LogicalForm u = parse_funql("answer(exclude(states(all), border(texas)))");
  std::vector<std::string> tokens = {"which", "states", "do", "not", "border", "texas"};
  std::vector<EntityAnnotation> anns = {{Span{5, 6}, "texas", 1.0}};
  Derivation d = oracle(u, tokens, anns);
  std::string table = render_derivation_table(d);
  CHECK(table.find("STACK\tACTION\tNT CHOICE\tTER CHOICE") == 0);
  CHECK(table.find("\tNT\tanswer\t") != std::string::npos);
  CHECK(table.find("\tTER\t\tall") != std::string::npos);
  CHECK(table.find("answer ( exclude ( states ( all ) , border (\tTER\t\ttexas") != std::string::npos);
  CHECK(table.find("answer ( exclude ( states ( all ) , border ( texas ) ) )\t\t\t") !=
        std::string::npos);
}
