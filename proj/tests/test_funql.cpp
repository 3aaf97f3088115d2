#include "doctest.h"
#include "funql.hpp"
#include "test_util.hpp"

using namespace sempar;

TEST_CASE("parse builds the expected tree shapes") {
  LogicalForm f = parse_funql("answer(exclude(state(all), next_to(texas)))", TermKind::GroundedPredicate);
  CHECK(f.head().label == "answer");
  REQUIRE(f.children().size() == 1);
  const LogicalForm& ex = f.children()[0];
  CHECK(ex.head().label == "exclude");
  REQUIRE(ex.children().size() == 2);
  CHECK(print_funql(ex.children()[0]) == "state(all)");
  CHECK(print_funql(ex.children()[1]) == "next_to(texas)");

  LogicalForm single = parse_funql("answer(texas)");
  REQUIRE(single.children().size() == 1);
  CHECK(single.children()[0].head().kind == TermKind::Entity);

  LogicalForm counted = parse_funql("answer(count(state(all)))");
  CHECK(counted.depth() == 4);
  CHECK(print_funql(counted) == "answer(count(state(all)))");
}

TEST_CASE("parse classifies terms") {
  LogicalForm u = parse_funql("answer(exclude(states(all), border(texas)))");
  CHECK(u.children()[0].head().kind == TermKind::DomainGeneralPredicate);
  CHECK(u.children()[0].children()[0].head().kind == TermKind::NaturalLanguagePredicate);
  CHECK(u.children()[0].children()[0].children()[0].head().kind == TermKind::AllMarker);
  LogicalForm typed = parse_funql("answer(stateid(texas))");
  CHECK(typed.children()[0].head().kind == TermKind::DomainGeneralPredicate);
}

TEST_CASE("parse rejects malformed text") {
  CHECK_THROWS_AS(parse_funql("answer(state(all)"), Error);        // unbalanced
  CHECK_THROWS_AS(parse_funql("answer(state(all))x"), Error);      // trailing
  CHECK_THROWS_AS(parse_funql("answer()"), Error);                 // empty args
  CHECK_THROWS_AS(parse_funql("exclude(state(all))"), Error);      // connective arity
  CHECK_THROWS_AS(parse_funql("count(state(all), city(all))"), Error);
  CHECK_THROWS_AS(parse_funql("Answer(texas)"), Error);            // identifier case
}

TEST_CASE("print is the inverse of parse") {
  const char* texts[] = {
      "answer(exclude(states(all), border(texas)))",
      "answer(texas)",
      "answer(count(state(all)))",
      "answer(intersect(state(all), union(next_to(texas), next_to(utah))))",
  };
  for (const char* t : texts) CHECK(print_funql(parse_funql(t)) == t);
  // Canonicalization strips stray whitespace.
  CHECK(print_funql(parse_funql("answer( exclude( states(all) ,border( texas ) ) )")) ==
        "answer(exclude(states(all), border(texas)))");
}

TEST_CASE("parse/print round-trip on random forms") {
  Rng rng(42);
  for (int i = 0; i < 50; ++i) {
    LogicalForm f = test_util::random_form(rng);
    LogicalForm back = parse_funql(print_funql(f));
    CHECK(back == f);
    CHECK(print_funql(back) == print_funql(f));
  }
}

TEST_CASE("isomorphism holds for the grounded/ungrounded pair") {
  LogicalForm u = parse_funql("answer(exclude(states(all), border(texas)))");
  LogicalForm g = parse_funql("answer(exclude(state(all), next_to(texas)))", TermKind::GroundedPredicate);
  CHECK(is_isomorphic(u, g));
  CHECK(is_isomorphic(u, u));
  CHECK(is_isomorphic(g, g));

  // Collapsing one child of exclude breaks the shape.
  LogicalForm collapsed = parse_funql("answer(states(all))");
  CHECK_FALSE(is_isomorphic(collapsed, g));
  // Domain-general predicates must match exactly.
  LogicalForm inter = parse_funql("answer(intersect(states(all), border(texas)))");
  CHECK_FALSE(is_isomorphic(inter, g));
}

TEST_CASE("substitution grounds the running example") {
  LogicalForm u = parse_funql("answer(exclude(states(all), border(texas)))");
  std::map<std::string, Term> mapping = {{"states", Term::grounded("state")},
                                         {"border", Term::grounded("next_to")}};
  LogicalForm g = substitute_terms(u, mapping);
  CHECK(print_funql(g) == "answer(exclude(state(all), next_to(texas)))");
  CHECK(is_isomorphic(u, g));

  // No NL predicates: the empty mapping is an identity.
  LogicalForm plain = parse_funql("answer(count(stateid(texas)))");
  CHECK(substitute_terms(plain, std::map<std::string, Term>{}) == plain);

  // A missing entry is an error.
  CHECK_THROWS_AS(substitute_terms(u, std::map<std::string, Term>{{"states", Term::grounded("state")}}),
                  Error);
}

TEST_CASE("substitution preserves shape on random forms") {
  Rng rng(43);
  for (int i = 0; i < 50; ++i) {
    LogicalForm f = test_util::random_form(rng);
    std::map<std::string, Term> mapping;
    f.visit([&](const LogicalForm& n) {
      if (n.head().kind == TermKind::NaturalLanguagePredicate)
        mapping.emplace(n.head().label, Term::grounded("rel_" + n.head().label));
    });
    LogicalForm g = substitute_terms(f, mapping);
    CHECK(g.node_count() == f.node_count());
    CHECK(g.depth() == f.depth());
    CHECK(is_isomorphic(f, g));
  }
}

TEST_CASE("connective arity is rejected at construction") {
  CHECK_THROWS_AS(LogicalForm(Term::general("exclude"), {parse_funql("state(all)")}), Error);
  CHECK_THROWS_AS(LogicalForm(Term::general("union"),
                              {parse_funql("state(all)"), parse_funql("city(all)"),
                               parse_funql("river(all)")}),
                  Error);
  CHECK_THROWS_AS(LogicalForm(Term::general("answer"),
                              {parse_funql("state(all)"), parse_funql("city(all)")}),
                  Error);
}

TEST_CASE("complete forms are answer-rooted") {
  CHECK(is_complete_form(parse_funql("answer(state(all))")));
  CHECK_FALSE(is_complete_form(parse_funql("state(all)")));
}
