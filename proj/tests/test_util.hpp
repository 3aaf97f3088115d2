#pragma once

// Shared test helpers: a random well-formed form generator, an independent
// brute-force executor (kept deliberately separate from the library's
// evaluation path), a finite-difference gradient checker, and fixture
// builders.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "kb.hpp"
#include "model.hpp"
#include "pipeline.hpp"

namespace test_util {

using namespace sempar;

// ---------------------------------------------------------------------------
// Random well-formed ungrounded forms.

struct FormGenConfig {
  std::vector<std::string> nl_predicates = {"states", "border", "traverse", "cities", "capital",
                                            "rivers", "flow", "area"};
  std::vector<std::string> entities = {"texas", "maine", "utah", "austin", "red_river"};
  std::size_t max_depth = 5;  // nodes on a path, answer included
};

inline LogicalForm random_set_form(Rng& rng, const FormGenConfig& cfg, std::size_t depth_left) {
  // Leaves of the recursion: an NL predicate over `all` or over an entity.
  if (depth_left <= 2 || rng.real() < 0.35) {
    std::string pred = cfg.nl_predicates[rng.below(cfg.nl_predicates.size())];
    LogicalForm child = rng.real() < 0.5
                            ? LogicalForm(Term::all())
                            : LogicalForm(Term::entity(cfg.entities[rng.below(cfg.entities.size())]));
    return LogicalForm(Term::nl(pred), {std::move(child)});
  }
  double pick = rng.real();
  if (pick < 0.35) {  // connective
    static const char* kConn[] = {"intersect", "union", "exclude"};
    LogicalForm a = random_set_form(rng, cfg, depth_left - 1);
    LogicalForm b = random_set_form(rng, cfg, depth_left - 1);
    return LogicalForm(Term::general(kConn[rng.below(3)]), {std::move(a), std::move(b)});
  }
  if (pick < 0.55) {  // aggregation over a set
    static const char* kAgg[] = {"largest", "smallest"};
    return LogicalForm(Term::general(kAgg[rng.below(2)]), {random_set_form(rng, cfg, depth_left - 1)});
  }
  if (pick < 0.75) {  // nested NL predicate
    std::string pred = cfg.nl_predicates[rng.below(cfg.nl_predicates.size())];
    return LogicalForm(Term::nl(pred), {random_set_form(rng, cfg, depth_left - 1)});
  }
  std::string pred = cfg.nl_predicates[rng.below(cfg.nl_predicates.size())];
  LogicalForm child = rng.real() < 0.5
                          ? LogicalForm(Term::all())
                          : LogicalForm(Term::entity(cfg.entities[rng.below(cfg.entities.size())]));
  return LogicalForm(Term::nl(pred), {std::move(child)});
}

inline LogicalForm random_form(Rng& rng, const FormGenConfig& cfg = {}) {
  double pick = rng.real();
  if (pick < 0.1) {
    return LogicalForm(Term::general("answer"),
                       {LogicalForm(Term::entity(cfg.entities[rng.below(cfg.entities.size())]))});
  }
  if (pick < 0.25) {
    return LogicalForm(Term::general("answer"),
                       {LogicalForm(Term::general("count"), {random_set_form(rng, cfg, cfg.max_depth - 2)})});
  }
  return LogicalForm(Term::general("answer"), {random_set_form(rng, cfg, cfg.max_depth - 1)});
}

// Tokens and annotations under which every term of `form` is locatable.
struct Utterance {
  std::vector<std::string> tokens;
  std::vector<EntityAnnotation> annotations;
};

inline Utterance utterance_for(const LogicalForm& form) {
  Utterance u;
  std::set<std::string> nl, ents;
  form.visit([&](const LogicalForm& n) {
    if (n.head().kind == TermKind::NaturalLanguagePredicate) nl.insert(n.head().label);
    if (n.head().kind == TermKind::Entity) ents.insert(n.head().label);
  });
  for (const auto& w : nl) u.tokens.push_back(w);
  for (const auto& e : ents) {
    u.tokens.push_back(e);
    u.annotations.push_back({Span{u.tokens.size() - 1, u.tokens.size()}, e, 1.0});
  }
  if (u.tokens.empty()) u.tokens.push_back("what");
  return u;
}

// ---------------------------------------------------------------------------
// Brute-force set-semantics oracle, independent of the library executor.
// Works on sorted vectors and throws std::runtime_error on ill-typed forms.

struct BruteValue {
  bool is_count = false;
  std::vector<std::string> set;  // sorted, unique
  long long count = 0;
};

inline std::vector<std::string> brute_sorted(std::set<std::string> s) {
  return std::vector<std::string>(s.begin(), s.end());
}

inline BruteValue brute_eval(const LogicalForm& f, const KnowledgeBase& kb, const std::string& rank_attr) {
  const Term& h = f.head();
  auto as_set = [&](const LogicalForm& c) {
    BruteValue v = brute_eval(c, kb, rank_attr);
    if (v.is_count) throw std::runtime_error("count into set op");
    return v.set;
  };
  if (h.kind == TermKind::AllMarker) return {false, brute_sorted(kb.entities), 0};
  if (h.kind == TermKind::Entity) {
    if (!kb.entities.count(h.label)) throw std::runtime_error("unknown entity");
    return {false, {h.label}, 0};
  }
  if (h.kind == TermKind::DomainGeneralPredicate) {
    if (h.label == "answer") return brute_eval(f.children()[0], kb, rank_attr);
    if (GeneralInventory::standard().is_type_predicate(h.label)) {
      const Term& c = f.children()[0].head();
      if (c.kind != TermKind::Entity || !kb.entities.count(c.label))
        throw std::runtime_error("bad typed entity");
      return {false, {c.label}, 0};
    }
    if (h.label == "count")
      return {true, {}, static_cast<long long>(as_set(f.children()[0]).size())};
    if (h.label == "largest" || h.label == "smallest") {
      auto s = as_set(f.children()[0]);
      if (s.empty()) throw std::runtime_error("rank of empty set");
      std::string best;
      double best_v = 0;
      bool have = false;
      for (const auto& e : s) {
        auto it = kb.magnitudes.find({e, rank_attr});
        if (it == kb.magnitudes.end()) throw std::runtime_error("missing magnitude");
        if (!have || (h.label == "largest" ? it->second > best_v : it->second < best_v)) {
          best = e;
          best_v = it->second;
          have = true;
        }
      }
      return {false, {best}, 0};
    }
    auto a = as_set(f.children()[0]);
    auto b = as_set(f.children()[1]);
    std::vector<std::string> out;
    if (h.label == "exclude") {
      for (const auto& e : a)
        if (std::find(b.begin(), b.end(), e) == b.end()) out.push_back(e);
    } else if (h.label == "intersect") {
      for (const auto& e : a)
        if (std::find(b.begin(), b.end(), e) != b.end()) out.push_back(e);
    } else if (h.label == "union") {
      out = a;
      for (const auto& e : b)
        if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(e);
      std::sort(out.begin(), out.end());
    } else {
      throw std::runtime_error("unknown general predicate");
    }
    return {false, out, 0};
  }
  // Lexical predicate: must be a kb relation.
  auto un = kb.unary.find(h.label);
  if (un != kb.unary.end()) {
    if (f.children().size() != 1 || f.children()[0].head().kind != TermKind::AllMarker)
      throw std::runtime_error("unary over non-all");
    return {false, brute_sorted(un->second), 0};
  }
  auto bin = kb.binary.find(h.label);
  if (bin != kb.binary.end()) {
    if (f.children().size() != 1) throw std::runtime_error("binary arity");
    auto arg = as_set(f.children()[0]);
    std::set<std::string> out;
    for (const auto& e : arg)
      for (const auto& [a, b] : bin->second)
        if (b == e) out.insert(a);
    return {false, brute_sorted(out), 0};
  }
  throw std::runtime_error("unknown predicate");
}

// Compares library execution against the brute-force oracle, errors included.
inline bool executions_agree(const LogicalForm& g, const KnowledgeBase& kb, const std::string& rank_attr) {
  std::optional<Denotation> lib;
  bool lib_error = false;
  try {
    lib = execute(g, kb, {rank_attr});
  } catch (const Error&) {
    lib_error = true;
  }
  std::optional<BruteValue> brute;
  bool brute_error = false;
  try {
    brute = brute_eval(g, kb, rank_attr);
  } catch (const std::exception&) {
    brute_error = true;
  }
  if (lib_error || brute_error) return lib_error == brute_error;
  if (brute->is_count != lib->is_count()) return false;
  if (brute->is_count) return brute->count == lib->count();
  return brute->set == std::vector<std::string>(lib->entities().begin(), lib->entities().end());
}

// ---------------------------------------------------------------------------
// Finite differences.

struct FdReport {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// `loss` must be deterministic (re-seed any sampling inside); gradients must
// already sit in the tensors when this is called.
inline FdReport fd_check(const std::vector<ad::Tensor*>& params, const std::function<double()>& loss,
                         double eps = 1e-5) {
  FdReport rep;
  for (ad::Tensor* t : params) {
    for (std::size_t i = 0; i < t->size(); ++i) {
      double saved = t->value[i];
      t->value[i] = saved + eps;
      double up = loss();
      t->value[i] = saved - eps;
      double down = loss();
      t->value[i] = saved;
      double numeric = (up - down) / (2 * eps);
      double analytic = t->grad[i];
      double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-4});
      rep.max_rel = std::max(rep.max_rel, std::abs(numeric - analytic) / denom);
      ++rep.checked;
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Fixtures.

inline std::string fixture_path(const std::string& name) {
  return std::string(SEMPAR_FIXTURE_DIR) + "/" + name;
}

inline std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& content = "") {
    path = (std::filesystem::temp_directory_path() / ("sempar_test_" + name)).string();
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::error_code ec; std::filesystem::remove(path, ec); }
};

// The Table-2 style four-state fixture.
inline KnowledgeBase four_state_kb() {
  KnowledgeBase kb;
  for (const char* s : {"texas", "oklahoma", "utah", "maine"}) kb.add_unary("state", s);
  kb.add_binary("next_to", "oklahoma", "texas");
  kb.add_binary("next_to", "texas", "oklahoma");
  kb.add_attribute("texas", "size", 268596);
  kb.add_attribute("oklahoma", "size", 69899);
  kb.add_attribute("utah", "size", 84897);
  kb.add_attribute("maine", "size", 35380);
  return kb;
}

// Small model over a fixed toy vocabulary; dims kept at or below 8 so
// finite-difference sweeps stay fast.
inline Model tiny_model(std::uint64_t seed = 7, std::size_t n_tokens = 6) {
  ModelDims dims;
  dims.word = 5;
  dims.lstm = 6;
  dims.entity = 7;
  dims.general = 7;
  dims.grounded = 8;
  dims.attention = 4;
  Vocabulary vocab;
  for (std::size_t i = 0; i < n_tokens; ++i) vocab.add_word("w" + std::to_string(i));
  vocab.add_word("states");
  vocab.add_word("border");
  vocab.add_word("texas_tok");
  vocab.entities = {"oklahoma", "texas"};
  vocab.general = {"all", "answer", "count", "exclude", "intersect", "largest", "smallest", "union"};
  vocab.grounded = {"capital_of", "next_to", "state"};
  Rng rng(seed);
  return Model(dims, vocab, GeneralInventory(std::set<std::string>{}), rng);
}

}  // namespace test_util
