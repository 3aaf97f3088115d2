#include "kb.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

namespace sempar {

void KnowledgeBase::add_unary(const std::string& rel, const std::string& e) {
  unary[rel].insert(e);
  entities.insert(e);
}

void KnowledgeBase::add_binary(const std::string& rel, const std::string& a, const std::string& b) {
  binary[rel].insert({a, b});
  entities.insert(a);
  entities.insert(b);
}

void KnowledgeBase::add_attribute(const std::string& e, const std::string& attr, double value) {
  magnitudes[{e, attr}] = value;
  entities.insert(e);
}

std::vector<std::string> KnowledgeBase::relation_names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : unary) out.push_back(name);
  for (const auto& [name, _] : binary) out.push_back(name);
  std::sort(out.begin(), out.end());
  return out;
}

KnowledgeBase KnowledgeBase::parse(const std::string& text) {
  KnowledgeBase kb;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    const std::string& kind = fields[0];
    auto want = [&](std::size_t n) {
      if (fields.size() != n)
        fail(ErrorCode::Data, "kb line " + std::to_string(lineno) + ": '" + kind + "' takes " +
                                  std::to_string(n - 1) + " fields");
    };
    if (kind == "unary") {
      want(3);
      kb.add_unary(fields[1], fields[2]);
    } else if (kind == "binary") {
      want(4);
      kb.add_binary(fields[1], fields[2], fields[3]);
    } else if (kind == "attr") {
      want(4);
      try {
        kb.add_attribute(fields[1], fields[2], std::stod(fields[3]));
      } catch (const std::exception&) {
        fail(ErrorCode::Data, "kb line " + std::to_string(lineno) + ": bad number '" + fields[3] + "'");
      }
    } else {
      fail(ErrorCode::Data, "kb line " + std::to_string(lineno) + ": unknown record '" + kind + "'");
    }
  }
  return kb;
}

KnowledgeBase KnowledgeBase::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Data, "cannot open kb file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

Denotation Denotation::of_set(std::set<std::string> entities) {
  Denotation d;
  d.is_count_ = false;
  d.set_ = std::move(entities);
  return d;
}

Denotation Denotation::of_count(std::int64_t n) {
  if (n < 0) fail(ErrorCode::Invalid, "count denotation must be non-negative");
  Denotation d;
  d.is_count_ = true;
  d.count_ = n;
  return d;
}

const std::set<std::string>& Denotation::entities() const {
  if (is_count_) fail(ErrorCode::Invalid, "denotation is a count, not a set");
  return set_;
}

std::int64_t Denotation::count() const {
  if (!is_count_) fail(ErrorCode::Invalid, "denotation is a set, not a count");
  return count_;
}

bool Denotation::operator==(const Denotation& o) const {
  if (is_count_ != o.is_count_) return false;
  return is_count_ ? count_ == o.count_ : set_ == o.set_;
}

std::string Denotation::to_string() const {
  if (is_count_) return std::to_string(count_);
  std::string out = "{";
  bool first = true;
  for (const auto& e : set_) {
    if (!first) out += ", ";
    out += e;
    first = false;
  }
  out += "}";
  return out;
}

Denotation Denotation::parse(const std::string& text) {
  std::string t = trim(text);
  if (t.empty()) fail(ErrorCode::Parse, "empty denotation");
  if (t[0] == '{') {
    if (t.back() != '}') fail(ErrorCode::Parse, "unterminated set denotation '" + text + "'");
    std::set<std::string> xs;
    std::string inner = t.substr(1, t.size() - 2);
    for (const auto& piece : split_on(inner, ',')) {
      std::string e = trim(piece);
      if (!e.empty()) xs.insert(e);
    }
    return of_set(std::move(xs));
  }
  try {
    std::size_t used = 0;
    long long n = std::stoll(t, &used);
    if (used != t.size()) throw std::invalid_argument(t);
    return of_count(n);
  } catch (const std::exception&) {
    fail(ErrorCode::Parse, "bad denotation '" + text + "'");
  }
}

namespace {

// Internal evaluation value: entity set or count.
struct Value {
  bool is_count = false;
  std::set<std::string> set;
  std::int64_t count = 0;
};

Value eval(const LogicalForm& f, const KnowledgeBase& kb, const ExecOptions& opts,
           const GeneralInventory& inv) {
  const Term& h = f.head();
  auto set_of = [&](const LogicalForm& child) -> std::set<std::string> {
    Value v = eval(child, kb, opts, inv);
    if (v.is_count)
      fail(ErrorCode::Execution, "count result fed to set operator '" + h.label + "'");
    return std::move(v.set);
  };

  switch (h.kind) {
    case TermKind::AllMarker:
      return {false, kb.entities, 0};
    case TermKind::Entity: {
      if (!kb.entities.count(h.label)) fail(ErrorCode::Execution, "unknown entity '" + h.label + "'");
      return {false, {h.label}, 0};
    }
    case TermKind::NaturalLanguagePredicate:
      fail(ErrorCode::Execution, "form is not fully grounded at '" + h.label + "'");
    case TermKind::DomainGeneralPredicate: {
      if (h.label == "answer") return eval(f.children()[0], kb, opts, inv);
      if (inv.is_type_predicate(h.label)) {
        const LogicalForm& c = f.children()[0];
        if (c.head().kind != TermKind::Entity)
          fail(ErrorCode::Execution, "'" + h.label + "' requires an entity argument");
        if (!kb.entities.count(c.head().label))
          fail(ErrorCode::Execution, "typed entity '" + c.head().label + "' is absent from the kb");
        return {false, {c.head().label}, 0};
      }
      if (h.label == "count") {
        auto s = set_of(f.children()[0]);
        return {true, {}, static_cast<std::int64_t>(s.size())};
      }
      if (h.label == "largest" || h.label == "smallest") {
        auto s = set_of(f.children()[0]);
        if (s.empty()) fail(ErrorCode::Execution, "'" + h.label + "' over an empty set");
        bool want_max = h.label == "largest";
        std::string best;
        double best_value = 0;
        bool have = false;
        for (const auto& e : s) {
          auto it = kb.magnitudes.find({e, opts.rank_attribute});
          if (it == kb.magnitudes.end())
            fail(ErrorCode::Execution,
                 "missing magnitude '" + opts.rank_attribute + "' for ranked entity '" + e + "'");
          // Ties resolve to the lexicographically smallest entity (set order).
          if (!have || (want_max ? it->second > best_value : it->second < best_value)) {
            best = e;
            best_value = it->second;
            have = true;
          }
        }
        return {false, {best}, 0};
      }
      if (h.label == "exclude" || h.label == "intersect" || h.label == "union") {
        auto a = set_of(f.children()[0]);
        auto b = set_of(f.children()[1]);
        std::set<std::string> out;
        if (h.label == "exclude")
          std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.begin()));
        else if (h.label == "intersect")
          std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.begin()));
        else
          std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.begin()));
        return {false, std::move(out), 0};
      }
      fail(ErrorCode::Execution, "unknown domain-general predicate '" + h.label + "'");
    }
    case TermKind::GroundedPredicate: {
      auto un = kb.unary.find(h.label);
      if (un != kb.unary.end()) {
        if (f.children().size() != 1 || f.children()[0].head().kind != TermKind::AllMarker)
          fail(ErrorCode::Execution, "unary relation '" + h.label + "' applies to 'all' only");
        return {false, un->second, 0};
      }
      auto bin = kb.binary.find(h.label);
      if (bin != kb.binary.end()) {
        if (f.children().size() != 1)
          fail(ErrorCode::Execution, "binary relation '" + h.label + "' takes one argument");
        auto arg = set_of(f.children()[0]);
        // Preimage: entities whose image under the relation meets the argument.
        std::set<std::string> out;
        for (const auto& [a, b] : bin->second)
          if (arg.count(b)) out.insert(a);
        return {false, std::move(out), 0};
      }
      fail(ErrorCode::Execution, "unknown predicate '" + h.label + "'");
    }
  }
  fail(ErrorCode::Internal, "unreachable");
}

}  // namespace

Denotation execute(const LogicalForm& g, const KnowledgeBase& kb, const ExecOptions& opts) {
  Value v = eval(g, kb, opts, GeneralInventory::standard());
  return v.is_count ? Denotation::of_count(v.count) : Denotation::of_set(std::move(v.set));
}

namespace {

// Enumerates set-valued grounded expressions.  `depth` is the remaining node
// budget on a path, `preds` the remaining predicate-node budget, `used` the
// annotated entities already consumed on the current path to the root.
void enumerate_sets(const KnowledgeBase& kb, const std::vector<std::string>& entity_pool,
                    std::size_t depth, std::size_t preds, std::set<std::string>& used,
                    const std::function<void(const LogicalForm&, std::size_t)>& emit) {
  if (depth < 2 || preds < 1) return;
  for (const auto& [rel, _] : kb.unary) {
    (void)_;
    emit(LogicalForm(Term::grounded(rel), {LogicalForm(Term::all())}), 1);
  }
  for (const auto& [rel, _] : kb.binary) {
    (void)_;
    for (const auto& e : entity_pool) {
      if (used.count(e)) continue;
      used.insert(e);
      emit(LogicalForm(Term::grounded(rel), {LogicalForm(Term::entity(e))}), 1);
      used.erase(e);
    }
    if (depth >= 3 && preds >= 2) {
      const std::string rel_name = rel;
      enumerate_sets(kb, entity_pool, depth - 1, preds - 1, used,
                     [&](const LogicalForm& sub, std::size_t sub_preds) {
                       emit(LogicalForm(Term::grounded(rel_name), {sub}), sub_preds + 1);
                     });
    }
  }
  if (depth >= 3 && preds >= 2) {
    for (const char* agg : {"largest", "smallest"}) {
      enumerate_sets(kb, entity_pool, depth - 1, preds - 1, used,
                     [&](const LogicalForm& sub, std::size_t sub_preds) {
                       emit(LogicalForm(Term::general(agg), {sub}), sub_preds + 1);
                     });
    }
    for (const char* conn : {"exclude", "intersect", "union"}) {
      // Left subtree first; the right subtree honours the entity-use rule via
      // `used`, which still holds the left side's entities.
      enumerate_sets(kb, entity_pool, depth - 1, preds - 1, used,
                     [&](const LogicalForm& left, std::size_t left_preds) {
                       if (preds < 2 + left_preds) return;
                       std::set<std::string> left_entities;
                       left.visit([&](const LogicalForm& n) {
                         if (n.head().kind == TermKind::Entity) left_entities.insert(n.head().label);
                       });
                       for (const auto& e : left_entities) used.insert(e);
                       enumerate_sets(kb, entity_pool, depth - 1, preds - 1 - left_preds, used,
                                      [&](const LogicalForm& right, std::size_t right_preds) {
                                        emit(LogicalForm(Term::general(conn), {left, right}),
                                             left_preds + right_preds + 1);
                                      });
                       for (const auto& e : left_entities) used.erase(e);
                     });
    }
  }
}

}  // namespace

std::vector<LogicalForm> surrogate_search(const std::vector<std::string>& tokens,
                                          const std::vector<EntityAnnotation>& annotations,
                                          const Denotation& y, const KnowledgeBase& kb,
                                          const SurrogateLimits& limits, const ExecOptions& exec) {
  (void)tokens;
  std::vector<std::string> entity_pool;
  for (const auto& a : annotations)
    if (std::find(entity_pool.begin(), entity_pool.end(), a.entity) == entity_pool.end())
      entity_pool.push_back(a.entity);
  std::sort(entity_pool.begin(), entity_pool.end());

  std::map<std::string, LogicalForm> hits;  // canonical text -> form
  auto consider = [&](const LogicalForm& form) {
    if (form.depth() > limits.max_depth || form.predicate_count() > limits.max_predicates) return;
    try {
      if (execute(form, kb, exec) == y) hits.emplace(print_funql(form), form);
    } catch (const Error&) {
      // Ill-typed candidates are simply not surrogates.
    }
  };

  std::set<std::string> used;
  if (limits.max_depth >= 3 && limits.max_predicates >= 1) {
    enumerate_sets(kb, entity_pool, limits.max_depth - 1, limits.max_predicates - 1, used,
                   [&](const LogicalForm& body, std::size_t) {
                     consider(LogicalForm(Term::general("answer"), {body}));
                   });
    if (limits.max_depth >= 4 && limits.max_predicates >= 2) {
      enumerate_sets(kb, entity_pool, limits.max_depth - 2, limits.max_predicates - 2, used,
                     [&](const LogicalForm& body, std::size_t) {
                       consider(LogicalForm(Term::general("answer"),
                                            {LogicalForm(Term::general("count"), {body})}));
                     });
    }
  }

  std::vector<LogicalForm> out;
  out.reserve(hits.size());
  for (auto& [_, form] : hits) out.push_back(form);
  return out;
}

}  // namespace sempar
