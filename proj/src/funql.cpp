#include "funql.hpp"

#include <algorithm>
#include <cctype>

namespace sempar {

namespace {

const std::set<std::string> kConnectives = {"intersect", "union", "exclude"};
const std::set<std::string> kAggregations = {"count", "largest", "smallest"};

bool valid_identifier(const std::string& s) {
  if (s.empty()) return false;
  if (!(std::islower(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
  for (char c : s) {
    if (!(std::islower(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)) || c == '_'))
      return false;
  }
  return true;
}

}  // namespace

GeneralInventory::GeneralInventory()
    : type_predicates_{"stateid", "cityid", "riverid", "countryid", "placeid"} {}

GeneralInventory::GeneralInventory(std::set<std::string> type_predicates)
    : type_predicates_(std::move(type_predicates)) {}

const GeneralInventory& GeneralInventory::standard() {
  static const GeneralInventory inv;
  return inv;
}

bool GeneralInventory::contains(const std::string& label) const {
  return label == "answer" || label == "all" || kConnectives.count(label) > 0 ||
         kAggregations.count(label) > 0 || type_predicates_.count(label) > 0;
}

bool GeneralInventory::is_connective(const std::string& label) const { return kConnectives.count(label) > 0; }

bool GeneralInventory::is_aggregation(const std::string& label) const { return kAggregations.count(label) > 0; }

std::size_t GeneralInventory::arity(const std::string& label) const {
  if (is_connective(label)) return 2;
  if (label == "answer" || is_aggregation(label) || is_type_predicate(label)) return 1;
  return 0;
}

std::vector<std::string> GeneralInventory::nonterminal_labels() const {
  std::vector<std::string> out = {"answer", "count", "exclude", "intersect", "largest", "smallest", "union"};
  out.insert(out.end(), type_predicates_.begin(), type_predicates_.end());
  std::sort(out.begin(), out.end());
  return out;
}

LogicalForm::LogicalForm(Term head) {
  if (!head.is_leaf_term()) fail(ErrorCode::Parse, "predicate '" + head.label + "' requires arguments");
  node_ = std::make_shared<Node>(Node{std::move(head), {}});
}

LogicalForm::LogicalForm(Term head, std::vector<LogicalForm> children, const GeneralInventory& inv) {
  if (head.is_leaf_term() && !children.empty())
    fail(ErrorCode::Parse, "'" + head.label + "' cannot take arguments");
  if (head.is_predicate()) {
    if (children.empty()) fail(ErrorCode::Parse, "predicate '" + head.label + "' has an empty argument list");
    if (head.kind == TermKind::DomainGeneralPredicate) {
      std::size_t want = inv.arity(head.label);
      if (want != 0 && children.size() != want)
        fail(ErrorCode::Parse, "'" + head.label + "' takes " + std::to_string(want) + " argument(s), got " +
                                   std::to_string(children.size()));
    }
  }
  node_ = std::make_shared<Node>(Node{std::move(head), std::move(children)});
}

std::size_t LogicalForm::node_count() const {
  std::size_t n = 1;
  for (const auto& c : children()) n += c.node_count();
  return n;
}

std::size_t LogicalForm::depth() const {
  std::size_t best = 0;
  for (const auto& c : children()) best = std::max(best, c.depth());
  return best + 1;
}

std::size_t LogicalForm::predicate_count() const {
  if (is_leaf()) return 0;
  std::size_t n = 1;
  for (const auto& c : children()) n += c.predicate_count();
  return n;
}

void LogicalForm::visit(const std::function<void(const LogicalForm&)>& fn) const {
  fn(*this);
  for (const auto& c : children()) c.visit(fn);
}

bool LogicalForm::operator==(const LogicalForm& o) const {
  if (!head().same(o.head())) return false;
  if (children().size() != o.children().size()) return false;
  for (std::size_t i = 0; i < children().size(); ++i)
    if (!(children()[i] == o.children()[i])) return false;
  return true;
}

namespace {

struct Parser {
  const std::string& text;
  std::size_t pos = 0;
  TermKind lexical_kind;
  const GeneralInventory& inv;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }

  std::string identifier() {
    skip_ws();
    std::size_t start = pos;
    while (pos < text.size() &&
           (std::islower(static_cast<unsigned char>(text[pos])) ||
            std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
      ++pos;
    std::string id = text.substr(start, pos - start);
    if (!valid_identifier(id))
      fail(ErrorCode::Parse, "expected identifier at offset " + std::to_string(start) + " in '" + text + "'");
    return id;
  }

  LogicalForm form() {
    std::string id = identifier();
    if (peek() != '(') {
      if (id == "all") return LogicalForm(Term::all());
      return LogicalForm(Term::entity(id));
    }
    ++pos;  // consume '('
    if (peek() == ')') fail(ErrorCode::Parse, "'" + id + "' has an empty argument list");
    std::vector<LogicalForm> args;
    args.push_back(form());
    while (peek() == ',') {
      ++pos;
      args.push_back(form());
    }
    if (peek() != ')') fail(ErrorCode::Parse, "unbalanced parentheses in '" + text + "'");
    ++pos;
    Term head = inv.contains(id) ? Term::general(id)
                                 : Term{lexical_kind, id, std::nullopt};
    return LogicalForm(std::move(head), std::move(args), inv);
  }
};

}  // namespace

LogicalForm parse_funql(const std::string& text, TermKind lexical_kind, const GeneralInventory& inv) {
  if (lexical_kind != TermKind::NaturalLanguagePredicate && lexical_kind != TermKind::GroundedPredicate)
    fail(ErrorCode::Invalid, "lexical_kind must be a lexical predicate kind");
  Parser p{text, 0, lexical_kind, inv};
  LogicalForm f = p.form();
  p.skip_ws();
  if (p.pos != text.size())
    fail(ErrorCode::Parse, "trailing text after form at offset " + std::to_string(p.pos) + " in '" + text + "'");
  return f;
}

std::string print_funql(const LogicalForm& form) {
  std::string out = form.head().label;
  if (!form.is_leaf()) {
    out += '(';
    for (std::size_t i = 0; i < form.children().size(); ++i) {
      if (i) out += ", ";
      out += print_funql(form.children()[i]);
    }
    out += ')';
  }
  return out;
}

bool is_complete_form(const LogicalForm& form) {
  return form.head().kind == TermKind::DomainGeneralPredicate && form.head().label == "answer";
}

bool is_isomorphic(const LogicalForm& u, const LogicalForm& g) {
  const Term& a = u.head();
  const Term& b = g.head();
  if (u.children().size() != g.children().size()) return false;
  bool a_general = a.kind == TermKind::DomainGeneralPredicate || a.kind == TermKind::AllMarker;
  bool b_general = b.kind == TermKind::DomainGeneralPredicate || b.kind == TermKind::AllMarker;
  if (a_general || b_general) {
    if (!a.same(b)) return false;
  } else if (a.kind == TermKind::Entity || b.kind == TermKind::Entity) {
    // Entities align to entities; labels may differ between U and G.
    if (a.kind != TermKind::Entity || b.kind != TermKind::Entity) return false;
  }
  // Remaining case: lexical predicate on both sides (NL or grounded).
  for (std::size_t i = 0; i < u.children().size(); ++i)
    if (!is_isomorphic(u.children()[i], g.children()[i])) return false;
  return true;
}

LogicalForm substitute_terms(const LogicalForm& u, const std::map<std::string, Term>& mapping) {
  std::function<LogicalForm(const LogicalForm&)> walk = [&](const LogicalForm& f) -> LogicalForm {
    Term head = f.head();
    auto it = mapping.find(head.label);
    if (it != mapping.end() && (head.kind == TermKind::NaturalLanguagePredicate || head.kind == TermKind::Entity)) {
      Term repl = it->second;
      repl.span = head.span;
      head = repl;
    } else if (head.kind == TermKind::NaturalLanguagePredicate) {
      fail(ErrorCode::Invalid, "no mapping entry for natural-language predicate '" + head.label + "'");
    }
    if (f.is_leaf()) return LogicalForm(std::move(head));
    std::vector<LogicalForm> kids;
    kids.reserve(f.children().size());
    for (const auto& c : f.children()) kids.push_back(walk(c));
    return LogicalForm(std::move(head), std::move(kids));
  };
  return walk(u);
}

LogicalForm substitute_terms(const LogicalForm& u,
                             const std::function<std::optional<Term>(std::size_t, const Term&)>& assign) {
  std::size_t index = 0;
  std::function<LogicalForm(const LogicalForm&)> walk = [&](const LogicalForm& f) -> LogicalForm {
    std::size_t my_index = index++;
    Term head = f.head();
    if (auto repl = assign(my_index, head)) {
      repl->span = head.span;
      head = *repl;
    }
    if (f.is_leaf()) return LogicalForm(std::move(head));
    std::vector<LogicalForm> kids;
    kids.reserve(f.children().size());
    for (const auto& c : f.children()) kids.push_back(walk(c));
    return LogicalForm(std::move(head), std::move(kids));
  };
  return walk(u);
}

}  // namespace sempar
