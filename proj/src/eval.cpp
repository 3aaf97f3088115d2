#include "eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sempar {

namespace {

// Counts aligned equal terms over a structure-matched pair.
void count_tokens(const LogicalForm& pred, const LogicalForm& gold, std::size_t& equal, std::size_t& total) {
  ++total;
  if (pred.head().same(gold.head())) ++equal;
  for (std::size_t i = 0; i < pred.children().size(); ++i)
    count_tokens(pred.children()[i], gold.children()[i], equal, total);
}

}  // namespace

LfAccuracy logical_form_accuracy(const LogicalForm& pred, const LogicalForm& gold) {
  LfAccuracy a;
  a.exact = print_funql(pred) == print_funql(gold);
  a.structure = is_isomorphic(pred, gold);
  if (a.structure) {
    std::size_t equal = 0, total = 0;
    count_tokens(pred, gold, equal, total);
    a.token = total ? static_cast<double>(equal) / total : 1.0;
  }
  return a;
}

double denotation_f1(const Denotation& pred, const Denotation& gold) {
  if (pred.is_count() || gold.is_count()) return pred == gold ? 1.0 : 0.0;
  const auto& p = pred.entities();
  const auto& g = gold.entities();
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& e : p)
    if (g.count(e)) ++hit;
  if (hit == 0) return 0.0;
  double precision = static_cast<double>(hit) / p.size();
  double recall = static_cast<double>(hit) / g.size();
  return 2.0 * precision * recall / (precision + recall);
}

double predicate_agreement_f1(const std::vector<std::set<std::string>>& predicted,
                              const std::vector<std::set<std::string>>& reference) {
  if (predicted.size() != reference.size())
    fail(ErrorCode::Invalid, "prediction and reference lists differ in length");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    for (const auto& p : predicted[i]) {
      if (reference[i].count(p))
        ++tp;
      else
        ++fp;
    }
    for (const auto& r : reference[i])
      if (!predicted[i].count(r)) ++fn;
  }
  if (tp == 0) return 0.0;
  double precision = static_cast<double>(tp) / (tp + fp);
  double recall = static_cast<double>(tp) / (tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

std::set<std::string> predicate_set(const LogicalForm& form) {
  std::set<std::string> out;
  form.visit([&](const LogicalForm& n) {
    if (n.head().kind == TermKind::NaturalLanguagePredicate) out.insert(n.head().label);
  });
  return out;
}

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

}  // namespace

std::string EvalReport::to_text() const {
  std::ostringstream out;
  out << "examples: " << total << " (parsed " << parsed << ", no-parse " << (total - parsed) << ")\n";
  out << "accuracy (grounded exact match): " << fmt(accuracy()) << " [" << grounded_exact << "/" << total
      << "]\n";
  if (ungrounded_gold) {
    out << "exact match:     " << fmt(exact_match()) << " [" << exact << "/" << ungrounded_gold << "]\n";
    out << "structure match: " << fmt(structure_match()) << " [" << structure << "/" << ungrounded_gold
        << "]\n";
    out << "token match:     " << fmt(token_match()) << " (over " << structure
        << " structurally correct)\n";
  }
  if (denotation_pairs)
    out << "denotation f1:   " << fmt(denotation_f1_avg()) << " (avg over " << denotation_pairs
        << " pairs)\n";
  if (predicate_f1) out << "predicate f1:    " << fmt(*predicate_f1) << "\n";
  return out.str();
}

std::string EvalReport::to_kv() const {
  std::ostringstream out;
  out << "total=" << total << "\n";
  out << "parsed=" << parsed << "\n";
  out << "accuracy=" << fmt(accuracy()) << "\n";
  out << "exact_match=" << fmt(exact_match()) << "\n";
  out << "structure_match=" << fmt(structure_match()) << "\n";
  out << "token_match=" << fmt(token_match()) << "\n";
  out << "denotation_f1=" << fmt(denotation_f1_avg()) << "\n";
  if (predicate_f1) out << "predicate_f1=" << fmt(*predicate_f1) << "\n";
  return out.str();
}

std::vector<Prediction> load_predictions(const std::string& path, const GeneralInventory& inv) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Data, "cannot open predictions file '" + path + "'");
  std::vector<Prediction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    Prediction p;
    if (t != "NOPARSE") {
      auto fields = split_on(line, '\t');
      if (fields.size() != 3)
        fail(ErrorCode::Data, "predictions line " + std::to_string(lineno) +
                                  ": expected NOPARSE or 3 tab-separated fields");
      try {
        if (trim(fields[0]) != "-")
          p.ungrounded = parse_funql(trim(fields[0]), TermKind::NaturalLanguagePredicate, inv);
        if (trim(fields[1]) != "-")
          p.grounded = parse_funql(trim(fields[1]), TermKind::GroundedPredicate, inv);
        if (trim(fields[2]) != "-") p.denotation = Denotation::parse(trim(fields[2]));
      } catch (const Error& e) {
        fail(ErrorCode::Data, "predictions line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::string format_prediction(const Prediction& p) {
  if (!p.ungrounded && !p.grounded && !p.denotation) return "NOPARSE";
  std::string out = p.ungrounded ? print_funql(*p.ungrounded) : "-";
  out += "\t";
  out += p.grounded ? print_funql(*p.grounded) : "-";
  out += "\t";
  out += p.denotation ? p.denotation->to_string() : "-";
  return out;
}

std::vector<std::optional<LogicalForm>> load_form_lines(const std::string& path,
                                                        const GeneralInventory& inv) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Data, "cannot open forms file '" + path + "'");
  std::vector<std::optional<LogicalForm>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t == "-") {
      out.push_back(std::nullopt);
      continue;
    }
    try {
      out.push_back(parse_funql(t, TermKind::NaturalLanguagePredicate, inv));
    } catch (const Error& e) {
      fail(ErrorCode::Data, "forms line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<std::set<std::string>> load_predicate_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Data, "cannot open predicates file '" + path + "'");
  std::vector<std::set<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t == "-") {
      out.push_back({});
      continue;
    }
    auto words = split_ws(t);
    out.push_back(std::set<std::string>(words.begin(), words.end()));
  }
  return out;
}

EvalReport evaluate(const std::vector<TrainingExample>& gold, const std::vector<Prediction>& predictions,
                    const std::vector<std::optional<LogicalForm>>* gold_ungrounded,
                    const std::vector<std::set<std::string>>* reference_predicates, const KnowledgeBase* kb,
                    const ExecOptions& exec) {
  if (gold.size() != predictions.size())
    fail(ErrorCode::Data, "gold and prediction counts differ (" + std::to_string(gold.size()) + " vs " +
                              std::to_string(predictions.size()) + ")");
  if (gold_ungrounded && gold_ungrounded->size() != gold.size())
    fail(ErrorCode::Data, "gold ungrounded reference count differs from the dataset");

  EvalReport r;
  r.total = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const Prediction& p = predictions[i];
    if (p.ungrounded || p.grounded || p.denotation) ++r.parsed;

    if (gold[i].gold_form && p.grounded &&
        print_funql(*p.grounded) == print_funql(*gold[i].gold_form))
      ++r.grounded_exact;

    if (gold_ungrounded && (*gold_ungrounded)[i]) {
      ++r.ungrounded_gold;
      if (p.ungrounded) {
        LfAccuracy a = logical_form_accuracy(*p.ungrounded, *(*gold_ungrounded)[i]);
        if (a.exact) ++r.exact;
        if (a.structure) {
          ++r.structure;
          r.token_sum += *a.token;
        }
      }
    }

    // Denotation comparison uses the gold denotation when present, otherwise
    // the executed gold form.
    std::optional<Denotation> gold_den = gold[i].gold_denotation;
    if (!gold_den && gold[i].gold_form && kb) {
      try {
        gold_den = execute(*gold[i].gold_form, *kb, exec);
      } catch (const Error&) {
      }
    }
    if (gold_den) {
      std::optional<Denotation> pred_den = p.denotation;
      if (!pred_den && p.grounded && kb) {
        try {
          pred_den = execute(*p.grounded, *kb, exec);
        } catch (const Error&) {
        }
      }
      ++r.denotation_pairs;
      if (pred_den) r.denotation_f1_sum += denotation_f1(*pred_den, *gold_den);
    }
  }

  if (reference_predicates) {
    std::vector<std::set<std::string>> predicted;
    for (const auto& p : predictions)
      predicted.push_back(p.ungrounded ? predicate_set(*p.ungrounded) : std::set<std::string>{});
    r.predicate_f1 = predicate_agreement_f1(predicted, *reference_predicates);
  }
  return r;
}

}  // namespace sempar
