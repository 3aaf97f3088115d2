#pragma once

// Metrics over logical forms, denotations, and intermediate representations.

#include <optional>
#include <set>

#include "dataset.hpp"

namespace sempar {

struct LfAccuracy {
  bool exact = false;
  bool structure = false;
  std::optional<double> token;  // defined only for structure matches
};

// exact: canonical-text equality; structure: isomorphism; token: fraction of
// aligned terms equal, given a structure match.
LfAccuracy logical_form_accuracy(const LogicalForm& pred, const LogicalForm& gold);

// Set-overlap F1; counts compare as exact agreement (1 or 0).
double denotation_f1(const Denotation& pred, const Denotation& gold);

// Micro-averaged F1 over per-utterance predicate sets.
double predicate_agreement_f1(const std::vector<std::set<std::string>>& predicted,
                              const std::vector<std::set<std::string>>& reference);

// NL-predicate labels of a (typically ungrounded) form.
std::set<std::string> predicate_set(const LogicalForm& form);

struct EvalReport {
  std::size_t total = 0;
  std::size_t parsed = 0;           // predictions present (not NOPARSE)
  std::size_t grounded_exact = 0;   // grounded form == gold grounded form
  std::size_t ungrounded_gold = 0;  // examples with a gold ungrounded reference
  std::size_t exact = 0;            // ungrounded exact matches
  std::size_t structure = 0;        // ungrounded structure matches
  double token_sum = 0.0;           // summed per-utterance token match over structure matches
  std::size_t denotation_pairs = 0;
  double denotation_f1_sum = 0.0;
  std::optional<double> predicate_f1;

  double accuracy() const { return total ? static_cast<double>(grounded_exact) / total : 0.0; }
  double exact_match() const { return ungrounded_gold ? static_cast<double>(exact) / ungrounded_gold : 0.0; }
  double structure_match() const {
    return ungrounded_gold ? static_cast<double>(structure) / ungrounded_gold : 0.0;
  }
  double token_match() const { return structure ? token_sum / structure : 0.0; }
  double denotation_f1_avg() const { return denotation_pairs ? denotation_f1_sum / denotation_pairs : 0.0; }

  std::string to_text() const;
  std::string to_kv() const;  // machine-readable `key=value` lines
};

// One prediction per gold example.
struct Prediction {
  std::optional<LogicalForm> ungrounded;
  std::optional<LogicalForm> grounded;
  std::optional<Denotation> denotation;
};

// Prediction file: `NOPARSE` or three tab-separated fields
// `<ungrounded funql|-> <grounded funql|-> <denotation|->` per line.
std::vector<Prediction> load_predictions(const std::string& path,
                                         const GeneralInventory& inv = GeneralInventory::standard());
std::string format_prediction(const Prediction& p);

// Gold ungrounded reference: one FunQL form (or `-`) per line.
std::vector<std::optional<LogicalForm>> load_form_lines(const std::string& path,
                                                        const GeneralInventory& inv);

// Reference predicate sets: space-separated predicates per line (`-` empty).
std::vector<std::set<std::string>> load_predicate_lines(const std::string& path);

EvalReport evaluate(const std::vector<TrainingExample>& gold, const std::vector<Prediction>& predictions,
                    const std::vector<std::optional<LogicalForm>>* gold_ungrounded,
                    const std::vector<std::set<std::string>>* reference_predicates,
                    const KnowledgeBase* kb, const ExecOptions& exec = {});

}  // namespace sempar
