#pragma once

// Dataset ingestion.  One record per line:
//   tokens <TAB> annotations <TAB> supervision
// where tokens are space-separated, annotations are `;`-separated
// `start:end:entity:score` spans (`-` when there are none), and supervision
// is either `lf <funql>` or `den <denotation>`.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "kb.hpp"
#include "transitions.hpp"

namespace sempar {

struct TrainingExample {
  std::vector<std::string> tokens;
  std::vector<EntityAnnotation> annotations;
  std::optional<LogicalForm> gold_form;  // grounded
  std::optional<Denotation> gold_denotation;

  bool has_form() const { return gold_form.has_value(); }
};

std::vector<TrainingExample> load_dataset(const std::string& path,
                                          const GeneralInventory& inv = GeneralInventory::standard());
std::vector<TrainingExample> parse_dataset(const std::string& text,
                                           const GeneralInventory& inv = GeneralInventory::standard());

std::string format_example(const TrainingExample& ex);

// Parses the annotation field of a record ("-" or `start:end:entity:score;...`).
std::vector<EntityAnnotation> parse_annotations(const std::string& field, std::size_t n_tokens);

}  // namespace sempar
