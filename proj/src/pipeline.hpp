#pragma once

// High-level command flows: vocabulary building, the train / parse / eval /
// oracle-check entry points, and their text reports.  The C shared-library
// surface and the CLI both sit on top of these.

#include <map>

#include "eval.hpp"
#include "reranker.hpp"
#include "training.hpp"

namespace sempar {

// `key = value` lines; `#` comments.  Later duplicates win.
std::map<std::string, std::string> parse_options(const std::string& text);

struct PipelineConfig {
  TrainingConfig training;
  ModelDims dims;
  DecodeOptions decode;
  GroundingOptions grounding;
  ExecOptions exec;
  std::string embeddings_path;    // optional pretrained word embeddings
  std::string answer_types_path;  // optional answer-type table override
  std::string reranker_path;      // optional reranker weights
  std::set<std::string> type_predicates;  // extra type sub-predicates
  bool seed_set = false;
  bool dump_candidates = false;  // append the candidate list to parse reports

  static PipelineConfig from_options(const std::map<std::string, std::string>& options);
};

// Vocabulary over the dataset tokens, the KB entities/relations, the general
// inventory, and any entities/terms mentioned by gold forms or annotations.
Vocabulary build_vocabulary(const std::vector<TrainingExample>& dataset, const KnowledgeBase& kb,
                            const GeneralInventory& inv);

struct TrainOutcome {
  TrainResult result;
  std::string metrics_log;  // one line per epoch, deterministic
};

// Builds the model (seeded), trains, optionally saves a checkpoint.
TrainOutcome run_train(Model& out_model, const std::vector<TrainingExample>& dataset,
                       const KnowledgeBase& kb, const PipelineConfig& config);

struct ParseOutcome {
  DecodeResult decoded;
  std::vector<GroundedCandidate> candidates;        // best first
  std::optional<std::size_t> selected;              // index into candidates
  std::optional<Denotation> denotation;             // of the selected candidate
  std::string report;                               // human-readable, Table-style trace included
};

ParseOutcome run_parse(Model& m, const KnowledgeBase* kb, const std::vector<std::string>& tokens,
                       const std::vector<EntityAnnotation>& annotations, const PipelineConfig& config,
                       const RerankerWeights* weights = nullptr);

// Predictions (one line per example) for a whole dataset; decode failures
// yield NOPARSE lines.
std::string run_predict(Model& m, const KnowledgeBase* kb, const std::vector<TrainingExample>& dataset,
                        const PipelineConfig& config, const RerankerWeights* weights = nullptr);

struct OracleCheckOutcome {
  std::size_t total = 0;
  std::size_t ok = 0;
  std::vector<std::string> errors;  // per-line messages
  std::string report;
};

// Round-trips every gold form through oracle + reconstruct.
OracleCheckOutcome run_oracle_check(const std::vector<TrainingExample>& dataset);

std::string run_eval(const std::vector<TrainingExample>& gold, const std::vector<Prediction>& predictions,
                     const std::vector<std::optional<LogicalForm>>* gold_ungrounded,
                     const std::vector<std::set<std::string>>* reference_predicates, const KnowledgeBase* kb,
                     const ExecOptions& exec);

std::string render_derivation_table(const Derivation& derivation, TransitionLimits limits = {});

}  // namespace sempar
