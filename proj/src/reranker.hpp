#pragma once

// Discriminative maximum-entropy reranking of grounded candidates with
// global sentential features.

#include <array>
#include <map>

#include "decoder.hpp"

namespace sempar {

struct RerankerWeights {
  std::array<double, FeatureVector::kCount> w{};
  double bias = 0.0;

  double score(const FeatureVector& f) const;

  void save(const std::string& path) const;
  static RerankerWeights load(const std::string& path);
};

// Maps the last word of a relation name to the question words it answers,
// e.g. `place -> {where}`.  Shipped with a small default table.
struct AnswerTypeTable {
  std::map<std::string, std::set<std::string>> keyword_to_question_words;

  static AnswerTypeTable standard();
  static AnswerTypeTable load(const std::string& path);  // `keyword qword qword...` lines

  bool matches(const std::string& relation, const std::string& question_word) const;
};

const std::set<std::string>& question_words();

using EmbeddingTable = std::map<std::string, std::vector<double>>;

EmbeddingTable load_embedding_table(const std::string& path);

// Fills the feature vector of a candidate.  `embeddings` backs the two
// similarity features; aggregated_likelihood comes from the candidate itself.
FeatureVector featurize(const GroundedCandidate& candidate, const std::vector<std::string>& tokens,
                        const std::vector<EntityAnnotation>& annotations, const EmbeddingTable& embeddings,
                        const AnswerTypeTable& answer_types = AnswerTypeTable::standard());

// Softmax over candidate scores; aligned with `candidates`.
std::vector<double> candidate_probabilities(const std::vector<GroundedCandidate>& candidates,
                                            const RerankerWeights& weights);

struct RerankerTrainOptions {
  std::size_t iterations = 500;
  double learning_rate = 0.1;
  double l2 = 1e-4;
};

struct RerankerTrainResult {
  RerankerWeights weights;
  std::size_t skipped = 0;  // examples with no correct candidate
};

// Maximizes sum over examples of log sum of p(G|x) over candidates whose
// cached denotation equals the gold one.  Full-batch gradient ascent.
RerankerTrainResult train_reranker(std::vector<std::vector<GroundedCandidate>>& candidates_per_example,
                                   const std::vector<Denotation>& gold, const KnowledgeBase& kb,
                                   const RerankerTrainOptions& opts = {}, const ExecOptions& exec = {});

// Objective value at `weights` (for gradient checks); candidates must carry
// cached denotations.
double reranker_objective(const std::vector<std::vector<GroundedCandidate>>& candidates_per_example,
                          const std::vector<Denotation>& gold, const RerankerWeights& weights,
                          double l2);

// Analytic gradient of the objective, feature weights first, bias last.
std::array<double, FeatureVector::kCount + 1> reranker_gradient(
    const std::vector<std::vector<GroundedCandidate>>& candidates_per_example,
    const std::vector<Denotation>& gold, const RerankerWeights& weights, double l2);

// Argmax of the reranker score; ties break toward higher aggregated
// likelihood, then lexicographically smaller canonical text.
const GroundedCandidate& select(const std::vector<GroundedCandidate>& candidates,
                                const RerankerWeights& weights);

}  // namespace sempar
