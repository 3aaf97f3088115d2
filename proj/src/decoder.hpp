#pragma once

// Transition decoding (greedy or beam) of ungrounded forms, and the beam
// over grounded-term choices that turns a decoded form into grounded
// candidates.

#include <optional>
#include <vector>

#include "neural.hpp"

namespace sempar {

struct DecodeOptions {
  std::size_t beam = 1;  // 1 = greedy (argmax, lowest-index tie-break)
  TransitionLimits limits;
};

struct DecodeResult {
  Derivation derivation;
  LogicalForm form;       // ungrounded
  double log_prob = 0.0;  // log p(U | x): actions + term choices
};

// Throws Error(NoParse) when no hypothesis finishes within the limits.
DecodeResult decode(Model& m, const std::vector<std::string>& tokens,
                    const std::vector<EntityAnnotation>& annotations, const DecodeOptions& opts = {});

struct FeatureVector {
  double entity_linker_score = 0.0;
  double aggregated_likelihood = 0.0;
  double rel_utterance_similarity = 0.0;
  double rel_questionword_similarity = 0.0;
  double answer_type_match = 0.0;

  static constexpr std::size_t kCount = 5;
  double operator[](std::size_t i) const;
};

struct GroundedCandidate {
  LogicalForm form;  // grounded; isomorphic to the source ungrounded form
  double log_likelihood = 0.0;
  FeatureVector features;
  std::optional<Denotation> denotation;
};

struct GroundingOptions {
  std::size_t k_per_term = 8;  // grounded terms considered per ungrounded term
  std::size_t beam = 32;       // candidates kept while combining term positions
};

// Top grounded candidates for a decoded ungrounded form, in non-increasing
// log-likelihood order.  `kb`, when given, restricts each slot's grounded
// vocabulary to relations structurally compatible with the slot (unary
// relations for `all` children, binary otherwise).
std::vector<GroundedCandidate> enumerate_groundings(Model& m, const std::vector<std::string>& tokens,
                                                    const DecodeResult& decoded,
                                                    const GroundingOptions& opts = {},
                                                    const KnowledgeBase* kb = nullptr);

}  // namespace sempar
