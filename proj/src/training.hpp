#pragma once

// End-to-end optimization: the action likelihood, the expected grounded-term
// likelihood with latent ungrounded terms (sampled, with a score-function
// gradient and a running-average baseline), and the Adam loop.

#include <optional>

#include "dataset.hpp"
#include "decoder.hpp"
#include "neural.hpp"

namespace sempar {

struct TrainingConfig {
  double learning_rate = 0.001;
  double beta1 = 0.99;
  double beta2 = 0.999;
  std::size_t batch_size = 1;
  std::size_t epochs = 1;
  std::size_t latent_samples = 5;  // M
  std::uint64_t seed = 1;
  TransitionLimits limits;
  SurrogateLimits surrogate_limits;
  ExecOptions exec;
};

class Adam {
 public:
  Adam(double lr, double beta1, double beta2, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<ad::Tensor*>& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct LossBreakdown {
  double action_nll = 0.0;
  double term_nll = 0.0;  // forced term cross-entropy plus grounding cross-entropy
  double mass_nll = 0.0;  // negated log feasible-candidate mass at latent slots
  std::size_t action_steps = 0;
  std::size_t term_steps = 0;

  double total() const { return action_nll + term_nll + mass_nll; }
};

// Builds the loss graph for one example along the gold grounded derivation.
// Latent natural-language terms are sampled M times from the term
// distribution restricted to buffer positions.  Components are exposed
// separately so callers can differentiate exactly what they report:
//   action - negated action log-likelihood;
//   term   - forced term plus grounding cross-entropy;
//   mass   - negated log mass the union distribution puts on buffer
//            positions at latent slots (the bound's normalizer);
//   backprop - action + term + mass plus the score-function surrogate for
//              the sampled latent choices.
// `baseline`, when given, is a running average of the grounding reward
// updated in place.
struct ExampleLoss {
  ad::Tape::Var action = 0;
  ad::Tape::Var term = 0;
  ad::Tape::Var mass = 0;
  ad::Tape::Var backprop = 0;
  LossBreakdown values;
};

ExampleLoss example_loss(ad::Tape& tape, Model& m, const TrainingExample& ex,
                         const LogicalForm& grounded, std::size_t latent_samples, Rng& rng,
                         double* baseline, const TransitionLimits& limits = {});

// Negative action log-likelihood along the gold derivation (one sampled
// latent replay).
double action_loss(Model& m, const TrainingExample& ex, const LogicalForm& grounded, Rng& rng,
                   const TransitionLimits& limits = {});

// Negative expected grounded-term log-likelihood (Monte-Carlo with M
// samples; exact when every latent candidate set is a singleton).
double term_loss_expected(Model& m, const TrainingExample& ex, const LogicalForm& grounded,
                          std::size_t latent_samples, Rng& rng, const TransitionLimits& limits = {});

struct EpochMetrics {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  std::size_t skipped_examples = 0;  // unusable across the whole run
  // Mean surrogate count over the denotation-supervised examples in use.
  double surrogate_multiplicity = 0.0;
};

// Denotation-supervised examples draw one surrogate uniformly per epoch;
// examples without surrogates (or with unusable gold forms) are skipped and
// counted.  Throws Error(Data) when no example is usable.
TrainResult train(Model& m, const std::vector<TrainingExample>& dataset, const KnowledgeBase& kb,
                  const TrainingConfig& config);

}  // namespace sempar
