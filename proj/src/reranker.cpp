#include "reranker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace sempar {

double RerankerWeights::score(const FeatureVector& f) const {
  double s = bias;
  for (std::size_t i = 0; i < FeatureVector::kCount; ++i) s += w[i] * f[i];
  return s;
}

void RerankerWeights::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Data, "cannot write reranker weights '" + path + "'");
  char buf[40];
  out << "sempar-reranker v1\n";
  for (double x : w) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    out << buf << "\n";
  }
  std::snprintf(buf, sizeof buf, "%.17g", bias);
  out << buf << "\n";
}

RerankerWeights RerankerWeights::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Data, "cannot open reranker weights '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "sempar-reranker v1")
    fail(ErrorCode::Data, "not a reranker weights file: '" + path + "'");
  RerankerWeights out;
  for (double& x : out.w)
    if (!(in >> x)) fail(ErrorCode::Data, "truncated reranker weights file");
  if (!(in >> out.bias)) fail(ErrorCode::Data, "truncated reranker weights file");
  return out;
}

AnswerTypeTable AnswerTypeTable::standard() {
  AnswerTypeTable t;
  t.keyword_to_question_words = {
      {"place", {"where"}},    {"city", {"where"}},  {"state", {"where"}},  {"country", {"where"}},
      {"location", {"where"}}, {"person", {"who"}},  {"people", {"who"}},   {"parent", {"who"}},
      {"date", {"when"}},      {"year", {"when"}},   {"time", {"when"}},    {"birth", {"when"}},
      {"count", {"how"}},      {"number", {"how"}},  {"population", {"how"}},
  };
  return t;
}

AnswerTypeTable AnswerTypeTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Data, "cannot open answer-type table '" + path + "'");
  AnswerTypeTable t;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() < 2) fail(ErrorCode::Data, "answer-type line needs a keyword and question words");
    t.keyword_to_question_words[fields[0]].insert(fields.begin() + 1, fields.end());
  }
  return t;
}

namespace {

// Last `_`-separated word of the segment after the final dot.
std::string relation_last_word(const std::string& relation) {
  std::string seg = relation;
  auto dot = seg.rfind('.');
  if (dot != std::string::npos) seg = seg.substr(dot + 1);
  auto us = seg.rfind('_');
  if (us != std::string::npos) seg = seg.substr(us + 1);
  return seg;
}

std::vector<std::string> relation_words(const std::string& relation) {
  std::string flat = relation;
  for (char& c : flat)
    if (c == '.' || c == '_') c = ' ';
  return split_ws(flat);
}

std::vector<double> mean_embedding(const std::vector<std::string>& words, const EmbeddingTable& emb) {
  std::vector<double> acc;
  std::size_t n = 0;
  for (const auto& w : words) {
    auto it = emb.find(w);
    if (it == emb.end()) continue;
    if (acc.empty()) acc.assign(it->second.size(), 0.0);
    for (std::size_t i = 0; i < acc.size() && i < it->second.size(); ++i) acc[i] += it->second[i];
    ++n;
  }
  if (n == 0) return {};
  for (double& x : acc) x /= static_cast<double>(n);
  return acc;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty() || a.size() != b.size()) return 0.0;
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

}  // namespace

bool AnswerTypeTable::matches(const std::string& relation, const std::string& question_word) const {
  auto it = keyword_to_question_words.find(relation_last_word(relation));
  return it != keyword_to_question_words.end() && it->second.count(question_word) > 0;
}

const std::set<std::string>& question_words() {
  static const std::set<std::string> kWords = {"who", "what", "where", "when", "which", "how", "why"};
  return kWords;
}

EmbeddingTable load_embedding_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Data, "cannot open embeddings file '" + path + "'");
  EmbeddingTable out;
  std::string line;
  while (std::getline(in, line)) {
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    std::vector<double> v;
    v.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) v.push_back(std::stod(fields[i]));
    out[fields[0]] = std::move(v);
  }
  return out;
}

FeatureVector featurize(const GroundedCandidate& candidate, const std::vector<std::string>& tokens,
                        const std::vector<EntityAnnotation>& annotations, const EmbeddingTable& embeddings,
                        const AnswerTypeTable& answer_types) {
  FeatureVector f;
  f.aggregated_likelihood = candidate.log_likelihood;

  std::set<std::string> used_entities;
  std::vector<std::string> rel_words;
  std::vector<std::string> relations;
  candidate.form.visit([&](const LogicalForm& n) {
    const Term& t = n.head();
    if (t.kind == TermKind::Entity) used_entities.insert(t.label);
    if (t.kind == TermKind::GroundedPredicate) {
      relations.push_back(t.label);
      auto words = relation_words(t.label);
      rel_words.insert(rel_words.end(), words.begin(), words.end());
    }
  });

  for (const auto& a : annotations)
    if (used_entities.count(a.entity)) f.entity_linker_score += a.score;

  auto rel_vec = mean_embedding(rel_words, embeddings);
  auto utt_vec = mean_embedding(tokens, embeddings);
  f.rel_utterance_similarity = cosine(rel_vec, utt_vec);

  std::vector<std::string> qwords;
  for (const auto& t : tokens)
    if (question_words().count(t)) qwords.push_back(t);
  f.rel_questionword_similarity = qwords.empty() ? 0.0 : cosine(rel_vec, mean_embedding(qwords, embeddings));

  if (!qwords.empty()) {
    for (const auto& rel : relations) {
      if (answer_types.matches(rel, qwords.front())) {
        f.answer_type_match = 1.0;
        break;
      }
    }
  }
  return f;
}

std::vector<double> candidate_probabilities(const std::vector<GroundedCandidate>& candidates,
                                            const RerankerWeights& weights) {
  if (candidates.empty()) fail(ErrorCode::Invalid, "no candidates to score");
  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) scores[i] = weights.score(candidates[i].features);
  double mx = *std::max_element(scores.begin(), scores.end());
  double z = 0.0;
  for (double& s : scores) z += s = std::exp(s - mx);
  for (double& s : scores) s /= z;
  return scores;
}

namespace {

double example_objective(const std::vector<GroundedCandidate>& candidates, const Denotation& gold,
                         const RerankerWeights& weights, std::array<double, FeatureVector::kCount>* grad,
                         double* bias_grad, bool* any_correct) {
  auto probs = candidate_probabilities(candidates, weights);
  double correct_mass = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i)
    if (candidates[i].denotation && *candidates[i].denotation == gold) correct_mass += probs[i];
  *any_correct = correct_mass > 0.0;
  if (!*any_correct) return 0.0;
  if (grad) {
    // d/dw log sum_correct p = E_correct[f] - E_all[f].
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      bool correct = candidates[i].denotation && *candidates[i].denotation == gold;
      double coeff = (correct ? probs[i] / correct_mass : 0.0) - probs[i];
      for (std::size_t k = 0; k < FeatureVector::kCount; ++k) (*grad)[k] += coeff * candidates[i].features[k];
      *bias_grad += coeff;
    }
  }
  return std::log(correct_mass);
}

}  // namespace

double reranker_objective(const std::vector<std::vector<GroundedCandidate>>& candidates_per_example,
                          const std::vector<Denotation>& gold, const RerankerWeights& weights, double l2) {
  double obj = 0.0;
  for (std::size_t x = 0; x < candidates_per_example.size(); ++x) {
    if (candidates_per_example[x].empty()) continue;
    bool any = false;
    obj += example_objective(candidates_per_example[x], gold.at(x), weights, nullptr, nullptr, &any);
  }
  double penalty = 0.0;
  for (double wi : weights.w) penalty += wi * wi;
  penalty += weights.bias * weights.bias;
  return obj - l2 * penalty;
}

std::array<double, FeatureVector::kCount + 1> reranker_gradient(
    const std::vector<std::vector<GroundedCandidate>>& candidates_per_example,
    const std::vector<Denotation>& gold, const RerankerWeights& weights, double l2) {
  std::array<double, FeatureVector::kCount> grad{};
  double bias_grad = 0.0;
  for (std::size_t x = 0; x < candidates_per_example.size(); ++x) {
    if (candidates_per_example[x].empty()) continue;
    bool any = false;
    example_objective(candidates_per_example[x], gold.at(x), weights, &grad, &bias_grad, &any);
  }
  std::array<double, FeatureVector::kCount + 1> out{};
  for (std::size_t k = 0; k < FeatureVector::kCount; ++k) out[k] = grad[k] - 2.0 * l2 * weights.w[k];
  out[FeatureVector::kCount] = bias_grad - 2.0 * l2 * weights.bias;
  return out;
}

RerankerTrainResult train_reranker(std::vector<std::vector<GroundedCandidate>>& candidates_per_example,
                                   const std::vector<Denotation>& gold, const KnowledgeBase& kb,
                                   const RerankerTrainOptions& opts, const ExecOptions& exec) {
  if (candidates_per_example.size() != gold.size())
    fail(ErrorCode::Invalid, "candidate lists and gold denotations differ in length");
  for (auto& candidates : candidates_per_example) {
    for (auto& c : candidates) {
      if (c.denotation) continue;
      try {
        c.denotation = execute(c.form, kb, exec);
      } catch (const Error&) {
        c.denotation = std::nullopt;  // stays incorrect
      }
    }
  }

  std::size_t with_correct = 0;
  for (std::size_t x = 0; x < candidates_per_example.size(); ++x) {
    bool any = std::any_of(candidates_per_example[x].begin(), candidates_per_example[x].end(),
                           [&](const GroundedCandidate& c) { return c.denotation && *c.denotation == gold[x]; });
    if (any) ++with_correct;
  }
  if (with_correct == 0) fail(ErrorCode::Data, "no example has a correct candidate");

  RerankerTrainResult result;
  result.skipped = candidates_per_example.size() - with_correct;
  RerankerWeights& w = result.weights;
  for (std::size_t iter = 0; iter < opts.iterations; ++iter) {
    std::array<double, FeatureVector::kCount> grad{};
    double bias_grad = 0.0;
    for (std::size_t x = 0; x < candidates_per_example.size(); ++x) {
      if (candidates_per_example[x].empty()) continue;
      bool any = false;
      example_objective(candidates_per_example[x], gold[x], w, &grad, &bias_grad, &any);
    }
    for (std::size_t k = 0; k < FeatureVector::kCount; ++k)
      w.w[k] += opts.learning_rate * (grad[k] - 2.0 * opts.l2 * w.w[k]);
    w.bias += opts.learning_rate * (bias_grad - 2.0 * opts.l2 * w.bias);
  }
  return result;
}

const GroundedCandidate& select(const std::vector<GroundedCandidate>& candidates,
                                const RerankerWeights& weights) {
  if (candidates.empty()) fail(ErrorCode::Invalid, "no candidates to select from");
  const GroundedCandidate* best = &candidates.front();
  double best_score = weights.score(best->features);
  for (const auto& c : candidates) {
    double s = weights.score(c.features);
    if (s > best_score) {
      best = &c;
      best_score = s;
      continue;
    }
    if (s == best_score && &c != best) {
      if (c.log_likelihood > best->log_likelihood ||
          (c.log_likelihood == best->log_likelihood && print_funql(c.form) < print_funql(best->form))) {
        best = &c;
      }
    }
  }
  return *best;
}

}  // namespace sempar
