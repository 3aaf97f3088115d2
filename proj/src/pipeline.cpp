#include "pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace sempar {

std::map<std::string, std::string> parse_options(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) fail(ErrorCode::Data, "bad option line '" + line + "' (expected key=value)");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) fail(ErrorCode::Data, "empty option key in '" + line + "'");
    out[key] = value;
  }
  return out;
}

namespace {

std::size_t to_size(const std::string& key, const std::string& value) {
  try {
    return std::stoull(value);
  } catch (const std::exception&) {
    fail(ErrorCode::Data, "option '" + key + "' needs an unsigned integer, got '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    return std::stod(value);
  } catch (const std::exception&) {
    fail(ErrorCode::Data, "option '" + key + "' needs a number, got '" + value + "'");
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_options(const std::map<std::string, std::string>& options) {
  PipelineConfig c;
  for (const auto& [key, value] : options) {
    if (key == "seed") {
      c.training.seed = to_size(key, value);
      c.seed_set = true;
    } else if (key == "epochs") {
      c.training.epochs = to_size(key, value);
    } else if (key == "learning_rate") {
      c.training.learning_rate = to_double(key, value);
    } else if (key == "latent_samples") {
      c.training.latent_samples = to_size(key, value);
    } else if (key == "beam") {
      c.decode.beam = std::max<std::size_t>(1, to_size(key, value));
    } else if (key == "max_depth") {
      c.training.limits.max_depth = to_size(key, value);
      c.decode.limits.max_depth = c.training.limits.max_depth;
    } else if (key == "max_steps") {
      c.training.limits.max_steps = to_size(key, value);
      c.decode.limits.max_steps = c.training.limits.max_steps;
    } else if (key == "surrogate_depth") {
      c.training.surrogate_limits.max_depth = to_size(key, value);
    } else if (key == "surrogate_predicates") {
      c.training.surrogate_limits.max_predicates = to_size(key, value);
    } else if (key == "rank_attribute") {
      c.exec.rank_attribute = value;
      c.training.exec.rank_attribute = value;
    } else if (key == "word_dim") {
      c.dims.word = to_size(key, value);
    } else if (key == "lstm_dim") {
      c.dims.lstm = to_size(key, value);
    } else if (key == "entity_dim") {
      c.dims.entity = to_size(key, value);
      c.dims.general = c.dims.entity;
    } else if (key == "grounded_dim") {
      c.dims.grounded = to_size(key, value);
    } else if (key == "attention_dim") {
      c.dims.attention = to_size(key, value);
    } else if (key == "k_per_term") {
      c.grounding.k_per_term = std::max<std::size_t>(1, to_size(key, value));
    } else if (key == "grounding_beam") {
      c.grounding.beam = std::max<std::size_t>(1, to_size(key, value));
    } else if (key == "embeddings") {
      c.embeddings_path = value;
    } else if (key == "answer_types") {
      c.answer_types_path = value;
    } else if (key == "reranker") {
      c.reranker_path = value;
    } else if (key == "dump_candidates") {
      c.dump_candidates = value == "1" || value == "true";
    } else if (key == "type_predicates") {
      for (const auto& piece : split_on(value, ',')) {
        std::string t = trim(piece);
        if (!t.empty()) c.type_predicates.insert(t);
      }
    } else {
      fail(ErrorCode::Data, "unknown option '" + key + "'");
    }
  }
  return c;
}

Vocabulary build_vocabulary(const std::vector<TrainingExample>& dataset, const KnowledgeBase& kb,
                            const GeneralInventory& inv) {
  Vocabulary v;
  std::set<std::string> words, entities;
  for (const auto& ex : dataset) {
    for (const auto& t : ex.tokens) words.insert(t);
    for (const auto& a : ex.annotations) entities.insert(a.entity);
    if (ex.gold_form) {
      ex.gold_form->visit([&](const LogicalForm& n) {
        if (n.head().kind == TermKind::Entity) entities.insert(n.head().label);
      });
    }
  }
  entities.insert(kb.entities.begin(), kb.entities.end());
  for (const auto& w : words) v.add_word(w);
  v.entities.assign(entities.begin(), entities.end());

  std::vector<std::string> general = {"all", "answer", "count", "exclude", "intersect", "largest",
                                      "smallest", "union"};
  for (const auto& t : inv.type_predicates()) general.push_back(t);
  std::sort(general.begin(), general.end());
  v.general = std::move(general);
  v.grounded = kb.relation_names();
  v.rebuild_index();
  return v;
}

TrainOutcome run_train(Model& out_model, const std::vector<TrainingExample>& dataset,
                       const KnowledgeBase& kb, const PipelineConfig& config) {
  if (!config.seed_set) fail(ErrorCode::Data, "training requires an explicit seed");
  GeneralInventory inv = config.type_predicates.empty()
                             ? GeneralInventory::standard()
                             : [&] {
                                 std::set<std::string> types =
                                     GeneralInventory::standard().type_predicates();
                                 types.insert(config.type_predicates.begin(), config.type_predicates.end());
                                 return GeneralInventory(std::move(types));
                               }();
  Rng init_rng(config.training.seed);
  out_model = Model(config.dims, build_vocabulary(dataset, kb, inv), inv, init_rng);
  if (!config.embeddings_path.empty()) out_model.load_pretrained_words(config.embeddings_path);

  TrainOutcome out;
  out.result = train(out_model, dataset, kb, config.training);
  std::ostringstream log;
  char buf[96];
  for (const auto& e : out.result.history) {
    std::snprintf(buf, sizeof buf, "epoch %zu loss %.6f used %zu skipped %zu", e.epoch, e.mean_loss, e.used,
                  e.skipped);
    log << buf << "\n";
  }
  if (out.result.surrogate_multiplicity > 0) {
    std::snprintf(buf, sizeof buf, "surrogate multiplicity %.2f", out.result.surrogate_multiplicity);
    log << buf << "\n";
  }
  out.metrics_log = log.str();
  return out;
}

std::string render_derivation_table(const Derivation& derivation, TransitionLimits limits) {
  ParserState state = ParserState::initial({}, {}, limits);
  std::ostringstream out;
  out << "STACK\tACTION\tNT CHOICE\tTER CHOICE\n";
  std::size_t ti = 0;
  for (const auto& a : derivation.actions) {
    std::string nt_choice, ter_choice;
    std::optional<Term> term;
    if (a.kind != ActionKind::RED) {
      term = derivation.terms.at(ti++);
      (a.kind == ActionKind::NT ? nt_choice : ter_choice) = term->label;
    }
    out << state.render_stack() << "\t" << action_kind_name(a.kind) << "\t" << nt_choice << "\t"
        << ter_choice << "\n";
    state = state.apply(a.kind, term);
  }
  out << state.render_stack() << "\t\t\t\n";
  return out.str();
}

ParseOutcome run_parse(Model& m, const KnowledgeBase* kb, const std::vector<std::string>& tokens,
                       const std::vector<EntityAnnotation>& annotations, const PipelineConfig& config,
                       const RerankerWeights* weights) {
  ParseOutcome out{decode(m, tokens, annotations, config.decode), {}, {}, {}, ""};
  out.candidates = enumerate_groundings(m, tokens, out.decoded, config.grounding, kb);

  RerankerWeights loaded;
  if (!weights && !config.reranker_path.empty()) {
    loaded = RerankerWeights::load(config.reranker_path);
    weights = &loaded;
  }
  if (!out.candidates.empty()) {
    EmbeddingTable emb;
    AnswerTypeTable types = config.answer_types_path.empty()
                                ? AnswerTypeTable::standard()
                                : AnswerTypeTable::load(config.answer_types_path);
    if (!config.embeddings_path.empty()) emb = load_embedding_table(config.embeddings_path);
    for (auto& c : out.candidates) c.features = featurize(c, tokens, annotations, emb, types);
    if (weights) {
      const GroundedCandidate& best = select(out.candidates, *weights);
      out.selected = static_cast<std::size_t>(&best - out.candidates.data());
    } else {
      out.selected = 0;  // enumerate_groundings returns best-likelihood first
    }
  }

  if (out.selected && kb) {
    try {
      out.denotation = execute(out.candidates[*out.selected].form, *kb, config.exec);
    } catch (const Error&) {
      // Candidate does not execute; report the forms without a denotation.
    }
  }

  std::ostringstream rep;
  rep << "tokens:";
  for (const auto& t : tokens) rep << " " << t;
  rep << "\n";
  rep << "derivation:\n" << render_derivation_table(out.decoded.derivation, config.decode.limits);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", out.decoded.log_prob);
  rep << "ungrounded: " << print_funql(out.decoded.form) << " (log prob " << buf << ")\n";
  if (out.selected) {
    const auto& c = out.candidates[*out.selected];
    std::snprintf(buf, sizeof buf, "%.6f", c.log_likelihood);
    rep << "grounded: " << print_funql(c.form) << " (log likelihood " << buf << ")\n";
  } else {
    rep << "grounded: NOPARSE (no grounded candidate)\n";
  }
  if (out.denotation) rep << "denotation: " << out.denotation->to_string() << "\n";
  if (config.dump_candidates) {
    rep << "candidates:\n";
    for (const auto& c : out.candidates) {
      const FeatureVector& f = c.features;
      std::snprintf(buf, sizeof buf, "%.6f\t%.6f %.6f %.6f %.6f %.6f", c.log_likelihood,
                    f.entity_linker_score, f.aggregated_likelihood, f.rel_utterance_similarity,
                    f.rel_questionword_similarity, f.answer_type_match);
      rep << print_funql(c.form) << "\t" << buf << "\n";
    }
  }
  out.report = rep.str();
  return out;
}

std::string run_predict(Model& m, const KnowledgeBase* kb, const std::vector<TrainingExample>& dataset,
                        const PipelineConfig& config, const RerankerWeights* weights) {
  std::ostringstream out;
  for (const auto& ex : dataset) {
    try {
      ParseOutcome p = run_parse(m, kb, ex.tokens, ex.annotations, config, weights);
      Prediction pred;
      pred.ungrounded = p.decoded.form;
      if (p.selected) pred.grounded = p.candidates[*p.selected].form;
      pred.denotation = p.denotation;
      out << format_prediction(pred) << "\n";
    } catch (const Error&) {
      out << "NOPARSE\n";
    }
  }
  return out.str();
}

OracleCheckOutcome run_oracle_check(const std::vector<TrainingExample>& dataset) {
  OracleCheckOutcome out;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const TrainingExample& ex = dataset[i];
    if (!ex.gold_form) continue;
    ++out.total;
    try {
      Derivation d = oracle(*ex.gold_form, ex.tokens, ex.annotations);
      LogicalForm back = reconstruct(d);
      if (back == *ex.gold_form) {
        ++out.ok;
      } else {
        out.errors.push_back("line " + std::to_string(i + 1) + ": round-trip mismatch: " +
                             print_funql(back));
      }
    } catch (const Error& e) {
      out.errors.push_back("line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  std::ostringstream rep;
  rep << "forms: " << out.total << "\n";
  rep << "round-trip ok: " << out.ok << "\n";
  rep << "failures: " << (out.total - out.ok) << "\n";
  for (const auto& e : out.errors) rep << e << "\n";
  out.report = rep.str();
  return out;
}

std::string run_eval(const std::vector<TrainingExample>& gold, const std::vector<Prediction>& predictions,
                     const std::vector<std::optional<LogicalForm>>* gold_ungrounded,
                     const std::vector<std::set<std::string>>* reference_predicates, const KnowledgeBase* kb,
                     const ExecOptions& exec) {
  EvalReport r = evaluate(gold, predictions, gold_ungrounded, reference_predicates, kb, exec);
  return r.to_text() + "---\n" + r.to_kv();
}

}  // namespace sempar
