#include "sempar/sempar.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "pipeline.hpp"

using namespace sempar;

struct sempar_kb {
  KnowledgeBase kb;
};

struct sempar_dataset {
  std::vector<TrainingExample> examples;
};

struct sempar_model {
  Model model;
};

namespace {

thread_local std::string g_last_error;

sempar_status status_of(const Error& e) {
  switch (e.code()) {
    case ErrorCode::Parse: return SEMPAR_ERR_PARSE;
    case ErrorCode::Data: return SEMPAR_ERR_DATA;
    case ErrorCode::Execution: return SEMPAR_ERR_EXEC;
    case ErrorCode::NoParse: return SEMPAR_ERR_NO_PARSE;
    case ErrorCode::Invalid: return SEMPAR_ERR_INVALID;
    case ErrorCode::Internal: return SEMPAR_ERR_INTERNAL;
  }
  return SEMPAR_ERR_INTERNAL;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
sempar_status guarded(Fn&& fn) {
  try {
    fn();
    return SEMPAR_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SEMPAR_ERR_INTERNAL;
  }
}

sempar_status require(bool ok, const char* message) {
  if (ok) return SEMPAR_OK;
  g_last_error = message;
  return SEMPAR_ERR_INVALID;
}

PipelineConfig config_from(const char* options) {
  return PipelineConfig::from_options(parse_options(options ? options : ""));
}

std::vector<EntityAnnotation> annotations_from(const char* annotations, std::size_t n_tokens) {
  return parse_annotations(annotations ? annotations : "-", n_tokens);
}

}  // namespace

extern "C" {

const char* sempar_version(void) { return "0.1.0"; }

const char* sempar_last_error(void) { return g_last_error.c_str(); }

void sempar_string_free(char* s) { std::free(s); }

sempar_status sempar_kb_open(const char* path, sempar_kb** out) {
  if (auto s = require(path && out, "kb_open requires a path and an out pointer")) return s;
  return guarded([&] { *out = new sempar_kb{KnowledgeBase::load(path)}; });
}

void sempar_kb_close(sempar_kb* kb) { delete kb; }

sempar_status sempar_execute(const sempar_kb* kb, const char* funql, char** out_denotation) {
  if (auto s = require(kb && funql && out_denotation, "execute requires a kb, a form, and an out pointer"))
    return s;
  return guarded([&] {
    LogicalForm g = parse_funql(funql, TermKind::GroundedPredicate);
    *out_denotation = dup_string(execute(g, kb->kb).to_string());
  });
}

sempar_status sempar_surrogate_search(const sempar_kb* kb, const char* tokens, const char* annotations,
                                      const char* denotation, const char* options, char** out_forms) {
  if (auto s = require(kb && tokens && denotation && out_forms,
                       "surrogate_search requires a kb, tokens, a denotation, and an out pointer"))
    return s;
  return guarded([&] {
    PipelineConfig config = config_from(options);
    std::vector<std::string> toks = split_ws(tokens);
    auto anns = annotations_from(annotations, toks.size());
    auto forms = surrogate_search(toks, anns, Denotation::parse(denotation), kb->kb,
                                  config.training.surrogate_limits, config.exec);
    std::string out;
    for (const auto& f : forms) out += print_funql(f) + "\n";
    *out_forms = dup_string(out);
  });
}

sempar_status sempar_dataset_open(const char* path, sempar_dataset** out) {
  if (auto s = require(path && out, "dataset_open requires a path and an out pointer")) return s;
  return guarded([&] { *out = new sempar_dataset{load_dataset(path)}; });
}

void sempar_dataset_close(sempar_dataset* ds) { delete ds; }

size_t sempar_dataset_size(const sempar_dataset* ds) { return ds ? ds->examples.size() : 0; }

sempar_status sempar_oracle_check(const sempar_dataset* ds, char** out_report) {
  if (auto s = require(ds && out_report, "oracle_check requires a dataset and an out pointer")) return s;
  return guarded([&] { *out_report = dup_string(run_oracle_check(ds->examples).report); });
}

sempar_status sempar_train(const sempar_dataset* ds, const sempar_kb* kb, const char* options,
                           const char* checkpoint_path, char** out_metrics) {
  if (auto s = require(ds && kb, "train requires a dataset and a kb")) return s;
  return guarded([&] {
    PipelineConfig config = config_from(options);
    Model model;
    TrainOutcome outcome = run_train(model, ds->examples, kb->kb, config);
    if (checkpoint_path) model.save(checkpoint_path);
    if (out_metrics) *out_metrics = dup_string(outcome.metrics_log);
  });
}

sempar_status sempar_model_open(const char* checkpoint_path, sempar_model** out) {
  if (auto s = require(checkpoint_path && out, "model_open requires a path and an out pointer")) return s;
  return guarded([&] { *out = new sempar_model{Model::load(checkpoint_path)}; });
}

void sempar_model_close(sempar_model* m) { delete m; }

sempar_status sempar_parse_utterance(sempar_model* m, const sempar_kb* kb, const char* utterance,
                                     const char* annotations, const char* options, char** out_report) {
  if (auto s = require(m && utterance && out_report,
                       "parse_utterance requires a model, an utterance, and an out pointer"))
    return s;
  return guarded([&] {
    PipelineConfig config = config_from(options);
    std::vector<std::string> tokens = split_ws(utterance);
    if (tokens.empty()) fail(ErrorCode::Invalid, "empty utterance");
    auto anns = annotations_from(annotations, tokens.size());
    ParseOutcome outcome = run_parse(m->model, kb ? &kb->kb : nullptr, tokens, anns, config);
    *out_report = dup_string(outcome.report);
  });
}

sempar_status sempar_predict(sempar_model* m, const sempar_kb* kb, const sempar_dataset* ds,
                             const char* options, char** out_predictions) {
  if (auto s = require(m && ds && out_predictions,
                       "predict requires a model, a dataset, and an out pointer"))
    return s;
  return guarded([&] {
    PipelineConfig config = config_from(options);
    *out_predictions =
        dup_string(run_predict(m->model, kb ? &kb->kb : nullptr, ds->examples, config));
  });
}

sempar_status sempar_eval(const char* gold_dataset_path, const char* predictions_path, const sempar_kb* kb,
                          const char* gold_ungrounded_path, const char* reference_predicates_path,
                          const char* options, char** out_report) {
  if (auto s = require(gold_dataset_path && predictions_path && out_report,
                       "eval requires gold and prediction paths and an out pointer"))
    return s;
  return guarded([&] {
    PipelineConfig config = config_from(options);
    auto gold = load_dataset(gold_dataset_path);
    auto preds = load_predictions(predictions_path);
    std::vector<std::optional<LogicalForm>> gold_u;
    std::vector<std::set<std::string>> ref_preds;
    bool have_u = gold_ungrounded_path && *gold_ungrounded_path;
    bool have_p = reference_predicates_path && *reference_predicates_path;
    if (have_u) gold_u = load_form_lines(gold_ungrounded_path, GeneralInventory::standard());
    if (have_p) ref_preds = load_predicate_lines(reference_predicates_path);
    *out_report = dup_string(run_eval(gold, preds, have_u ? &gold_u : nullptr,
                                      have_p ? &ref_preds : nullptr, kb ? &kb->kb : nullptr, config.exec));
  });
}

}  // extern "C"
