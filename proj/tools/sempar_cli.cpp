// Command-line front end.  Everything goes through the C library API.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sempar/sempar.h"

namespace {

// Exit codes: 0 success, 2 data/config error, 3 no-parse, 1 anything else.
int exit_code(sempar_status s) {
  switch (s) {
    case SEMPAR_OK: return 0;
    case SEMPAR_ERR_PARSE:
    case SEMPAR_ERR_DATA:
    case SEMPAR_ERR_INVALID: return 2;
    case SEMPAR_ERR_NO_PARSE: return 3;
    default: return 1;
  }
}

[[noreturn]] void die(sempar_status s) {
  std::cerr << "error: " << sempar_last_error() << "\n";
  std::exit(exit_code(s));
}

void check(sempar_status s) {
  if (s != SEMPAR_OK) die(s);
}

std::string take(char* s) {
  std::string out = s ? s : "";
  sempar_string_free(s);
  return out;
}

struct Options {
  std::string config_file;
  std::vector<std::string> overrides;  // key=value

  // Config file first, then command-line overrides.
  std::string merged() const {
    std::ostringstream out;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) {
        std::cerr << "error: cannot open config file '" << config_file << "'\n";
        std::exit(2);
      }
      out << in.rdbuf() << "\n";
    }
    for (const auto& o : overrides) out << o << "\n";
    return out.str();
  }
};

void add_common(CLI::App* cmd, Options& opts) {
  cmd->add_option("--config", opts.config_file, "key = value config file");
  cmd->add_option("--set", opts.overrides, "override a config value (key=value)")->take_all();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) {
    std::cerr << "error: cannot write '" << path << "'\n";
    std::exit(2);
  }
  out << content;
}

struct KbGuard {
  sempar_kb* kb = nullptr;
  ~KbGuard() { sempar_kb_close(kb); }
};

struct DatasetGuard {
  sempar_dataset* ds = nullptr;
  ~DatasetGuard() { sempar_dataset_close(ds); }
};

struct ModelGuard {
  sempar_model* m = nullptr;
  ~ModelGuard() { sempar_model_close(m); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sempar: transition-based semantic parsing over FunQL"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train a model from logical forms or denotations");
  std::string train_dataset, train_kb, train_out = "model.ckpt", train_metrics_out;
  std::string train_embeddings;
  long long train_seed = -1, train_epochs = -1;
  Options train_opts;
  train->add_option("--dataset", train_dataset, "training dataset")->required();
  train->add_option("--kb", train_kb, "knowledge base file")->required();
  train->add_option("--out", train_out, "checkpoint output path");
  train->add_option("--metrics-out", train_metrics_out, "write the per-epoch metrics log here");
  train->add_option("--seed", train_seed, "random seed (required)");
  train->add_option("--epochs", train_epochs, "training epochs");
  train->add_option("--embeddings", train_embeddings, "pretrained word embeddings");
  add_common(train, train_opts);

  // parse
  auto* parse = app.add_subcommand("parse", "parse an utterance (or a whole dataset) with a model");
  std::string parse_model, parse_kb, parse_utterance, parse_annotations, parse_dataset, parse_out;
  long long parse_beam = -1;
  Options parse_opts;
  parse->add_option("--model", parse_model, "model checkpoint")->required();
  parse->add_option("--kb", parse_kb, "knowledge base file");
  parse->add_option("--utterance", parse_utterance, "tokenized utterance");
  parse->add_option("--annotations", parse_annotations, "entity annotations start:end:entity:score;...");
  parse->add_option("--dataset", parse_dataset, "parse every record of this dataset");
  parse->add_option("--out", parse_out, "write predictions here (with --dataset)");
  parse->add_option("--beam", parse_beam, "beam width");
  add_common(parse, parse_opts);

  // execute
  auto* execute = app.add_subcommand("execute", "execute a grounded FunQL form against a kb");
  std::string exec_kb, exec_lf;
  Options exec_opts;
  execute->add_option("--kb", exec_kb, "knowledge base file")->required();
  execute->add_option("--lf", exec_lf, "grounded FunQL form")->required();
  add_common(execute, exec_opts);

  // eval
  auto* eval = app.add_subcommand("eval", "score predictions against a gold dataset");
  std::string eval_gold, eval_pred, eval_kb, eval_gold_u, eval_ref_preds;
  Options eval_opts;
  eval->add_option("--gold", eval_gold, "gold dataset")->required();
  eval->add_option("--pred", eval_pred, "predictions file")->required();
  eval->add_option("--kb", eval_kb, "knowledge base (for denotation metrics)");
  eval->add_option("--gold-ungrounded", eval_gold_u, "reference ungrounded forms, one per line");
  eval->add_option("--reference-predicates", eval_ref_preds, "reference predicate sets, one line each");
  add_common(eval, eval_opts);

  // oracle-check
  auto* oracle = app.add_subcommand("oracle-check", "round-trip gold forms through the oracle");
  std::string oracle_dataset;
  Options oracle_opts;
  oracle->add_option("--dataset", oracle_dataset, "dataset with lf supervision")->required();
  add_common(oracle, oracle_opts);

  // surrogate-search
  auto* surrogate = app.add_subcommand("surrogate-search", "grounded forms matching a denotation");
  std::string sur_kb, sur_tokens, sur_annotations, sur_denotation;
  Options sur_opts;
  surrogate->add_option("--kb", sur_kb, "knowledge base file")->required();
  surrogate->add_option("--tokens", sur_tokens, "utterance tokens")->required();
  surrogate->add_option("--annotations", sur_annotations, "entity annotations");
  surrogate->add_option("--denotation", sur_denotation, "target denotation, e.g. {texas} or 4")->required();
  add_common(surrogate, sur_opts);

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) {
    if (train_seed >= 0) train_opts.overrides.push_back("seed=" + std::to_string(train_seed));
    if (train_epochs >= 0) train_opts.overrides.push_back("epochs=" + std::to_string(train_epochs));
    if (!train_embeddings.empty()) train_opts.overrides.push_back("embeddings=" + train_embeddings);
    KbGuard kb;
    DatasetGuard ds;
    check(sempar_kb_open(train_kb.c_str(), &kb.kb));
    check(sempar_dataset_open(train_dataset.c_str(), &ds.ds));
    char* metrics = nullptr;
    check(sempar_train(ds.ds, kb.kb, train_opts.merged().c_str(), train_out.c_str(), &metrics));
    std::string log = take(metrics);
    std::cout << log;
    if (!train_metrics_out.empty()) write_file(train_metrics_out, log);
    std::cout << "checkpoint: " << train_out << "\n";
    return 0;
  }

  if (parse->parsed()) {
    if (parse_beam >= 0) parse_opts.overrides.push_back("beam=" + std::to_string(parse_beam));
    ModelGuard model;
    check(sempar_model_open(parse_model.c_str(), &model.m));
    KbGuard kb;
    if (!parse_kb.empty()) check(sempar_kb_open(parse_kb.c_str(), &kb.kb));
    if (!parse_dataset.empty()) {
      DatasetGuard ds;
      check(sempar_dataset_open(parse_dataset.c_str(), &ds.ds));
      char* preds = nullptr;
      check(sempar_predict(model.m, kb.kb, ds.ds, parse_opts.merged().c_str(), &preds));
      std::string out = take(preds);
      if (!parse_out.empty())
        write_file(parse_out, out);
      else
        std::cout << out;
      return 0;
    }
    if (parse_utterance.empty()) {
      std::cerr << "error: parse needs --utterance or --dataset\n";
      return 2;
    }
    char* report = nullptr;
    check(sempar_parse_utterance(model.m, kb.kb, parse_utterance.c_str(), parse_annotations.c_str(),
                                 parse_opts.merged().c_str(), &report));
    std::cout << take(report);
    return 0;
  }

  if (execute->parsed()) {
    KbGuard kb;
    check(sempar_kb_open(exec_kb.c_str(), &kb.kb));
    char* den = nullptr;
    check(sempar_execute(kb.kb, exec_lf.c_str(), &den));
    std::cout << take(den) << "\n";
    return 0;
  }

  if (eval->parsed()) {
    KbGuard kb;
    if (!eval_kb.empty()) check(sempar_kb_open(eval_kb.c_str(), &kb.kb));
    char* report = nullptr;
    check(sempar_eval(eval_gold.c_str(), eval_pred.c_str(), kb.kb,
                      eval_gold_u.empty() ? nullptr : eval_gold_u.c_str(),
                      eval_ref_preds.empty() ? nullptr : eval_ref_preds.c_str(),
                      eval_opts.merged().c_str(), &report));
    std::cout << take(report);
    return 0;
  }

  if (oracle->parsed()) {
    DatasetGuard ds;
    check(sempar_dataset_open(oracle_dataset.c_str(), &ds.ds));
    char* report = nullptr;
    check(sempar_oracle_check(ds.ds, &report));
    std::string text = take(report);
    std::cout << text;
    return text.find("failures: 0\n") != std::string::npos ? 0 : 2;
  }

  if (surrogate->parsed()) {
    KbGuard kb;
    check(sempar_kb_open(sur_kb.c_str(), &kb.kb));
    char* forms = nullptr;
    check(sempar_surrogate_search(kb.kb, sur_tokens.c_str(), sur_annotations.c_str(),
                                  sur_denotation.c_str(), sur_opts.merged().c_str(), &forms));
    std::cout << take(forms);
    return 0;
  }

  return 1;
}
