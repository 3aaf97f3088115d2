/* Public C interface of the sempar semantic parsing library.
 *
 * All objects are opaque handles created and destroyed through this API.
 * Functions return SEMPAR_OK on success; on failure they return an error
 * code and leave a message retrievable with sempar_last_error().  String
 * results are heap-allocated and must be released with sempar_string_free().
 *
 * Option strings are `key = value` lines (same syntax as config files);
 * pass NULL or "" for defaults.  Recognized keys include: seed, epochs,
 * learning_rate, latent_samples, beam, max_depth, max_steps,
 * surrogate_depth, surrogate_predicates, rank_attribute, word_dim, lstm_dim,
 * entity_dim, grounded_dim, attention_dim, k_per_term, grounding_beam,
 * embeddings, answer_types, type_predicates.
 */

#ifndef SEMPAR_H
#define SEMPAR_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sempar_status {
  SEMPAR_OK = 0,
  SEMPAR_ERR_PARSE = 1,    /* malformed FunQL or file syntax */
  SEMPAR_ERR_DATA = 2,     /* missing files, bad records, bad options */
  SEMPAR_ERR_EXEC = 3,     /* logical form does not execute against the kb */
  SEMPAR_ERR_NO_PARSE = 4, /* decoder produced no finished hypothesis */
  SEMPAR_ERR_INVALID = 5,  /* api misuse / precondition violation */
  SEMPAR_ERR_INTERNAL = 6
} sempar_status;

typedef struct sempar_kb sempar_kb;
typedef struct sempar_dataset sempar_dataset;
typedef struct sempar_model sempar_model;

const char* sempar_version(void);

/* Message for the most recent failure on this thread. */
const char* sempar_last_error(void);

void sempar_string_free(char* s);

/* --- knowledge base ----------------------------------------------------- */

sempar_status sempar_kb_open(const char* path, sempar_kb** out);
void sempar_kb_close(sempar_kb* kb);

/* Executes a grounded FunQL string; *out_denotation is "{a, b}" or an
 * integer. */
sempar_status sempar_execute(const sempar_kb* kb, const char* funql, char** out_denotation);

/* Grounded forms whose execution equals `denotation`, one per line.
 * `tokens` is the space-separated utterance, `annotations` a `;`-separated
 * list of start:end:entity:score spans ("" or "-" for none). */
sempar_status sempar_surrogate_search(const sempar_kb* kb, const char* tokens, const char* annotations,
                                      const char* denotation, const char* options, char** out_forms);

/* --- datasets ------------------------------------------------------------ */

sempar_status sempar_dataset_open(const char* path, sempar_dataset** out);
void sempar_dataset_close(sempar_dataset* ds);
size_t sempar_dataset_size(const sempar_dataset* ds);

/* Round-trips every gold form through the transition oracle. */
sempar_status sempar_oracle_check(const sempar_dataset* ds, char** out_report);

/* --- training and models ------------------------------------------------- */

/* Trains a model on the dataset (options must set `seed`), writes a
 * checkpoint to `checkpoint_path` when non-NULL, and returns the per-epoch
 * metrics log. */
sempar_status sempar_train(const sempar_dataset* ds, const sempar_kb* kb, const char* options,
                           const char* checkpoint_path, char** out_metrics);

sempar_status sempar_model_open(const char* checkpoint_path, sempar_model** out);
void sempar_model_close(sempar_model* m);

/* Parses one utterance: report carries the derivation trace, the ungrounded
 * and grounded forms, and the denotation when a kb is supplied. */
sempar_status sempar_parse_utterance(sempar_model* m, const sempar_kb* kb, const char* utterance,
                                     const char* annotations, const char* options, char** out_report);

/* One prediction line per dataset record:
 * `<ungrounded>\t<grounded>\t<denotation>` or NOPARSE. */
sempar_status sempar_predict(sempar_model* m, const sempar_kb* kb, const sempar_dataset* ds,
                             const char* options, char** out_predictions);

/* --- evaluation ----------------------------------------------------------- */

/* Evaluates a predictions file against a gold dataset.  Optional paths may
 * be NULL: gold_ungrounded_path holds reference ungrounded forms (one per
 * line), reference_predicates_path holds per-utterance predicate sets. */
sempar_status sempar_eval(const char* gold_dataset_path, const char* predictions_path,
                          const sempar_kb* kb, const char* gold_ungrounded_path,
                          const char* reference_predicates_path, const char* options, char** out_report);

#ifdef __cplusplus
}
#endif

#endif /* SEMPAR_H */
