#pragma once

// Parameter container for the neural scorer, the vocabularies it is indexed
// by, and checkpoint / pretrained-embedding I/O.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "funql.hpp"
#include "tape.hpp"

namespace sempar {

struct ModelDims {
  std::size_t word = 50;       // word embeddings
  std::size_t lstm = 100;      // recurrent state per direction; also stack state
  std::size_t entity = 100;    // entity embeddings
  std::size_t general = 100;   // domain-general predicate embeddings
  std::size_t grounded = 100;  // grounded (relation) term embeddings
  std::size_t attention = 100;

  std::size_t context() const { return 2 * lstm; }          // bi-directional token vector
  std::size_t system() const { return context() + lstm; }   // e_t = [b_t ; s_t]
};

// Index spaces.  Word id 0 is the reserved unknown token.
class Vocabulary {
 public:
  static constexpr std::size_t kUnk = 0;

  std::vector<std::string> words{"<unk>"};
  std::vector<std::string> entities;
  std::vector<std::string> general;   // closed inventory, `all` included
  std::vector<std::string> grounded;  // knowledge-base relation symbols

  std::size_t word_id(const std::string& w) const;        // kUnk when missing
  std::size_t add_word(const std::string& w);
  std::optional<std::size_t> entity_id(const std::string& e) const;
  std::optional<std::size_t> general_id(const std::string& g) const;
  std::optional<std::size_t> grounded_id(const std::string& g) const;

  // Rows of the joint general+entity term head: general ids first.
  std::size_t term_head_rows() const { return general.size() + entities.size(); }
  std::size_t term_head_general(std::size_t gid) const { return gid; }
  std::size_t term_head_entity(std::size_t eid) const { return general.size() + eid; }

  void rebuild_index();

 private:
  std::map<std::string, std::size_t> word_index_{{"<unk>", 0}};
  std::map<std::string, std::size_t> entity_index_;
  std::map<std::string, std::size_t> general_index_;
  std::map<std::string, std::size_t> grounded_index_;
};

struct LstmParams {
  ad::Tensor wx, wh, b;  // gate order: input, forget, output, candidate
};

struct Model {
  ModelDims dims;
  Vocabulary vocab;
  GeneralInventory inventory;

  ad::Tensor word_emb;      // |words| x word
  ad::Tensor entity_emb;    // |entities| x entity
  ad::Tensor general_emb;   // |general| x general
  ad::Tensor grounded_emb;  // |grounded| x grounded

  LstmParams buf_fw, buf_bw;  // buffer encoder, word -> lstm
  LstmParams stack;           // stack encoder, entity-sized items -> lstm
  ad::Tensor stack_h0, stack_c0;

  ad::Tensor nl_proj_w, nl_proj_b;  // context vector -> stack item
  ad::Tensor att_wx, att_ws, att_v;
  ad::Tensor w_action;  // 3 x system
  ad::Tensor w_term;    // (|general| + |entities|) x system
  ad::Tensor w_select;  // context x lstm, scores buffer tokens against s_t
  ad::Tensor w_ground;  // context x grounded
  ad::Tensor comp_w, comp_b;  // composition: [pred ; mean(children)] -> item

  Model() = default;
  Model(ModelDims dims, Vocabulary vocab, GeneralInventory inv, Rng& rng);

  std::vector<ad::Tensor*> parameters();
  void zero_grads();

  // Whitespace format: token followed by `dims.word` numbers per line.
  // Tokens absent from the file keep their random initialization; returns the
  // number of rows initialized.
  std::size_t load_pretrained_words(const std::string& path);

  void save(const std::string& path) const;
  static Model load(const std::string& path);

 private:
  void allocate();
  void initialize(Rng& rng);
};

}  // namespace sempar
