#include "model.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace sempar {

std::size_t Vocabulary::word_id(const std::string& w) const {
  auto it = word_index_.find(w);
  return it == word_index_.end() ? kUnk : it->second;
}

std::size_t Vocabulary::add_word(const std::string& w) {
  auto it = word_index_.find(w);
  if (it != word_index_.end()) return it->second;
  words.push_back(w);
  word_index_[w] = words.size() - 1;
  return words.size() - 1;
}

std::optional<std::size_t> Vocabulary::entity_id(const std::string& e) const {
  auto it = entity_index_.find(e);
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Vocabulary::general_id(const std::string& g) const {
  auto it = general_index_.find(g);
  if (it == general_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Vocabulary::grounded_id(const std::string& g) const {
  auto it = grounded_index_.find(g);
  if (it == grounded_index_.end()) return std::nullopt;
  return it->second;
}

void Vocabulary::rebuild_index() {
  word_index_.clear();
  entity_index_.clear();
  general_index_.clear();
  grounded_index_.clear();
  for (std::size_t i = 0; i < words.size(); ++i) word_index_[words[i]] = i;
  for (std::size_t i = 0; i < entities.size(); ++i) entity_index_[entities[i]] = i;
  for (std::size_t i = 0; i < general.size(); ++i) general_index_[general[i]] = i;
  for (std::size_t i = 0; i < grounded.size(); ++i) grounded_index_[grounded[i]] = i;
}

Model::Model(ModelDims dims_, Vocabulary vocab_, GeneralInventory inv_, Rng& rng)
    : dims(dims_), vocab(std::move(vocab_)), inventory(std::move(inv_)) {
  vocab.rebuild_index();
  allocate();
  initialize(rng);
}

namespace {

LstmParams make_lstm(const std::string& prefix, std::size_t input, std::size_t hidden) {
  return LstmParams{ad::Tensor(prefix + ".wx", 4 * hidden, input), ad::Tensor(prefix + ".wh", 4 * hidden, hidden),
                    ad::Tensor(prefix + ".b", 4 * hidden)};
}

}  // namespace

void Model::allocate() {
  word_emb = ad::Tensor("word_emb", std::max<std::size_t>(vocab.words.size(), 1), dims.word);
  entity_emb = ad::Tensor("entity_emb", std::max<std::size_t>(vocab.entities.size(), 1), dims.entity);
  general_emb = ad::Tensor("general_emb", std::max<std::size_t>(vocab.general.size(), 1), dims.general);
  grounded_emb = ad::Tensor("grounded_emb", std::max<std::size_t>(vocab.grounded.size(), 1), dims.grounded);
  buf_fw = make_lstm("buf_fw", dims.word, dims.lstm);
  buf_bw = make_lstm("buf_bw", dims.word, dims.lstm);
  stack = make_lstm("stack", dims.entity, dims.lstm);
  stack_h0 = ad::Tensor("stack_h0", dims.lstm);
  stack_c0 = ad::Tensor("stack_c0", dims.lstm);
  nl_proj_w = ad::Tensor("nl_proj_w", dims.entity, dims.context());
  nl_proj_b = ad::Tensor("nl_proj_b", dims.entity);
  att_wx = ad::Tensor("att_wx", dims.attention, dims.context());
  att_ws = ad::Tensor("att_ws", dims.attention, dims.lstm);
  att_v = ad::Tensor("att_v", dims.attention);
  w_action = ad::Tensor("w_action", 3, dims.system());
  w_term = ad::Tensor("w_term", std::max<std::size_t>(vocab.term_head_rows(), 1), dims.system());
  w_select = ad::Tensor("w_select", dims.context(), dims.lstm);
  w_ground = ad::Tensor("w_ground", dims.context(), dims.grounded);
  comp_w = ad::Tensor("comp_w", dims.entity, 2 * dims.entity);
  comp_b = ad::Tensor("comp_b", dims.entity);
}

void Model::initialize(Rng& rng) {
  const double w = 0.08;  // weight range
  const double e = 0.1;   // embedding range
  word_emb.init_uniform(rng, -e, e);
  entity_emb.init_uniform(rng, -e, e);
  general_emb.init_uniform(rng, -e, e);
  grounded_emb.init_uniform(rng, -e, e);
  for (LstmParams* l : {&buf_fw, &buf_bw, &stack}) {
    l->wx.init_uniform(rng, -w, w);
    l->wh.init_uniform(rng, -w, w);
    // biases stay zero
  }
  nl_proj_w.init_uniform(rng, -w, w);
  att_wx.init_uniform(rng, -w, w);
  att_ws.init_uniform(rng, -w, w);
  att_v.init_uniform(rng, -w, w);
  w_action.init_uniform(rng, -w, w);
  w_term.init_uniform(rng, -w, w);
  w_select.init_uniform(rng, -w, w);
  w_ground.init_uniform(rng, -w, w);
  comp_w.init_uniform(rng, -w, w);
}

std::vector<ad::Tensor*> Model::parameters() {
  return {&word_emb,   &entity_emb, &general_emb, &grounded_emb, &buf_fw.wx, &buf_fw.wh, &buf_fw.b,
          &buf_bw.wx,  &buf_bw.wh,  &buf_bw.b,    &stack.wx,     &stack.wh,  &stack.b,   &stack_h0,
          &stack_c0,   &nl_proj_w,  &nl_proj_b,   &att_wx,       &att_ws,    &att_v,     &w_action,
          &w_term,     &w_select,   &w_ground,    &comp_w,       &comp_b};
}

void Model::zero_grads() {
  for (ad::Tensor* t : parameters()) t->zero_grad();
}

std::size_t Model::load_pretrained_words(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Data, "cannot open embeddings file '" + path + "'");
  std::string line;
  std::size_t loaded = 0;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (fields.size() != dims.word + 1)
      fail(ErrorCode::Data, "embeddings line " + std::to_string(lineno) + ": expected " +
                                std::to_string(dims.word) + " values");
    std::size_t id = vocab.word_id(fields[0]);
    if (id == Vocabulary::kUnk && fields[0] != "<unk>") continue;
    for (std::size_t k = 0; k < dims.word; ++k) {
      try {
        word_emb.at(id, k) = std::stod(fields[k + 1]);
      } catch (const std::exception&) {
        fail(ErrorCode::Data, "embeddings line " + std::to_string(lineno) + ": bad number");
      }
    }
    ++loaded;
  }
  return loaded;
}

namespace {

constexpr const char* kMagic = "sempar-checkpoint v1";

void write_vocab_section(std::ostream& out, const std::string& name, const std::vector<std::string>& xs) {
  out << "vocab " << name << " " << xs.size() << "\n";
  for (const auto& x : xs) out << x << "\n";
}

std::vector<std::string> read_vocab_section(std::istream& in, const std::string& want) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Data, "checkpoint truncated before vocab " + want);
  auto fields = split_ws(line);
  if (fields.size() != 3 || fields[0] != "vocab" || fields[1] != want)
    fail(ErrorCode::Data, "checkpoint: expected vocab " + want);
  std::size_t n = std::stoull(fields[2]);
  std::vector<std::string> xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, xs[i])) fail(ErrorCode::Data, "checkpoint truncated in vocab " + want);
  }
  return xs;
}

void write_tensor(std::ostream& out, const ad::Tensor& t) {
  out << "tensor " << t.name << " " << t.rows << " " << t.cols << "\n";
  char buf[40];
  for (std::size_t r = 0; r < t.rows; ++r) {
    for (std::size_t c = 0; c < t.cols; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", t.at(r, c));
      out << buf << (c + 1 == t.cols ? "" : " ");
    }
    out << "\n";
  }
}

void read_tensor(std::istream& in, ad::Tensor& t) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Data, "checkpoint truncated before tensor " + t.name);
  auto fields = split_ws(line);
  if (fields.size() != 4 || fields[0] != "tensor" || fields[1] != t.name)
    fail(ErrorCode::Data, "checkpoint: expected tensor " + t.name + ", got '" + line + "'");
  std::size_t rows = std::stoull(fields[2]);
  std::size_t cols = std::stoull(fields[3]);
  if (rows != t.rows || cols != t.cols)
    fail(ErrorCode::Data, "checkpoint: tensor " + t.name + " has shape " + fields[2] + "x" + fields[3] +
                              ", expected " + std::to_string(t.rows) + "x" + std::to_string(t.cols));
  for (std::size_t r = 0; r < rows; ++r) {
    if (!std::getline(in, line)) fail(ErrorCode::Data, "checkpoint truncated in tensor " + t.name);
    std::istringstream row(line);
    for (std::size_t c = 0; c < cols; ++c) {
      if (!(row >> t.at(r, c))) fail(ErrorCode::Data, "checkpoint: bad value in tensor " + t.name);
    }
  }
}

}  // namespace

void Model::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Data, "cannot write checkpoint '" + path + "'");
  out << kMagic << "\n";
  out << "dims " << dims.word << " " << dims.lstm << " " << dims.entity << " " << dims.general << " "
      << dims.grounded << " " << dims.attention << "\n";
  write_vocab_section(out, "words", vocab.words);
  write_vocab_section(out, "entities", vocab.entities);
  write_vocab_section(out, "general", vocab.general);
  write_vocab_section(out, "grounded", vocab.grounded);
  std::set<std::string> types = inventory.type_predicates();
  out << "types " << types.size();
  for (const auto& t : types) out << " " << t;
  out << "\n";
  for (const ad::Tensor* t : const_cast<Model*>(this)->parameters()) write_tensor(out, *t);
  out << "end\n";
  if (!out) fail(ErrorCode::Data, "write failed for checkpoint '" + path + "'");
}

Model Model::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Data, "cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kMagic) fail(ErrorCode::Data, "not a sempar checkpoint: '" + path + "'");
  if (!std::getline(in, line)) fail(ErrorCode::Data, "checkpoint truncated at dims");
  auto fields = split_ws(line);
  if (fields.size() != 7 || fields[0] != "dims") fail(ErrorCode::Data, "checkpoint: bad dims line");
  Model m;
  m.dims.word = std::stoull(fields[1]);
  m.dims.lstm = std::stoull(fields[2]);
  m.dims.entity = std::stoull(fields[3]);
  m.dims.general = std::stoull(fields[4]);
  m.dims.grounded = std::stoull(fields[5]);
  m.dims.attention = std::stoull(fields[6]);
  m.vocab.words = read_vocab_section(in, "words");
  m.vocab.entities = read_vocab_section(in, "entities");
  m.vocab.general = read_vocab_section(in, "general");
  m.vocab.grounded = read_vocab_section(in, "grounded");
  if (!std::getline(in, line)) fail(ErrorCode::Data, "checkpoint truncated at types");
  fields = split_ws(line);
  if (fields.empty() || fields[0] != "types") fail(ErrorCode::Data, "checkpoint: bad types line");
  std::set<std::string> types(fields.begin() + 2, fields.end());
  m.inventory = GeneralInventory(std::move(types));
  m.vocab.rebuild_index();
  m.allocate();
  for (ad::Tensor* t : m.parameters()) read_tensor(in, *t);
  if (!std::getline(in, line) || line != "end") fail(ErrorCode::Data, "checkpoint missing end marker");
  return m;
}

}  // namespace sempar
