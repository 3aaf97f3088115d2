#include "dataset.hpp"

#include <fstream>
#include <sstream>

namespace sempar {

std::vector<EntityAnnotation> parse_annotations(const std::string& field, std::size_t n_tokens) {
  std::vector<EntityAnnotation> out;
  std::string f = trim(field);
  if (f.empty() || f == "-") return out;
  for (const auto& piece : split_on(f, ';')) {
    auto parts = split_on(trim(piece), ':');
    if (parts.size() != 4) fail(ErrorCode::Data, "bad annotation '" + piece + "'");
    EntityAnnotation a;
    try {
      a.span.begin = std::stoull(parts[0]);
      a.span.end = std::stoull(parts[1]);
      a.entity = trim(parts[2]);
      a.score = std::stod(parts[3]);
    } catch (const std::exception&) {
      fail(ErrorCode::Data, "bad annotation '" + piece + "'");
    }
    if (a.entity.empty()) fail(ErrorCode::Data, "annotation with empty entity in '" + piece + "'");
    if (a.span.begin >= a.span.end || a.span.end > n_tokens)
      fail(ErrorCode::Data, "annotation span out of range in '" + piece + "'");
    for (const auto& prev : out) {
      bool overlap = a.span.begin < prev.span.end && prev.span.begin < a.span.end;
      if (overlap) fail(ErrorCode::Data, "overlapping annotation spans");
    }
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<TrainingExample> parse_dataset(const std::string& text, const GeneralInventory& inv) {
  std::vector<TrainingExample> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto fields = split_on(line, '\t');
    if (fields.size() != 3)
      fail(ErrorCode::Data, "dataset line " + std::to_string(lineno) + ": expected 3 tab-separated fields");
    TrainingExample ex;
    ex.tokens = split_ws(fields[0]);
    if (ex.tokens.empty()) fail(ErrorCode::Data, "dataset line " + std::to_string(lineno) + ": no tokens");
    try {
      ex.annotations = parse_annotations(fields[1], ex.tokens.size());
      std::string sup = trim(fields[2]);
      if (sup.rfind("lf ", 0) == 0) {
        ex.gold_form = parse_funql(trim(sup.substr(3)), TermKind::GroundedPredicate, inv);
      } else if (sup.rfind("den ", 0) == 0) {
        ex.gold_denotation = Denotation::parse(trim(sup.substr(4)));
      } else {
        fail(ErrorCode::Data, "supervision must start with 'lf ' or 'den '");
      }
    } catch (const Error& e) {
      fail(ErrorCode::Data, "dataset line " + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<TrainingExample> load_dataset(const std::string& path, const GeneralInventory& inv) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Data, "cannot open dataset file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), inv);
}

std::string format_example(const TrainingExample& ex) {
  std::string out;
  for (std::size_t i = 0; i < ex.tokens.size(); ++i) {
    if (i) out += " ";
    out += ex.tokens[i];
  }
  out += "\t";
  if (ex.annotations.empty()) {
    out += "-";
  } else {
    for (std::size_t i = 0; i < ex.annotations.size(); ++i) {
      const auto& a = ex.annotations[i];
      if (i) out += ";";
      char buf[64];
      std::snprintf(buf, sizeof buf, "%zu:%zu:", a.span.begin, a.span.end);
      out += buf;
      out += a.entity;
      std::snprintf(buf, sizeof buf, ":%g", a.score);
      out += buf;
    }
  }
  out += "\t";
  if (ex.gold_form)
    out += "lf " + print_funql(*ex.gold_form);
  else if (ex.gold_denotation)
    out += "den " + ex.gold_denotation->to_string();
  return out;
}

}  // namespace sempar
