#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "cxnprobe/corpus.hpp"
#include "cxnprobe/error.hpp"

namespace cxnprobe {
namespace {

using ojson = nlohmann::ordered_json;

template <typename T>
T require(const ojson& obj, const char* key, const std::string& origin, std::size_t line_no) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(origin, line_no, std::string("missing field '") + key + "'");
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError(origin, line_no, std::string("field '") + key + "' has the wrong type");
  }
}

SemanticLabel label_field(const ojson& value, const std::string& origin, std::size_t line_no) {
  if (!value.is_string()) throw FormatError(origin, line_no, "label must be a string");
  try {
    return parse_label(value.get<std::string>());
  } catch (const Error& e) {
    throw FormatError(origin, line_no, e.what());
  }
}

}  // namespace

std::string instance_to_json_line(const NtoNInstance& instance) {
  ojson j;
  j["instance_id"] = instance.instance_id;
  j["sent_id"] = instance.sentence.sent_id;
  if (!instance.sentence.source.empty()) j["source"] = instance.sentence.source;
  auto tokens = ojson::array();
  for (const auto& t : instance.sentence.tokens) {
    tokens.push_back(ojson{{"form", t.form}, {"lemma", t.lemma}, {"upos", std::string(to_string(t.upos))}});
  }
  j["tokens"] = std::move(tokens);
  j["span"] = ojson{{"n1", instance.span.n1_index}, {"p", instance.span.p_index}, {"n2", instance.span.n2_index}};
  j["label"] = instance.label ? ojson(std::string(to_string(*instance.label))) : ojson(nullptr);
  if (instance.annotator_labels) {
    j["annotator_labels"] = ojson::array(
        {std::string(to_string(instance.annotator_labels->first)), std::string(to_string(instance.annotator_labels->second))});
  }
  if (instance.adjudicated) j["adjudicated"] = true;
  if (instance.from_precedes) j["from_precedes"] = true;
  return j.dump();
}

NtoNInstance instance_from_json_line(std::string_view line, const std::string& origin, std::size_t line_no) {
  ojson j;
  try {
    j = ojson::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(origin, line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw FormatError(origin, line_no, "expected a JSON object");

  NtoNInstance inst;
  inst.instance_id = require<std::string>(j, "instance_id", origin, line_no);
  inst.sentence.sent_id = require<std::string>(j, "sent_id", origin, line_no);
  if (j.contains("source")) inst.sentence.source = require<std::string>(j, "source", origin, line_no);

  const auto tokens = require<ojson>(j, "tokens", origin, line_no);
  if (!tokens.is_array()) throw FormatError(origin, line_no, "tokens must be an array");
  for (const auto& t : tokens) {
    const auto form = require<std::string>(t, "form", origin, line_no);
    const auto lemma = require<std::string>(t, "lemma", origin, line_no);
    const auto tag = require<std::string>(t, "upos", origin, line_no);
    const auto upos = parse_upos(tag);
    if (!upos) throw FormatError(origin, line_no, "unknown UPOS tag '" + tag + "'");
    if (form.empty() || lemma.empty()) throw FormatError(origin, line_no, "empty form or lemma");
    inst.sentence.tokens.push_back(Token{form, lemma, *upos, inst.sentence.tokens.size()});
  }

  const auto span = require<ojson>(j, "span", origin, line_no);
  inst.span.n1_index = require<std::size_t>(span, "n1", origin, line_no);
  inst.span.p_index = require<std::size_t>(span, "p", origin, line_no);
  inst.span.n2_index = require<std::size_t>(span, "n2", origin, line_no);
  if (inst.span.n1_index < inst.sentence.size()) inst.span.noun_lemma = inst.sentence.tokens[inst.span.n1_index].lemma;
  if (const auto problem = validate_span(inst.sentence, inst.span)) {
    throw FormatError(origin, line_no, "instance '" + inst.instance_id + "': " + *problem);
  }

  const auto label = j.find("label");
  if (label == j.end()) throw FormatError(origin, line_no, "missing field 'label'");
  if (!label->is_null()) inst.label = label_field(*label, origin, line_no);

  if (const auto ann = j.find("annotator_labels"); ann != j.end() && !ann->is_null()) {
    if (!ann->is_array() || ann->size() != 2) throw FormatError(origin, line_no, "annotator_labels must be a pair");
    inst.annotator_labels = std::make_pair(label_field((*ann)[0], origin, line_no), label_field((*ann)[1], origin, line_no));
  }
  if (j.contains("adjudicated")) inst.adjudicated = require<bool>(j, "adjudicated", origin, line_no);
  if (j.contains("from_precedes")) inst.from_precedes = require<bool>(j, "from_precedes", origin, line_no);
  return inst;
}

void write_instances(std::span<const NtoNInstance> instances, std::ostream& out) {
  std::unordered_set<std::string> ids;
  for (const auto& inst : instances) {
    if (!ids.insert(inst.instance_id).second) throw Error("duplicate instance_id '" + inst.instance_id + "'");
  }
  for (const auto& inst : instances) out << instance_to_json_line(inst) << '\n';
}

void write_instances(std::span<const NtoNInstance> instances, const std::filesystem::path& path) {
  std::ostringstream buffer;
  write_instances(instances, buffer);
  write_file_atomic(path, buffer.str());
}

std::vector<NtoNInstance> read_instances(std::istream& in, const std::string& origin) {
  std::vector<NtoNInstance> out;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto inst = instance_from_json_line(line, origin, line_no);
    if (!ids.insert(inst.instance_id).second) {
      throw FormatError(origin, line_no, "duplicate instance_id '" + inst.instance_id + "'");
    }
    out.push_back(std::move(inst));
  }
  if (in.bad()) throw Error("I/O error reading " + origin);
  return out;
}

std::vector<NtoNInstance> read_instances(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_instances(in, path.string());
}

}  // namespace cxnprobe
