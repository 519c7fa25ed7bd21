#include "cxnprobe/perturbation.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "cxnprobe/error.hpp"

namespace cxnprobe {

std::string_view to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::kPNN:
      return "PNN";
    case PerturbationKind::kPN:
      return "PN";
    case PerturbationKind::kNNP:
      return "NNP";
    case PerturbationKind::kNP:
      return "NP";
  }
  return "?";
}

PerturbationKind parse_perturbation(std::string_view text) {
  for (const auto kind : kAllPerturbations) {
    if (to_string(kind) == text) return kind;
  }
  throw Error("unknown perturbation kind '" + std::string(text) + "'");
}

std::string PerturbedInstance::instance_id() const { return base + "/" + std::string(to_string(kind)); }

PerturbedInstance perturb(const NtoNInstance& instance, PerturbationKind kind) {
  if (const auto problem = validate_span(instance.sentence, instance.span)) {
    throw Error("cannot perturb '" + instance.instance_id + "': " + *problem);
  }
  const auto& tokens = instance.sentence.tokens;
  const auto n1 = instance.span.n1_index;
  const Token& noun1 = tokens[n1];
  const Token& prep = tokens[instance.span.p_index];
  const Token& noun2 = tokens[instance.span.n2_index];

  std::vector<Token> middle;
  std::size_t to_offset = 0;
  switch (kind) {
    case PerturbationKind::kPNN:
      middle = {prep, noun1, noun2};
      to_offset = 0;
      break;
    case PerturbationKind::kPN:
      middle = {prep, noun2};
      to_offset = 0;
      break;
    case PerturbationKind::kNNP:
      middle = {noun1, noun2, prep};
      to_offset = 2;
      break;
    case PerturbationKind::kNP:
      middle = {noun1, prep};
      to_offset = 1;
      break;
  }

  PerturbedInstance out;
  out.base = instance.instance_id;
  out.kind = kind;
  out.base_label = instance.label;
  out.sentence.sent_id = instance.sentence.sent_id + "/" + std::string(to_string(kind));
  out.sentence.source = instance.sentence.source;
  out.sentence.tokens.assign(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(n1));
  out.sentence.tokens.insert(out.sentence.tokens.end(), middle.begin(), middle.end());
  out.sentence.tokens.insert(out.sentence.tokens.end(),
                             tokens.begin() + static_cast<std::ptrdiff_t>(instance.span.n2_index + 1), tokens.end());
  out.sentence.reindex();
  out.target_index = n1 + to_offset;
  return out;
}

std::vector<PerturbedInstance> perturb_all(std::span<const NtoNInstance> instances) {
  std::vector<PerturbedInstance> out;
  out.reserve(instances.size() * kAllPerturbations.size());
  for (const auto& inst : instances) {
    for (const auto kind : kAllPerturbations) out.push_back(perturb(inst, kind));
  }
  return out;
}

void write_perturbed(std::span<const PerturbedInstance> items, const std::filesystem::path& path) {
  std::ostringstream buffer;
  std::unordered_set<std::string> ids;
  for (const auto& item : items) {
    if (!ids.insert(item.instance_id()).second) throw Error("duplicate perturbed id '" + item.instance_id() + "'");
    nlohmann::ordered_json j;
    j["instance_id"] = item.instance_id();
    j["base"] = item.base;
    j["kind"] = std::string(to_string(item.kind));
    j["sent_id"] = item.sentence.sent_id;
    if (!item.sentence.source.empty()) j["source"] = item.sentence.source;
    auto tokens = nlohmann::ordered_json::array();
    for (const auto& t : item.sentence.tokens) {
      tokens.push_back({{"form", t.form}, {"lemma", t.lemma}, {"upos", std::string(to_string(t.upos))}});
    }
    j["tokens"] = std::move(tokens);
    j["target"] = item.target_index;
    j["label"] = item.base_label ? nlohmann::ordered_json(std::string(to_string(*item.base_label)))
                                 : nlohmann::ordered_json(nullptr);
    buffer << j.dump() << '\n';
  }
  write_file_atomic(path, buffer.str());
}

std::vector<PerturbedInstance> read_perturbed(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<PerturbedInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::ordered_json::parse(line);
      PerturbedInstance item;
      item.base = j.at("base").get<std::string>();
      item.kind = parse_perturbation(j.at("kind").get<std::string>());
      item.sentence.sent_id = j.at("sent_id").get<std::string>();
      if (j.contains("source")) item.sentence.source = j.at("source").get<std::string>();
      for (const auto& t : j.at("tokens")) {
        const auto tag = t.at("upos").get<std::string>();
        const auto upos = parse_upos(tag);
        if (!upos) throw Error("unknown UPOS tag '" + tag + "'");
        item.sentence.tokens.push_back(
            Token{t.at("form").get<std::string>(), t.at("lemma").get<std::string>(), *upos, item.sentence.tokens.size()});
      }
      item.target_index = j.at("target").get<std::size_t>();
      if (item.target_index >= item.sentence.size() || item.sentence.tokens[item.target_index].lemma != "to") {
        throw Error("target does not point at a 'to' token");
      }
      if (const auto& label = j.at("label"); !label.is_null()) item.base_label = parse_label(label.get<std::string>());
      out.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string(), line_no, e.what());
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(path.string(), line_no, e.what());
    }
  }
  return out;
}

}  // namespace cxnprobe
