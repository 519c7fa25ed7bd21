#include "cli/json_config.hpp"

#include <json.hpp>

namespace cxnprobe::cli {
namespace {

using json = nlohmann::json;

std::vector<std::string> inputs_of(const json& value, const std::string& name) {
  if (value.is_string()) return {value.get<std::string>()};
  if (value.is_boolean()) return {value.get<bool>() ? "true" : "false"};
  if (value.is_number()) return {value.dump()};
  if (value.is_array()) {
    std::vector<std::string> out;
    for (const auto& v : value) {
      if (v.is_array() || v.is_object() || v.is_null()) {
        throw CLI::ConversionError("config key '" + name + "': arrays must hold scalars");
      }
      out.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
    return out;
  }
  throw CLI::ConversionError("config key '" + name + "': unsupported value " + value.dump());
}

void add_items(const json& object, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
  for (const auto& [key, value] : object.items()) {
    if (parents.empty() && key == "schema") continue;
    if (value.is_object()) {
      auto deeper = parents;
      deeper.push_back(key);
      add_items(value, deeper, out);
      continue;
    }
    CLI::ConfigItem item;
    item.parents = parents;
    item.name = key;
    item.inputs = inputs_of(value, key);
    out.push_back(std::move(item));
  }
}

}  // namespace

std::string JsonConfig::to_config(const CLI::App* app, bool default_also, bool, std::string) const {
  json out;
  out["schema"] = kConfigSchema;
  for (const CLI::App* sub : app->get_subcommands({})) {
    json section = json::object();
    for (const CLI::Option* opt : sub->get_options({})) {
      if (opt->get_lnames().empty() || opt->get_configurable() == false) continue;
      const auto& name = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto results = opt->results();
        section[name] = results.size() == 1 ? json(results.front()) : json(results);
      } else if (default_also && !opt->get_default_str().empty()) {
        section[name] = opt->get_default_str();
      }
    }
    if (!section.empty()) out[sub->get_name()] = section;
  }
  return out.dump(2) + "\n";
}

std::vector<CLI::ConfigItem> JsonConfig::from_config(std::istream& input) const {
  json doc;
  try {
    doc = json::parse(input);
  } catch (const json::parse_error& e) {
    throw CLI::ConversionError(std::string("--config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw CLI::ConversionError("--config: config must be a JSON object");
  const auto schema = doc.find("schema");
  if (schema == doc.end() || !schema->is_string() || schema->get<std::string>() != kConfigSchema) {
    throw CLI::ConversionError(std::string("--config: config needs \"schema\": \"") + kConfigSchema + "\"");
  }
  std::vector<CLI::ConfigItem> items;
  add_items(doc, {}, items);
  return items;
}

}  // namespace cxnprobe::cli
