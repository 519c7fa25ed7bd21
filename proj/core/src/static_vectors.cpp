#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "cxnprobe/embeddings.hpp"
#include "cxnprobe/error.hpp"
#include "cxnprobe/text.hpp"

namespace cxnprobe {

StaticVectors StaticVectors::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open static vectors " + path.string());
  StaticVectors out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto sp = rest.find(' ');
      if (sp != 0) fields.push_back(rest.substr(0, sp));
      if (sp == std::string_view::npos) break;
      rest.remove_prefix(sp + 1);
    }
    // Some distributions start with a "<count> <dim>" header line.
    if (line_no == 1 && fields.size() == 2) {
      std::size_t a = 0;
      std::size_t b = 0;
      const auto r1 = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), a);
      const auto r2 = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), b);
      if (r1.ec == std::errc() && r2.ec == std::errc()) continue;
    }
    if (fields.size() < 2) throw FormatError(path.string(), line_no, "expected a word followed by its vector");

    std::vector<float> vec;
    vec.reserve(fields.size() - 1);
    for (std::size_t i = 1; i < fields.size(); ++i) {
      // from_chars for float is not available in every libstdc++; strtof is locale-free for "C".
      const std::string token(fields[i]);
      char* end = nullptr;
      const float v = std::strtof(token.c_str(), &end);
      if (end != token.c_str() + token.size()) {
        throw FormatError(path.string(), line_no, "bad number '" + token + "'");
      }
      vec.push_back(v);
    }
    if (out.dim_ == 0) out.dim_ = vec.size();
    if (vec.size() != out.dim_) {
      throw FormatError(path.string(), line_no,
                        "vector has " + std::to_string(vec.size()) + " values, expected " + std::to_string(out.dim_));
    }
    // First occurrence wins, as in most loaders.
    out.table_.emplace(std::string(fields[0]), std::move(vec));
  }
  if (out.table_.empty()) throw FormatError(path.string(), 0, "no vectors");
  return out;
}

StaticVectors StaticVectors::from_table(std::size_t dim, std::map<std::string, std::vector<float>> table) {
  for (const auto& [word, vec] : table) {
    if (vec.size() != dim) throw Error("static vector for '" + word + "' has the wrong dimension");
  }
  StaticVectors out;
  out.dim_ = dim;
  out.table_ = std::move(table);
  return out;
}

const std::vector<float>* StaticVectors::find(const std::string& word) const {
  const auto it = table_.find(word);
  return it == table_.end() ? nullptr : &it->second;
}

void StaticVectors::save(const std::filesystem::path& path) const {
  std::string out;
  for (const auto& [word, vec] : table_) {
    out += word;
    for (const float v : vec) out += fmt::format(" {}", v);
    out += '\n';
  }
  write_file_atomic(path, out);
}

StaticLookup static_lookup(const StaticVectors& vectors, const NtoNInstance& instance) {
  const auto word = fold_case(instance.first_noun().form);
  if (const auto* vec = vectors.find(word)) return {*vec, false};
  return {std::vector<float>(vectors.dim(), 0.0f), true};
}

}  // namespace cxnprobe
