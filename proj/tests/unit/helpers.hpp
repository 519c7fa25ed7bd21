#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <unistd.h>

#include "cxnprobe/corpus.hpp"

namespace testutil {

inline std::filesystem::path data_dir() { return CXNPROBE_TEST_DATA_DIR; }

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(std::string_view tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("cxnprobe-" + std::string(tag) + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(std::string_view name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// "form/lemma/UPOS ..." -> sentence
inline cxnprobe::TaggedSentence sentence(std::string id, std::string_view triples) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (pos < triples.size()) {
    const auto end = triples.find(' ', pos);
    const auto piece = triples.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    if (!piece.empty()) parts.emplace_back(piece);
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  std::vector<std::string_view> views(parts.begin(), parts.end());
  return cxnprobe::make_sentence(std::move(id), views);
}

inline std::vector<std::string> words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find(' ', pos);
    const auto w = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    if (!w.empty()) out.emplace_back(w);
    if (end == std::string_view::npos) break;
    pos = end + 1;
  }
  return out;
}

}  // namespace testutil
