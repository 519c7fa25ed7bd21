#include "cxnprobe/corpus.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "cxnprobe/error.hpp"
#include "cxnprobe/text.hpp"

namespace cxnprobe {
namespace {

constexpr std::array<std::string_view, 17> kUposNames = {
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
};

constexpr std::array<std::string_view, kSemanticLabelCount> kLabelNames = {
    "SUCCESSION", "JUXTAPOSITION", "DISTRACTOR", "OTHER_CONSTRUCTION",
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

// Parses "# key = value"; returns false for other comments.
bool parse_header(std::string_view line, std::string_view key, std::string& value) {
  line.remove_prefix(1);  // '#'
  line = trim(line);
  if (line.substr(0, key.size()) != key) return false;
  line.remove_prefix(key.size());
  line = trim(line);
  if (line.empty() || line.front() != '=') return false;
  line.remove_prefix(1);
  value = std::string(trim(line));
  return true;
}

}  // namespace

std::string_view to_string(Upos upos) { return kUposNames[static_cast<std::size_t>(upos)]; }

std::optional<Upos> parse_upos(std::string_view tag) {
  for (std::size_t i = 0; i < kUposNames.size(); ++i) {
    if (kUposNames[i] == tag) return static_cast<Upos>(i);
  }
  return std::nullopt;
}

std::string_view to_string(SemanticLabel label) { return kLabelNames[static_cast<std::size_t>(label)]; }

SemanticLabel parse_label(std::string_view text) {
  for (std::size_t i = 0; i < kLabelNames.size(); ++i) {
    if (kLabelNames[i] == text) return static_cast<SemanticLabel>(i);
  }
  throw Error("unknown semantic label '" + std::string(text) + "'");
}

bool is_construction(SemanticLabel label) {
  return label == SemanticLabel::kSuccession || label == SemanticLabel::kJuxtaposition ||
         label == SemanticLabel::kOtherConstruction;
}

std::vector<std::string> TaggedSentence::forms() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.form);
  return out;
}

void TaggedSentence::reindex() {
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i].index = i;
}

TaggedSentence make_sentence(std::string sent_id, std::span<const std::string_view> triples, std::string source) {
  TaggedSentence s{std::move(sent_id), {}, std::move(source)};
  for (const auto triple : triples) {
    const auto a = triple.find('/');
    const auto b = triple.rfind('/');
    if (a == std::string_view::npos || a == b) throw Error("bad token triple '" + std::string(triple) + "'");
    const auto upos = parse_upos(triple.substr(b + 1));
    if (!upos) throw Error("bad UPOS in '" + std::string(triple) + "'");
    s.tokens.push_back(Token{std::string(triple.substr(0, a)), fold_case(triple.substr(a + 1, b - a - 1)), *upos,
                             s.tokens.size()});
  }
  return s;
}

std::optional<std::string> validate_span(const TaggedSentence& sentence, const NtoNSpan& span) {
  if (span.p_index != span.n1_index + 1 || span.n2_index != span.p_index + 1) {
    return "span is not contiguous";
  }
  if (span.n2_index >= sentence.size()) return "span runs past the end of the sentence";
  const auto& n1 = sentence.tokens[span.n1_index];
  const auto& n2 = sentence.tokens[span.n2_index];
  if (n1.lemma != n2.lemma) return "noun lemmas differ ('" + n1.lemma + "' vs '" + n2.lemma + "')";
  if (span.noun_lemma != n1.lemma) return "noun_lemma does not match the tokens";
  if (sentence.tokens[span.p_index].lemma != span.prep_lemma) return "middle token lemma is not '" + span.prep_lemma + "'";
  return std::nullopt;
}

// ---------------------------------------------------------------------------

TaggedCorpusReader::TaggedCorpusReader(std::istream& in, std::string origin, bool strict)
    : in_(in), origin_(std::move(origin)), strict_(strict) {}

void TaggedCorpusReader::fail(std::size_t line, const std::string& message) {
  if (strict_) throw FormatError(origin_, line, message);
  diagnostics_.push_back({line, message});
}

std::optional<TaggedSentence> TaggedCorpusReader::next() {
  std::string raw;
  while (true) {
    TaggedSentence sentence;
    std::optional<std::string> error;
    std::size_t error_line = 0;
    std::size_t first_line = 0;
    bool any_content = false;
    bool any_token = false;

    while (std::getline(in_, raw)) {
      ++line_no_;
      const std::string_view line = trim(raw);
      if (line.empty()) {
        if (any_content) break;
        continue;
      }
      if (!any_content) first_line = line_no_;
      any_content = true;
      if (error) continue;  // skip the rest of a bad record

      if (line.front() == '#') {
        std::string value;
        if (parse_header(line, "sent_id", value)) {
          sentence.sent_id = value;
        } else if (parse_header(line, "source", value)) {
          sentence.source = value;
        }
        continue;
      }

      any_token = true;
      const auto cols = split_tabs(std::string_view(raw).substr(0, raw.find_last_not_of("\r") + 1));
      if (cols.size() != 4) {
        error = "expected 4 tab-separated columns (index, form, lemma, upos), found " + std::to_string(cols.size());
        error_line = line_no_;
        continue;
      }
      std::size_t index = 0;
      const auto idx_text = cols[0];
      const auto [ptr, ec] = std::from_chars(idx_text.data(), idx_text.data() + idx_text.size(), index);
      if (ec != std::errc() || ptr != idx_text.data() + idx_text.size()) {
        error = "bad token index '" + std::string(idx_text) + "'";
        error_line = line_no_;
        continue;
      }
      if (index != sentence.tokens.size()) {
        error = "token index gap: expected " + std::to_string(sentence.tokens.size()) + ", found " +
                std::to_string(index);
        error_line = line_no_;
        continue;
      }
      if (cols[1].empty() || cols[2].empty()) {
        error = "empty form or lemma";
        error_line = line_no_;
        continue;
      }
      const auto upos = parse_upos(cols[3]);
      if (!upos) {
        error = "unknown UPOS tag '" + std::string(cols[3]) + "'";
        error_line = line_no_;
        continue;
      }
      sentence.tokens.push_back(Token{std::string(cols[1]), fold_case(cols[2]), *upos, index});
    }

    if (!any_content) return std::nullopt;  // end of stream
    if (!any_token) continue;               // comment-only block, not a record
    ++records_seen_;

    if (!error && sentence.sent_id.empty()) {
      error = "missing '# sent_id = ...' header";
      error_line = first_line;
    }
    if (!error && !seen_ids_.insert(sentence.sent_id).second) {
      error = "duplicate sent_id '" + sentence.sent_id + "'";
      error_line = first_line;
    }
    if (error) {
      fail(error_line, *error);
      continue;
    }
    return sentence;
  }
}

std::vector<TaggedSentence> read_tagged_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path.string());
  TaggedCorpusReader reader(in, path.string(), true);
  std::vector<TaggedSentence> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  if (in.bad()) throw Error("I/O error reading " + path.string());
  return out;
}

CorpusReadResult read_tagged_corpus_lenient(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus " + path.string());
  TaggedCorpusReader reader(in, path.string(), false);
  CorpusReadResult result;
  while (auto s = reader.next()) result.sentences.push_back(std::move(*s));
  if (in.bad()) throw Error("I/O error reading " + path.string());
  result.diagnostics = reader.diagnostics();
  result.records = reader.records_seen();
  return result;
}

void write_tagged_corpus(std::span<const TaggedSentence> sentences, std::ostream& out) {
  for (const auto& s : sentences) {
    out << "# sent_id = " << s.sent_id << '\n';
    if (!s.source.empty()) out << "# source = " << s.source << '\n';
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      const auto& t = s.tokens[i];
      out << i << '\t' << t.form << '\t' << t.lemma << '\t' << to_string(t.upos) << '\n';
    }
    out << '\n';
  }
}

void write_tagged_corpus(std::span<const TaggedSentence> sentences, const std::filesystem::path& path) {
  std::ostringstream buffer;
  write_tagged_corpus(sentences, buffer);
  write_file_atomic(path, buffer.str());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("I/O error writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace cxnprobe
