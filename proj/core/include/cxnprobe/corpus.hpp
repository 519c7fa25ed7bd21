#pragma once

#include <cstddef>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace cxnprobe {

// Universal Dependencies part-of-speech tags.
enum class Upos {
  kAdj,
  kAdp,
  kAdv,
  kAux,
  kCconj,
  kDet,
  kIntj,
  kNoun,
  kNum,
  kPart,
  kPron,
  kPropn,
  kPunct,
  kSconj,
  kSym,
  kVerb,
  kX,
};

std::string_view to_string(Upos upos);
std::optional<Upos> parse_upos(std::string_view tag);

struct Token {
  std::string form;
  std::string lemma;  // case-folded
  Upos upos = Upos::kX;
  std::size_t index = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

struct TaggedSentence {
  std::string sent_id;
  std::vector<Token> tokens;
  std::string source;

  std::size_t size() const { return tokens.size(); }
  std::vector<std::string> forms() const;

  /// Rewrites every token's index to its position.
  void reindex();

  friend bool operator==(const TaggedSentence&, const TaggedSentence&) = default;
};

/// Builds a sentence from "form/lemma/UPOS" triples; lemmas are case-folded.
/// Convenience for tests and fixtures.
TaggedSentence make_sentence(std::string sent_id, std::span<const std::string_view> triples,
                             std::string source = {});

// A contiguous noun + "to" + noun span whose two nouns share a lemma.
struct NtoNSpan {
  std::size_t n1_index = 0;
  std::size_t p_index = 1;
  std::size_t n2_index = 2;
  std::string noun_lemma;
  std::string prep_lemma = "to";

  friend bool operator==(const NtoNSpan&, const NtoNSpan&) = default;
};

/// Checks contiguity, bounds and lemma identity against `sentence`. Returns an
/// error description, or nothing when the span is valid.
std::optional<std::string> validate_span(const TaggedSentence& sentence, const NtoNSpan& span);

enum class SemanticLabel {
  kSuccession,
  kJuxtaposition,
  kDistractor,
  kOtherConstruction,
};

inline constexpr std::size_t kSemanticLabelCount = 4;

std::string_view to_string(SemanticLabel label);
/// Throws cxnprobe::Error naming the bad value.
SemanticLabel parse_label(std::string_view text);
bool is_construction(SemanticLabel label);

struct NtoNInstance {
  std::string instance_id;
  TaggedSentence sentence;
  NtoNSpan span;
  std::optional<SemanticLabel> label;  // unset straight out of the miner
  std::optional<std::pair<SemanticLabel, SemanticLabel>> annotator_labels;
  bool adjudicated = false;
  bool from_precedes = false;  // set when kept despite a preceding "from"

  const std::string& noun_lemma() const { return span.noun_lemma; }
  const Token& first_noun() const { return sentence.tokens.at(span.n1_index); }

  friend bool operator==(const NtoNInstance&, const NtoNInstance&) = default;
};

// ---------------------------------------------------------------------------
// Tagged-corpus TSV
//
//   # sent_id = s1
//   # source = doc-17            (optional)
//   0<TAB>Day<TAB>day<TAB>NOUN
//   1<TAB>to<TAB>to<TAB>ADP
//   2<TAB>day<TAB>day<TAB>NOUN
//   <blank line>
//
// Indices are 0-based and must be gap-free. Lemmas are case-folded on read.

struct CorpusDiagnostic {
  std::size_t line = 0;
  std::string message;
};

class TaggedCorpusReader {
 public:
  /// In strict mode the first malformed record throws FormatError; otherwise
  /// the record is skipped and reported through diagnostics().
  TaggedCorpusReader(std::istream& in, std::string origin, bool strict = true);

  std::optional<TaggedSentence> next();

  const std::vector<CorpusDiagnostic>& diagnostics() const { return diagnostics_; }
  /// Number of sentence records seen so far, well-formed or not.
  std::size_t records_seen() const { return records_seen_; }

 private:
  void fail(std::size_t line, const std::string& message);

  std::istream& in_;
  std::string origin_;
  bool strict_;
  std::size_t line_no_ = 0;
  std::size_t records_seen_ = 0;
  std::unordered_set<std::string> seen_ids_;
  std::vector<CorpusDiagnostic> diagnostics_;
};

std::vector<TaggedSentence> read_tagged_corpus(const std::filesystem::path& path);

struct CorpusReadResult {
  std::vector<TaggedSentence> sentences;
  std::vector<CorpusDiagnostic> diagnostics;
  std::size_t records = 0;
};
CorpusReadResult read_tagged_corpus_lenient(const std::filesystem::path& path);

void write_tagged_corpus(std::span<const TaggedSentence> sentences, std::ostream& out);
void write_tagged_corpus(std::span<const TaggedSentence> sentences, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Instance JSONL: one object per line with fields
//   instance_id, sent_id, source, tokens:[{form,lemma,upos}], span:{n1,p,n2},
//   label (string or null), annotator_labels?, adjudicated?, from_precedes?

std::string instance_to_json_line(const NtoNInstance& instance);
NtoNInstance instance_from_json_line(std::string_view line, const std::string& origin, std::size_t line_no);

/// Throws on duplicate instance_id.
void write_instances(std::span<const NtoNInstance> instances, const std::filesystem::path& path);
void write_instances(std::span<const NtoNInstance> instances, std::ostream& out);
std::vector<NtoNInstance> read_instances(const std::filesystem::path& path);
std::vector<NtoNInstance> read_instances(std::istream& in, const std::string& origin);

/// Writes `bytes` to `path` via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace cxnprobe
