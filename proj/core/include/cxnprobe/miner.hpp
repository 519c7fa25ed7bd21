#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "cxnprobe/corpus.hpp"

namespace cxnprobe {

struct MinerConfig {
  std::size_t min_sentence_tokens = 5;
  bool exclude_preceding_from = true;
  // Only meaningful for raw concordance ingestion; tagged input is already
  // sentence-segmented.
  std::size_t window_tokens = 50;
  std::set<Upos> allowed_noun_tags{Upos::kNoun};

  /// Throws cxnprobe::Error when a count is zero.
  void validate() const;
};

inline constexpr const char* kReasonFromPrecedes = "from-precedes";
inline constexpr const char* kReasonTooShort = "too-short";

/// Every noun-"to"-noun span with matching noun lemmas, left to right.
/// Overlapping spans ("N to N to N") are all reported.
std::vector<NtoNSpan> find_candidates(const TaggedSentence& sentence, const MinerConfig& config);

struct FilterDecision {
  bool keep = true;
  std::string reason;  // empty when kept
  bool from_precedes = false;
};

FilterDecision apply_filters(const TaggedSentence& sentence, const NtoNSpan& span, const MinerConfig& config);

/// True when any token left of the span has lemma "from".
bool from_precedes(const TaggedSentence& sentence, const NtoNSpan& span);

struct MiningStats {
  std::size_t sentences = 0;
  std::size_t candidates = 0;
  std::size_t kept = 0;
  std::size_t excluded_sentences = 0;  // via exclusion list
  std::map<std::string, std::size_t> filtered;  // reason -> count
  std::map<std::string, std::size_t> per_lemma;  // kept instances per noun lemma

  std::string to_json() const;
};

struct MiningResult {
  std::vector<NtoNInstance> instances;
  MiningStats stats;
};

/// Instance ids are "<sent_id>#<n1_index>"; labels are left unset.
class CorpusMiner {
 public:
  explicit CorpusMiner(MinerConfig config, std::unordered_set<std::string> excluded_ids = {});

  void consume(const TaggedSentence& sentence);
  MiningResult finish() &&;

 private:
  MinerConfig config_;
  std::unordered_set<std::string> excluded_ids_;
  MiningResult result_;
};

MiningResult mine_corpus(std::span<const TaggedSentence> corpus, const MinerConfig& config,
                         const std::unordered_set<std::string>& excluded_ids = {});

}  // namespace cxnprobe
