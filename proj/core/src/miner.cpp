#include "cxnprobe/miner.hpp"

#include <json.hpp>

#include "cxnprobe/error.hpp"

namespace cxnprobe {

void MinerConfig::validate() const {
  if (min_sentence_tokens < 1) throw Error("min_sentence_tokens must be >= 1");
  if (window_tokens < 1) throw Error("window_tokens must be >= 1");
  if (allowed_noun_tags.empty()) throw Error("allowed_noun_tags must not be empty");
}

std::vector<NtoNSpan> find_candidates(const TaggedSentence& sentence, const MinerConfig& config) {
  std::vector<NtoNSpan> spans;
  const auto& toks = sentence.tokens;
  for (std::size_t i = 0; i + 2 < toks.size(); ++i) {
    const auto& n1 = toks[i];
    const auto& p = toks[i + 1];
    const auto& n2 = toks[i + 2];
    if (!config.allowed_noun_tags.contains(n1.upos) || !config.allowed_noun_tags.contains(n2.upos)) continue;
    if (p.lemma != "to" || (p.upos != Upos::kAdp && p.upos != Upos::kPart)) continue;
    if (n1.lemma != n2.lemma) continue;
    spans.push_back(NtoNSpan{i, i + 1, i + 2, n1.lemma, "to"});
  }
  return spans;
}

bool from_precedes(const TaggedSentence& sentence, const NtoNSpan& span) {
  for (std::size_t i = 0; i < span.n1_index && i < sentence.size(); ++i) {
    if (sentence.tokens[i].lemma == "from") return true;
  }
  return false;
}

FilterDecision apply_filters(const TaggedSentence& sentence, const NtoNSpan& span, const MinerConfig& config) {
  FilterDecision d;
  d.from_precedes = from_precedes(sentence, span);
  if (d.from_precedes && config.exclude_preceding_from) {
    d.keep = false;
    d.reason = kReasonFromPrecedes;
  } else if (sentence.size() < config.min_sentence_tokens) {
    d.keep = false;
    d.reason = kReasonTooShort;
  }
  return d;
}

std::string MiningStats::to_json() const {
  nlohmann::ordered_json j;
  j["sentences"] = sentences;
  j["candidates"] = candidates;
  j["kept"] = kept;
  j["excluded_sentences"] = excluded_sentences;
  j["filtered"] = nlohmann::ordered_json::object();
  for (const auto& [reason, n] : filtered) j["filtered"][reason] = n;
  j["per_lemma"] = nlohmann::ordered_json::object();
  for (const auto& [lemma, n] : per_lemma) j["per_lemma"][lemma] = n;
  return j.dump(2);
}

CorpusMiner::CorpusMiner(MinerConfig config, std::unordered_set<std::string> excluded_ids)
    : config_(std::move(config)), excluded_ids_(std::move(excluded_ids)) {
  config_.validate();
}

void CorpusMiner::consume(const TaggedSentence& sentence) {
  auto& stats = result_.stats;
  ++stats.sentences;
  if (excluded_ids_.contains(sentence.sent_id)) {
    ++stats.excluded_sentences;
    return;
  }
  for (auto& span : find_candidates(sentence, config_)) {
    ++stats.candidates;
    const auto decision = apply_filters(sentence, span, config_);
    if (!decision.keep) {
      ++stats.filtered[decision.reason];
      continue;
    }
    ++stats.kept;
    ++stats.per_lemma[span.noun_lemma];
    NtoNInstance inst;
    inst.instance_id = sentence.sent_id + "#" + std::to_string(span.n1_index);
    inst.sentence = sentence;
    inst.span = std::move(span);
    inst.from_precedes = decision.from_precedes;
    result_.instances.push_back(std::move(inst));
  }
}

MiningResult CorpusMiner::finish() && { return std::move(result_); }

MiningResult mine_corpus(std::span<const TaggedSentence> corpus, const MinerConfig& config,
                         const std::unordered_set<std::string>& excluded_ids) {
  CorpusMiner miner(config, excluded_ids);
  for (const auto& s : corpus) miner.consume(s);
  return std::move(miner).finish();
}

}  // namespace cxnprobe
