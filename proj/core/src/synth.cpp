#include "cxnprobe/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "cxnprobe/error.hpp"
#include "cxnprobe/miner.hpp"
#include "cxnprobe/perturbation.hpp"
#include "cxnprobe/rng.hpp"
#include "cxnprobe/text.hpp"

namespace cxnprobe {
namespace {

using ojson = nlohmann::ordered_json;

struct Word {
  const char* form;
  const char* lemma;
  Upos upos;
};
using Phrase = std::vector<Word>;

const std::vector<Phrase> kSubjects = {
    {{"they", "they", Upos::kPron}}, {{"we", "we", Upos::kPron}},
    {{"she", "she", Upos::kPron}},   {{"he", "he", Upos::kPron}},
    {{"the", "the", Upos::kDet}, {"crew", "crew", Upos::kNoun}},
    {{"our", "our", Upos::kPron}, {"neighbours", "neighbour", Upos::kNoun}},
};

const std::vector<Phrase> kAdverbs = {
    {}, {{"then", "then", Upos::kAdv}}, {{"often", "often", Upos::kAdv}}, {{"later", "later", Upos::kAdv}},
    {{"still", "still", Upos::kAdv}}, {{"soon", "soon", Upos::kAdv}},
};

struct Template {
  std::vector<Word> verbs;
  std::vector<Phrase> determiners;  // before the first noun
  std::vector<Phrase> tails;
};

const Template& template_for(SemanticLabel label) {
  static const Template succession{
      {{"moved", "move", Upos::kVerb}, {"went", "go", Upos::kVerb}, {"travelled", "travel", Upos::kVerb},
       {"drifted", "drift", Upos::kVerb}, {"worked", "work", Upos::kVerb}, {"lived", "live", Upos::kVerb}},
      {{}},
      {{{"for", "for", Upos::kAdp}, {"years", "year", Upos::kNoun}},
       {{"all", "all", Upos::kDet}, {"summer", "summer", Upos::kNoun}},
       {{"without", "without", Upos::kAdp}, {"rest", "rest", Upos::kNoun}},
       {{"each", "each", Upos::kDet}, {"season", "season", Upos::kNoun}},
       {{"every", "every", Upos::kDet}, {"week", "week", Upos::kNoun}}}};
  static const Template juxtaposition{
      {{"stood", "stand", Upos::kVerb}, {"sat", "sit", Upos::kVerb}, {"pressed", "press", Upos::kVerb},
       {"fought", "fight", Upos::kVerb}, {"danced", "dance", Upos::kVerb}, {"lay", "lie", Upos::kVerb}},
      {{}},
      {{{"in", "in", Upos::kAdp}, {"silence", "silence", Upos::kNoun}},
       {{"near", "near", Upos::kAdp}, {"the", "the", Upos::kDet}, {"door", "door", Upos::kNoun}},
       {{"under", "under", Upos::kAdp}, {"the", "the", Upos::kDet}, {"lamp", "lamp", Upos::kNoun}},
       {{"at", "at", Upos::kAdp}, {"dawn", "dawn", Upos::kNoun}},
       {{"for", "for", Upos::kAdp}, {"hours", "hour", Upos::kNoun}}}};
  static const Template distractor{
      {{"glued", "glue", Upos::kVerb}, {"tied", "tie", Upos::kVerb}, {"added", "add", Upos::kVerb},
       {"compared", "compare", Upos::kVerb}, {"fixed", "fix", Upos::kVerb}, {"welded", "weld", Upos::kVerb}},
      {{}, {{"the", "the", Upos::kDet}}, {{"some", "some", Upos::kDet}}},
      {{{"with", "with", Upos::kAdp}, {"care", "care", Upos::kNoun}},
       {{"in", "in", Upos::kAdp}, {"the", "the", Upos::kDet}, {"shed", "shed", Upos::kNoun}},
       {{"before", "before", Upos::kAdp}, {"noon", "noon", Upos::kNoun}},
       {{"at", "at", Upos::kAdp}, {"the", "the", Upos::kDet}, {"bench", "bench", Upos::kNoun}},
       {{"by", "by", Upos::kAdp}, {"hand", "hand", Upos::kNoun}}}};
  static const Template other{
      {{"read", "read", Upos::kVerb}, {"learned", "learn", Upos::kVerb}, {"knew", "know", Upos::kVerb}},
      {{}},
      {{{"as", "as", Upos::kAdp}, {"children", "child", Upos::kNoun}},
       {{"at", "at", Upos::kAdp}, {"school", "school", Upos::kNoun}},
       {{"in", "in", Upos::kAdp}, {"secret", "secret", Upos::kNoun}}}};
  switch (label) {
    case SemanticLabel::kSuccession: return succession;
    case SemanticLabel::kJuxtaposition: return juxtaposition;
    case SemanticLabel::kDistractor: return distractor;
    case SemanticLabel::kOtherConstruction: return other;
  }
  return other;
}

constexpr std::array<const char*, 20> kOnsets = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                                 "s", "v", "z", "br", "gl", "kr", "pl", "st", "tr", "sn"};
constexpr std::array<const char*, 6> kVowels = {"a", "e", "i", "o", "u", "ai"};
constexpr std::array<const char*, 6> kCodas = {"", "", "n", "l", "sk", "rt"};

std::string pseudo_word(SplitMix64& rng) {
  const auto syllables = 2 + rng.uniform(2);
  std::string w;
  for (std::uint64_t i = 0; i < syllables; ++i) {
    w += kOnsets[rng.uniform(kOnsets.size())];
    w += kVowels[rng.uniform(kVowels.size())];
  }
  w += kCodas[rng.uniform(kCodas.size())];
  return w;
}

// Heavy-tailed lemma frequency: mostly 1-5, a few far above the cap.
std::size_t lemma_frequency(SplitMix64& rng) {
  const double u = rng.uniform01();
  if (u < 0.35) return 1;
  if (u < 0.55) return 2;
  if (u < 0.67) return 3;
  if (u < 0.80) return 4 + rng.uniform(2);
  if (u < 0.90) return 6 + rng.uniform(5);
  if (u < 0.96) return 11 + rng.uniform(10);
  return 21 + rng.uniform(40);
}

void append(std::vector<Token>& tokens, const Phrase& phrase) {
  for (const auto& w : phrase) tokens.push_back(Token{w.form, w.lemma, w.upos, 0});
}

void append_noun(std::vector<Token>& tokens, const std::string& lemma) {
  tokens.push_back(Token{lemma, lemma, Upos::kNoun, 0});
}

TaggedSentence finish_sentence(std::vector<Token> tokens) {
  tokens.push_back(Token{".", ".", Upos::kPunct, 0});
  auto& first = tokens.front().form;
  if (tokens.front().upos != Upos::kNoun && !first.empty() && first[0] >= 'a' && first[0] <= 'z') {
    first[0] = static_cast<char>(first[0] - 'a' + 'A');
  }
  TaggedSentence s;
  s.tokens = std::move(tokens);
  s.reindex();
  return s;
}

std::vector<double> class_mean(const SynthConfig& config, SemanticLabel label) {
  std::vector<double> mu(config.dim, 0.0);
  const double a = config.amplitude;
  switch (label) {
    case SemanticLabel::kSuccession: mu[0] = a; mu[1] = a; break;
    case SemanticLabel::kJuxtaposition: mu[0] = a; mu[1] = -a; break;
    case SemanticLabel::kDistractor: mu[0] = -a; break;
    case SemanticLabel::kOtherConstruction: mu[1] = -a; break;
  }
  return mu;
}

std::uint64_t seed_for(const SynthConfig& config, std::string_view tag) {
  return fnv1a64(tag, fnv1a64_u64(config.seed));
}

std::vector<double> lemma_offset(const SynthConfig& config, const std::string& lemma) {
  SplitMix64 rng(seed_for(config, "lemma:" + lemma));
  std::vector<double> off(config.dim);
  for (auto& v : off) v = config.lemma_offset_sd * rng.normal();
  return off;
}

// `mean_at(l)` is the layer-l mean before scaling by s(l).
template <typename MeanAt>
LayerEmbeddings planted(const SynthConfig& config, const EmbeddingKey& key, const std::string& lemma, MeanAt mean_at) {
  LayerEmbeddings out;
  out.key = key;
  out.n_layers = config.n_layers;
  out.dim = config.dim;
  out.values.resize(config.n_layers * config.dim);
  const auto offset = lemma_offset(config, lemma);
  SplitMix64 rng(seed_for(config, "record:" + key.str()));
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const double s = synth_signal_scale(config, l);
    const std::vector<double> mu = mean_at(l);
    for (std::size_t d = 0; d < config.dim; ++d) {
      out.values[l * config.dim + d] = static_cast<float>(s * mu[d] + offset[d] + rng.normal());
    }
  }
  return out;
}

SemanticLabel other_class(SemanticLabel label, SplitMix64& rng) {
  static constexpr std::array<SemanticLabel, 3> kMain = {SemanticLabel::kSuccession, SemanticLabel::kJuxtaposition,
                                                        SemanticLabel::kDistractor};
  std::vector<SemanticLabel> pool;
  for (const auto c : kMain) {
    if (c != label) pool.push_back(c);
  }
  return pool[rng.uniform(pool.size())];
}

SemanticLabel wrong_label(SemanticLabel label, SplitMix64& rng) {
  const auto k = rng.uniform(kSemanticLabelCount - 1);
  auto id = static_cast<std::size_t>(k);
  if (id >= static_cast<std::size_t>(label)) ++id;
  return static_cast<SemanticLabel>(id);
}

}  // namespace

void SynthConfig::validate() const {
  if (dim < 2) throw Error("synthetic dim must be at least 2");
  if (n_layers < 2) throw Error("synthetic store needs at least 2 layers");
  if (signal_layer >= n_layers) throw Error("signal layer outside the layer range");
  if (static_dim < 2) throw Error("static dim must be at least 2");
  if (succession == 0 || juxtaposition == 0 || distractor == 0) throw Error("class targets must be positive");
  if (cap_per_lemma == 0) throw Error("cap_per_lemma must be positive");
  for (const double f : {mixed_lemma_fraction, second_round_fraction, disagreement_rate, static_oov_fraction}) {
    if (!(f >= 0.0 && f <= 1.0)) throw Error("synthetic fractions must lie in [0, 1]");
  }
  if (!(signal_width > 0.0)) throw Error("signal width must be positive");
}

double synth_signal_scale(const SynthConfig& config, std::size_t layer) {
  const double d = static_cast<double>(layer) - static_cast<double>(config.signal_layer);
  return std::exp(-d * d / (2.0 * config.signal_width * config.signal_width));
}

StoreManifest synth_manifest(const SynthConfig& config) {
  StoreManifest m;
  m.model = "synthetic-planted";
  m.n_layers = config.n_layers;
  m.dim = config.dim;
  m.pooling = "mean";
  m.tokenizer_fingerprint = "synth-seed-" + std::to_string(config.seed);
  return m;
}

SynthCorpus generate_synth_corpus(const SynthConfig& config) {
  config.validate();
  SplitMix64 rng(config.seed);
  SynthCorpus out;

  std::set<std::string> reserved = {"to", "from", "the", "some", "all", "each", "every", "at", "in", "by"};
  for (const auto& p : kSubjects) {
    for (const auto& w : p) reserved.insert(w.lemma);
  }
  std::set<std::string> used;
  const auto fresh_lemma = [&] {
    while (true) {
      auto w = pseudo_word(rng);
      if (!reserved.count(w) && used.insert(w).second) return w;
    }
  };

  struct Planned {
    std::string lemma;
    SemanticLabel label;
  };
  std::vector<Planned> planned;
  const std::pair<SemanticLabel, std::size_t> targets[] = {{SemanticLabel::kSuccession, config.succession},
                                                           {SemanticLabel::kJuxtaposition, config.juxtaposition},
                                                           {SemanticLabel::kDistractor, config.distractor},
                                                           {SemanticLabel::kOtherConstruction, config.other}};
  for (const auto& [label, target] : targets) {
    std::size_t capped_total = 0;
    while (capped_total < target) {
      const auto lemma = fresh_lemma();
      out.lemma_class[lemma] = label;
      const bool other = label == SemanticLabel::kOtherConstruction;
      const auto n = other ? 1 + rng.uniform(3) : lemma_frequency(rng);
      const bool mixed = !other && rng.uniform01() < config.mixed_lemma_fraction;
      for (std::size_t i = 0; i < n; ++i) {
        auto c = label;
        if (mixed && rng.uniform01() < 0.35) c = other_class(label, rng);
        planned.push_back({lemma, c});
      }
      capped_total += std::min<std::size_t>(n, config.cap_per_lemma);
    }
  }

  std::set<std::string> seen_text;
  std::vector<std::pair<TaggedSentence, std::optional<SemanticLabel>>> sentences;
  const auto add_unique = [&](TaggedSentence s, std::optional<SemanticLabel> label) {
    const auto text = join(s.forms(), " ");
    if (!seen_text.insert(text).second) return false;
    sentences.emplace_back(std::move(s), label);
    return true;
  };

  for (const auto& p : planned) {
    const auto& t = template_for(p.label);
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      std::vector<Token> tokens;
      append(tokens, kSubjects[rng.uniform(kSubjects.size())]);
      append(tokens, kAdverbs[rng.uniform(kAdverbs.size())]);
      const auto& verb = t.verbs[rng.uniform(t.verbs.size())];
      tokens.push_back(Token{verb.form, verb.lemma, Upos::kVerb, 0});
      append(tokens, t.determiners[rng.uniform(t.determiners.size())]);
      append_noun(tokens, p.lemma);
      tokens.push_back(Token{"to", "to", Upos::kAdp, 0});
      append_noun(tokens, p.lemma);
      append(tokens, t.tails[rng.uniform(t.tails.size())]);
      placed = add_unique(finish_sentence(std::move(tokens)), p.label);
    }
    if (!placed) throw Error("could not build a unique sentence for lemma '" + p.lemma + "'");
  }

  std::vector<std::string> lemmas;
  for (const auto& [lemma, _] : out.lemma_class) lemmas.push_back(lemma);
  for (std::size_t i = 0; i < config.too_short; ++i) {
    std::vector<Token> tokens;
    append_noun(tokens, lemmas[rng.uniform(lemmas.size())]);
    const auto lemma = tokens.back().lemma;
    tokens.push_back(Token{"to", "to", Upos::kAdp, 0});
    append_noun(tokens, lemma);
    add_unique(finish_sentence(std::move(tokens)), std::nullopt);
  }
  for (std::size_t i = 0; i < config.from_preceded; ++i) {
    const auto lemma = lemmas[rng.uniform(lemmas.size())];
    std::vector<Token> tokens;
    append(tokens, kSubjects[rng.uniform(kSubjects.size())]);
    tokens.push_back(Token{"went", "go", Upos::kVerb, 0});
    tokens.push_back(Token{"from", "from", Upos::kAdp, 0});
    append_noun(tokens, lemma);
    tokens.push_back(Token{"to", "to", Upos::kAdp, 0});
    append_noun(tokens, lemma);
    append(tokens, template_for(SemanticLabel::kSuccession).tails[rng.uniform(5)]);
    add_unique(finish_sentence(std::move(tokens)), std::nullopt);
  }

  shuffle(std::span(sentences), rng);
  std::size_t next_id = 1;
  for (auto& [s, label] : sentences) {
    s.sent_id = fmt::format("synth-{:05d}", next_id++);
    s.source = "synthetic";
    if (label) out.truth[s.sent_id] = *label;
    out.sentences.push_back(std::move(s));
  }
  return out;
}


LayerEmbeddings synth_embedding(const SynthConfig& config, const NtoNInstance& instance) {
  if (!instance.label) throw Error("instance '" + instance.instance_id + "' has no label to plant");
  const auto mu = class_mean(config, *instance.label);
  return planted(config, key_for(instance), instance.noun_lemma(), [&](std::size_t) { return mu; });
}

LayerEmbeddings synth_embedding(const SynthConfig& config, const NtoNInstance& base, const PerturbedInstance& item) {
  if (!base.label || !is_construction(*base.label)) {
    throw Error("perturbed item '" + item.instance_id() + "' needs a construction-labelled base");
  }
  const auto mu = class_mean(config, *base.label);
  const auto neg = class_mean(config, SemanticLabel::kDistractor);
  const bool early = item.kind == PerturbationKind::kNP || item.kind == PerturbationKind::kNNP;
  const double onset = early ? config.early_onset : config.late_onset;
  return planted(config, key_for(item), base.noun_lemma(), [&](std::size_t l) {
    const double r = 1.0 / (1.0 + std::exp(-(static_cast<double>(l) - onset)));
    std::vector<double> m(config.dim);
    for (std::size_t d = 0; d < config.dim; ++d) m[d] = (1.0 - r) * mu[d] + r * neg[d];
    return m;
  });
}

SynthSummary write_synth_bench(const SynthConfig& config, const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  const auto corpus = generate_synth_corpus(config);

  auto mined = mine_corpus(corpus.sentences, MinerConfig{});
  for (const auto& inst : mined.instances) {
    if (!corpus.truth.count(inst.sentence.sent_id)) {
      throw Error("synthetic miner output has no planted label for " + inst.instance_id);
    }
  }

  // Annotation rounds: A covers everything, B a random share. Where they
  // disagree one of the two is wrong and the adjudication restores the truth.
  SplitMix64 rng(seed_for(config, "annotation"));
  AnnotationRound a{"annotator-a", {}};
  AnnotationRound b{"annotator-b", {}};
  std::map<std::string, SemanticLabel> adjudications;
  for (const auto& inst : mined.instances) {
    const auto truth = corpus.truth.at(inst.sentence.sent_id);
    a.labels[inst.instance_id] = truth;
    if (rng.uniform01() >= config.second_round_fraction) continue;
    b.labels[inst.instance_id] = truth;
    if (rng.uniform01() < config.disagreement_rate) {
      auto& wrong = rng.uniform(2) == 0 ? a.labels[inst.instance_id] : b.labels[inst.instance_id];
      wrong = wrong_label(truth, rng);
      adjudications[inst.instance_id] = truth;
    }
  }
  const AnnotationRound rounds[] = {a, b};
  const auto labelled = merge_annotations(mined.instances, rounds, adjudications);
  for (const auto& inst : labelled) {
    if (inst.label != corpus.truth.at(inst.sentence.sent_id)) {
      throw Error("merged label differs from the planted one for " + inst.instance_id);
    }
  }

  fs::create_directories(out / "annotations");
  write_tagged_corpus(corpus.sentences, out / "corpus.tsv");
  write_instances(labelled, out / "instances.jsonl");
  write_annotation_round(a, out / "annotations" / "round-a.json");
  write_annotation_round(b, out / "annotations" / "round-b.json");
  write_adjudications(adjudications, out / "annotations" / "adjudications.json");

  // Static vectors: class-biased per lemma, some lemmas left out (OOV), plus
  // unbiased vectors for the template words.
  {
    SplitMix64 srng(seed_for(config, "static"));
    std::map<std::string, std::vector<float>> table;
    const auto noise_vec = [&](std::vector<float> v) {
      for (auto& x : v) x += static_cast<float>(srng.normal());
      return v;
    };
    for (const auto& [lemma, label] : corpus.lemma_class) {
      if (srng.uniform01() < config.static_oov_fraction) continue;
      std::vector<float> v(config.static_dim, 0.0f);
      const float s = static_cast<float>(config.static_separation);
      switch (label) {
        case SemanticLabel::kSuccession: v[0] = s; v[1] = s; break;
        case SemanticLabel::kJuxtaposition: v[0] = s; v[1] = -s; break;
        case SemanticLabel::kDistractor: v[0] = -s; break;
        case SemanticLabel::kOtherConstruction: v[1] = -s; break;
      }
      table[lemma] = noise_vec(std::move(v));
    }
    for (const auto& s : corpus.sentences) {
      for (const auto& tok : s.tokens) {
        const auto w = fold_case(tok.form);
        if (!corpus.lemma_class.count(w) && !table.count(w)) {
          table[w] = noise_vec(std::vector<float>(config.static_dim, 0.0f));
        }
      }
    }
    StaticVectors::from_table(config.static_dim, std::move(table)).save(out / "static.txt");
  }

  const auto store_dir = out / "store";
  fs::remove_all(store_dir);
  std::size_t records = 0;
  {
    EmbeddingStoreWriter writer(store_dir, synth_manifest(config));
    const auto add = [&](const LayerEmbeddings& rec) {
      if (!writer.add(rec)) throw Error("synthetic key collision at " + rec.key.str());
      ++records;
    };
    for (const auto& inst : labelled) {
      add(synth_embedding(config, inst));
      if (!is_construction(*inst.label)) continue;
      for (const auto kind : kAllPerturbations) add(synth_embedding(config, inst, perturb(inst, kind)));
    }
    writer.commit();
  }

  SynthSummary summary;
  summary.sentences = corpus.sentences.size();
  summary.instances = labelled.size();
  for (const auto& inst : labelled) ++summary.per_class[std::string(to_string(*inst.label))];
  summary.store_records = records;
  summary.static_words = StaticVectors::load(out / "static.txt").size();
  for (const auto* rel : {"corpus.tsv", "instances.jsonl", "annotations/round-a.json", "annotations/round-b.json",
                          "annotations/adjudications.json", "static.txt", "store/store.manifest.json",
                          "store/store.index.json", "store/store.f32bin"}) {
    summary.digests[rel] = file_digest((out / rel).string());
  }

  ojson bench;
  bench["format"] = "cxnprobe-synth/1";
  bench["config"] = {{"seed", config.seed},
                     {"n_layers", config.n_layers},
                     {"dim", config.dim},
                     {"signal_layer", config.signal_layer},
                     {"signal_width", config.signal_width},
                     {"amplitude", config.amplitude},
                     {"lemma_offset_sd", config.lemma_offset_sd},
                     {"early_onset", config.early_onset},
                     {"late_onset", config.late_onset},
                     {"cap_per_lemma", config.cap_per_lemma},
                     {"static_dim", config.static_dim}};
  bench["sentences"] = summary.sentences;
  bench["instances"] = summary.instances;
  bench["per_class"] = summary.per_class;
  bench["mining"] = ojson::parse(mined.stats.to_json());
  bench["store_records"] = summary.store_records;
  bench["static_words"] = summary.static_words;
  ojson digests = ojson::object();
  for (const auto& [rel, d] : summary.digests) digests[rel] = to_hex(d);
  bench["digests"] = digests;
  write_file_atomic(out / "bench.json", bench.dump(2) + "\n");
  return summary;
}

}  // namespace cxnprobe
