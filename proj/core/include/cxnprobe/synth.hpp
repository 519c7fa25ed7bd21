#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cxnprobe/corpus.hpp"
#include "cxnprobe/dataset.hpp"
#include "cxnprobe/embeddings.hpp"

namespace cxnprobe {

// Closed-world benchmark: a tagged corpus of pseudo-word NtoN sentences with
// known labels, and an embedding store whose vectors carry a planted linear
// class signal.
//
// Record at layer l for an instance of class c with noun lemma w:
//   v = s(l) * mu_c + offset_w + eps,   eps ~ N(0, I)
//   s(l) = exp(-(l - signal_layer)^2 / (2 * signal_width^2))
//   mu_SUCCESSION    = A * e0 + A * e1
//   mu_JUXTAPOSITION = A * e0 - A * e1
//   mu_DISTRACTOR    = -A * e0
//   mu_OTHER         = -A * e1
// with A = amplitude and offset_w ~ N(0, lemma_offset_sd^2 I) fixed per lemma.
//
// Perturbed copies of construction instances use
//   s(l) * ((1 - r(l)) * mu_c + r(l) * mu_DISTRACTOR),
//   r(l) = 1 / (1 + exp(-(l - onset)))
// with onset = early_onset for NP and NNP and late_onset for PN and PNN.
struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t n_layers = 13;
  std::size_t dim = 32;
  std::size_t signal_layer = 8;
  double signal_width = 5.0;
  double amplitude = 3.0;
  double lemma_offset_sd = 0.5;
  double early_onset = 3.0;
  double late_onset = 6.0;

  // Per-class instance targets after capping lemmas at `cap_per_lemma`.
  std::size_t succession = 950;
  std::size_t juxtaposition = 900;
  std::size_t distractor = 450;
  std::size_t other = 30;
  std::size_t cap_per_lemma = 20;
  double mixed_lemma_fraction = 0.1;

  // Sentences the miner must drop.
  std::size_t too_short = 20;
  std::size_t from_preceded = 25;

  double second_round_fraction = 0.25;
  double disagreement_rate = 0.06;

  std::size_t static_dim = 16;
  double static_separation = 1.2;
  double static_oov_fraction = 0.05;

  void validate() const;
};

/// Planted per-layer signal strength s(l).
double synth_signal_scale(const SynthConfig& config, std::size_t layer);

struct SynthCorpus {
  std::vector<TaggedSentence> sentences;
  std::map<std::string, SemanticLabel> truth;  // sent_id -> label, for sentences holding one instance
  std::map<std::string, SemanticLabel> lemma_class;  // dominant class per noun lemma
};

SynthCorpus generate_synth_corpus(const SynthConfig& config);

/// Planted record for one instance (target = its "to" token) or perturbed item.
LayerEmbeddings synth_embedding(const SynthConfig& config, const NtoNInstance& instance);
LayerEmbeddings synth_embedding(const SynthConfig& config, const NtoNInstance& base, const PerturbedInstance& item);

StoreManifest synth_manifest(const SynthConfig& config);

struct SynthSummary {
  std::size_t sentences = 0;
  std::size_t instances = 0;
  std::map<std::string, std::size_t> per_class;
  std::size_t store_records = 0;
  std::size_t static_words = 0;
  std::map<std::string, std::uint64_t> digests;  // relative path -> file digest
};

/// Writes into `out`:
///   corpus.tsv            tagged corpus
///   instances.jsonl       mined instances with merged gold labels
///   annotations/round-a.json, annotations/round-b.json, annotations/adjudications.json
///   static.txt            static word vectors
///   store/                embeddings of every instance and of the four
///                         perturbations of every construction instance
///   bench.json            configuration, counts and file digests
/// Output bytes depend only on `config`. An existing store under `out` is
/// removed first.
SynthSummary write_synth_bench(const SynthConfig& config, const std::filesystem::path& out);

}  // namespace cxnprobe
