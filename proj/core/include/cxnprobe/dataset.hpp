#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cxnprobe/corpus.hpp"

namespace cxnprobe {

struct AnnotationRound {
  std::string annotator_id;
  std::map<std::string, SemanticLabel> labels;  // instance_id -> label
};

/// JSON: {"annotator_id": "...", "labels": {"<instance_id>": "SUCCESSION", ...}}
AnnotationRound read_annotation_round(const std::filesystem::path& path);
void write_annotation_round(const AnnotationRound& round, const std::filesystem::path& path);
/// JSON object {"<instance_id>": "<LABEL>"}.
std::map<std::string, SemanticLabel> read_adjudications(const std::filesystem::path& path);
void write_adjudications(const std::map<std::string, SemanticLabel>& adjudications, const std::filesystem::path& path);

/// Resolves gold labels. One covering round: its label. Two agreeing rounds:
/// the shared label. Two disagreeing rounds: the adjudicated label, with
/// `adjudicated` set. Instances no round covers keep their existing label.
/// Throws listing every disagreement that lacks an adjudication.
std::vector<NtoNInstance> merge_annotations(std::vector<NtoNInstance> instances,
                                            std::span<const AnnotationRound> rounds,
                                            const std::map<std::string, SemanticLabel>& adjudications);

struct AgreementResult {
  double raw_agreement = 0.0;
  std::size_t n_overlap = 0;
  // confusion[a][b]: first round said a, second said b.
  std::array<std::array<std::size_t, kSemanticLabelCount>, kSemanticLabelCount> confusion{};
};

/// Throws when the rounds share no instance.
AgreementResult agreement(const AnnotationRound& first, const AnnotationRound& second);

/// Keeps at most `cap` instances per noun lemma, chosen with SplitMix64(seed).
/// Survivors stay in input order.
std::vector<NtoNInstance> cap_by_lemma(std::span<const NtoNInstance> instances, std::size_t cap, std::uint64_t seed);

struct SplitSpec {
  std::uint64_t seed = 0;
  std::size_t per_class_train = 287;
  std::size_t cap_per_lemma = 20;
  std::vector<SemanticLabel> classes{SemanticLabel::kSuccession, SemanticLabel::kJuxtaposition,
                                     SemanticLabel::kDistractor};
  // Share of distractors drawn into the training lemma pool before balancing.
  double distractor_train_fraction = 0.8;

  void validate() const;
};

enum class Pool { kTrain, kTest };

struct DatasetSplit {
  // Grouped by class in SplitSpec::classes order; within a class, in draw
  // order. The first k of each group form the size-k training set.
  std::vector<NtoNInstance> train;
  std::vector<NtoNInstance> test;
  std::map<std::string, Pool> lemma_assignment;

  std::uint64_t seed = 0;
  std::size_t per_class_train = 0;
  std::size_t cap_per_lemma = 0;
  std::vector<SemanticLabel> classes;
  std::uint64_t draw_count = 0;
  std::uint64_t draw_digest = 0;
};

/// Lemma-disjoint, class-balanced split.
///
/// Draw order from SplitMix64(spec.seed):
///   1. cap: for each over-cap lemma in ascending order, Fisher-Yates over its
///      instances (input order), first `cap` survive;
///   2. one Fisher-Yates over the ascending lemma list; walking that order, a
///      lemma joins the TRAIN pool while it carries an instance of a class
///      whose pool quota is unmet (per_class_train, or ceil(fraction * n) for
///      distractors), otherwise TEST;
///   3. per class in spec order, Fisher-Yates over its TRAIN-pool instances
///      (input order); the first per_class_train are kept.
/// TEST-pool instances of the requested classes form the test set. Throws when
/// a class cannot be filled, listing the per-class deficit.
DatasetSplit split_by_lemma(std::span<const NtoNInstance> instances, const SplitSpec& spec);

/// The first `per_class` training instances of every class; test set unchanged.
DatasetSplit nested_subset(const DatasetSplit& split, std::size_t per_class);

/// Training instances of one class, in draw order.
std::vector<const NtoNInstance*> train_group(const DatasetSplit& split, SemanticLabel label);

/// Writes train.jsonl, test.jsonl and split-manifest.json into `dir`.
void write_split(const DatasetSplit& split, const std::filesystem::path& dir);
DatasetSplit read_split(const std::filesystem::path& dir);

/// `root` itself when it holds a split-manifest.json, otherwise every direct
/// subdirectory that does, sorted by name.
std::vector<std::filesystem::path> find_split_dirs(const std::filesystem::path& root);

}  // namespace cxnprobe
