#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cxnprobe/dataset.hpp"
#include "cxnprobe/embeddings.hpp"
#include "cxnprobe/metrics.hpp"
#include "cxnprobe/perturbation.hpp"
#include "cxnprobe/probe.hpp"

namespace cxnprobe {

struct MetricCell {
  int experiment = 1;
  ProbeTask task = ProbeTask::kFormBinary;
  ProbeSystem system = ProbeSystem::kProbe;
  std::optional<PerturbationKind> kind;
  int layer = -1;  // -1: static baseline, no layer
  std::uint64_t seed = 0;
  std::size_t size = 0;
  std::string metric;                  // accuracy | precision | recall | chance-raw
  std::optional<std::string> class_name;
  std::optional<double> value;         // empty: undefined (0/0)
  std::size_t n = 0;

  friend bool operator==(const MetricCell&, const MetricCell&) = default;
};

// Mean over seeds of one (experiment, task, system, kind, layer, size, metric,
// class) group. Undefined cells are left out of the mean.
struct AggregateCell {
  MetricCell key;  // seed unused
  double mean = 0.0;
  std::size_t seeds = 0;
  std::size_t n = 0;
};

struct ExperimentReport {
  std::vector<MetricCell> cells;
  std::vector<AggregateCell> aggregates;
  std::map<std::string, std::uint64_t> model_digests;  // model stem -> file digest
};

std::vector<AggregateCell> aggregate_cells(std::span<const MetricCell> cells);

struct EvalInputs {
  std::span<const DatasetSplit> splits;  // one per seed
  const EmbeddingStore* store = nullptr;
  const StaticVectors* static_vectors = nullptr;  // required when STATIC models are present
};

/// Construction vs. distractor accuracy on each seed's held-out test set for
/// every FORM_BINARY model. CONTROL models are scored against control labels.
/// Also emits one "chance-raw" cell per seed for PROBE and CONTROL (size 0,
/// no layer): the majority-class share of the test labels, next to the
/// balanced chance 1/C.
ExperimentReport run_experiment1(const EvalInputs& inputs, std::span<const LoadedModel> models);

/// Accuracy of the unchanged FORM_BINARY PROBE models on perturbed test
/// items, i.e. the share predicted as the negative (distractor) class.
/// `perturbed` maps split seed to that seed's perturbed test items.
ExperimentReport run_experiment2(const std::map<std::uint64_t, std::vector<PerturbedInstance>>& perturbed,
                                 const EmbeddingStore& store, std::span<const LoadedModel> models);

/// Sense disambiguation: accuracy plus per-class precision and recall for
/// every SENSE_3WAY model.
ExperimentReport run_experiment3(const EvalInputs& inputs, std::span<const LoadedModel> models);

/// Throws unless every model the second report used appears in the first with
/// an identical digest.
void verify_same_models(const ExperimentReport& reference, const ExperimentReport& other);

/// Wraps in-memory models for the experiment runners (digest 0).
std::vector<LoadedModel> wrap_models(std::span<const ProbeModel> models);

// ---------------------------------------------------------------------------
// Report CSV: experiment,task,system,kind,layer,seed,size,metric,class,value,n
// Optional fields are empty; undefined values are written as NA.

inline constexpr const char* kReportCsvHeader = "experiment,task,system,kind,layer,seed,size,metric,class,value,n";

std::string cells_to_csv(std::span<const MetricCell> cells);
/// Same columns with seed = "mean"; value is the seed mean, n the summed n.
std::string aggregates_to_csv(std::span<const AggregateCell> aggregates);
std::vector<MetricCell> cells_from_csv(std::string_view text, const std::string& origin);

}  // namespace cxnprobe
