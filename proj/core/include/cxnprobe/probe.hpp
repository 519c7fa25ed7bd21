#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cxnprobe/corpus.hpp"
#include "cxnprobe/dataset.hpp"
#include "cxnprobe/embeddings.hpp"

namespace cxnprobe {

// FORM_BINARY: 0 = distractor (negative), 1 = construction (positive).
// SENSE_3WAY:  0 = succession, 1 = juxtaposition, 2 = distractor.
enum class ProbeTask { kFormBinary, kSense3Way };

std::string_view to_string(ProbeTask task);
/// Accepts "form", "sense", "FORM_BINARY", "SENSE_3WAY".
ProbeTask parse_task(std::string_view text);
std::size_t class_count(ProbeTask task);
std::string_view class_name(ProbeTask task, std::size_t class_id);
/// Class id of a gold label, or nothing when the label is outside the task.
std::optional<int> task_class(ProbeTask task, SemanticLabel label);

inline constexpr int kNegativeClass = 0;

enum class ProbeSystem { kProbe, kControl, kStatic };

std::string_view to_string(ProbeSystem system);
ProbeSystem parse_system(std::string_view text);

struct TrainHyper {
  double l2_lambda = 1e-4;
  int max_iters = 5000;
  double tol = 1e-6;
};

struct TrainingMeta {
  int iterations = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double grad_max_norm = 0.0;
  bool converged = false;
};

/// Linear softmax classifier. Weights are kept in float32 so that a model read
/// back from disk predicts exactly like the one that was trained.
struct ProbeModel {
  ProbeTask task = ProbeTask::kFormBinary;
  ProbeSystem system = ProbeSystem::kProbe;
  int layer = -1;  // -1 for the static baseline
  std::uint64_t seed = 0;
  std::size_t train_size = 0;  // per class
  std::uint64_t control_seed = 0;
  std::size_t n_classes = 0;
  std::size_t dim = 0;
  std::vector<float> weights;  // n_classes x dim, row-major
  std::vector<float> bias;     // n_classes
  TrainHyper hyper;
  TrainingMeta meta;

  /// File stem, e.g. "form-probe-s3-n100-l07".
  std::string stem() const;
};

/// Mean cross-entropy + (l2_lambda / 2) * ||W||^2 (bias unregularised), with
/// its gradient when the output pointers are non-null. W is C x D.
double softmax_loss(const Eigen::MatrixXd& features, std::span<const int> labels, const Eigen::MatrixXd& weights,
                    const Eigen::VectorXd& bias, double l2_lambda, Eigen::MatrixXd* grad_weights = nullptr,
                    Eigen::VectorXd* grad_bias = nullptr);

/// Multinomial logistic regression by full-batch gradient descent with
/// Armijo backtracking from a zero start. Stops when the gradient's max-norm
/// falls below hyper.tol or after hyper.max_iters steps. The result depends
/// only on the inputs; `seed` is recorded, not consumed.
///
/// Requires labels in [0, n_classes) and at least two distinct classes
/// ("single-class training set" otherwise). A class missing from the labels is
/// allowed and simply receives low scores.
ProbeModel train_probe(const Eigen::MatrixXd& features, std::span<const int> labels, std::size_t n_classes,
                       const TrainHyper& hyper, std::uint64_t seed = 0);

struct Prediction {
  int class_id = 0;
  std::vector<double> probabilities;
};

/// softmax(Wx + b); ties go to the lowest class id.
Prediction predict(const ProbeModel& model, std::span<const float> feature);
Prediction predict(const ProbeModel& model, std::span<const double> feature);

/// Deterministic random labels per word type: FNV-1a over the seed's eight
/// little-endian bytes followed by the case-folded word, modulo n_classes.
class ControlLabeler {
 public:
  ControlLabeler(std::uint64_t control_seed, std::size_t n_classes);

  int label(std::string_view word) const;
  std::uint64_t seed() const { return seed_; }
  std::size_t n_classes() const { return n_classes_; }

 private:
  std::uint64_t seed_;
  std::size_t n_classes_;
};

/// Control class of each instance's first-noun word type.
std::vector<int> control_labels(const ControlLabeler& labeler, std::span<const NtoNInstance> instances);

// ---------------------------------------------------------------------------
// Model files: "<stem>.json" header plus "<stem>.f32" holding the weights then
// the bias as little-endian float32.

std::filesystem::path write_model(const ProbeModel& model, const std::filesystem::path& dir);
ProbeModel read_model(const std::filesystem::path& header_path);

struct LoadedModel {
  ProbeModel model;
  std::filesystem::path header_path;
  std::uint64_t digest = 0;  // FNV-1a over header bytes then weight bytes
};

/// Every model under `dir` (recursively), sorted by stem.
std::vector<LoadedModel> load_models(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------

/// Feature matrix (N x dim) of the "to" token at `layer` for each instance.
/// Throws listing every missing key.
Eigen::MatrixXd layer_features(std::span<const NtoNInstance> instances, const EmbeddingStore& store, std::size_t layer);
Eigen::MatrixXd layer_features(std::span<const PerturbedInstance> instances, const EmbeddingStore& store,
                               std::size_t layer);

struct StaticFeatures {
  Eigen::MatrixXd features;
  std::size_t oov = 0;
};
StaticFeatures static_features(std::span<const NtoNInstance> instances, const StaticVectors& vectors);

/// Gold class ids for `task`; instances outside the task's classes throw.
std::vector<int> task_labels(ProbeTask task, std::span<const NtoNInstance> instances);

/// Training instances for one task and per-class size, drawn as prefixes of
/// the split's class groups so that smaller sizes nest inside larger ones.
/// FORM_BINARY takes `size` distractors and `size` constructions, the latter
/// round-robin over the construction classes.
std::vector<NtoNInstance> task_training_set(const DatasetSplit& split, ProbeTask task, std::size_t size);

/// Test instances that belong to the task's classes.
std::vector<NtoNInstance> task_test_set(const DatasetSplit& split, ProbeTask task);

struct GridConfig {
  ProbeTask task = ProbeTask::kFormBinary;
  std::vector<std::size_t> sizes{10, 25, 100, 287};
  std::vector<int> layers{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  bool control = true;
  bool static_baseline = true;
  TrainHyper hyper;
};

/// One PROBE and (optionally) one CONTROL model per (seed, size, layer), plus
/// one STATIC model per (seed, size). The control labeler of a seed uses that
/// split's seed as its control seed.
std::vector<ProbeModel> train_grid(std::span<const DatasetSplit> splits, const EmbeddingStore& store,
                                   const StaticVectors* static_vectors, const GridConfig& config);

}  // namespace cxnprobe
