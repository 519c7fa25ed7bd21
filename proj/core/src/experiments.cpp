#include "cxnprobe/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "cxnprobe/error.hpp"

namespace cxnprobe {
namespace {

const DatasetSplit& split_for(std::span<const DatasetSplit> splits, std::uint64_t seed, const std::string& model) {
  for (const auto& s : splits) {
    if (s.seed == seed) return s;
  }
  throw Error("no split with seed " + std::to_string(seed) + " for model " + model);
}

Eigen::MatrixXd features_for(const ProbeModel& model, std::span<const NtoNInstance> items, const EvalInputs& inputs) {
  if (model.system == ProbeSystem::kStatic) {
    if (inputs.static_vectors == nullptr) throw Error("static model " + model.stem() + " needs static vectors");
    return static_features(items, *inputs.static_vectors).features;
  }
  if (inputs.store == nullptr) throw Error("no embedding store given");
  return layer_features(items, *inputs.store, static_cast<std::size_t>(model.layer));
}

std::vector<int> predict_rows(const ProbeModel& model, const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != model.dim) {
    throw Error("model " + model.stem() + " expects dimension " + std::to_string(model.dim) + ", features have " +
                std::to_string(x.cols()));
  }
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  std::vector<double> row(model.dim);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (std::size_t d = 0; d < model.dim; ++d) row[d] = x(i, static_cast<Eigen::Index>(d));
    out[static_cast<std::size_t>(i)] = predict(model, std::span<const double>(row)).class_id;
  }
  return out;
}

MetricSet checked_metrics(const std::vector<int>& gold, const std::vector<int>& pred, std::size_t n_classes) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) pairs.emplace_back(gold[i], pred[i]);
  auto m = compute_metrics(pairs, n_classes);
  if (std::abs(m.accuracy - frequency_weighted_recall(m)) > 1e-12) {
    throw Error("metric identity violated: accuracy differs from frequency-weighted recall");
  }
  return m;
}

MetricCell base_cell(int experiment, const ProbeModel& model) {
  MetricCell c;
  c.experiment = experiment;
  c.task = model.task;
  c.system = model.system;
  c.layer = model.layer;
  c.seed = model.seed;
  c.size = model.train_size;
  return c;
}

ExperimentReport classify_test_sets(int experiment, ProbeTask task, bool per_class, const EvalInputs& inputs,
                                    std::span<const LoadedModel> models) {
  ExperimentReport report;
  std::map<std::pair<std::uint64_t, ProbeSystem>, std::uint64_t> chance_seeds;  // -> control seed
  for (const auto& lm : models) {
    const auto& model = lm.model;
    if (model.task != task) continue;
    const auto& split = split_for(inputs.splits, model.seed, model.stem());
    const auto test = task_test_set(split, task);
    if (test.empty()) throw Error("seed " + std::to_string(model.seed) + " has an empty test set");

    const auto gold = model.system == ProbeSystem::kControl
                          ? control_labels(ControlLabeler(model.control_seed, model.n_classes), test)
                          : task_labels(task, test);
    const auto pred = predict_rows(model, features_for(model, test, inputs));
    const auto m = checked_metrics(gold, pred, model.n_classes);

    auto acc = base_cell(experiment, model);
    acc.metric = "accuracy";
    acc.value = m.accuracy;
    acc.n = m.n;
    report.cells.push_back(acc);
    if (per_class) {
      for (std::size_t c = 0; c < model.n_classes; ++c) {
        auto p = base_cell(experiment, model);
        p.metric = "precision";
        p.class_name = std::string(class_name(task, c));
        p.value = m.precision[c];
        p.n = m.predicted[c];
        report.cells.push_back(p);
        auto r = base_cell(experiment, model);
        r.metric = "recall";
        r.class_name = std::string(class_name(task, c));
        r.value = m.recall[c];
        r.n = m.support[c];
        report.cells.push_back(r);
      }
    }
    report.model_digests[model.stem()] = lm.digest;
    if (model.system != ProbeSystem::kStatic) chance_seeds[{model.seed, model.system}] = model.control_seed;
  }

  // Majority-class share of each seed's test labels, gold and control.
  for (const auto& [key, control_seed] : chance_seeds) {
    const auto [seed, system] = key;
    const auto test = task_test_set(split_for(inputs.splits, seed, "chance"), task);
    const auto labels = system == ProbeSystem::kControl
                            ? control_labels(ControlLabeler(control_seed, class_count(task)), test)
                            : task_labels(task, test);
    std::vector<std::size_t> counts(class_count(task), 0);
    for (const int c : labels) ++counts[static_cast<std::size_t>(c)];
    MetricCell cell;
    cell.experiment = experiment;
    cell.task = task;
    cell.system = system;
    cell.layer = -1;
    cell.seed = seed;
    cell.size = 0;
    cell.metric = "chance-raw";
    cell.value = static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
                 static_cast<double>(labels.size());
    cell.n = labels.size();
    report.cells.push_back(cell);
  }
  report.aggregates = aggregate_cells(report.cells);
  return report;
}

auto group_key(const MetricCell& c) {
  return std::make_tuple(c.experiment, static_cast<int>(c.task), static_cast<int>(c.system),
                         c.kind ? static_cast<int>(*c.kind) : -1, c.layer, c.size, c.metric, c.class_name.value_or(""));
}

}  // namespace

std::vector<AggregateCell> aggregate_cells(std::span<const MetricCell> cells) {
  std::map<decltype(group_key(cells.front())), std::size_t> index;
  std::vector<AggregateCell> out;
  std::vector<double> sums;
  for (const auto& cell : cells) {
    const auto key = group_key(cell);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      AggregateCell agg;
      agg.key = cell;
      agg.key.seed = 0;
      agg.key.value.reset();
      agg.key.n = 0;
      out.push_back(agg);
      sums.push_back(0.0);
    }
    if (!cell.value) continue;
    auto& agg = out[it->second];
    sums[it->second] += *cell.value;
    ++agg.seeds;
    agg.n += cell.n;
  }
  std::vector<AggregateCell> defined;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].seeds == 0) continue;
    out[i].mean = sums[i] / static_cast<double>(out[i].seeds);
    defined.push_back(out[i]);
  }
  return defined;
}

ExperimentReport run_experiment1(const EvalInputs& inputs, std::span<const LoadedModel> models) {
  return classify_test_sets(1, ProbeTask::kFormBinary, false, inputs, models);
}

ExperimentReport run_experiment3(const EvalInputs& inputs, std::span<const LoadedModel> models) {
  return classify_test_sets(3, ProbeTask::kSense3Way, true, inputs, models);
}

ExperimentReport run_experiment2(const std::map<std::uint64_t, std::vector<PerturbedInstance>>& perturbed,
                                 const EmbeddingStore& store, std::span<const LoadedModel> models) {
  ExperimentReport report;
  for (const auto& lm : models) {
    const auto& model = lm.model;
    if (model.task != ProbeTask::kFormBinary || model.system != ProbeSystem::kProbe) continue;
    const auto it = perturbed.find(model.seed);
    if (it == perturbed.end()) throw Error("no perturbed test set for seed " + std::to_string(model.seed));

    for (const auto kind : kAllPerturbations) {
      std::vector<PerturbedInstance> items;
      for (const auto& p : it->second) {
        if (p.kind == kind) items.push_back(p);
      }
      if (items.empty()) continue;
      const auto pred = predict_rows(model, layer_features(items, store, static_cast<std::size_t>(model.layer)));
      // Every perturbed item is a non-instance: gold is the negative class.
      const std::vector<int> gold(items.size(), kNegativeClass);
      const auto m = checked_metrics(gold, pred, model.n_classes);

      auto cell = base_cell(2, model);
      cell.kind = kind;
      cell.metric = "accuracy";
      cell.value = m.accuracy;
      cell.n = m.n;
      report.cells.push_back(cell);
    }
    report.model_digests[model.stem()] = lm.digest;
  }
  report.aggregates = aggregate_cells(report.cells);
  return report;
}

void verify_same_models(const ExperimentReport& reference, const ExperimentReport& other) {
  for (const auto& [stem, digest] : other.model_digests) {
    const auto it = reference.model_digests.find(stem);
    if (it == reference.model_digests.end()) throw Error("model " + stem + " was not used by the reference experiment");
    if (it->second != digest) throw Error("model " + stem + " changed between experiments");
  }
}

std::vector<LoadedModel> wrap_models(std::span<const ProbeModel> models) {
  std::vector<LoadedModel> out;
  out.reserve(models.size());
  for (const auto& m : models) out.push_back(LoadedModel{m, {}, 0});
  return out;
}

}  // namespace cxnprobe
