#include <algorithm>
#include <set>

#include "cxnprobe/error.hpp"
#include "cxnprobe/probe.hpp"

namespace cxnprobe {
namespace {

template <typename Item>
Eigen::MatrixXd gather(std::span<const Item> items, const EmbeddingStore& store, std::size_t layer) {
  const auto dim = store.manifest().dim;
  if (layer >= store.manifest().n_layers) {
    throw Error("layer " + std::to_string(layer) + " not in store (" + std::to_string(store.manifest().n_layers) +
                " layers)");
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(items.size()), static_cast<Eigen::Index>(dim));
  std::vector<std::string> missing;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto key = key_for(items[i]);
    if (!store.contains(key)) {
      missing.push_back(key.str() + " (" + items[i].sentence.sent_id + ")");
      continue;
    }
    const auto v = store.layer(key, layer);
    for (std::size_t d = 0; d < dim; ++d) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = v[d];
  }
  if (!missing.empty()) {
    std::string msg = "embedding store is missing " + std::to_string(missing.size()) + " record(s): ";
    for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += (i ? ", " : "") + missing[i];
    if (missing.size() > 10) msg += ", ...";
    throw Error(msg);
  }
  return x;
}

// Used when every control label of a training set falls in one class: the
// model predicts that class everywhere.
ProbeModel constant_model(std::size_t n_classes, std::size_t dim, int only_class, const TrainHyper& hyper) {
  ProbeModel m;
  m.n_classes = n_classes;
  m.dim = dim;
  m.hyper = hyper;
  m.weights.assign(n_classes * dim, 0.0f);
  m.bias.assign(n_classes, -1.0f);
  m.bias[static_cast<std::size_t>(only_class)] = 0.0f;
  return m;
}

}  // namespace

Eigen::MatrixXd layer_features(std::span<const NtoNInstance> instances, const EmbeddingStore& store, std::size_t layer) {
  return gather(instances, store, layer);
}

Eigen::MatrixXd layer_features(std::span<const PerturbedInstance> instances, const EmbeddingStore& store,
                               std::size_t layer) {
  return gather(instances, store, layer);
}

StaticFeatures static_features(std::span<const NtoNInstance> instances, const StaticVectors& vectors) {
  StaticFeatures out;
  out.features.resize(static_cast<Eigen::Index>(instances.size()), static_cast<Eigen::Index>(vectors.dim()));
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto lookup = static_lookup(vectors, instances[i]);
    if (lookup.oov) ++out.oov;
    for (std::size_t d = 0; d < vectors.dim(); ++d) {
      out.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = lookup.vector[d];
    }
  }
  return out;
}

std::vector<int> task_labels(ProbeTask task, std::span<const NtoNInstance> instances) {
  std::vector<int> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    if (!inst.label) throw Error("instance '" + inst.instance_id + "' is unlabeled");
    const auto c = task_class(task, *inst.label);
    if (!c) {
      throw Error("instance '" + inst.instance_id + "' has label " + std::string(to_string(*inst.label)) +
                  ", which the " + std::string(to_string(task)) + " task does not use");
    }
    out.push_back(*c);
  }
  return out;
}

std::vector<NtoNInstance> task_training_set(const DatasetSplit& split, ProbeTask task, std::size_t size) {
  if (size > split.per_class_train) {
    throw Error("training size " + std::to_string(size) + " exceeds the split's " +
                std::to_string(split.per_class_train) + " per class");
  }
  std::vector<NtoNInstance> out;
  const auto has = [&split](SemanticLabel l) {
    return std::find(split.classes.begin(), split.classes.end(), l) != split.classes.end();
  };

  if (task == ProbeTask::kSense3Way) {
    for (const auto c : {SemanticLabel::kSuccession, SemanticLabel::kJuxtaposition, SemanticLabel::kDistractor}) {
      if (!has(c)) throw Error("split lacks class " + std::string(to_string(c)) + " needed by the sense task");
      const auto group = train_group(split, c);
      for (std::size_t k = 0; k < size; ++k) out.push_back(*group[k]);
    }
    return out;
  }

  if (!has(SemanticLabel::kDistractor)) throw Error("split lacks distractors needed by the form task");
  for (const auto* inst : train_group(split, SemanticLabel::kDistractor)) {
    if (out.size() == size) break;
    out.push_back(*inst);
  }
  std::vector<std::vector<const NtoNInstance*>> positives;
  for (const auto c : split.classes) {
    if (task_class(task, c) == 1) positives.push_back(train_group(split, c));
  }
  if (positives.empty()) throw Error("split has no construction classes for the form task");
  std::vector<std::size_t> cursor(positives.size(), 0);
  std::size_t taken = 0;
  while (taken < size) {
    bool progressed = false;
    for (std::size_t g = 0; g < positives.size() && taken < size; ++g) {
      if (cursor[g] < positives[g].size()) {
        out.push_back(*positives[g][cursor[g]++]);
        ++taken;
        progressed = true;
      }
    }
    if (!progressed) throw Error("not enough construction instances for training size " + std::to_string(size));
  }
  return out;
}

std::vector<NtoNInstance> task_test_set(const DatasetSplit& split, ProbeTask task) {
  std::vector<NtoNInstance> out;
  for (const auto& inst : split.test) {
    if (inst.label && task_class(task, *inst.label)) out.push_back(inst);
  }
  return out;
}

std::vector<ProbeModel> train_grid(std::span<const DatasetSplit> splits, const EmbeddingStore& store,
                                   const StaticVectors* static_vectors, const GridConfig& config) {
  if (config.static_baseline && static_vectors == nullptr) throw Error("static baseline requested without static vectors");
  std::set<std::uint64_t> seeds;
  for (const auto& s : splits) {
    if (!seeds.insert(s.seed).second) throw Error("two splits share seed " + std::to_string(s.seed));
  }
  for (const int layer : config.layers) {
    if (layer < 0 || static_cast<std::size_t>(layer) >= store.manifest().n_layers) {
      throw Error("layer " + std::to_string(layer) + " outside the store's 0.." +
                  std::to_string(store.manifest().n_layers - 1));
    }
  }

  const auto n_classes = class_count(config.task);
  std::vector<ProbeModel> models;

  const auto finish = [&](ProbeModel m, ProbeSystem system, int layer, const DatasetSplit& split, std::size_t size) {
    m.task = config.task;
    m.system = system;
    m.layer = layer;
    m.seed = split.seed;
    m.train_size = size;
    m.control_seed = split.seed;
    models.push_back(std::move(m));
  };

  for (const auto& split : splits) {
    const ControlLabeler labeler(split.seed, n_classes);
    for (const auto size : config.sizes) {
      const auto train = task_training_set(split, config.task, size);
      const auto gold = task_labels(config.task, train);
      const auto control = control_labels(labeler, train);
      const bool control_degenerate =
          std::all_of(control.begin(), control.end(), [&](int c) { return c == control.front(); });

      for (const int layer : config.layers) {
        const auto x = layer_features(train, store, static_cast<std::size_t>(layer));
        finish(train_probe(x, gold, n_classes, config.hyper, split.seed), ProbeSystem::kProbe, layer, split, size);
        if (config.control) {
          auto m = control_degenerate ? constant_model(n_classes, static_cast<std::size_t>(x.cols()), control.front(), config.hyper)
                                      : train_probe(x, control, n_classes, config.hyper, split.seed);
          finish(std::move(m), ProbeSystem::kControl, layer, split, size);
        }
      }
      if (config.static_baseline) {
        const auto sf = static_features(train, *static_vectors);
        finish(train_probe(sf.features, gold, n_classes, config.hyper, split.seed), ProbeSystem::kStatic, -1, split, size);
      }
    }
  }
  return models;
}

}  // namespace cxnprobe
