#include "cxnprobe/metrics.hpp"

#include <string>

#include "cxnprobe/error.hpp"

namespace cxnprobe {

MetricSet compute_metrics(std::span<const std::pair<int, int>> pairs, std::size_t n_classes) {
  if (pairs.empty()) throw Error("cannot compute metrics on an empty prediction set");
  MetricSet m;
  m.n = pairs.size();
  m.support.assign(n_classes, 0);
  m.predicted.assign(n_classes, 0);
  std::vector<std::size_t> true_positive(n_classes, 0);
  std::size_t correct = 0;
  for (const auto& [gold, pred] : pairs) {
    if (gold < 0 || pred < 0 || static_cast<std::size_t>(gold) >= n_classes ||
        static_cast<std::size_t>(pred) >= n_classes) {
      throw Error("class id outside 0.." + std::to_string(n_classes - 1));
    }
    ++m.support[static_cast<std::size_t>(gold)];
    ++m.predicted[static_cast<std::size_t>(pred)];
    if (gold == pred) {
      ++correct;
      ++true_positive[static_cast<std::size_t>(gold)];
    }
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n);
  m.precision.resize(n_classes);
  m.recall.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (m.predicted[c] > 0) m.precision[c] = static_cast<double>(true_positive[c]) / static_cast<double>(m.predicted[c]);
    if (m.support[c] > 0) m.recall[c] = static_cast<double>(true_positive[c]) / static_cast<double>(m.support[c]);
  }
  return m;
}

double frequency_weighted_recall(const MetricSet& metrics) {
  double total = 0.0;
  for (std::size_t c = 0; c < metrics.recall.size(); ++c) {
    if (metrics.recall[c]) {
      total += static_cast<double>(metrics.support[c]) / static_cast<double>(metrics.n) * *metrics.recall[c];
    }
  }
  return total;
}

}  // namespace cxnprobe
