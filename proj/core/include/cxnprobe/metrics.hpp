#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace cxnprobe {

struct MetricSet {
  std::size_t n = 0;
  double accuracy = 0.0;
  // Undefined (0/0) entries are empty rather than zero: precision for a class
  // never predicted, recall for a class absent from the gold labels.
  std::vector<std::optional<double>> precision;
  std::vector<std::optional<double>> recall;
  std::vector<std::size_t> support;    // gold count per class
  std::vector<std::size_t> predicted;  // predicted count per class
};

/// `pairs` holds (gold, predicted) class ids in [0, n_classes). Throws on empty input.
MetricSet compute_metrics(std::span<const std::pair<int, int>> pairs, std::size_t n_classes);

/// Sum over classes of (support / n) * recall. Equals accuracy.
double frequency_weighted_recall(const MetricSet& metrics);

}  // namespace cxnprobe
