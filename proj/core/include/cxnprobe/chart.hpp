#pragma once

#include <optional>
#include <span>
#include <string>

#include "cxnprobe/experiments.hpp"

namespace cxnprobe {

struct ChartStyle {
  std::string title;
  // Metric to plot. Default: "accuracy" for experiments 1 and 2, "recall" for 3.
  std::optional<std::string> metric;
  int panel_width = 420;
  int panel_height = 300;
  bool chance_line = true;
};

/// Layerwise SVG chart of seed-averaged cells that all share one experiment.
/// PROBE: one solid polyline per training size, darker for larger sizes.
/// CONTROL: dashed polyline per size. STATIC: dashed horizontal line per size.
/// Experiment 2 gets one panel per perturbation kind; per-class metrics get
/// one panel per class. A series with one layer is drawn as a marker.
/// Output depends only on the input cells and the style.
std::string render_layer_chart(std::span<const MetricCell> cells, const ChartStyle& style = {});

}  // namespace cxnprobe
