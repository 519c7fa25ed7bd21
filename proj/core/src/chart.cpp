#include "cxnprobe/chart.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include "cxnprobe/error.hpp"

namespace cxnprobe {
namespace {

constexpr int kMarginLeft = 56;
constexpr int kMarginRight = 16;
constexpr int kMarginTop = 44;
constexpr int kMarginBottom = 48;
constexpr int kLegendWidth = 170;

struct Rgb {
  int r, g, b;
};

// Light to dark ramps.
constexpr Rgb kProbeRamp[2] = {{158, 202, 225}, {8, 48, 107}};
constexpr Rgb kControlRamp[2] = {{253, 208, 162}, {127, 39, 4}};
constexpr Rgb kStaticRamp[2] = {{161, 217, 155}, {0, 68, 27}};

std::string shade(const Rgb (&ramp)[2], std::size_t i, std::size_t count) {
  const double t = count <= 1 ? 1.0 : static_cast<double>(i) / static_cast<double>(count - 1);
  const auto mix = [t](int a, int b) { return static_cast<int>(a + (b - a) * t + 0.5); };
  return fmt::format("#{:02x}{:02x}{:02x}", mix(ramp[0].r, ramp[1].r), mix(ramp[0].g, ramp[1].g),
                     mix(ramp[0].b, ramp[1].b));
}

std::string escape(std::string_view s) {
  std::string out;
  for (const char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) { return fmt::format("{:.2f}", v); }

struct Panel {
  std::string label;
  std::optional<PerturbationKind> kind;
  std::optional<std::string> class_name;
};

// (system, size) -> layer -> (sum, count)
using SeriesMap = std::map<std::pair<ProbeSystem, std::size_t>, std::map<int, std::pair<double, std::size_t>>>;

}  // namespace

std::string render_layer_chart(std::span<const MetricCell> cells, const ChartStyle& style) {
  if (cells.empty()) throw Error("no cells to chart");
  const int experiment = cells.front().experiment;
  const ProbeTask task = cells.front().task;
  for (const auto& c : cells) {
    if (c.experiment != experiment) throw Error("cells mix experiments " + std::to_string(experiment) + " and " +
                                                std::to_string(c.experiment));
  }
  const std::string metric = style.metric.value_or(experiment == 3 ? "recall" : "accuracy");
  const bool per_class = metric != "accuracy";

  std::vector<const MetricCell*> selected;
  for (const auto& c : cells) {
    if (c.metric == metric) selected.push_back(&c);
  }
  if (selected.empty()) throw Error("no '" + metric + "' cells in experiment " + std::to_string(experiment));

  std::vector<Panel> panels;
  if (experiment == 2) {
    std::set<PerturbationKind> kinds;
    for (const auto* c : selected) {
      if (c->kind) kinds.insert(*c->kind);
    }
    for (const auto k : kAllPerturbations) {
      if (kinds.count(k)) panels.push_back({std::string(to_string(k)), k, std::nullopt});
    }
  } else if (per_class) {
    std::set<std::string> names;
    for (const auto* c : selected) {
      if (c->class_name) names.insert(*c->class_name);
    }
    // Class-id order when the names are known to the task.
    for (std::size_t id = 0; id < class_count(task); ++id) {
      const std::string name(class_name(task, id));
      if (names.erase(name)) panels.push_back({name, std::nullopt, name});
    }
    for (const auto& name : names) panels.push_back({name, std::nullopt, name});
  }
  if (panels.empty()) panels.push_back({"", std::nullopt, std::nullopt});

  std::set<int> layers;
  std::set<std::size_t> sizes;
  for (const auto* c : selected) {
    if (c->layer >= 0) layers.insert(c->layer);
    sizes.insert(c->size);
  }
  int x_lo = layers.empty() ? 0 : *layers.begin();
  int x_hi = layers.empty() ? 1 : *layers.rbegin();
  if (x_lo == x_hi) {
    --x_lo;
    ++x_hi;
  }
  const std::vector<std::size_t> size_order(sizes.begin(), sizes.end());
  const auto size_rank = [&](std::size_t s) {
    return static_cast<std::size_t>(std::lower_bound(size_order.begin(), size_order.end(), s) - size_order.begin());
  };

  // Majority-class share per system, averaged over seeds.
  std::map<ProbeSystem, double> raw_chance;
  {
    std::map<ProbeSystem, std::pair<double, std::size_t>> acc;
    for (const auto& c : cells) {
      if (c.metric != "chance-raw" || !c.value) continue;
      acc[c.system].first += *c.value;
      ++acc[c.system].second;
    }
    for (const auto& [system, a] : acc) raw_chance[system] = a.first / static_cast<double>(a.second);
  }

  const int pw = style.panel_width;
  const int ph = style.panel_height;
  const int width = static_cast<int>(panels.size()) * pw + kLegendWidth;
  const int height = ph + 28;
  const double plot_w = pw - kMarginLeft - kMarginRight;
  const double plot_h = ph - kMarginTop - kMarginBottom;

  std::string svg;
  svg += fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\" width=\"{}\" height=\"{}\" "
      "font-family=\"sans-serif\" font-size=\"11\">\n",
      width, height, width, height);
  svg += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n", width, height);
  const std::string title = style.title.empty() ? fmt::format("Experiment {}: {} by layer", experiment, metric)
                                                : style.title;
  svg += fmt::format("<text x=\"{}\" y=\"18\" font-size=\"14\" text-anchor=\"middle\">{}</text>\n",
                     (width - kLegendWidth) / 2, escape(title));

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double ox = static_cast<double>(p) * pw + kMarginLeft;
    const double oy = 28 + kMarginTop;
    const auto px = [&](double layer) { return ox + (layer - x_lo) / (x_hi - x_lo) * plot_w; };
    const auto py = [&](double v) { return oy + (1.0 - v) * plot_h; };

    svg += fmt::format("<g class=\"panel\" id=\"panel-{}\">\n", p);
    if (!panel.label.empty()) {
      svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-weight=\"bold\">{}</text>\n",
                         num(ox + plot_w / 2), num(oy - 10), escape(panel.label));
    }
    svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444444\"/>\n",
                       num(ox), num(oy), num(plot_w), num(plot_h));
    for (int t = 0; t <= 5; ++t) {
      const double v = t / 5.0;
      svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#e0e0e0\"/>\n", num(ox), num(py(v)),
                         num(ox + plot_w), num(py(v)));
      svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>\n", num(ox - 6), num(py(v) + 4),
                         num(v));
    }
    for (const int l : layers) {
      svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", num(px(l)),
                         num(oy + plot_h + 16), l);
    }
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">layer</text>\n", num(ox + plot_w / 2),
                       num(oy + plot_h + 34));
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 {} {})\">{}</text>\n",
                       num(ox - 40), num(oy + plot_h / 2), num(ox - 40), num(oy + plot_h / 2), escape(metric));

    if (style.chance_line && experiment != 2) {
      const double chance = 1.0 / static_cast<double>(class_count(task));
      svg += fmt::format(
          "<line class=\"chance\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#888888\" stroke-dasharray=\"1 3\"/>\n",
          num(ox), num(py(chance)), num(ox + plot_w), num(py(chance)));
    }

    if (style.chance_line && !per_class && experiment != 2) {
      for (const auto& [system, share] : raw_chance) {
        const double y = py(share);
        svg += fmt::format(
            "<line class=\"chance-raw {}\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" "
            "stroke-dasharray=\"1 3\"/>\n",
            to_string(system), num(ox), num(y), num(ox + plot_w), num(y),
            system == ProbeSystem::kControl ? shade(kControlRamp, 1, 2) : shade(kProbeRamp, 1, 2));
      }
    }

    SeriesMap series;
    for (const auto* c : selected) {
      if (!c->value) continue;
      if (panel.kind && c->kind != panel.kind) continue;
      if (panel.class_name && c->class_name != panel.class_name) continue;
      auto& slot = series[{c->system, c->size}][c->layer];
      slot.first += *c->value;
      ++slot.second;
    }

    for (const auto& [key, points] : series) {
      const auto [system, size] = key;
      const auto rank = size_rank(size);
      const auto& ramp = system == ProbeSystem::kProbe     ? kProbeRamp
                         : system == ProbeSystem::kControl ? kControlRamp
                                                           : kStaticRamp;
      const std::string colour = shade(ramp, rank, size_order.size());
      const std::string dash = system == ProbeSystem::kProbe     ? ""
                               : system == ProbeSystem::kControl ? " stroke-dasharray=\"6 4\""
                                                                 : " stroke-dasharray=\"2 3\"";
      const std::string cls = fmt::format("{} size-{}", to_string(system), size);

      if (system == ProbeSystem::kStatic) {
        const auto it = points.find(-1);
        if (it == points.end()) continue;
        const double y = py(it->second.first / static_cast<double>(it->second.second));
        svg += fmt::format(
            "<line class=\"{}\" x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"1.5\"{}/>\n", cls,
            num(ox), num(y), num(ox + plot_w), num(y), colour, dash);
        continue;
      }
      std::vector<std::pair<double, double>> xy;
      for (const auto& [layer, acc] : points) {
        if (layer < 0) continue;
        xy.emplace_back(px(layer), py(acc.first / static_cast<double>(acc.second)));
      }
      if (xy.empty()) continue;
      if (xy.size() == 1) {
        svg += fmt::format("<circle class=\"{}\" cx=\"{}\" cy=\"{}\" r=\"3.5\" fill=\"{}\"/>\n", cls,
                           num(xy[0].first), num(xy[0].second), colour);
        continue;
      }
      std::string pts;
      for (const auto& [x, y] : xy) pts += (pts.empty() ? "" : " ") + num(x) + "," + num(y);
      svg += fmt::format("<polyline class=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"{}/>\n",
                         cls, pts, colour, dash);
    }
    svg += "</g>\n";
  }

  // Legend
  std::set<ProbeSystem> systems;
  for (const auto* c : selected) systems.insert(c->system);
  double ly = 28 + kMarginTop;
  const double lx = static_cast<double>(panels.size()) * pw + 8;
  svg += "<g class=\"legend\">\n";
  for (const auto system : {ProbeSystem::kProbe, ProbeSystem::kControl, ProbeSystem::kStatic}) {
    if (!systems.count(system)) continue;
    const auto& ramp = system == ProbeSystem::kProbe     ? kProbeRamp
                       : system == ProbeSystem::kControl ? kControlRamp
                                                         : kStaticRamp;
    const std::string dash = system == ProbeSystem::kProbe     ? ""
                             : system == ProbeSystem::kControl ? " stroke-dasharray=\"6 4\""
                                                               : " stroke-dasharray=\"2 3\"";
    for (std::size_t i = 0; i < size_order.size(); ++i) {
      svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-width=\"1.8\"{}/>\n",
                         num(lx), num(ly), num(lx + 24), num(ly), shade(ramp, i, size_order.size()), dash);
      svg += fmt::format("<text x=\"{}\" y=\"{}\">{} n={}</text>\n", num(lx + 30), num(ly + 4), to_string(system),
                         size_order[i]);
      ly += 16;
    }
    ly += 6;
  }
  if (style.chance_line && experiment != 2) {
    svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#888888\" stroke-dasharray=\"1 3\"/>\n",
                       num(lx), num(ly), num(lx + 24), num(ly));
    svg += fmt::format("<text x=\"{}\" y=\"{}\">chance 1/{}</text>\n", num(lx + 30), num(ly + 4),
                       class_count(task));
    ly += 16;
  }
  if (style.chance_line && !per_class && experiment != 2) {
    for (const auto& [system, share] : raw_chance) {
      svg += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{}\" stroke-dasharray=\"1 3\"/>\n",
                         num(lx), num(ly), num(lx + 24), num(ly),
                         system == ProbeSystem::kControl ? shade(kControlRamp, 1, 2) : shade(kProbeRamp, 1, 2));
      svg += fmt::format("<text x=\"{}\" y=\"{}\">majority ({})</text>\n", num(lx + 30), num(ly + 4),
                         system == ProbeSystem::kControl ? "control" : "gold");
      ly += 16;
    }
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

}  // namespace cxnprobe
