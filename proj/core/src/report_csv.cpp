#include <fmt/format.h>

#include <charconv>

#include "cxnprobe/error.hpp"
#include "cxnprobe/experiments.hpp"

namespace cxnprobe {
namespace {

std::string layer_field(int layer) { return layer < 0 ? std::string() : std::to_string(layer); }

std::string row(const MetricCell& c, const std::string& seed, const std::optional<double>& value, std::size_t n) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", c.experiment, to_string(c.task), to_string(c.system),
                     c.kind ? std::string(to_string(*c.kind)) : std::string(), layer_field(c.layer), seed, c.size,
                     c.metric, c.class_name.value_or(""), value ? fmt::format("{}", *value) : std::string("NA"),
                     n);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

template <typename T>
T parse_number(std::string_view field, const char* what, const std::string& origin, std::size_t line_no) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw FormatError(origin, line_no, fmt::format("bad {} '{}'", what, field));
  }
  return value;
}

}  // namespace

std::string cells_to_csv(std::span<const MetricCell> cells) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto& c : cells) out += row(c, std::to_string(c.seed), c.value, c.n);
  return out;
}

std::string aggregates_to_csv(std::span<const AggregateCell> aggregates) {
  std::string out = std::string(kReportCsvHeader) + "\n";
  for (const auto& a : aggregates) out += row(a.key, "mean", a.mean, a.n);
  return out;
}

std::vector<MetricCell> cells_from_csv(std::string_view text, const std::string& origin) {
  std::vector<MetricCell> cells;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kReportCsvHeader) throw FormatError(origin, line_no, "unexpected header");
      header_seen = true;
      continue;
    }
    const auto f = split_fields(line);
    if (f.size() != 11) throw FormatError(origin, line_no, fmt::format("expected 11 fields, found {}", f.size()));
    if (f[5] == "mean") throw FormatError(origin, line_no, "aggregate rows cannot be read back as cells");
    try {
      MetricCell c;
      c.experiment = parse_number<int>(f[0], "experiment", origin, line_no);
      c.task = parse_task(f[1]);
      c.system = parse_system(f[2]);
      if (!f[3].empty()) c.kind = parse_perturbation(f[3]);
      c.layer = f[4].empty() ? -1 : parse_number<int>(f[4], "layer", origin, line_no);
      c.seed = parse_number<std::uint64_t>(f[5], "seed", origin, line_no);
      c.size = parse_number<std::size_t>(f[6], "size", origin, line_no);
      c.metric = std::string(f[7]);
      if (!f[8].empty()) c.class_name = std::string(f[8]);
      if (f[9] != "NA") {
        const auto v = parse_number<double>(f[9], "value", origin, line_no);
        if (v < 0.0 || v > 1.0) throw FormatError(origin, line_no, fmt::format("value {} outside [0, 1]", v));
        c.value = v;
      }
      c.n = parse_number<std::size_t>(f[10], "n", origin, line_no);
      cells.push_back(std::move(c));
    } catch (const FormatError&) {
      throw;
    } catch (const Error& e) {
      throw FormatError(origin, line_no, e.what());
    }
  }
  if (!header_seen) throw FormatError(origin, 1, "empty report");
  return cells;
}

}  // namespace cxnprobe
