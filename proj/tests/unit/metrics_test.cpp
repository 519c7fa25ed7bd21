#include <doctest.h>

#include <cmath>

#include "cxnprobe/error.hpp"
#include "cxnprobe/experiments.hpp"
#include "cxnprobe/metrics.hpp"
#include "cxnprobe/rng.hpp"

using namespace cxnprobe;

TEST_CASE("hand count: gold AAB, pred ABB") {
  const std::vector<std::pair<int, int>> pairs{{0, 0}, {0, 1}, {1, 1}};
  const auto m = compute_metrics(pairs, 2);
  CHECK(m.n == 3);
  CHECK(m.accuracy == doctest::Approx(2.0 / 3));
  CHECK(*m.precision[0] == 1.0);
  CHECK(*m.recall[0] == 0.5);
  CHECK(*m.precision[1] == 0.5);
  CHECK(*m.recall[1] == 1.0);
  CHECK(m.support == std::vector<std::size_t>{2, 1});
  CHECK(m.predicted == std::vector<std::size_t>{1, 2});
}

TEST_CASE("all correct, undefined entries, bad input") {
  const std::vector<std::pair<int, int>> perfect{{0, 0}, {1, 1}, {2, 2}, {2, 2}};
  const auto p = compute_metrics(perfect, 3);
  CHECK(p.accuracy == 1.0);
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(*p.precision[c] == 1.0);
    CHECK(*p.recall[c] == 1.0);
  }

  const std::vector<std::pair<int, int>> never{{0, 1}, {1, 1}};
  const auto u = compute_metrics(never, 3);
  CHECK_FALSE(u.precision[0]);  // never predicted
  CHECK_FALSE(u.recall[2]);     // never gold
  CHECK_FALSE(u.precision[2]);
  CHECK(*u.recall[0] == 0.0);

  CHECK_THROWS_AS(compute_metrics(std::vector<std::pair<int, int>>{}, 2), Error);
  CHECK_THROWS_AS(compute_metrics(std::vector<std::pair<int, int>>{{0, 3}}, 2), Error);
}

TEST_CASE("accuracy equals frequency-weighted recall") {
  SplitMix64 rng(77);
  for (int t = 0; t < 300; ++t) {
    const std::size_t c = 2 + rng.uniform(3);
    const std::size_t n = 1 + rng.uniform(200);
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(int(rng.uniform(c)), int(rng.uniform(c)));
    const auto m = compute_metrics(pairs, c);
    CHECK(std::abs(m.accuracy - frequency_weighted_recall(m)) <= 1e-12);
  }
}

namespace {

MetricCell cell(std::uint64_t seed, int layer, std::size_t size, std::optional<double> value, std::string metric = "accuracy",
                std::optional<std::string> cls = std::nullopt) {
  MetricCell c;
  c.experiment = 3;
  c.task = ProbeTask::kSense3Way;
  c.seed = seed;
  c.layer = layer;
  c.size = size;
  c.metric = std::move(metric);
  c.class_name = std::move(cls);
  c.value = value;
  c.n = 10;
  return c;
}

}  // namespace

TEST_CASE("aggregate is the seed mean, undefined cells left out") {
  SplitMix64 rng(2);
  std::vector<MetricCell> cells;
  std::map<std::pair<int, std::size_t>, std::vector<double>> expected;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (int layer = 1; layer <= 3; ++layer) {
      for (const std::size_t size : {10u, 25u}) {
        const double v = rng.uniform01();
        cells.push_back(cell(seed, layer, size, v));
        expected[{layer, size}].push_back(v);
      }
    }
  }
  cells.push_back(cell(1, 1, 10, 0.5, "precision", "SUCCESSION"));
  cells.push_back(cell(2, 1, 10, std::nullopt, "precision", "SUCCESSION"));
  cells.push_back(cell(3, 1, 10, std::nullopt, "precision", "JUXTAPOSITION"));

  const auto agg = aggregate_cells(cells);
  std::size_t accuracy_groups = 0;
  for (const auto& a : agg) {
    if (a.key.metric == "accuracy") {
      ++accuracy_groups;
      const auto& v = expected.at({a.key.layer, a.key.size});
      double sum = 0;
      for (const auto x : v) sum += x;
      CHECK(std::abs(a.mean - sum / double(v.size())) <= 1e-12);
      CHECK(a.seeds == 5);
    } else {
      CHECK(a.key.class_name == "SUCCESSION");
      CHECK(a.mean == 0.5);
      CHECK(a.seeds == 1);
    }
  }
  CHECK(accuracy_groups == 6);
  CHECK(agg.size() == 7);  // the all-undefined group is dropped
}

TEST_CASE("report CSV round trip") {
  std::vector<MetricCell> cells{cell(1, 4, 10, 0.25), cell(2, 4, 10, std::nullopt, "precision", "DISTRACTOR"),
                                cell(3, -1, 287, 1.0 / 3)};
  cells[2].system = ProbeSystem::kStatic;
  MetricCell p = cell(1, 7, 100, 0.875);
  p.experiment = 2;
  p.task = ProbeTask::kFormBinary;
  p.kind = PerturbationKind::kNNP;
  cells.push_back(p);

  const auto text = cells_to_csv(cells);
  CHECK(text.rfind(std::string(kReportCsvHeader) + "\n", 0) == 0);
  CHECK(text.find(",NA,") != std::string::npos);
  CHECK(cells_from_csv(text, "mem") == cells);
  CHECK(cells_to_csv(cells_from_csv(text, "mem")) == text);

  const auto agg = aggregates_to_csv(aggregate_cells(cells));
  CHECK(agg.find(",mean,") != std::string::npos);
  CHECK_THROWS_AS(cells_from_csv(agg, "mem"), FormatError);
}

TEST_CASE("report CSV rejects malformed rows with a line number") {
  const std::string header = std::string(kReportCsvHeader) + "\n";
  try {
    cells_from_csv(header + "1,form,probe,,3,1,10,accuracy,,1.5,10\n", "x.csv");
    FAIL("expected an error");
  } catch (const FormatError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(cells_from_csv("experiment,task\n", "x.csv"), FormatError);
  CHECK_THROWS_AS(cells_from_csv(header + "1,form,probe,,3,1,10,accuracy,,0.5\n", "x.csv"), FormatError);
  CHECK_THROWS_AS(cells_from_csv(header + "1,form,bogus,,3,1,10,accuracy,,0.5,10\n", "x.csv"), FormatError);
  CHECK(cells_from_csv(header, "x.csv").empty());
}
