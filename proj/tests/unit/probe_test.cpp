#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "cxnprobe/corpus.hpp"
#include "cxnprobe/dataset.hpp"
#include "cxnprobe/embeddings.hpp"
#include "cxnprobe/error.hpp"
#include "cxnprobe/probe.hpp"
#include "cxnprobe/rng.hpp"
#include "cxnprobe/synth.hpp"
#include "helpers.hpp"

using namespace cxnprobe;

namespace {

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

NtoNInstance word_instance(const std::string& word, SemanticLabel label = SemanticLabel::kSuccession) {
  NtoNInstance inst;
  inst.sentence = testutil::sentence(word, "we/we/PRON " + word + "/" + word + "/NOUN to/to/ADP " + word + "/" + word + "/NOUN");
  inst.instance_id = word + "#1";
  inst.span = {1, 2, 3, inst.sentence.tokens[1].lemma, "to"};
  inst.label = label;
  return inst;
}

// Independent reimplementation of the control hash.
int reference_control(std::uint64_t seed, const std::string& word, std::size_t c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int i = 0; i < 8; ++i) {
    h ^= (seed >> (8 * i)) & 0xff;
    h *= 0x100000001b3ULL;
  }
  for (const unsigned char ch : word) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return static_cast<int>(h % c);
}

// 2-D strict separability by brute force over lines through point pairs
// (valid for points in general position).
bool separable_2d(const Eigen::MatrixXd& x, const std::vector<int>& y) {
  const auto n = x.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double nx = -(x(j, 1) - x(i, 1));
      const double ny = x(j, 0) - x(i, 0);
      for (const double sign : {1.0, -1.0}) {
        bool ok = true;
        for (Eigen::Index k = 0; k < n && ok; ++k) {
          if (k == i || k == j) continue;
          const double s = sign * (nx * (x(k, 0) - x(i, 0)) + ny * (x(k, 1) - x(i, 1)));
          ok = y[k] == 1 ? s > 0 : s < 0;
        }
        if (ok) return true;
      }
    }
  }
  return false;
}

double train_accuracy(const ProbeModel& m, const Eigen::MatrixXd& x, const std::vector<int>& y) {
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd row = x.row(i).transpose();
    hit += predict(m, std::span<const double>(row.data(), row.size())).class_id == y[i];
  }
  return static_cast<double>(hit) / static_cast<double>(x.rows());
}

}  // namespace

TEST_CASE("loss at zero weights is log C, gradient matches finite differences") {
  SplitMix64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 5 + rng.uniform(10);
    const std::size_t d = 1 + rng.uniform(5);
    const std::size_t c = 2 + rng.uniform(2);
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.uniform(c));
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(c, d);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(c);
    CHECK(softmax_loss(x, y, w, b, 0.3) == doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-14));

    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.normal();
    const double lambda = 0.05;
    Eigen::MatrixXd gw;
    Eigen::VectorXd gb;
    softmax_loss(x, y, w, b, lambda, &gw, &gb);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      Eigen::MatrixXd wp = w, wm = w;
      wp.data()[i] += h;
      wm.data()[i] -= h;
      const double fd = (softmax_loss(x, y, wp, b, lambda) - softmax_loss(x, y, wm, b, lambda)) / (2 * h);
      CHECK(std::abs(fd - gw.data()[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      Eigen::VectorXd bp = b, bm = b;
      bp[i] += h;
      bm[i] -= h;
      const double fd = (softmax_loss(x, y, w, bp, lambda) - softmax_loss(x, y, w, bm, lambda)) / (2 * h);
      CHECK(std::abs(fd - gb[i]) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("two symmetric points: boundary at zero") {
  Eigen::MatrixXd x(2, 1);
  x << -1, 1;
  const std::vector<int> y{0, 1};
  TrainHyper hyper;
  hyper.l2_lambda = 0.0;
  hyper.max_iters = 500;
  const auto m = train_probe(x, y, 2, hyper);
  const std::vector<double> half{0.5}, neg{-0.5}, zero{0.0};
  CHECK(predict(m, std::span<const double>(half)).class_id == 1);
  CHECK(predict(m, std::span<const double>(neg)).class_id == 0);
  const auto p0 = predict(m, std::span<const double>(zero)).probabilities;
  CHECK(p0[0] == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("separable 40-point set: the oracle agrees and training accuracy is 1") {
  SplitMix64 rng(21);
  Eigen::MatrixXd x(40, 2);
  std::vector<int> y;
  Eigen::Index row = 0;
  while (row < 40) {
    const double a = 2 * rng.uniform01() - 1, b = 2 * rng.uniform01() - 1;
    const double s = a + 0.5 * b - 0.1;
    if (std::abs(s) < 0.08) continue;
    x(row, 0) = a;
    x(row, 1) = b;
    y.push_back(s > 0 ? 1 : 0);
    ++row;
  }
  REQUIRE(separable_2d(x, y));
  const auto m = train_probe(x, y, 2, TrainHyper{});
  CHECK(train_accuracy(m, x, y) == 1.0);

  // the oracle is not vacuous
  Eigen::MatrixXd xor_x(4, 2);
  xor_x << 0, 0, 1, 1, 0, 1, 1, 0;
  CHECK_FALSE(separable_2d(xor_x, {0, 0, 1, 1}));
}

TEST_CASE("three blobs: probe tracks the nearest-centroid oracle") {
  SplitMix64 rng(5);
  const std::size_t d = 4, per_class_train = 40, per_class_test = 200;
  Eigen::MatrixXd centres(3, d);
  centres << 2, 0, 0, 1, -1, 1.7, 0, -1, -1, -1.7, 0.5, 0;
  auto draw = [&](std::size_t per_class, Eigen::MatrixXd& x, std::vector<int>& y) {
    x.resize(3 * per_class, d);
    y.clear();
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t k = 0; k < per_class; ++k) {
        const auto r = c * per_class + k;
        for (std::size_t j = 0; j < d; ++j) x(r, j) = centres(c, j) + 0.5 * rng.normal();
        y.push_back(static_cast<int>(c));
      }
    }
  };
  Eigen::MatrixXd xtr, xte;
  std::vector<int> ytr, yte;
  draw(per_class_train, xtr, ytr);
  draw(per_class_test, xte, yte);

  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(3, d);
  for (Eigen::Index i = 0; i < xtr.rows(); ++i) means.row(ytr[i]) += xtr.row(i) / double(per_class_train);
  std::size_t oracle_hit = 0;
  for (Eigen::Index i = 0; i < xte.rows(); ++i) {
    Eigen::Index best = 0;
    (means.rowwise() - xte.row(i)).rowwise().squaredNorm().minCoeff(&best);
    oracle_hit += best == yte[i];
  }
  const double oracle = double(oracle_hit) / double(xte.rows());
  const auto m = train_probe(xtr, ytr, 3, TrainHyper{});
  const double probe = train_accuracy(m, xte, yte);
  CHECK(probe >= 0.95);
  CHECK(std::abs(probe - oracle) <= 0.02);
}

TEST_CASE("predict: uniform at zero, normalised, shift invariant") {
  ProbeModel m;
  m.task = ProbeTask::kSense3Way;
  m.n_classes = 3;
  m.dim = 2;
  m.weights.assign(6, 0.0f);
  m.bias.assign(3, 0.0f);
  const std::vector<double> x{0.3, -1.2};
  const auto p = predict(m, std::span<const double>(x));
  CHECK(p.class_id == 0);
  for (const auto v : p.probabilities) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));

  SplitMix64 rng(8);
  for (int t = 0; t < 50; ++t) {
    for (auto& w : m.weights) w = static_cast<float>(3 * rng.normal());
    for (auto& b : m.bias) b = static_cast<float>(3 * rng.normal());
    const std::vector<double> f{rng.normal(), rng.normal()};
    const auto a = predict(m, std::span<const double>(f));
    double sum = 0;
    for (const auto v : a.probabilities) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-9);
    auto shifted = m;
    for (auto& b : shifted.bias) b += 2.5f;
    const auto s = predict(shifted, std::span<const double>(f));
    CHECK(s.class_id == a.class_id);
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(s.probabilities[c] - a.probabilities[c]) <= 1e-6);
  }
  const std::vector<double> wrong{1.0};
  CHECK_THROWS_AS(predict(m, std::span<const double>(wrong)), Error);
}

TEST_CASE("training: deterministic, seed independent, never worse than zero init") {
  SplitMix64 rng(13);
  Eigen::MatrixXd x(60, 3);
  std::vector<int> y(60);
  for (Eigen::Index i = 0; i < 60; ++i) {
    y[i] = static_cast<int>(i % 3);
    for (int j = 0; j < 3; ++j) x(i, j) = rng.normal() + (j == y[i] ? 1.0 : 0.0);
  }
  const auto a = train_probe(x, y, 3, TrainHyper{}, 1);
  const auto b = train_probe(x, y, 3, TrainHyper{}, 99);
  CHECK(std::memcmp(a.weights.data(), b.weights.data(), a.weights.size() * sizeof(float)) == 0);
  CHECK(std::memcmp(a.bias.data(), b.bias.data(), a.bias.size() * sizeof(float)) == 0);
  CHECK(a.seed == 1);
  CHECK(a.meta.final_loss <= a.meta.initial_loss);
  CHECK(a.meta.initial_loss == doctest::Approx(std::log(3.0)));
  CHECK(a.meta.converged);
  CHECK(a.meta.grad_max_norm < 1e-6);
}

TEST_CASE("argmax is invariant to feature scaling with lambda 0") {
  SplitMix64 rng(17);
  Eigen::MatrixXd x(30, 2);
  std::vector<int> y(30);
  for (Eigen::Index i = 0; i < 30; ++i) {
    y[i] = i % 2;
    x(i, 0) = (y[i] ? 1.5 : -1.5) + 0.4 * rng.normal();
    x(i, 1) = rng.normal();
  }
  TrainHyper hyper;
  hyper.l2_lambda = 0.0;
  hyper.max_iters = 1000;
  const auto m1 = train_probe(x, y, 2, hyper);
  const Eigen::MatrixXd xs = 3.7 * x;
  const auto m2 = train_probe(xs, y, 2, hyper);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd r1 = x.row(i).transpose(), r2 = xs.row(i).transpose();
    CHECK(predict(m1, std::span<const double>(r1.data(), 2)).class_id ==
          predict(m2, std::span<const double>(r2.data(), 2)).class_id);
  }
}

TEST_CASE("degenerate training input") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 2);
  CHECK_THROWS_WITH_AS(train_probe(x, std::vector<int>{1, 1, 1, 1}, 2, TrainHyper{}), "single-class training set", Error);
  CHECK_THROWS_AS(train_probe(x, std::vector<int>{0, 1, 2, 0}, 2, TrainHyper{}), Error);
  CHECK_THROWS_AS(train_probe(x, std::vector<int>{0, 1, 1}, 2, TrainHyper{}), Error);
  // a class may be absent as long as two are present
  CHECK_NOTHROW(train_probe(Eigen::MatrixXd::Random(4, 2), std::vector<int>{0, 2, 0, 2}, 3, TrainHyper{}));
}

TEST_CASE("control labels: by type, uniform, seed dependent") {
  const ControlLabeler labeler(42, 3);
  const std::vector<NtoNInstance> two_days{word_instance("day"), word_instance("Day")};
  const auto same = control_labels(labeler, two_days);
  CHECK(same[0] == same[1]);
  CHECK(labeler.label("day") == reference_control(42, "day", 3));

  for (const std::size_t c : {2u, 3u}) {
    const std::size_t n = 3000;
    const ControlLabeler l(7, c);
    const ControlLabeler other(8, c);
    std::vector<std::size_t> counts(c, 0);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto w = "w" + std::to_string(i);
      const auto k = l.label(w);
      CHECK(k == reference_control(7, w, c));
      ++counts[k];
      changed += k != other.label(w);
    }
    const double p = 1.0 / double(c);
    const double sigma = std::sqrt(double(n) * p * (1 - p));
    for (const auto k : counts) CHECK(std::abs(double(k) - double(n) * p) <= 3 * sigma);
    CHECK(changed >= 1);
  }
}

TEST_CASE("control accuracy stays at chance when features ignore the word") {
  // 287 per class worth of training types, features independent of identity
  SplitMix64 rng(101);
  const std::size_t c = 3, d = 8, n_train = 3 * 287, n_test = 3000;
  const ControlLabeler labeler(5, c);
  auto build = [&](std::size_t n, const std::string& prefix, Eigen::MatrixXd& x, std::vector<int>& y) {
    x.resize(n, d);
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) x(i, j) = rng.normal();
      y[i] = labeler.label(prefix + std::to_string(i));
    }
  };
  Eigen::MatrixXd xtr, xte;
  std::vector<int> ytr, yte;
  build(n_train, "train", xtr, ytr);
  build(n_test, "test", xte, yte);
  const auto m = train_probe(xtr, ytr, c, TrainHyper{});
  CHECK(std::abs(train_accuracy(m, xte, yte) - 1.0 / 3) <= 0.05);
}

TEST_CASE("model files round trip and digests") {
  testutil::TempDir dir("models");
  SplitMix64 rng(4);
  Eigen::MatrixXd x(20, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  std::vector<int> y(20);
  for (std::size_t i = 0; i < 20; ++i) y[i] = static_cast<int>(i % 2);
  auto m = train_probe(x, y, 2, TrainHyper{}, 3);
  m.layer = 7;
  m.train_size = 10;
  const auto header = write_model(m, dir.path());
  CHECK(header.filename() == "form-probe-s3-n10-l07.json");
  const auto back = read_model(header);
  CHECK(back.weights == m.weights);
  CHECK(back.bias == m.bias);
  CHECK(back.stem() == m.stem());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::VectorXd r = x.row(i).transpose();
    const auto p1 = predict(m, std::span<const double>(r.data(), 3));
    const auto p2 = predict(back, std::span<const double>(r.data(), 3));
    CHECK(p1.probabilities == p2.probabilities);
  }
  const auto first = read_file(header);
  write_model(m, dir.path());
  CHECK(read_file(header) == first);

  auto other = m;
  other.system = ProbeSystem::kStatic;
  other.layer = -1;
  write_model(other, dir / "sub");
  const auto loaded = load_models(dir.path());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].model.stem() < loaded[1].model.stem());
  CHECK(loaded[0].digest != 0);
  CHECK(load_models(dir.path())[0].digest == loaded[0].digest);
}

TEST_CASE("grid: 240 probe models, matching control count, nested training sets") {
  testutil::TempDir dir("grid");
  SynthConfig config;
  config.dim = 4;
  write_synth_bench(config, dir.path());
  const auto instances = read_instances(dir / "instances.jsonl");
  const auto store = EmbeddingStore::open(dir / "store");
  const auto vectors = StaticVectors::load(dir / "static.txt");

  std::vector<DatasetSplit> splits;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SplitSpec spec;
    spec.seed = seed;
    splits.push_back(split_by_lemma(instances, spec));
  }
  GridConfig grid;
  grid.hyper.max_iters = 5;
  const auto models = train_grid(splits, store, &vectors, grid);
  std::map<ProbeSystem, std::size_t> count;
  std::set<std::string> stems;
  for (const auto& m : models) {
    ++count[m.system];
    stems.insert(m.stem());
    CHECK(m.dim == (m.system == ProbeSystem::kStatic ? vectors.dim() : config.dim));
  }
  CHECK(count[ProbeSystem::kProbe] == 240);
  CHECK(count[ProbeSystem::kControl] == 240);
  CHECK(count[ProbeSystem::kStatic] == 20);
  CHECK(stems.size() == models.size());

  for (const auto task : {ProbeTask::kFormBinary, ProbeTask::kSense3Way}) {
    for (const auto& split : splits) {
      std::vector<std::set<std::string>> sets;
      for (const std::size_t size : {10u, 25u, 100u, 287u}) {
        std::set<std::string> ids;
        for (const auto& inst : task_training_set(split, task, size)) ids.insert(inst.instance_id);
        CHECK(ids.size() == size * class_count(task));
        sets.push_back(ids);
      }
      for (std::size_t k = 0; k + 1 < sets.size(); ++k) {
        CHECK(std::includes(sets[k + 1].begin(), sets[k + 1].end(), sets[k].begin(), sets[k].end()));
      }
    }
  }
}

TEST_CASE("missing store keys are listed") {
  testutil::TempDir dir("grid");
  EmbeddingStoreWriter(dir.path(), StoreManifest{"m", 2, 2, "mean", "f"}).commit();
  const auto store = EmbeddingStore::open(dir.path());
  const std::vector<NtoNInstance> v{word_instance("day"), word_instance("face")};
  try {
    layer_features(v, store, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find(key_for(v[0]).str()) != std::string::npos);
    CHECK(msg.find(key_for(v[1]).str()) != std::string::npos);
  }
}
