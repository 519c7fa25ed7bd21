#include <doctest.h>

#include "cxnprobe/dataset.hpp"
#include "cxnprobe/embeddings.hpp"
#include "cxnprobe/error.hpp"
#include "cxnprobe/experiments.hpp"
#include "cxnprobe/perturbation.hpp"
#include "cxnprobe/probe.hpp"
#include "helpers.hpp"

using namespace cxnprobe;

namespace {

constexpr std::size_t kLayers = 3;

NtoNInstance make(const std::string& word, SemanticLabel label) {
  NtoNInstance inst;
  inst.sentence = testutil::sentence(word, "we/we/PRON saw/see/VERB " + word + "/" + word + "/NOUN to/to/ADP " + word + "/" +
                                               word + "/NOUN ././PUNCT");
  inst.instance_id = word + "#2";
  inst.span = {2, 3, 4, word, "to"};
  inst.label = label;
  return inst;
}

// One-hot of the SENSE class id in a 3-d store, all layers.
std::vector<float> onehot(SemanticLabel label) {
  std::vector<float> v(3, 0.0f);
  v[static_cast<std::size_t>(*task_class(ProbeTask::kSense3Way, label))] = 1.0f;
  return v;
}

struct Fixture {
  testutil::TempDir dir{"exp"};
  std::vector<DatasetSplit> splits;
  std::map<std::uint64_t, std::vector<PerturbedInstance>> perturbed;

  Fixture() {
    const std::vector<std::pair<std::string, SemanticLabel>> test_items{
        {"door", SemanticLabel::kSuccession},    {"day", SemanticLabel::kSuccession},
        {"face", SemanticLabel::kJuxtaposition}, {"hand", SemanticLabel::kJuxtaposition},
        {"back", SemanticLabel::kJuxtaposition}, {"time", SemanticLabel::kDistractor},
        {"ear", SemanticLabel::kDistractor}};
    EmbeddingStoreWriter writer(dir / "store", StoreManifest{"stub", kLayers, 3, "mean", "f"});
    auto add = [&](const EmbeddingKey& key, const std::vector<float>& v) {
      LayerEmbeddings rec{key, kLayers, 3, {}};
      for (std::size_t l = 0; l < kLayers; ++l) rec.values.insert(rec.values.end(), v.begin(), v.end());
      writer.add(rec);
    };
    for (const std::uint64_t seed : {1, 2}) {
      DatasetSplit s;
      s.seed = seed;
      s.per_class_train = 1;
      s.classes = {SemanticLabel::kSuccession, SemanticLabel::kJuxtaposition, SemanticLabel::kDistractor};
      // seed 2 drops one item so the seeds differ
      for (std::size_t i = 0; i < test_items.size() - (seed == 2 ? 1 : 0); ++i) {
        s.test.push_back(make(test_items[i].first, test_items[i].second));
      }
      for (const auto& inst : s.test) add(key_for(inst), onehot(*inst.label));
      std::vector<NtoNInstance> constructions;
      for (const auto& inst : s.test) {
        if (is_construction(*inst.label)) constructions.push_back(inst);
      }
      perturbed[seed] = perturb_all(constructions);
      for (const auto& p : perturbed[seed]) {
        if (!writer.contains(key_for(p))) add(key_for(p), {0.5f, 0.5f, 0.5f});
      }
      splits.push_back(std::move(s));
    }
    writer.commit();
  }
};

ProbeModel stub(ProbeTask task, ProbeSystem system, std::uint64_t seed, int layer, std::vector<float> bias,
                std::vector<float> weights = {}) {
  ProbeModel m;
  m.task = task;
  m.system = system;
  m.seed = seed;
  m.control_seed = seed;
  m.layer = layer;
  m.train_size = 10;
  m.n_classes = class_count(task);
  m.dim = 3;
  m.weights = weights.empty() ? std::vector<float>(m.n_classes * 3, 0.0f) : std::move(weights);
  m.bias = std::move(bias);
  return m;
}

const MetricCell& find(const ExperimentReport& r, ProbeSystem system, std::uint64_t seed, const std::string& metric,
                       std::optional<std::string> cls = std::nullopt) {
  for (const auto& c : r.cells) {
    if (c.system == system && c.seed == seed && c.metric == metric && c.class_name == cls) return c;
  }
  throw Error("cell not found");
}

}  // namespace

TEST_CASE("experiment 2: always positive scores 0, always negative scores 1") {
  Fixture fx;
  const auto store = EmbeddingStore::open(fx.dir / "store");
  std::vector<ProbeModel> models;
  for (const std::uint64_t seed : {1, 2}) {
    for (int layer = 1; layer <= 2; ++layer) {
      models.push_back(stub(ProbeTask::kFormBinary, ProbeSystem::kProbe, seed, layer, {0.0f, 1.0f}));
    }
  }
  const auto positive = run_experiment2(fx.perturbed, store, wrap_models(models));
  CHECK(positive.cells.size() == 4 * 2 * 2);
  for (const auto& c : positive.cells) {
    CHECK(c.kind.has_value());
    CHECK(*c.value == 0.0);
  }
  for (auto& m : models) m.bias = {1.0f, 0.0f};
  const auto negative = run_experiment2(fx.perturbed, store, wrap_models(models));
  for (const auto& c : negative.cells) CHECK(*c.value == 1.0);
  CHECK(find(negative, ProbeSystem::kProbe, 1, "accuracy").n == 5);
  CHECK(find(negative, ProbeSystem::kProbe, 2, "accuracy").n == 5);

  // control and sense models are not part of experiment 2
  models.push_back(stub(ProbeTask::kFormBinary, ProbeSystem::kControl, 1, 1, {0.0f, 1.0f}));
  models.push_back(stub(ProbeTask::kSense3Way, ProbeSystem::kProbe, 1, 1, {0.0f, 1.0f, 0.0f}));
  CHECK(run_experiment2(fx.perturbed, store, wrap_models(models)).cells.size() == 16);
}

TEST_CASE("experiment 2 needs the perturbed items of every seed") {
  Fixture fx;
  const auto store = EmbeddingStore::open(fx.dir / "store");
  std::vector<ProbeModel> models{stub(ProbeTask::kFormBinary, ProbeSystem::kProbe, 3, 1, {0.0f, 1.0f})};
  CHECK_THROWS_AS(run_experiment2(fx.perturbed, store, wrap_models(models)), Error);
}

TEST_CASE("experiment 1: stub scores match a hand count") {
  Fixture fx;
  const auto store = EmbeddingStore::open(fx.dir / "store");
  const EvalInputs inputs{fx.splits, &store, nullptr};
  std::vector<ProbeModel> models{stub(ProbeTask::kFormBinary, ProbeSystem::kProbe, 1, 1, {0.0f, 1.0f}),
                                 stub(ProbeTask::kFormBinary, ProbeSystem::kProbe, 2, 1, {0.0f, 1.0f}),
                                 stub(ProbeTask::kFormBinary, ProbeSystem::kControl, 1, 1, {0.0f, 1.0f})};
  const auto r = run_experiment1(inputs, wrap_models(models));
  // seed 1: 5 constructions of 7; seed 2: 5 of 6
  CHECK(*find(r, ProbeSystem::kProbe, 1, "accuracy").value == doctest::Approx(5.0 / 7));
  CHECK(*find(r, ProbeSystem::kProbe, 2, "accuracy").value == doctest::Approx(5.0 / 6));
  CHECK(*find(r, ProbeSystem::kProbe, 1, "chance-raw").value == doctest::Approx(5.0 / 7));

  const ControlLabeler labeler(1, 2);
  std::size_t ones = 0;
  for (const auto& inst : fx.splits[0].test) ones += labeler.label(inst.first_noun().form) == 1;
  CHECK(*find(r, ProbeSystem::kControl, 1, "accuracy").value == doctest::Approx(double(ones) / 7));
  const double majority = double(std::max(ones, 7 - ones)) / 7;
  CHECK(*find(r, ProbeSystem::kControl, 1, "chance-raw").value == doctest::Approx(majority));
  CHECK(r.model_digests.size() == 3);
}

TEST_CASE("experiment 3: a perfect predictor has precision and recall 1 per class") {
  Fixture fx;
  const auto store = EmbeddingStore::open(fx.dir / "store");
  const EvalInputs inputs{fx.splits, &store, nullptr};
  std::vector<ProbeModel> models{stub(ProbeTask::kSense3Way, ProbeSystem::kProbe, 1, 2, {0.0f, 0.0f, 0.0f},
                                      {5, 0, 0, 0, 5, 0, 0, 0, 5})};
  const auto r = run_experiment3(inputs, wrap_models(models));
  CHECK(*find(r, ProbeSystem::kProbe, 1, "accuracy").value == 1.0);
  for (const auto* cls : {"SUCCESSION", "JUXTAPOSITION", "DISTRACTOR"}) {
    CHECK(*find(r, ProbeSystem::kProbe, 1, "precision", cls).value == 1.0);
    CHECK(*find(r, ProbeSystem::kProbe, 1, "recall", cls).value == 1.0);
  }
  CHECK(find(r, ProbeSystem::kProbe, 1, "recall", "JUXTAPOSITION").n == 3);

  // constant predictor: precision undefined for classes never predicted
  models[0].weights.assign(9, 0.0f);
  const auto c = run_experiment3(inputs, wrap_models(models));
  CHECK_FALSE(find(c, ProbeSystem::kProbe, 1, "precision", "JUXTAPOSITION").value);
  CHECK(*find(c, ProbeSystem::kProbe, 1, "recall", "SUCCESSION").value == 1.0);
}

TEST_CASE("model digest verification") {
  ExperimentReport a, b;
  a.model_digests = {{"m1", 1}, {"m2", 2}};
  b.model_digests = {{"m1", 1}};
  CHECK_NOTHROW(verify_same_models(a, b));
  b.model_digests["m2"] = 3;
  CHECK_THROWS_AS(verify_same_models(a, b), Error);
  b.model_digests = {{"m3", 1}};
  CHECK_THROWS_AS(verify_same_models(a, b), Error);
}
