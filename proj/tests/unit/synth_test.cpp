#include <doctest.h>

#include <cmath>

#include "cxnprobe/corpus.hpp"
#include "cxnprobe/dataset.hpp"
#include "cxnprobe/embeddings.hpp"
#include "cxnprobe/miner.hpp"
#include "cxnprobe/perturbation.hpp"
#include "cxnprobe/synth.hpp"
#include "cxnprobe/text.hpp"
#include "helpers.hpp"

using namespace cxnprobe;

TEST_CASE("signal scale peaks at the signal layer") {
  const SynthConfig config;
  CHECK(synth_signal_scale(config, config.signal_layer) == 1.0);
  CHECK(synth_signal_scale(config, 3) == doctest::Approx(std::exp(-25.0 / 50.0)));
  CHECK(synth_signal_scale(config, 7) == synth_signal_scale(config, 9));
}

TEST_CASE("bench output is complete, labelled and reproducible") {
  testutil::TempDir dir("synth");
  const SynthConfig config;
  const auto a = write_synth_bench(config, dir / "a");
  const auto b = write_synth_bench(config, dir / "b");
  CHECK(a.digests == b.digests);
  CHECK(a.instances == b.instances);

  const auto instances = read_instances(dir / "a" / "instances.jsonl");
  CHECK(instances.size() == a.instances);
  std::map<std::string, std::size_t> per_class;
  for (const auto& inst : instances) {
    REQUIRE(inst.label);
    ++per_class[std::string(to_string(*inst.label))];
  }
  CHECK(per_class == a.per_class);
  CHECK(per_class.size() == 4);

  // the corpus mines back to the same instances and drops the planted negatives
  const auto corpus = read_tagged_corpus(dir / "a" / "corpus.tsv");
  const auto mined = mine_corpus(corpus, MinerConfig{});
  CHECK(mined.instances.size() == instances.size());
  CHECK(mined.stats.filtered.at(kReasonFromPrecedes) == config.from_preceded);
  CHECK(mined.stats.filtered.at(kReasonTooShort) == config.too_short);

  // every instance and every perturbation of a construction is in the store
  const auto store = EmbeddingStore::open(dir / "a" / "store");
  CHECK(store.manifest() == synth_manifest(config));
  std::size_t constructions = 0;
  for (const auto& inst : instances) {
    CHECK(store.contains(key_for(inst)));
    if (is_construction(*inst.label)) ++constructions;
  }
  const auto perturbed = perturb_all(std::vector<NtoNInstance>(instances.begin(), instances.end()));
  std::size_t found = 0;
  for (const auto& p : perturbed) found += store.contains(key_for(p));
  CHECK(found >= 4 * constructions);
  CHECK(store.size() == a.store_records);

  const auto vectors = StaticVectors::load(dir / "a" / "static.txt");
  CHECK(vectors.dim() == config.static_dim);
  std::size_t oov = 0;
  for (const auto& inst : instances) oov += static_lookup(vectors, inst).oov;
  CHECK(oov > 0);
  CHECK(oov < instances.size() / 5);

  // annotations reproduce the gold labels
  const auto ra = read_annotation_round(dir / "a" / "annotations" / "round-a.json");
  const auto rb = read_annotation_round(dir / "a" / "annotations" / "round-b.json");
  const auto adj = read_adjudications(dir / "a" / "annotations" / "adjudications.json");
  const std::vector<AnnotationRound> rounds{ra, rb};
  CHECK(merge_annotations(mined.instances, rounds, adj) == instances);
  CHECK(agreement(ra, rb).raw_agreement < 1.0);
}

TEST_CASE("planted record follows the formula at the signal layer") {
  SynthConfig config;
  config.lemma_offset_sd = 0.0;
  const auto corpus = generate_synth_corpus(config);
  const auto mined = mine_corpus(corpus.sentences, MinerConfig{});
  // mean of e0 over many succession records at layer 8 is A
  double sum0 = 0, sum1 = 0;
  std::size_t n = 0;
  for (auto inst : mined.instances) {
    if (corpus.truth.at(inst.sentence.sent_id) != SemanticLabel::kSuccession) continue;
    inst.label = SemanticLabel::kSuccession;
    const auto rec = synth_embedding(config, inst);
    CHECK(rec.n_layers == config.n_layers);
    CHECK(rec.dim == config.dim);
    sum0 += rec.layer(config.signal_layer)[0];
    sum1 += rec.layer(config.signal_layer)[1];
    ++n;
  }
  REQUIRE(n > 500);
  const double se = 4.0 / std::sqrt(double(n));
  CHECK(std::abs(sum0 / double(n) - config.amplitude) < se);
  CHECK(std::abs(sum1 / double(n) - config.amplitude) < se);
}

TEST_CASE("bad config is rejected") {
  SynthConfig config;
  config.signal_layer = config.n_layers;
  CHECK_THROWS(config.validate());
  config = {};
  config.dim = 1;
  CHECK_THROWS(config.validate());
}
