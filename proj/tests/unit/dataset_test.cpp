#include <doctest.h>

#include <set>

#include "cxnprobe/corpus.hpp"
#include "cxnprobe/dataset.hpp"
#include "cxnprobe/error.hpp"
#include "cxnprobe/miner.hpp"
#include "helpers.hpp"

using namespace cxnprobe;

namespace {

NtoNInstance make(const std::string& lemma, SemanticLabel label, int k) {
  NtoNInstance inst;
  const auto id = lemma + "-" + std::to_string(k);
  inst.sentence = testutil::sentence(id, "we/we/PRON saw/see/VERB " + lemma + "/" + lemma + "/NOUN to/to/ADP " + lemma + "/" +
                                             lemma + "/NOUN again/again/ADV");
  inst.instance_id = id + "#2";
  inst.span = {2, 3, 4, lemma, "to"};
  inst.label = label;
  return inst;
}

// Per class: `lemmas` lemmas with `per_lemma` instances each; plus a few
// mixed-class lemmas and one over-cap lemma.
std::vector<NtoNInstance> pool(int lemmas, int per_lemma) {
  std::vector<NtoNInstance> out;
  const std::pair<const char*, SemanticLabel> classes[] = {
      {"s", SemanticLabel::kSuccession}, {"j", SemanticLabel::kJuxtaposition}, {"d", SemanticLabel::kDistractor}};
  for (const auto& [prefix, label] : classes) {
    for (int l = 0; l < lemmas; ++l) {
      for (int k = 0; k < per_lemma; ++k) out.push_back(make(prefix + std::to_string(l), label, k));
    }
  }
  for (int l = 0; l < 3; ++l) {
    const auto lemma = "mix" + std::to_string(l);
    out.push_back(make(lemma, SemanticLabel::kSuccession, 0));
    out.push_back(make(lemma, SemanticLabel::kDistractor, 1));
    out.push_back(make(lemma, SemanticLabel::kOtherConstruction, 2));
  }
  for (int k = 0; k < 30; ++k) out.push_back(make("big", SemanticLabel::kJuxtaposition, k));
  return out;
}

std::set<std::string> lemmas_of(const std::vector<NtoNInstance>& v) {
  std::set<std::string> out;
  for (const auto& i : v) out.insert(i.noun_lemma());
  return out;
}

AnnotationRound round(std::string id, std::map<std::string, SemanticLabel> labels) {
  return AnnotationRound{std::move(id), std::move(labels)};
}

}  // namespace

TEST_CASE("merge: agreeing rounds, adjudicated disagreement, single round") {
  std::vector<NtoNInstance> in{make("a", SemanticLabel::kSuccession, 0), make("b", SemanticLabel::kSuccession, 0),
                               make("c", SemanticLabel::kSuccession, 0)};
  for (auto& i : in) i.label.reset();
  const std::vector<AnnotationRound> rounds{
      round("x", {{"a-0#2", SemanticLabel::kSuccession}, {"b-0#2", SemanticLabel::kSuccession}, {"c-0#2", SemanticLabel::kDistractor}}),
      round("y", {{"a-0#2", SemanticLabel::kSuccession}, {"b-0#2", SemanticLabel::kJuxtaposition}})};
  const auto out = merge_annotations(in, rounds, {{"b-0#2", SemanticLabel::kJuxtaposition}});
  CHECK(out[0].label == SemanticLabel::kSuccession);
  CHECK_FALSE(out[0].adjudicated);
  CHECK(out[0].annotator_labels == std::pair{SemanticLabel::kSuccession, SemanticLabel::kSuccession});
  CHECK(out[1].label == SemanticLabel::kJuxtaposition);
  CHECK(out[1].adjudicated);
  CHECK(out[1].annotator_labels == std::pair{SemanticLabel::kSuccession, SemanticLabel::kJuxtaposition});
  CHECK(out[2].label == SemanticLabel::kDistractor);
  CHECK_FALSE(out[2].annotator_labels);
}

TEST_CASE("merge: disagreement without adjudication lists the ids") {
  std::vector<NtoNInstance> in{make("a", SemanticLabel::kSuccession, 0), make("b", SemanticLabel::kSuccession, 0)};
  const std::vector<AnnotationRound> rounds{
      round("x", {{"a-0#2", SemanticLabel::kSuccession}, {"b-0#2", SemanticLabel::kSuccession}}),
      round("y", {{"a-0#2", SemanticLabel::kDistractor}, {"b-0#2", SemanticLabel::kJuxtaposition}})};
  try {
    merge_annotations(in, rounds, {});
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("a-0#2") != std::string::npos);
    CHECK(msg.find("b-0#2") != std::string::npos);
  }
}

TEST_CASE("fixture annotations: agreement 0.75, merge resolves by adjudication") {
  const auto corpus = read_tagged_corpus(testutil::data_dir() / "fixture_corpus.tsv");
  const auto mined = mine_corpus(corpus, MinerConfig{}).instances;
  const auto a = read_annotation_round(testutil::data_dir() / "round-a.json");
  const auto b = read_annotation_round(testutil::data_dir() / "round-b.json");
  const auto adj = read_adjudications(testutil::data_dir() / "adjudications.json");

  const auto agr = agreement(a, b);
  CHECK(agr.n_overlap == 4);
  CHECK(agr.raw_agreement == doctest::Approx(0.75).epsilon(1e-15));
  std::size_t total = 0;
  for (const auto& row : agr.confusion) {
    for (const auto v : row) total += v;
  }
  CHECK(total == agr.n_overlap);
  CHECK(agr.confusion[1][0] == 1);  // JUX vs SUCC

  const std::vector<AnnotationRound> rounds{a, b};
  const auto merged = merge_annotations(mined, rounds, adj);
  REQUIRE(merged.size() == 4);
  CHECK(merged[1].label == SemanticLabel::kJuxtaposition);
  CHECK(merged[1].adjudicated);
  CHECK(merged[2].label == SemanticLabel::kDistractor);
}

TEST_CASE("agreement of a round with itself is 1, empty overlap is an error") {
  const auto a = read_annotation_round(testutil::data_dir() / "round-a.json");
  CHECK(agreement(a, a).raw_agreement == 1.0);
  CHECK_THROWS_AS(agreement(a, round("z", {{"nope", SemanticLabel::kSuccession}})), Error);
}

TEST_CASE("annotation files round trip") {
  testutil::TempDir dir("dataset");
  const auto a = read_annotation_round(testutil::data_dir() / "round-a.json");
  write_annotation_round(a, dir / "a.json");
  const auto back = read_annotation_round(dir / "a.json");
  CHECK(back.annotator_id == a.annotator_id);
  CHECK(back.labels == a.labels);
  const std::map<std::string, SemanticLabel> adj{{"x", SemanticLabel::kOtherConstruction}};
  write_adjudications(adj, dir / "adj.json");
  CHECK(read_adjudications(dir / "adj.json") == adj);
}

TEST_CASE("cap_by_lemma") {
  std::vector<NtoNInstance> in;
  for (int k = 0; k < 25; ++k) in.push_back(make("day", SemanticLabel::kSuccession, k));
  for (int k = 0; k < 20; ++k) in.push_back(make("face", SemanticLabel::kJuxtaposition, k));
  for (int k = 0; k < 3; ++k) in.push_back(make("door", SemanticLabel::kSuccession, k));

  const auto count = [](const std::vector<NtoNInstance>& v, const std::string& lemma) {
    return std::count_if(v.begin(), v.end(), [&](const auto& i) { return i.noun_lemma() == lemma; });
  };

  std::set<std::vector<std::string>> survivor_sets;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto out = cap_by_lemma(in, 20, seed);
    CHECK(count(out, "day") == 20);
    CHECK(count(out, "face") == 20);
    CHECK(count(out, "door") == 3);
    // survivors keep input order
    std::size_t last = 0;
    for (const auto& inst : out) {
      const auto pos = static_cast<std::size_t>(
          std::find_if(in.begin(), in.end(), [&](const auto& i) { return i.instance_id == inst.instance_id; }) - in.begin());
      CHECK(pos >= last);
      last = pos;
    }
    std::vector<std::string> ids;
    for (const auto& inst : out) ids.push_back(inst.instance_id);
    survivor_sets.insert(ids);
    CHECK(cap_by_lemma(in, 20, seed).size() == out.size());
  }
  CHECK(survivor_sets.size() > 1);
}

TEST_CASE("split with 2 per class: train of 6, lemma-disjoint") {
  const auto in = pool(4, 3);
  SplitSpec spec;
  spec.seed = 11;
  spec.per_class_train = 2;
  const auto split = split_by_lemma(in, spec);
  CHECK(split.train.size() == 6);
  for (const auto c : spec.classes) CHECK(train_group(split, c).size() == 2);

  const auto train_lemmas = lemmas_of(split.train);
  for (const auto& t : split.test) CHECK_FALSE(train_lemmas.contains(t.noun_lemma()));
  for (const auto& t : split.test) CHECK(t.label != SemanticLabel::kOtherConstruction);
  for (const auto& [lemma, pool] : split.lemma_assignment) {
    if (train_lemmas.contains(lemma)) CHECK(pool == Pool::kTrain);
  }
}

TEST_CASE("split invariants over seeds") {
  const auto in = pool(12, 4);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    SplitSpec spec;
    spec.seed = seed;
    spec.per_class_train = 10;
    spec.cap_per_lemma = 20;
    const auto split = split_by_lemma(in, spec);
    for (const auto c : spec.classes) CHECK(train_group(split, c).size() == 10);

    std::map<std::string, int> per_lemma;
    for (const auto& i : split.train) ++per_lemma[i.noun_lemma()];
    for (const auto& i : split.test) ++per_lemma[i.noun_lemma()];
    for (const auto& [lemma, n] : per_lemma) CHECK(n <= 20);

    const auto train_lemmas = lemmas_of(split.train);
    for (const auto& lemma : lemmas_of(split.test)) CHECK_FALSE(train_lemmas.contains(lemma));

    // nested prefixes
    const auto small = nested_subset(split, 3);
    for (const auto c : spec.classes) {
      const auto big = train_group(split, c);
      const auto sub = train_group(small, c);
      REQUIRE(sub.size() == 3);
      for (std::size_t k = 0; k < 3; ++k) CHECK(sub[k]->instance_id == big[k]->instance_id);
    }
    CHECK(small.test.size() == split.test.size());
  }
}

TEST_CASE("split is byte-reproducible and seed dependent") {
  const auto in = pool(12, 4);
  testutil::TempDir dir("split");
  SplitSpec spec;
  spec.per_class_train = 10;
  spec.seed = 5;
  write_split(split_by_lemma(in, spec), dir / "a");
  write_split(split_by_lemma(in, spec), dir / "b");
  spec.seed = 6;
  write_split(split_by_lemma(in, spec), dir / "c");
  for (const auto* f : {"train.jsonl", "test.jsonl", "split-manifest.json"}) {
    CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
  }
  CHECK(read_file(dir / "a" / "train.jsonl") != read_file(dir / "c" / "train.jsonl"));

  const auto back = read_split(dir / "a");
  spec.seed = 5;
  const auto fresh = split_by_lemma(in, spec);
  CHECK(back.train == fresh.train);
  CHECK(back.test == fresh.test);
  CHECK(back.lemma_assignment == fresh.lemma_assignment);
  CHECK(back.draw_digest == fresh.draw_digest);
  CHECK(back.draw_count == fresh.draw_count);

  const auto dirs = find_split_dirs(dir.path());
  CHECK(dirs.size() == 3);
  CHECK(find_split_dirs(dir / "a").size() == 1);
}

TEST_CASE("infeasible split names the deficit") {
  const auto in = pool(2, 2);
  SplitSpec spec;
  spec.per_class_train = 50;
  try {
    split_by_lemma(in, spec);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("infeasible") != std::string::npos);
  }
}

TEST_CASE("distractor training share uses ceil(0.8 n)") {
  // 5 distractors: ceil(4.0) = 4 may enter the training pool, so 4 per class fits and 5 does not
  std::vector<NtoNInstance> in;
  for (int l = 0; l < 10; ++l) in.push_back(make("s" + std::to_string(l), SemanticLabel::kSuccession, 0));
  for (int l = 0; l < 10; ++l) in.push_back(make("j" + std::to_string(l), SemanticLabel::kJuxtaposition, 0));
  for (int l = 0; l < 5; ++l) in.push_back(make("d" + std::to_string(l), SemanticLabel::kDistractor, 0));
  SplitSpec spec;
  spec.per_class_train = 4;
  const auto split = split_by_lemma(in, spec);
  std::size_t test_d = 0;
  for (const auto& t : split.test) test_d += t.label == SemanticLabel::kDistractor;
  CHECK(test_d == 1);
  spec.per_class_train = 5;
  CHECK_THROWS_AS(split_by_lemma(in, spec), Error);
}

TEST_CASE("unlabelled input and a bad SplitSpec are rejected") {
  auto in = pool(4, 3);
  in[0].label.reset();
  CHECK_THROWS_AS(split_by_lemma(in, SplitSpec{}), Error);
  SplitSpec spec;
  spec.per_class_train = 0;
  CHECK_THROWS(spec.validate());
  spec = {};
  spec.cap_per_lemma = 0;
  CHECK_THROWS(spec.validate());
}
