#include "cli/commands.hpp"

#include <fmt/format.h>

#include <fstream>
#include <map>
#include <set>
#include <unordered_set>

#include <json.hpp>

#include "cxnprobe/chart.hpp"
#include "cxnprobe/corpus.hpp"
#include "cxnprobe/dataset.hpp"
#include "cxnprobe/embeddings.hpp"
#include "cxnprobe/error.hpp"
#include "cxnprobe/experiments.hpp"
#include "cxnprobe/miner.hpp"
#include "cxnprobe/perturbation.hpp"
#include "cxnprobe/probe.hpp"
#include "cxnprobe/synth.hpp"
#include "cxnprobe/text.hpp"

namespace cxnprobe::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::vector<DatasetSplit> load_splits(const std::string& root) {
  const auto dirs = find_split_dirs(root);
  if (dirs.empty()) throw Error("no split-manifest.json under " + root);
  std::vector<DatasetSplit> splits;
  for (const auto& d : dirs) splits.push_back(read_split(d));
  return splits;
}

bool form_positive(const NtoNInstance& inst) {
  return inst.label && task_class(ProbeTask::kFormBinary, *inst.label) == 1;
}

std::unordered_set<std::string> read_id_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::unordered_set<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty() && line[0] != '#') ids.insert(line);
  }
  return ids;
}

void write_digest_manifest(const std::map<std::string, std::uint64_t>& digests, const std::string& path) {
  ojson doc;
  doc["format"] = "cxnprobe-models/1";
  ojson models = ojson::object();
  for (const auto& [stem, d] : digests) models[stem] = to_hex(d);
  doc["models"] = models;
  write_file_atomic(path, doc.dump(2) + "\n");
}

ExperimentReport read_digest_manifest(const std::string& path) {
  ExperimentReport report;
  try {
    const auto doc = ojson::parse(read_file(path));
    if (doc.value("format", "") != "cxnprobe-models/1") throw FormatError(path, 0, "not a model digest manifest");
    for (const auto& [stem, hex] : doc.at("models").items()) {
      report.model_digests[stem] = parse_hex(hex.get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path, 0, e.what());
  }
  return report;
}

}  // namespace

void run_mine(const MineOptions& o) {
  MinerConfig config;
  config.min_sentence_tokens = o.min_tokens;
  config.exclude_preceding_from = !o.keep_from;
  if (o.allow_propn) config.allowed_noun_tags.insert(Upos::kPropn);
  config.validate();

  std::unordered_set<std::string> excluded;
  if (!o.exclude.empty()) excluded = read_id_list(o.exclude);

  std::vector<TaggedSentence> sentences;
  std::size_t skipped = 0;
  if (o.lenient) {
    auto r = read_tagged_corpus_lenient(o.corpus);
    for (const auto& d : r.diagnostics) fmt::print(stderr, "{}:{}: skipped: {}\n", o.corpus, d.line, d.message);
    skipped = r.diagnostics.size();
    sentences = std::move(r.sentences);
  } else {
    sentences = read_tagged_corpus(o.corpus);
  }

  const auto result = mine_corpus(sentences, config, excluded);
  write_instances(result.instances, fs::path(o.out));
  const auto stats = result.stats.to_json() + "\n";
  if (!o.stats.empty()) write_file_atomic(o.stats, stats);
  fmt::print("{}", stats);
  fmt::print(stderr, "mine: {} sentences, {} candidates, {} kept", result.stats.sentences, result.stats.candidates,
             result.stats.kept);
  for (const auto& [reason, n] : result.stats.filtered) fmt::print(stderr, ", {} {}", n, reason);
  if (skipped) fmt::print(stderr, ", {} malformed records skipped", skipped);
  fmt::print(stderr, "\n");
}

void run_merge(const MergeOptions& o) {
  auto instances = read_instances(fs::path(o.instances));
  std::vector<AnnotationRound> rounds;
  for (const auto& r : o.rounds) rounds.push_back(read_annotation_round(r));
  std::map<std::string, SemanticLabel> adjudications;
  if (!o.adjudications.empty()) adjudications = read_adjudications(o.adjudications);

  if (!o.agreement.empty()) {
    if (rounds.size() != 2) throw Error("--agreement needs exactly two rounds");
    const auto a = agreement(rounds[0], rounds[1]);
    ojson doc;
    doc["first"] = rounds[0].annotator_id;
    doc["second"] = rounds[1].annotator_id;
    doc["n_overlap"] = a.n_overlap;
    doc["raw_agreement"] = a.raw_agreement;
    ojson confusion = ojson::object();
    for (std::size_t i = 0; i < kSemanticLabelCount; ++i) {
      ojson row = ojson::object();
      for (std::size_t j = 0; j < kSemanticLabelCount; ++j) {
        row[std::string(to_string(static_cast<SemanticLabel>(j)))] = a.confusion[i][j];
      }
      confusion[std::string(to_string(static_cast<SemanticLabel>(i)))] = row;
    }
    doc["confusion"] = confusion;
    write_file_atomic(o.agreement, doc.dump(2) + "\n");
    fmt::print(stderr, "merge: agreement {:.4f} over {} shared instances\n", a.raw_agreement, a.n_overlap);
  }

  const auto merged = merge_annotations(std::move(instances), rounds, adjudications);
  write_instances(merged, fs::path(o.out));
  std::size_t labelled = 0;
  for (const auto& inst : merged) labelled += inst.label.has_value();
  fmt::print(stderr, "merge: {} instances, {} labelled\n", merged.size(), labelled);
}

void run_split(const SplitOptions& o) {
  const auto instances = read_instances(fs::path(o.instances));
  std::vector<std::pair<std::uint64_t, fs::path>> jobs;
  if (o.single_seed) {
    jobs.emplace_back(*o.single_seed, o.out_dir);
  } else {
    if (o.seeds.empty()) throw Error("no seeds given");
    std::set<std::uint64_t> unique(o.seeds.begin(), o.seeds.end());
    if (unique.size() != o.seeds.size()) throw Error("repeated seed in --seeds");
    for (const auto seed : o.seeds) jobs.emplace_back(seed, fs::path(o.out_dir) / fmt::format("seed-{}", seed));
  }
  for (const auto& [seed, dir] : jobs) {
    SplitSpec spec;
    spec.seed = seed;
    spec.per_class_train = o.per_class;
    spec.cap_per_lemma = o.cap;
    spec.distractor_train_fraction = o.distractor_fraction;
    const auto split = split_by_lemma(instances, spec);
    write_split(split, dir);
    fmt::print(stderr, "split: seed {} -> {} train, {} test ({})\n", seed, split.train.size(), split.test.size(),
               dir.string());
  }
}

void run_perturb(const PerturbOptions& o) {
  std::vector<NtoNInstance> bases;
  if (!o.instances.empty()) {
    for (auto& inst : read_instances(fs::path(o.instances))) {
      if (!inst.label) throw Error("instance '" + inst.instance_id + "' is unlabeled");
      if (form_positive(inst)) bases.push_back(std::move(inst));
    }
  } else {
    std::set<std::string> seen;
    for (const auto& split : load_splits(o.split_dir)) {
      for (const auto& inst : split.test) {
        if (form_positive(inst) && seen.insert(inst.instance_id).second) bases.push_back(inst);
      }
    }
  }
  const auto items = perturb_all(bases);
  write_perturbed(items, fs::path(o.out));
  fmt::print(stderr, "perturb: {} construction instances -> {} perturbed items\n", bases.size(), items.size());
}

void run_embed(const EmbedOptions& o) {
  if (o.instances.empty() && o.perturbed.empty()) throw Error("nothing to embed: pass --instances or --perturbed");
  std::vector<EmbeddingRequest> requests;
  for (const auto& path : o.instances) {
    for (const auto& inst : read_instances(fs::path(path))) requests.push_back(request_for(inst));
  }
  for (const auto& path : o.perturbed) {
    for (const auto& item : read_perturbed(path)) requests.push_back(request_for(item));
  }

  std::unique_ptr<EmbeddingProvider> provider;
  if (!o.from_store.empty()) {
    provider = std::make_unique<StoreEmbeddingProvider>(o.from_store);
  } else {
    provider = std::make_unique<HttpEmbeddingProvider>(o.url, o.timeout);
  }
  const auto stats = batch_embed(*provider, requests, o.store);
  fmt::print(stderr, "embed: {} requested, {} added, {} already present\n", stats.requested, stats.added, stats.skipped);
}

void run_train(const TrainOptions& o) {
  const auto splits = load_splits(o.split_dir);
  const auto store = EmbeddingStore::open(o.store);
  std::optional<StaticVectors> vectors;
  if (!o.static_vectors.empty()) vectors = StaticVectors::load(o.static_vectors);

  GridConfig grid;
  grid.task = parse_task(o.task);
  grid.sizes = o.sizes;
  grid.layers = o.layers;
  grid.control = !o.no_control;
  grid.static_baseline = vectors.has_value();
  grid.hyper.l2_lambda = o.lambda;
  grid.hyper.max_iters = o.max_iters;
  grid.hyper.tol = o.tol;
  if (grid.hyper.l2_lambda < 0 || grid.hyper.max_iters <= 0 || grid.hyper.tol <= 0) {
    throw Error("--lambda must be >= 0, --max-iters and --tol positive");
  }

  const auto models = train_grid(splits, store, vectors ? &*vectors : nullptr, grid);
  fs::create_directories(o.out_dir);
  std::size_t unconverged = 0;
  for (const auto& m : models) {
    write_model(m, o.out_dir);
    unconverged += !m.meta.converged;
  }
  fmt::print(stderr, "train: {} {} models written to {}", models.size(), to_string(grid.task), o.out_dir);
  if (unconverged) fmt::print(stderr, " ({} stopped at --max-iters)", unconverged);
  fmt::print(stderr, "\n");
}

void run_eval(const EvalOptions& o) {
  const auto splits = load_splits(o.split_dir);
  const auto models = load_models(o.models);
  if (models.empty()) throw Error("no models under " + o.models);
  const auto store = EmbeddingStore::open(o.store);
  std::optional<StaticVectors> vectors;
  if (!o.static_vectors.empty()) vectors = StaticVectors::load(o.static_vectors);
  const EvalInputs inputs{splits, &store, vectors ? &*vectors : nullptr};

  ExperimentReport report;
  switch (o.experiment) {
    case 1: report = run_experiment1(inputs, models); break;
    case 3: report = run_experiment3(inputs, models); break;
    case 2: {
      if (o.perturbed.empty()) throw Error("experiment 2 needs --perturbed");
      std::map<std::string, std::vector<PerturbedInstance>> by_base;
      for (auto& item : read_perturbed(o.perturbed)) by_base[item.base].push_back(std::move(item));
      std::map<std::uint64_t, std::vector<PerturbedInstance>> per_seed;
      for (const auto& split : splits) {
        auto& items = per_seed[split.seed];
        std::vector<std::string> missing;
        for (const auto& inst : split.test) {
          if (!form_positive(inst)) continue;
          const auto it = by_base.find(inst.instance_id);
          if (it == by_base.end()) {
            missing.push_back(inst.instance_id);
            continue;
          }
          items.insert(items.end(), it->second.begin(), it->second.end());
        }
        if (!missing.empty()) {
          throw Error(fmt::format("{} has no perturbations for {} test instance(s) of seed {}, first: {}",
                                  o.perturbed, missing.size(), split.seed, missing.front()));
        }
      }
      report = run_experiment2(per_seed, store, models);
      break;
    }
    default: throw Error("unknown experiment " + std::to_string(o.experiment));
  }
  if (report.cells.empty()) throw Error(fmt::format("no models under {} apply to experiment {}", o.models, o.experiment));

  if (!o.verify_models.empty()) verify_same_models(read_digest_manifest(o.verify_models), report);
  write_file_atomic(o.out, cells_to_csv(report.cells));
  if (!o.aggregate.empty()) write_file_atomic(o.aggregate, aggregates_to_csv(report.aggregates));
  if (!o.models_manifest.empty()) write_digest_manifest(report.model_digests, o.models_manifest);
  fmt::print(stderr, "eval: experiment {}, {} models, {} cells -> {}\n", o.experiment, report.model_digests.size(),
             report.cells.size(), o.out);
}

void run_report(const ReportOptions& o) {
  auto cells = cells_from_csv(read_file(o.in), o.in);
  if (o.experiment) {
    std::erase_if(cells, [&](const MetricCell& c) { return c.experiment != *o.experiment; });
    if (cells.empty()) throw Error(fmt::format("{} has no experiment {} cells", o.in, *o.experiment));
  }
  ChartStyle style;
  style.title = o.title;
  if (!o.metric.empty()) style.metric = o.metric;
  style.chance_line = !o.no_chance;
  write_file_atomic(o.out, render_layer_chart(cells, style));
  fmt::print(stderr, "report: {} cells -> {}\n", cells.size(), o.out);
}

void run_synth(const SynthOptions& o) {
  SynthConfig config;
  config.seed = o.seed;
  config.dim = o.dim;
  config.n_layers = o.layers;
  config.signal_layer = o.signal_layer;
  config.validate();
  const auto s = write_synth_bench(config, o.out);
  fmt::print(stderr, "synth-bench: {} sentences, {} instances, {} store records, {} static words -> {}\n", s.sentences,
             s.instances, s.store_records, s.static_words, o.out);
}

}  // namespace cxnprobe::cli
