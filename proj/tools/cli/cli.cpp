#include "cli/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>

#include "cli/commands.hpp"
#include "cli/json_config.hpp"
#include "cxnprobe/error.hpp"

namespace cxnprobe::cli {
namespace {

constexpr const char* kUrlEnv = "CXNPROBE_EMBED_URL";

CLI::App* subcommand(CLI::App& app, const char* name, const char* description) {
  auto* sub = app.add_subcommand(name, description);
  // lets --config follow the subcommand name
  sub->fallthrough();
  return sub;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"cxnprobe: mine, split, embed, probe and report on NtoN constructions", "cxnprobe"};
  app.set_config("--config", "", "JSON config file; command-line flags take precedence");
  app.config_formatter(std::make_shared<JsonConfig>());
  app.require_subcommand(1);

  std::function<void()> action;

  MineOptions mine;
  auto* m = subcommand(app, "mine", "Extract NtoN instances from a tagged corpus");
  m->add_option("--corpus", mine.corpus, "Tagged corpus (TSV: form, lemma, UPOS, index)")->required();
  m->add_option("--out", mine.out, "Output instances (JSONL)")->required();
  m->add_option("--stats", mine.stats, "Also write the mining statistics printed on stdout to this file");
  m->add_option("--exclude,--exclude-ids", mine.exclude, "File of sent_ids to skip, one per line");
  m->add_option("--min-tokens,--min-len", mine.min_tokens, "Drop sentences shorter than this")->capture_default_str();
  m->add_flag("--keep-from", mine.keep_from, "Keep spans preceded by 'from' (flagged in the output)");
  m->add_flag("--allow-propn", mine.allow_propn, "Accept PROPN as well as NOUN in both slots");
  m->add_flag("--lenient", mine.lenient, "Skip malformed corpus records instead of failing");
  m->callback([&] { action = [&] { run_mine(mine); }; });

  MergeOptions merge;
  auto* g = subcommand(app, "merge", "Merge annotation rounds and adjudications into gold labels");
  g->add_option("--instances", merge.instances, "Mined instances (JSONL)")->required();
  g->add_option("--round", merge.rounds, "Annotation round (JSON); repeatable")->required();
  g->add_option("--adjudications", merge.adjudications, "Adjudicated labels (JSON)");
  g->add_option("--out", merge.out, "Labelled instances (JSONL)")->required();
  g->add_option("--agreement", merge.agreement, "Write agreement of the two rounds (JSON)");
  g->callback([&] { action = [&] { run_merge(merge); }; });

  SplitOptions split;
  auto* s = subcommand(app, "split", "Lemma-disjoint, class-balanced train/test splits, one per seed");
  s->add_option("--instances,--in", split.instances, "Labelled instances (JSONL)")->required();
  s->add_option("--out-dir", split.out_dir, "Output directory")->required();
  auto* s_seeds = s->add_option("--seeds", split.seeds, "Split seeds, one <out-dir>/seed-<n>/ each")
                      ->delimiter(',')
                      ->capture_default_str();
  s->add_option("--seed", split.single_seed, "One split written straight into <out-dir>")->excludes(s_seeds);
  s->add_option("--per-class,--train-size", split.per_class, "Training instances per class")->capture_default_str();
  s->add_option("--cap", split.cap, "Maximum instances per noun lemma")->capture_default_str();
  s->add_option("--distractor-fraction", split.distractor_fraction, "Share of distractors drawn into training lemmas")
      ->capture_default_str();
  s->callback([&] { action = [&] { run_split(split); }; });

  PerturbOptions perturb;
  auto* p = subcommand(app, "perturb", "Write the PNN/PN/NNP/NP variants of construction instances");
  auto* p_inst = p->add_option("--instances,--in", perturb.instances, "Perturb every construction instance in this file");
  auto* p_split = p->add_option("--split-dir", perturb.split_dir, "Perturb the construction test instances of these splits");
  p_inst->excludes(p_split);
  p->add_option("--out", perturb.out, "Output (JSONL)")->required();
  p->callback([&] {
    if (perturb.instances.empty() && perturb.split_dir.empty()) {
      throw CLI::RequiredError("--instances or --split-dir");
    }
    action = [&] { run_perturb(perturb); };
  });

  EmbedOptions embed;
  auto* e = subcommand(app, "embed", "Fill an embedding store from the embedding service or another store");
  e->add_option("--store", embed.store, "Store directory (created if missing)")->required();
  auto* e_url = e->add_option("--url", embed.url, std::string("Embedding service base URL (default: $") + kUrlEnv + ")");
  auto* e_from = e->add_option("--from-store", embed.from_store, "Copy records from an existing store instead");
  e_url->excludes(e_from);
  e->add_option("--instances", embed.instances, "Instances to embed (JSONL); repeatable");
  e->add_option("--perturbed", embed.perturbed, "Perturbed items to embed (JSONL); repeatable");
  e->add_option("--timeout", embed.timeout, "HTTP timeout in seconds")->capture_default_str();
  e->callback([&] {
    if (embed.url.empty() && embed.from_store.empty()) {
      if (const char* env = std::getenv(kUrlEnv); env != nullptr && *env != '\0') {
        embed.url = env;
      } else {
        throw CLI::RequiredError(std::string("--url (or $") + kUrlEnv + ") or --from-store");
      }
    }
    action = [&] { run_embed(embed); };
  });

  TrainOptions train;
  auto* t = subcommand(app, "train", "Train per-layer probes, control probes and the static baseline");
  t->add_option("--split-dir", train.split_dir, "A split directory or a directory of them")->required();
  t->add_option("--store", train.store, "Embedding store")->required();
  t->add_option("--task", train.task, "form | sense")->required()->check(CLI::IsMember({"form", "sense"}));
  t->add_option("--out-dir", train.out_dir, "Model directory")->required();
  t->add_option("--static", train.static_vectors, "Static word vectors; enables the static baseline");
  t->add_option("--sizes", train.sizes, "Training sizes per class")->delimiter(',')->capture_default_str();
  t->add_option("--layers", train.layers, "Layers to probe")->delimiter(',')->capture_default_str();
  t->add_flag("--no-control", train.no_control, "Skip control-task probes");
  t->add_option("--lambda", train.lambda, "L2 penalty")->capture_default_str();
  t->add_option("--max-iters", train.max_iters, "Gradient-descent iteration limit")->capture_default_str();
  t->add_option("--tol", train.tol, "Stop when the gradient max-norm falls below this")->capture_default_str();
  t->callback([&] { action = [&] { run_train(train); }; });

  EvalOptions eval;
  auto* v = subcommand(app, "eval", "Score trained models and write the report CSV");
  v->add_option("--experiment", eval.experiment, "1: form, 2: perturbations, 3: sense")
      ->required()
      ->check(CLI::Range(1, 3));
  v->add_option("--split-dir", eval.split_dir, "A split directory or a directory of them")->required();
  v->add_option("--models", eval.models, "Model directory")->required();
  v->add_option("--store", eval.store, "Embedding store")->required();
  v->add_option("--static", eval.static_vectors, "Static word vectors (needed for static models)");
  v->add_option("--perturbed", eval.perturbed, "Perturbed items (experiment 2)");
  v->add_option("--out", eval.out, "Per-seed cells (CSV)")->required();
  v->add_option("--aggregate", eval.aggregate, "Seed-mean cells (CSV)");
  v->add_option("--models-manifest", eval.models_manifest, "Write digests of the model files used (JSON)");
  v->add_option("--verify-models", eval.verify_models, "Fail unless the models used match this digest manifest");
  v->callback([&] { action = [&] { run_eval(eval); }; });

  ReportOptions report;
  auto* r = subcommand(app, "report", "Render a layerwise SVG chart from report cells");
  r->add_option("--in", report.in, "Per-seed cells (CSV)")->required();
  r->add_option("--out", report.out, "Output SVG")->required();
  r->add_option("--experiment", report.experiment, "Keep only this experiment's cells");
  r->add_option("--metric", report.metric, "accuracy | precision | recall");
  r->add_option("--title", report.title, "Chart title");
  r->add_flag("--no-chance", report.no_chance, "Omit chance lines");
  r->callback([&] { action = [&] { run_report(report); }; });

  SynthOptions synth;
  auto* b = subcommand(app, "synth-bench", "Write the synthetic benchmark: corpus, annotations, store, vectors");
  b->add_option("--out", synth.out, "Output directory")->required();
  b->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  b->add_option("--dim", synth.dim, "Embedding dimension")->capture_default_str();
  b->add_option("--layers", synth.layers, "Number of layers including layer 0")->capture_default_str();
  b->add_option("--signal-layer", synth.signal_layer, "Layer where the planted signal peaks")->capture_default_str();
  b->callback([&] { action = [&] { run_synth(synth); }; });

  if (argc <= 1) {
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& err) {
    fmt::print(stderr, "error: {}\n", err.what());
    fmt::print(stderr, "run 'cxnprobe --help' for usage\n");
    return kExitUsage;
  }

  try {
    action();
  } catch (const Error& err) {
    fmt::print(stderr, "error: {}\n", err.what());
    return kExitData;
  } catch (const std::exception& err) {
    fmt::print(stderr, "error: {}\n", err.what());
    return kExitData;
  }
  return kExitOk;
}

}  // namespace cxnprobe::cli
