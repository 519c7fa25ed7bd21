#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cxnprobe::cli {

struct MineOptions {
  std::string corpus;
  std::string out;
  std::string stats;
  std::string exclude;
  std::size_t min_tokens = 5;
  bool keep_from = false;
  bool allow_propn = false;
  bool lenient = false;
};

struct MergeOptions {
  std::string instances;
  std::vector<std::string> rounds;
  std::string adjudications;
  std::string out;
  std::string agreement;
};

struct SplitOptions {
  std::string instances;
  std::string out_dir;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::optional<std::uint64_t> single_seed;
  std::size_t per_class = 287;
  std::size_t cap = 20;
  double distractor_fraction = 0.8;
};

struct PerturbOptions {
  std::string instances;
  std::string split_dir;
  std::string out;
};

struct EmbedOptions {
  std::string store;
  std::string url;
  std::string from_store;
  std::vector<std::string> instances;
  std::vector<std::string> perturbed;
  int timeout = 60;
};

struct TrainOptions {
  std::string split_dir;
  std::string store;
  std::string task;
  std::string out_dir;
  std::string static_vectors;
  std::vector<std::size_t> sizes{10, 25, 100, 287};
  std::vector<int> layers{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  bool no_control = false;
  double lambda = 1e-4;
  int max_iters = 5000;
  double tol = 1e-6;
};

struct EvalOptions {
  int experiment = 1;
  std::string split_dir;
  std::string models;
  std::string store;
  std::string static_vectors;
  std::string perturbed;
  std::string out;
  std::string aggregate;
  std::string models_manifest;
  std::string verify_models;
};

struct ReportOptions {
  std::string in;
  std::string out;
  std::optional<int> experiment;
  std::string metric;
  std::string title;
  bool no_chance = false;
};

struct SynthOptions {
  std::string out;
  std::uint64_t seed = 7;
  std::size_t dim = 32;
  std::size_t layers = 13;
  std::size_t signal_layer = 8;
};

// Each returns normally on success and throws cxnprobe::Error on bad data.
void run_mine(const MineOptions& o);
void run_merge(const MergeOptions& o);
void run_split(const SplitOptions& o);
void run_perturb(const PerturbOptions& o);
void run_embed(const EmbedOptions& o);
void run_train(const TrainOptions& o);
void run_eval(const EvalOptions& o);
void run_report(const ReportOptions& o);
void run_synth(const SynthOptions& o);

}  // namespace cxnprobe::cli
