#include "cxnprobe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "cxnprobe/error.hpp"
#include "cxnprobe/rng.hpp"
#include "cxnprobe/text.hpp"

namespace cxnprobe {
namespace {

using ojson = nlohmann::ordered_json;

ojson parse_json_file(const std::filesystem::path& path) {
  try {
    return ojson::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string(), 0, std::string("invalid JSON: ") + e.what());
  }
}

std::size_t label_index(SemanticLabel label) { return static_cast<std::size_t>(label); }

std::string list_preview(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size() && i < 20; ++i) {
    if (i > 0) out += ", ";
    out += ids[i];
  }
  if (ids.size() > 20) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out;
}

// Indices of the instances that survive the cap, using the caller's generator
// so that capping is part of the split's recorded draw sequence.
std::vector<std::size_t> cap_positions(std::span<const NtoNInstance> instances, std::size_t cap, SplitMix64& rng) {
  std::map<std::string, std::vector<std::size_t>> by_lemma;
  for (std::size_t i = 0; i < instances.size(); ++i) by_lemma[instances[i].noun_lemma()].push_back(i);

  std::vector<bool> keep(instances.size(), true);
  for (auto& [lemma, positions] : by_lemma) {
    if (positions.size() <= cap) continue;
    shuffle(std::span<std::size_t>(positions), rng);
    for (std::size_t k = cap; k < positions.size(); ++k) keep[positions[k]] = false;
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (keep[i]) out.push_back(i);
  }
  return out;
}

}  // namespace

AnnotationRound read_annotation_round(const std::filesystem::path& path) {
  const auto j = parse_json_file(path);
  AnnotationRound round;
  try {
    round.annotator_id = j.at("annotator_id").get<std::string>();
    for (const auto& [id, label] : j.at("labels").items()) round.labels[id] = parse_label(label.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string(), 0, e.what());
  } catch (const Error& e) {
    throw FormatError(path.string(), 0, e.what());
  }
  return round;
}

void write_annotation_round(const AnnotationRound& round, const std::filesystem::path& path) {
  ojson j;
  j["annotator_id"] = round.annotator_id;
  j["labels"] = ojson::object();
  for (const auto& [id, label] : round.labels) j["labels"][id] = std::string(to_string(label));
  write_file_atomic(path, j.dump(2) + "\n");
}

std::map<std::string, SemanticLabel> read_adjudications(const std::filesystem::path& path) {
  const auto j = parse_json_file(path);
  std::map<std::string, SemanticLabel> out;
  try {
    for (const auto& [id, label] : j.items()) out[id] = parse_label(label.get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string(), 0, e.what());
  } catch (const Error& e) {
    throw FormatError(path.string(), 0, e.what());
  }
  return out;
}

void write_adjudications(const std::map<std::string, SemanticLabel>& adjudications, const std::filesystem::path& path) {
  ojson j = ojson::object();
  for (const auto& [id, label] : adjudications) j[id] = std::string(to_string(label));
  write_file_atomic(path, j.dump(2) + "\n");
}

std::vector<NtoNInstance> merge_annotations(std::vector<NtoNInstance> instances,
                                            std::span<const AnnotationRound> rounds,
                                            const std::map<std::string, SemanticLabel>& adjudications) {
  std::unordered_set<std::string> known;
  for (const auto& inst : instances) known.insert(inst.instance_id);
  std::vector<std::string> unknown;
  for (const auto& round : rounds) {
    for (const auto& [id, label] : round.labels) {
      if (!known.contains(id)) unknown.push_back(round.annotator_id + ":" + id);
    }
  }
  if (!unknown.empty()) throw Error("annotations refer to unknown instances: " + list_preview(unknown));

  std::vector<std::string> missing;
  for (auto& inst : instances) {
    std::vector<SemanticLabel> votes;
    for (const auto& round : rounds) {
      if (const auto it = round.labels.find(inst.instance_id); it != round.labels.end()) votes.push_back(it->second);
    }
    if (votes.empty()) continue;
    if (votes.size() > 2) throw Error("instance '" + inst.instance_id + "' is covered by more than two rounds");
    if (votes.size() == 1) {
      inst.label = votes[0];
      inst.annotator_labels.reset();
      inst.adjudicated = false;
      continue;
    }
    inst.annotator_labels = std::make_pair(votes[0], votes[1]);
    if (votes[0] == votes[1]) {
      inst.label = votes[0];
      inst.adjudicated = false;
    } else if (const auto adj = adjudications.find(inst.instance_id); adj != adjudications.end()) {
      inst.label = adj->second;
      inst.adjudicated = true;
    } else {
      missing.push_back(inst.instance_id);
    }
  }
  if (!missing.empty()) throw Error("disagreements without adjudication: " + list_preview(missing));
  return instances;
}

AgreementResult agreement(const AnnotationRound& first, const AnnotationRound& second) {
  AgreementResult result;
  std::size_t matching = 0;
  for (const auto& [id, a] : first.labels) {
    const auto it = second.labels.find(id);
    if (it == second.labels.end()) continue;
    ++result.n_overlap;
    ++result.confusion[label_index(a)][label_index(it->second)];
    if (a == it->second) ++matching;
  }
  if (result.n_overlap == 0) {
    throw Error("annotation rounds '" + first.annotator_id + "' and '" + second.annotator_id + "' share no instance");
  }
  result.raw_agreement = static_cast<double>(matching) / static_cast<double>(result.n_overlap);
  return result;
}

std::vector<NtoNInstance> cap_by_lemma(std::span<const NtoNInstance> instances, std::size_t cap, std::uint64_t seed) {
  if (cap < 1) throw Error("cap must be >= 1");
  SplitMix64 rng(seed);
  std::vector<NtoNInstance> out;
  for (const auto i : cap_positions(instances, cap, rng)) out.push_back(instances[i]);
  return out;
}

void SplitSpec::validate() const {
  if (per_class_train < 1) throw Error("per_class_train must be >= 1");
  if (cap_per_lemma < 1) throw Error("cap_per_lemma must be >= 1");
  if (classes.empty()) throw Error("split needs at least one class");
  if (!(distractor_train_fraction > 0.0 && distractor_train_fraction <= 1.0)) {
    throw Error("distractor_train_fraction must lie in (0, 1]");
  }
  std::unordered_set<std::size_t> seen;
  for (const auto c : classes) {
    if (!seen.insert(label_index(c)).second) throw Error("duplicate class in split spec");
  }
}

DatasetSplit split_by_lemma(std::span<const NtoNInstance> instances, const SplitSpec& spec) {
  spec.validate();
  std::array<bool, kSemanticLabelCount> wanted{};
  for (const auto c : spec.classes) wanted[label_index(c)] = true;

  std::vector<NtoNInstance> eligible;
  for (const auto& inst : instances) {
    if (!inst.label) throw Error("instance '" + inst.instance_id + "' has no label; merge annotations first");
    if (wanted[label_index(*inst.label)]) eligible.push_back(inst);
  }

  SplitMix64 rng(spec.seed);

  // 1. frequency cap
  std::vector<NtoNInstance> capped;
  for (const auto i : cap_positions(eligible, spec.cap_per_lemma, rng)) capped.push_back(std::move(eligible[i]));

  std::map<std::string, std::array<std::size_t, kSemanticLabelCount>> lemma_counts;
  std::array<std::size_t, kSemanticLabelCount> class_totals{};
  for (const auto& inst : capped) {
    ++lemma_counts[inst.noun_lemma()][label_index(*inst.label)];
    ++class_totals[label_index(*inst.label)];
  }

  std::array<std::size_t, kSemanticLabelCount> quota{};
  std::string deficit;
  for (const auto c : spec.classes) {
    auto q = spec.per_class_train;
    if (c == SemanticLabel::kDistractor) {
      const auto n = class_totals[label_index(c)];
      const auto drawn = static_cast<std::size_t>(std::ceil(spec.distractor_train_fraction * static_cast<double>(n) - 1e-9));
      if (drawn < spec.per_class_train) {
        deficit += std::string(deficit.empty() ? "" : ", ") + std::string(to_string(c)) + " needs " +
                   std::to_string(spec.per_class_train) + " but the training share of " + std::to_string(n) +
                   " is " + std::to_string(drawn);
      }
      q = drawn;
    }
    quota[label_index(c)] = q;
  }
  if (!deficit.empty()) throw Error("infeasible split: " + deficit);

  // 2. lemma pools
  std::vector<std::string> lemmas;
  lemmas.reserve(lemma_counts.size());
  for (const auto& [lemma, counts] : lemma_counts) lemmas.push_back(lemma);
  shuffle(std::span<std::string>(lemmas), rng);

  DatasetSplit split;
  std::array<std::size_t, kSemanticLabelCount> pooled{};
  for (const auto& lemma : lemmas) {
    const auto& counts = lemma_counts[lemma];
    bool needed = false;
    for (const auto c : spec.classes) {
      const auto k = label_index(c);
      if (counts[k] > 0 && pooled[k] < quota[k]) needed = true;
    }
    split.lemma_assignment[lemma] = needed ? Pool::kTrain : Pool::kTest;
    if (needed) {
      for (std::size_t k = 0; k < kSemanticLabelCount; ++k) pooled[k] += counts[k];
    }
  }
  for (const auto c : spec.classes) {
    const auto k = label_index(c);
    if (pooled[k] < spec.per_class_train) {
      deficit += std::string(deficit.empty() ? "" : ", ") + std::string(to_string(c)) + " short by " +
                 std::to_string(spec.per_class_train - pooled[k]);
    }
  }
  if (!deficit.empty()) throw Error("infeasible split: " + deficit);

  // 3. balanced downsampling inside the TRAIN pool
  for (const auto c : spec.classes) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < capped.size(); ++i) {
      if (*capped[i].label == c && split.lemma_assignment.at(capped[i].noun_lemma()) == Pool::kTrain) {
        candidates.push_back(i);
      }
    }
    shuffle(std::span<std::size_t>(candidates), rng);
    for (std::size_t k = 0; k < spec.per_class_train; ++k) split.train.push_back(capped[candidates[k]]);
  }
  for (auto& inst : capped) {
    if (split.lemma_assignment.at(inst.noun_lemma()) == Pool::kTest) split.test.push_back(std::move(inst));
  }

  split.seed = spec.seed;
  split.per_class_train = spec.per_class_train;
  split.cap_per_lemma = spec.cap_per_lemma;
  split.classes = spec.classes;
  split.draw_count = rng.draw_count();
  split.draw_digest = rng.draw_digest();
  return split;
}

std::vector<const NtoNInstance*> train_group(const DatasetSplit& split, SemanticLabel label) {
  std::vector<const NtoNInstance*> out;
  for (const auto& inst : split.train) {
    if (inst.label == label) out.push_back(&inst);
  }
  return out;
}

DatasetSplit nested_subset(const DatasetSplit& split, std::size_t per_class) {
  if (per_class > split.per_class_train) {
    throw Error("nested subset of " + std::to_string(per_class) + " per class exceeds the split's " +
                std::to_string(split.per_class_train));
  }
  DatasetSplit out;
  for (const auto c : split.classes) {
    const auto group = train_group(split, c);
    for (std::size_t k = 0; k < per_class; ++k) out.train.push_back(*group.at(k));
  }
  out.test = split.test;
  out.lemma_assignment = split.lemma_assignment;
  out.seed = split.seed;
  out.per_class_train = per_class;
  out.cap_per_lemma = split.cap_per_lemma;
  out.classes = split.classes;
  out.draw_count = split.draw_count;
  out.draw_digest = split.draw_digest;
  return out;
}

void write_split(const DatasetSplit& split, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_instances(split.train, dir / "train.jsonl");
  write_instances(split.test, dir / "test.jsonl");

  ojson m;
  m["format"] = "cxnprobe-split/1";
  m["seed"] = split.seed;
  m["per_class_train"] = split.per_class_train;
  m["cap_per_lemma"] = split.cap_per_lemma;
  m["classes"] = ojson::array();
  for (const auto c : split.classes) m["classes"].push_back(std::string(to_string(c)));
  std::map<std::string, std::size_t> train_counts;
  std::map<std::string, std::size_t> test_counts;
  for (const auto& inst : split.train) ++train_counts[std::string(to_string(*inst.label))];
  for (const auto& inst : split.test) ++test_counts[std::string(to_string(*inst.label))];
  m["train_counts"] = train_counts;
  m["test_counts"] = test_counts;
  m["draw_count"] = split.draw_count;
  m["draw_log_hash"] = to_hex(split.draw_digest);
  m["lemma_assignment"] = ojson::object();
  for (const auto& [lemma, pool] : split.lemma_assignment) {
    m["lemma_assignment"][lemma] = pool == Pool::kTrain ? "TRAIN" : "TEST";
  }
  write_file_atomic(dir / "split-manifest.json", m.dump(2) + "\n");
}

DatasetSplit read_split(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "split-manifest.json";
  const auto m = parse_json_file(manifest_path);
  DatasetSplit split;
  try {
    split.seed = m.at("seed").get<std::uint64_t>();
    split.per_class_train = m.at("per_class_train").get<std::size_t>();
    split.cap_per_lemma = m.at("cap_per_lemma").get<std::size_t>();
    for (const auto& c : m.at("classes")) split.classes.push_back(parse_label(c.get<std::string>()));
    split.draw_count = m.at("draw_count").get<std::uint64_t>();
    split.draw_digest = parse_hex(m.at("draw_log_hash").get<std::string>());
    for (const auto& [lemma, pool] : m.at("lemma_assignment").items()) {
      const auto p = pool.get<std::string>();
      if (p != "TRAIN" && p != "TEST") throw Error("bad pool '" + p + "' for lemma '" + lemma + "'");
      split.lemma_assignment[lemma] = p == "TRAIN" ? Pool::kTrain : Pool::kTest;
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string(), 0, e.what());
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(manifest_path.string(), 0, e.what());
  }
  split.train = read_instances(dir / "train.jsonl");
  split.test = read_instances(dir / "test.jsonl");
  for (const auto c : split.classes) {
    if (train_group(split, c).size() != split.per_class_train) {
      throw FormatError((dir / "train.jsonl").string(), 0,
                        "class " + std::string(to_string(c)) + " does not have per_class_train instances");
    }
  }
  return split;
}

std::vector<std::filesystem::path> find_split_dirs(const std::filesystem::path& root) {
  if (std::filesystem::exists(root / "split-manifest.json")) return {root};
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(root)) throw Error("not a directory: " + root.string());
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "split-manifest.json")) {
      out.push_back(entry.path());
    }
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error("no split found under " + root.string());
  return out;
}

}  // namespace cxnprobe
