#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cxnprobe/corpus.hpp"

namespace cxnprobe {

// Word-order rewrites of the [N, to, N] span.
enum class PerturbationKind { kPNN, kPN, kNNP, kNP };

inline constexpr std::array<PerturbationKind, 4> kAllPerturbations = {
    PerturbationKind::kPNN, PerturbationKind::kPN, PerturbationKind::kNNP, PerturbationKind::kNP};

std::string_view to_string(PerturbationKind kind);
PerturbationKind parse_perturbation(std::string_view text);

struct PerturbedInstance {
  std::string base;  // instance_id of the source instance
  PerturbationKind kind = PerturbationKind::kPNN;
  TaggedSentence sentence;
  std::size_t target_index = 0;  // the "to" token
  std::optional<SemanticLabel> base_label;

  std::string instance_id() const;

  friend bool operator==(const PerturbedInstance&, const PerturbedInstance&) = default;
};

/// PNN: [to, N, N]   PN: [to, N]   NNP: [N, N, to]   NP: [N, to]
/// Tokens outside the span keep their order; moved tokens carry their lemma
/// and tag along.
PerturbedInstance perturb(const NtoNInstance& instance, PerturbationKind kind);

/// All four kinds per instance, instance-major in PNN, PN, NNP, NP order.
std::vector<PerturbedInstance> perturb_all(std::span<const NtoNInstance> instances);

/// Instance JSONL plus "base", "kind" and "target"; no span.
void write_perturbed(std::span<const PerturbedInstance> items, const std::filesystem::path& path);
std::vector<PerturbedInstance> read_perturbed(const std::filesystem::path& path);

}  // namespace cxnprobe
