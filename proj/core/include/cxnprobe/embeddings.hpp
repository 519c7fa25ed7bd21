#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cxnprobe/corpus.hpp"
#include "cxnprobe/perturbation.hpp"

namespace cxnprobe {

/// FNV-1a over the token forms separated by U+001F.
std::uint64_t sentence_hash(std::span<const std::string> forms);

struct EmbeddingKey {
  std::uint64_t sent_hash = 0;
  std::size_t target_index = 0;

  /// "<16 hex digits>:<target>", the store index key.
  std::string str() const;
  static EmbeddingKey parse(std::string_view text);

  friend bool operator==(const EmbeddingKey&, const EmbeddingKey&) = default;
  friend auto operator<=>(const EmbeddingKey&, const EmbeddingKey&) = default;
};

EmbeddingKey key_for(const NtoNInstance& instance);       // target = the "to" token
EmbeddingKey key_for(const PerturbedInstance& instance);  // target = the moved "to" token

// n_layers vectors of `dim` floats for one target token. Layer 0 is the input
// embedding layer; layers 1..L are encoder layers.
struct LayerEmbeddings {
  EmbeddingKey key;
  std::size_t n_layers = 0;
  std::size_t dim = 0;
  std::vector<float> values;  // layer-major, n_layers * dim

  std::span<const float> layer(std::size_t l) const { return std::span<const float>(values).subspan(l * dim, dim); }
};

struct StoreManifest {
  std::string model;
  std::size_t n_layers = 0;  // L + 1
  std::size_t dim = 0;
  std::string pooling = "mean";
  std::string tokenizer_fingerprint;

  friend bool operator==(const StoreManifest&, const StoreManifest&) = default;
};

std::string manifest_to_json(const StoreManifest& manifest);
StoreManifest manifest_from_json(std::string_view text, const std::string& origin);

// ---------------------------------------------------------------------------
// On-disk store: a directory holding
//   store.manifest.json   model, n_layers, dim, pooling, tokenizer_fingerprint
//   store.index.json      {"records": {"<key>": <byte offset>}}
//   store.f32bin          little-endian float32 records, n_layers * dim each

// Read-only view of a store; the binary file is loaded into memory.
class EmbeddingStore {
 public:
  static EmbeddingStore open(const std::filesystem::path& dir);

  const StoreManifest& manifest() const { return manifest_; }
  std::size_t size() const { return offsets_.size(); }
  bool contains(const EmbeddingKey& key) const { return offsets_.contains(key.str()); }

  /// Throws when the key is absent.
  LayerEmbeddings get(const EmbeddingKey& key) const;
  /// One layer of one record, without copying the others.
  std::span<const float> layer(const EmbeddingKey& key, std::size_t layer) const;

  std::vector<EmbeddingKey> keys() const;

 private:
  StoreManifest manifest_;
  std::unordered_map<std::string, std::size_t> offsets_;  // key -> float offset
  std::vector<float> data_;
};

// Appends records to a store, creating it if needed. Holds store.lock for its
// lifetime so only one writer touches a store at a time.
class EmbeddingStoreWriter {
 public:
  /// Throws when an existing store's manifest differs from `manifest`, or the
  /// lock is held by someone else.
  EmbeddingStoreWriter(std::filesystem::path dir, StoreManifest manifest);
  ~EmbeddingStoreWriter();
  EmbeddingStoreWriter(const EmbeddingStoreWriter&) = delete;
  EmbeddingStoreWriter& operator=(const EmbeddingStoreWriter&) = delete;

  bool contains(const EmbeddingKey& key) const { return offsets_.contains(key.str()); }
  /// Returns false (and writes nothing) when the key is already stored.
  bool add(const LayerEmbeddings& record);
  /// Flushes appended records and rewrites the index.
  void commit();
  std::size_t size() const { return offsets_.size(); }

 private:
  std::filesystem::path dir_;
  StoreManifest manifest_;
  std::map<std::string, std::size_t> offsets_;  // key -> byte offset
  std::size_t bin_size_ = 0;
  std::vector<char> pending_;
  bool dirty_ = false;
  bool locked_ = false;
};

// ---------------------------------------------------------------------------

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual StoreManifest manifest() = 0;
  /// Raw provider call; embed_sentence() adds precondition and shape checks.
  virtual LayerEmbeddings embed(std::span<const std::string> tokens, std::size_t target_index) = 0;
};

/// Client of the embedding service: GET /manifest, POST /embed.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  /// `base_url` like "http://localhost:8080".
  explicit HttpEmbeddingProvider(std::string base_url, int timeout_seconds = 60);
  ~HttpEmbeddingProvider() override;

  StoreManifest manifest() override;
  LayerEmbeddings embed(std::span<const std::string> tokens, std::size_t target_index) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Serves records from a precomputed store; a missing key is an error.
class StoreEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit StoreEmbeddingProvider(const std::filesystem::path& dir);

  StoreManifest manifest() override { return store_.manifest(); }
  LayerEmbeddings embed(std::span<const std::string> tokens, std::size_t target_index) override;

 private:
  EmbeddingStore store_;
};

/// Per-layer arithmetic mean over a word's subword vectors.
/// `subwords[k][l]` is layer l of subword k. Throws on zero subwords.
std::vector<std::vector<float>> mean_pool(std::span<const std::vector<std::vector<float>>> subwords);

/// Checks 0 <= target < len(tokens), calls the provider and verifies the
/// result's shape against the provider manifest.
LayerEmbeddings embed_sentence(EmbeddingProvider& provider, std::span<const std::string> tokens, std::size_t target_index);

struct EmbeddingRequest {
  std::vector<std::string> tokens;
  std::size_t target_index = 0;

  EmbeddingKey key() const { return {sentence_hash(tokens), target_index}; }
};

EmbeddingRequest request_for(const NtoNInstance& instance);
EmbeddingRequest request_for(const PerturbedInstance& instance);

struct BatchEmbedStats {
  std::size_t requested = 0;
  std::size_t added = 0;
  std::size_t skipped = 0;  // key already present (or repeated in the batch)
};

/// Embeds every request whose key the store lacks. Records finished before a
/// failure are committed, so a rerun resumes where it stopped.
BatchEmbedStats batch_embed(EmbeddingProvider& provider, std::span<const EmbeddingRequest> requests,
                            const std::filesystem::path& store_dir);

// ---------------------------------------------------------------------------
// Static word vectors in the usual text format: "word v1 ... vD" per line.

class StaticVectors {
 public:
  static StaticVectors load(const std::filesystem::path& path);
  static StaticVectors from_table(std::size_t dim, std::map<std::string, std::vector<float>> table);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return table_.size(); }
  const std::vector<float>* find(const std::string& word) const;

  void save(const std::filesystem::path& path) const;

 private:
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<float>> table_;
};

struct StaticLookup {
  std::vector<float> vector;
  bool oov = false;
};

/// Vector of the first noun's case-folded surface form; zero vector when OOV.
StaticLookup static_lookup(const StaticVectors& vectors, const NtoNInstance& instance);

}  // namespace cxnprobe
