#include "cxnprobe/embeddings.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "cxnprobe/error.hpp"
#include "cxnprobe/text.hpp"

namespace cxnprobe {
namespace {

constexpr const char* kManifestFile = "store.manifest.json";
constexpr const char* kIndexFile = "store.index.json";
constexpr const char* kBinFile = "store.f32bin";
constexpr const char* kLockFile = "store.lock";

void append_f32_le(std::vector<char>& out, float value) {
  const auto bits = std::bit_cast<std::uint32_t>(value);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffU));
}

float read_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(bits);
}

std::map<std::string, std::size_t> read_index(const std::filesystem::path& path) {
  std::map<std::string, std::size_t> offsets;
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    for (const auto& [key, offset] : j.at("records").items()) offsets[key] = offset.get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string(), 0, e.what());
  }
  return offsets;
}

void write_index(const std::filesystem::path& path, const std::map<std::string, std::size_t>& offsets) {
  nlohmann::json j;
  j["records"] = nlohmann::json::object();
  for (const auto& [key, offset] : offsets) j["records"][key] = offset;
  write_file_atomic(path, j.dump(1) + "\n");
}

}  // namespace

std::uint64_t sentence_hash(std::span<const std::string> forms) {
  std::uint64_t h = kFnvOffsetBasis;
  for (std::size_t i = 0; i < forms.size(); ++i) {
    if (i > 0) h = fnv1a64("\x1f", h);
    h = fnv1a64(forms[i], h);
  }
  return h;
}

std::string EmbeddingKey::str() const { return to_hex(sent_hash) + ":" + std::to_string(target_index); }

EmbeddingKey EmbeddingKey::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) throw Error("bad embedding key '" + std::string(text) + "'");
  EmbeddingKey key;
  key.sent_hash = parse_hex(text.substr(0, colon));
  key.target_index = std::stoul(std::string(text.substr(colon + 1)));
  return key;
}

EmbeddingRequest request_for(const NtoNInstance& instance) {
  return EmbeddingRequest{instance.sentence.forms(), instance.span.p_index};
}

EmbeddingRequest request_for(const PerturbedInstance& instance) {
  return EmbeddingRequest{instance.sentence.forms(), instance.target_index};
}

EmbeddingKey key_for(const NtoNInstance& instance) { return request_for(instance).key(); }
EmbeddingKey key_for(const PerturbedInstance& instance) { return request_for(instance).key(); }

std::string manifest_to_json(const StoreManifest& manifest) {
  nlohmann::ordered_json j;
  j["format"] = "cxnprobe-store/1";
  j["model"] = manifest.model;
  j["n_layers"] = manifest.n_layers;
  j["dim"] = manifest.dim;
  j["pooling"] = manifest.pooling;
  j["tokenizer_fingerprint"] = manifest.tokenizer_fingerprint;
  return j.dump(2) + "\n";
}

StoreManifest manifest_from_json(std::string_view text, const std::string& origin) {
  try {
    const auto j = nlohmann::json::parse(text);
    StoreManifest m;
    m.model = j.at("model").get<std::string>();
    m.n_layers = j.at("n_layers").get<std::size_t>();
    m.dim = j.at("dim").get<std::size_t>();
    m.pooling = j.value("pooling", std::string("mean"));
    m.tokenizer_fingerprint = j.value("tokenizer_fingerprint", std::string());
    if (m.n_layers == 0 || m.dim == 0) throw FormatError(origin, 0, "n_layers and dim must be positive");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(origin, 0, e.what());
  }
}

// ---------------------------------------------------------------------------

EmbeddingStore EmbeddingStore::open(const std::filesystem::path& dir) {
  EmbeddingStore store;
  const auto manifest_path = dir / kManifestFile;
  store.manifest_ = manifest_from_json(read_file(manifest_path), manifest_path.string());
  const auto offsets = read_index(dir / kIndexFile);
  const auto bytes = read_file(dir / kBinFile);
  if (bytes.size() % 4 != 0) throw FormatError((dir / kBinFile).string(), 0, "size is not a multiple of 4");

  store.data_.resize(bytes.size() / 4);
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < store.data_.size(); ++i) store.data_[i] = read_f32_le(raw + 4 * i);

  const std::size_t record = store.manifest_.n_layers * store.manifest_.dim;
  for (const auto& [key, byte_offset] : offsets) {
    if (byte_offset % 4 != 0 || byte_offset / 4 + record > store.data_.size()) {
      throw FormatError((dir / kIndexFile).string(), 0, "record '" + key + "' points outside store.f32bin");
    }
    store.offsets_.emplace(key, byte_offset / 4);
  }
  return store;
}

LayerEmbeddings EmbeddingStore::get(const EmbeddingKey& key) const {
  const auto it = offsets_.find(key.str());
  if (it == offsets_.end()) throw Error("embedding store has no record " + key.str());
  LayerEmbeddings out;
  out.key = key;
  out.n_layers = manifest_.n_layers;
  out.dim = manifest_.dim;
  const auto begin = data_.begin() + static_cast<std::ptrdiff_t>(it->second);
  out.values.assign(begin, begin + static_cast<std::ptrdiff_t>(manifest_.n_layers * manifest_.dim));
  return out;
}

std::span<const float> EmbeddingStore::layer(const EmbeddingKey& key, std::size_t layer) const {
  const auto it = offsets_.find(key.str());
  if (it == offsets_.end()) throw Error("embedding store has no record " + key.str());
  if (layer >= manifest_.n_layers) throw Error("layer " + std::to_string(layer) + " out of range");
  return std::span<const float>(data_).subspan(it->second + layer * manifest_.dim, manifest_.dim);
}

std::vector<EmbeddingKey> EmbeddingStore::keys() const {
  std::vector<EmbeddingKey> out;
  out.reserve(offsets_.size());
  for (const auto& [key, offset] : offsets_) out.push_back(EmbeddingKey::parse(key));
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------

EmbeddingStoreWriter::EmbeddingStoreWriter(std::filesystem::path dir, StoreManifest manifest)
    : dir_(std::move(dir)), manifest_(std::move(manifest)) {
  if (manifest_.n_layers == 0 || manifest_.dim == 0) throw Error("store manifest needs positive n_layers and dim");
  std::filesystem::create_directories(dir_);

  const auto lock_path = dir_ / kLockFile;
  const int fd = ::open(lock_path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw Error("embedding store " + dir_.string() + " is locked by another writer (remove " + lock_path.string() +
                " if no writer is running)");
  }
  ::close(fd);
  locked_ = true;

  try {
    const auto manifest_path = dir_ / kManifestFile;
    if (std::filesystem::exists(manifest_path)) {
      const auto existing = manifest_from_json(read_file(manifest_path), manifest_path.string());
      if (!(existing == manifest_)) {
        throw Error("manifest mismatch: store " + dir_.string() + " holds '" + existing.model + "' (" +
                    std::to_string(existing.n_layers) + "x" + std::to_string(existing.dim) + ", tokenizer " +
                    existing.tokenizer_fingerprint + "), refusing to append '" + manifest_.model + "' (" +
                    std::to_string(manifest_.n_layers) + "x" + std::to_string(manifest_.dim) + ", tokenizer " +
                    manifest_.tokenizer_fingerprint + ")");
      }
      offsets_ = read_index(dir_ / kIndexFile);
      bin_size_ = std::filesystem::file_size(dir_ / kBinFile);
      const std::size_t record_bytes = manifest_.n_layers * manifest_.dim * 4;
      if (bin_size_ != offsets_.size() * record_bytes) {
        throw Error("store " + dir_.string() + " is inconsistent: index lists " + std::to_string(offsets_.size()) +
                    " records but store.f32bin holds " + std::to_string(bin_size_) + " bytes");
      }
    } else {
      write_file_atomic(dir_ / kBinFile, "");
      write_index(dir_ / kIndexFile, offsets_);
      write_file_atomic(manifest_path, manifest_to_json(manifest_));
    }
  } catch (...) {
    std::filesystem::remove(lock_path);
    throw;
  }
}

EmbeddingStoreWriter::~EmbeddingStoreWriter() {
  if (locked_) {
    std::error_code ec;
    std::filesystem::remove(dir_ / kLockFile, ec);
  }
}

bool EmbeddingStoreWriter::add(const LayerEmbeddings& record) {
  if (record.n_layers != manifest_.n_layers || record.dim != manifest_.dim ||
      record.values.size() != manifest_.n_layers * manifest_.dim) {
    throw Error("record " + record.key.str() + " does not match the store shape");
  }
  const auto key = record.key.str();
  if (offsets_.contains(key)) return false;
  offsets_.emplace(key, bin_size_ + pending_.size());
  for (const float v : record.values) append_f32_le(pending_, v);
  dirty_ = true;
  return true;
}

void EmbeddingStoreWriter::commit() {
  if (!dirty_) return;
  {
    std::ofstream out(dir_ / kBinFile, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot append to " + (dir_ / kBinFile).string());
    out.write(pending_.data(), static_cast<std::streamsize>(pending_.size()));
    if (!out) throw Error("I/O error writing " + (dir_ / kBinFile).string());
  }
  bin_size_ += pending_.size();
  pending_.clear();
  write_index(dir_ / kIndexFile, offsets_);
  dirty_ = false;
}

// ---------------------------------------------------------------------------

StoreEmbeddingProvider::StoreEmbeddingProvider(const std::filesystem::path& dir) : store_(EmbeddingStore::open(dir)) {}

LayerEmbeddings StoreEmbeddingProvider::embed(std::span<const std::string> tokens, std::size_t target_index) {
  const EmbeddingKey key{sentence_hash(tokens), target_index};
  if (!store_.contains(key)) {
    throw Error("precomputed store has no record for '" + join(tokens, " ") + "' target " + std::to_string(target_index));
  }
  return store_.get(key);
}

std::vector<std::vector<float>> mean_pool(std::span<const std::vector<std::vector<float>>> subwords) {
  if (subwords.empty()) throw Error("cannot pool zero subwords");
  const auto n_layers = subwords[0].size();
  std::vector<std::vector<double>> sums(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) sums[l].assign(subwords[0][l].size(), 0.0);
  for (const auto& sw : subwords) {
    if (sw.size() != n_layers) throw Error("subwords disagree on layer count");
    for (std::size_t l = 0; l < n_layers; ++l) {
      if (sw[l].size() != sums[l].size()) throw Error("subwords disagree on dimension");
      for (std::size_t d = 0; d < sw[l].size(); ++d) sums[l][d] += sw[l][d];
    }
  }
  std::vector<std::vector<float>> out(n_layers);
  const double k = static_cast<double>(subwords.size());
  for (std::size_t l = 0; l < n_layers; ++l) {
    out[l].resize(sums[l].size());
    for (std::size_t d = 0; d < sums[l].size(); ++d) out[l][d] = static_cast<float>(sums[l][d] / k);
  }
  return out;
}

LayerEmbeddings embed_sentence(EmbeddingProvider& provider, std::span<const std::string> tokens, std::size_t target_index) {
  if (tokens.empty()) throw Error("cannot embed an empty sentence");
  if (target_index >= tokens.size()) {
    throw Error("target index " + std::to_string(target_index) + " out of range for " + std::to_string(tokens.size()) +
                " tokens");
  }
  const auto manifest = provider.manifest();
  auto record = provider.embed(tokens, target_index);
  if (record.n_layers != manifest.n_layers || record.dim != manifest.dim ||
      record.values.size() != manifest.n_layers * manifest.dim) {
    throw TransportError("provider returned " + std::to_string(record.n_layers) + "x" + std::to_string(record.dim) +
                         " vectors, manifest declares " + std::to_string(manifest.n_layers) + "x" +
                         std::to_string(manifest.dim));
  }
  record.key = EmbeddingKey{sentence_hash(tokens), target_index};
  return record;
}

BatchEmbedStats batch_embed(EmbeddingProvider& provider, std::span<const EmbeddingRequest> requests,
                            const std::filesystem::path& store_dir) {
  EmbeddingStoreWriter writer(store_dir, provider.manifest());
  BatchEmbedStats stats;
  stats.requested = requests.size();
  try {
    for (const auto& request : requests) {
      if (writer.contains(request.key())) {
        ++stats.skipped;
        continue;
      }
      writer.add(embed_sentence(provider, request.tokens, request.target_index));
      ++stats.added;
    }
  } catch (...) {
    writer.commit();
    throw;
  }
  writer.commit();
  return stats;
}

}  // namespace cxnprobe
