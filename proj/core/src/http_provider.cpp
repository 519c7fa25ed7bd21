#include <httplib.h>

#include <json.hpp>

#include "cxnprobe/embeddings.hpp"
#include "cxnprobe/error.hpp"

namespace cxnprobe {

struct HttpEmbeddingProvider::Impl {
  std::string base_url;
  httplib::Client client;
  std::optional<StoreManifest> manifest;

  Impl(std::string url, int timeout_seconds) : base_url(std::move(url)), client(base_url) {
    client.set_connection_timeout(timeout_seconds, 0);
    client.set_read_timeout(timeout_seconds, 0);
    client.set_write_timeout(timeout_seconds, 0);
  }

  nlohmann::json checked(const httplib::Result& result, const std::string& what) {
    if (!result) {
      throw TransportError(what + " failed: cannot reach " + base_url + " (" + httplib::to_string(result.error()) + ")");
    }
    if (result->status != 200) {
      std::string detail = result->body.substr(0, 200);
      if (result->status == 422) throw Error(what + " rejected by service (422): " + detail);
      throw TransportError(what + " returned HTTP " + std::to_string(result->status) + ": " + detail);
    }
    try {
      return nlohmann::json::parse(result->body);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(what + " returned invalid JSON: " + e.what());
    }
  }
};

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url, int timeout_seconds) {
  if (base_url.empty()) throw Error("no embedding service URL given (set --url or CXNPROBE_EMBED_URL)");
  while (base_url.size() > 1 && base_url.back() == '/') base_url.pop_back();
  try {
    impl_ = std::make_unique<Impl>(std::move(base_url), timeout_seconds);
  } catch (const std::exception& e) {
    throw Error(std::string("bad embedding service URL: ") + e.what());
  }
  if (!impl_->client.is_valid()) throw Error("bad embedding service URL: " + impl_->base_url);
}

HttpEmbeddingProvider::~HttpEmbeddingProvider() = default;

StoreManifest HttpEmbeddingProvider::manifest() {
  if (impl_->manifest) return *impl_->manifest;
  const auto body = impl_->checked(impl_->client.Get("/manifest"), "GET /manifest");
  impl_->manifest = manifest_from_json(body.dump(), impl_->base_url + "/manifest");
  return *impl_->manifest;
}

LayerEmbeddings HttpEmbeddingProvider::embed(std::span<const std::string> tokens, std::size_t target_index) {
  nlohmann::json request;
  request["tokens"] = std::vector<std::string>(tokens.begin(), tokens.end());
  request["target_index"] = target_index;
  const auto body =
      impl_->checked(impl_->client.Post("/embed", request.dump(), "application/json"), "POST /embed");

  LayerEmbeddings out;
  out.key = EmbeddingKey{sentence_hash(tokens), target_index};
  try {
    if (body.contains("subwords_used") && body.at("subwords_used").get<long>() <= 0) {
      throw Error("tokenizer alignment failure: token '" + tokens[target_index] + "' maps to zero subwords");
    }
    std::vector<std::vector<float>> layers;
    if (body.contains("layers")) {
      layers = body.at("layers").get<std::vector<std::vector<float>>>();
    } else if (body.contains("subword_layers")) {
      const auto subwords = body.at("subword_layers").get<std::vector<std::vector<std::vector<float>>>>();
      if (subwords.empty()) {
        throw Error("tokenizer alignment failure: token '" + tokens[target_index] + "' maps to zero subwords");
      }
      layers = mean_pool(subwords);
    } else {
      throw TransportError("POST /embed response has no 'layers'");
    }
    out.n_layers = layers.size();
    out.dim = layers.empty() ? 0 : layers[0].size();
    if (body.contains("n_layers") && body.at("n_layers").get<std::size_t>() != out.n_layers) {
      throw TransportError("POST /embed: n_layers disagrees with the layers array");
    }
    if (body.contains("dim") && body.at("dim").get<std::size_t>() != out.dim) {
      throw TransportError("POST /embed: dim disagrees with the vectors");
    }
    out.values.reserve(out.n_layers * out.dim);
    for (const auto& layer : layers) {
      if (layer.size() != out.dim) throw TransportError("POST /embed: ragged layer vectors");
      out.values.insert(out.values.end(), layer.begin(), layer.end());
    }
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("POST /embed: malformed response: ") + e.what());
  }
  return out;
}

}  // namespace cxnprobe
