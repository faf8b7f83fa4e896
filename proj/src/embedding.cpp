#include "rar/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "rar/core.hpp"
#include "rar/hash.hpp"

namespace rar {

FeatureHashEmbedder::FeatureHashEmbedder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw RangeError("embedding_dim");
}

std::size_t FeatureHashEmbedder::bucket_of(std::string_view gram) const noexcept {
  return static_cast<std::size_t>(hash64(gram, kEmbedderSeed) % dimension_);
}

Embedding FeatureHashEmbedder::embed(std::string_view text) const {
  const auto trimmed = trim(text);
  if (trimmed.empty()) throw EmptyText();

  std::string lowered(trimmed);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(), [](unsigned char c) {
    return static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
  });

  Embedding v(dimension_, 0.0);
  const std::string_view s(lowered);
  if (s.size() < 3) {
    v[bucket_of(s)] = 1.0;
    return v;
  }
  for (std::size_t i = 0; i + 3 <= s.size(); ++i) {
    v[bucket_of(s.substr(i, 3))] += 1.0;
  }
  normalize(v);
  return v;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec, std::size_t dimension) {
  switch (spec.kind) {
    case EmbedderSpec::Kind::FeatureHash:
      return std::make_unique<FeatureHashEmbedder>(dimension);
    case EmbedderSpec::Kind::ExternalService:
      if (!spec.endpoint) throw InvariantViolation("external embedder requires an endpoint");
      return std::make_unique<HttpEmbedder>(*spec.endpoint, dimension);
  }
  throw InvariantViolation("unknown embedder kind");
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionMismatch(a.size(), b.size());
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  // sqrt(na * nb) keeps the expression symmetric in a and b.
  const double s = dot / std::sqrt(na * nb);
  return std::clamp(s, -1.0, 1.0);
}

bool normalize(Embedding& v) noexcept {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq == 0.0) return false;
  const double n = std::sqrt(sq);
  for (double& x : v) x /= n;
  return true;
}

}  // namespace rar
