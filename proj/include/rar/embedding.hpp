#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "rar/types.hpp"

namespace rar {

// Maps text to a unit vector of fixed dimension. Implementations must be
// safe for concurrent callers.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual Embedding embed(std::string_view text) const = 0;
  virtual std::size_t dimension() const noexcept = 0;
};

// Deterministic reference embedder.
//
// The trimmed text is ASCII-lowercased and every byte 3-gram is hashed with
// hash64(gram, kEmbedderSeed); bucket (hash mod D) is incremented by one and
// the accumulator is L2-normalized. Texts shorter than three bytes hash the
// whole string into a single bucket.
class FeatureHashEmbedder final : public Embedder {
 public:
  explicit FeatureHashEmbedder(std::size_t dimension = 384);
  Embedding embed(std::string_view text) const override;
  std::size_t dimension() const noexcept override { return dimension_; }

  // Bucket index of one n-gram; exposed for tests.
  std::size_t bucket_of(std::string_view gram) const noexcept;

 private:
  std::size_t dimension_;
};

// POST {"input": text} -> {"embedding": [D reals]}; normalizes on receipt.
class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(std::string endpoint, std::size_t dimension);
  Embedding embed(std::string_view text) const override;
  std::size_t dimension() const noexcept override { return dimension_; }

 private:
  std::string endpoint_;
  std::size_t dimension_;
};

struct EmbedderSpec {
  enum class Kind { FeatureHash, ExternalService };
  Kind kind = Kind::FeatureHash;
  std::optional<std::string> endpoint;
};

std::unique_ptr<Embedder> make_embedder(const EmbedderSpec& spec, std::size_t dimension);

// dot(a,b) / (|a| |b|), clamped to [-1, 1]. Zero vectors score 0.
// Throws DimensionMismatch on unequal lengths.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// In-place L2 normalization. A zero vector is left untouched and false is returned.
bool normalize(Embedding& v) noexcept;

}  // namespace rar
