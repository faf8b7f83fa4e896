#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rar/errors.hpp"
#include "rar/types.hpp"

namespace rar {

// An inbound request.
struct RequestRecord {
  std::string id;
  std::string text;
  std::optional<std::string> domain;
  // Multiple-choice mode: answer options, labelled A, B, C, ... in order.
  std::optional<std::vector<std::string>> choices;
  // Cached unit embedding.
  std::optional<Embedding> embedding;
};

// Throws InvariantViolation (or EmptyText) if the record is malformed.
// `dimension` is only checked when an embedding is cached.
void validate_request(const RequestRecord& request, std::size_t dimension);

struct Guide {
  std::string id;
  std::string text;
  std::string origin_request_id;
  GuideSource source = GuideSource::FreshFromStrong;
  // Domain of the request the guide was authored for.
  std::optional<std::string> domain;
};

struct CompletionResponse {
  std::string text;
  ModelTier tier = ModelTier::Strong;
  std::optional<std::string> guide_id;
  // Unset while shadow inference for this request is still pending.
  std::optional<CaseOutcome> outcome;
  // Strong invocations made before this response was returned.
  std::uint32_t strong_calls_incurred = 0;
};

struct RarConfig {
  std::size_t embedding_dim = 384;
  double memory_sim_threshold = 0.2;
  double response_sim_threshold = 0.9;
  std::uint32_t max_fresh_guides = 2;
  std::uint64_t retry_period = 500;
  ComparatorStrategy comparator_strategy = ComparatorStrategy::ExactChoice;
  std::uint64_t rng_seed = 0;

  friend bool operator==(const RarConfig&, const RarConfig&) = default;
};

// Median pairwise cosine similarity measured on a legal-domain multiple-choice
// corpus with a 384-d sentence embedder. The default memory threshold (0.2)
// sits well below it to favour guide reuse over fresh generation.
inline constexpr double kReferenceCorpusMedianSimilarity = 0.442;

// Returns cfg unchanged, or throws RangeError naming the first bad field.
RarConfig validate_config(RarConfig cfg);

nlohmann::json config_to_json(const RarConfig& cfg);
// Unknown keys are rejected; missing keys keep their defaults. Validates.
RarConfig config_from_json(const nlohmann::json& j);
RarConfig load_config(const std::filesystem::path& path);
void save_config(const RarConfig& cfg, const std::filesystem::path& path);

// Monotonic "<prefix>-<n>" identifiers, unique within one generator.
class IdGenerator {
 public:
  explicit IdGenerator(std::string prefix) : prefix_(std::move(prefix)) {}
  std::string next() { return prefix_ + "-" + std::to_string(++counter_); }

 private:
  std::string prefix_;
  std::atomic<std::uint64_t> counter_{0};
};

// Whitespace-trimmed view helpers shared by several modules.
std::string_view trim(std::string_view s) noexcept;

}  // namespace rar
