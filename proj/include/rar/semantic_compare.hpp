#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "rar/core.hpp"
#include "rar/embedding.hpp"
#include "rar/fm_backends.hpp"

namespace rar {

struct SimilarityVerdict {
  bool similar = false;
  std::optional<double> score;  // VectorThreshold only
  ComparatorStrategy strategy = ComparatorStrategy::ExactChoice;
};

// Label of the answer a response commits to.
//
// Patterns, highest priority first; within a pattern the last occurrence wins:
//   1. "answer is X" / "Answer: X" (X a valid option letter)
//   2. an option letter alone on its own line
//   3. the verbatim text of a choice
// Throws ChoiceExtractionError when nothing matches.
std::string extract_choice(std::string_view text, std::span<const std::string> choices);

// Binary alignment decision between two responses.
class SemanticComparator {
 public:
  // `judge` is only required for the JudgeClient strategy.
  SemanticComparator(RarConfig cfg, std::shared_ptr<const Embedder> embedder,
                     std::shared_ptr<FmClient> judge = {});

  SimilarityVerdict compare(std::string_view a, std::string_view b,
                            std::optional<std::span<const std::string>> choices = {}) const;
  SimilarityVerdict compare(std::string_view a, std::string_view b, ComparatorStrategy strategy,
                            std::optional<std::span<const std::string>> choices = {}) const;

 private:
  RarConfig cfg_;
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<FmClient> judge_;
};

}  // namespace rar
