#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rar {

enum class ModelTier { Weak, Strong };

enum class ComparatorStrategy { VectorThreshold, JudgeClient, ExactChoice };

enum class GuideSource { FreshFromStrong, FromMemory };

enum class EntryFlag { SolvedAlone, SolvedWithGuide, RequiresStrong };

// How a request was ultimately served or evaluated.
enum class CaseKind {
  StaticWeak,
  MemoryDirectWeak,
  MemoryGuidedWeak,
  MemoryForcedStrong,
  Case1SolvedAlone,
  Case2SolvedWithGuide,
  Case3Failed,
};

using Embedding = std::vector<double>;

struct CaseOutcome {
  CaseKind kind = CaseKind::StaticWeak;
  std::optional<GuideSource> guide_source;
  std::uint32_t strong_calls = 0;

  friend bool operator==(const CaseOutcome&, const CaseOutcome&) = default;
};

std::string_view to_string(ModelTier tier) noexcept;
std::string_view to_string(ComparatorStrategy s) noexcept;
std::string_view to_string(GuideSource s) noexcept;
std::string_view to_string(EntryFlag f) noexcept;
std::string_view to_string(CaseKind k) noexcept;

// Inverse of to_string; throw ConfigError on an unknown name.
ModelTier parse_model_tier(std::string_view s);
ComparatorStrategy parse_comparator_strategy(std::string_view s);
EntryFlag parse_entry_flag(std::string_view s);
CaseKind parse_case_kind(std::string_view s);

// True for outcomes where shadow inference ran.
constexpr bool is_shadow_case(CaseKind k) noexcept {
  return k == CaseKind::Case1SolvedAlone || k == CaseKind::Case2SolvedWithGuide ||
         k == CaseKind::Case3Failed;
}

}  // namespace rar
