#include "rar/core.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <set>
#include <utility>

namespace rar {

namespace {

constexpr std::array<std::pair<ModelTier, std::string_view>, 2> kTiers{{
    {ModelTier::Weak, "weak"},
    {ModelTier::Strong, "strong"},
}};

constexpr std::array<std::pair<ComparatorStrategy, std::string_view>, 3> kStrategies{{
    {ComparatorStrategy::VectorThreshold, "vector_threshold"},
    {ComparatorStrategy::JudgeClient, "judge_client"},
    {ComparatorStrategy::ExactChoice, "exact_choice"},
}};

constexpr std::array<std::pair<EntryFlag, std::string_view>, 3> kFlags{{
    {EntryFlag::SolvedAlone, "solved_alone"},
    {EntryFlag::SolvedWithGuide, "solved_with_guide"},
    {EntryFlag::RequiresStrong, "requires_strong"},
}};

constexpr std::array<std::pair<CaseKind, std::string_view>, 7> kCases{{
    {CaseKind::StaticWeak, "static_weak"},
    {CaseKind::MemoryDirectWeak, "memory_direct_weak"},
    {CaseKind::MemoryGuidedWeak, "memory_guided_weak"},
    {CaseKind::MemoryForcedStrong, "memory_forced_strong"},
    {CaseKind::Case1SolvedAlone, "case1_solved_alone"},
    {CaseKind::Case2SolvedWithGuide, "case2_solved_with_guide"},
    {CaseKind::Case3Failed, "case3_failed"},
}};

template <typename Table, typename E>
std::string_view name_of(const Table& table, E value) noexcept {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return "?";
}

template <typename Table>
auto value_of(const Table& table, std::string_view name, const char* what) {
  for (const auto& [v, n] : table) {
    if (n == name) return v;
  }
  throw ConfigError(std::string("unknown ") + what + ": " + std::string(name));
}

bool in_unit_interval(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

std::string_view to_string(ModelTier tier) noexcept { return name_of(kTiers, tier); }
std::string_view to_string(ComparatorStrategy s) noexcept { return name_of(kStrategies, s); }
std::string_view to_string(GuideSource s) noexcept {
  return s == GuideSource::FromMemory ? "from_memory" : "fresh_from_strong";
}
std::string_view to_string(EntryFlag f) noexcept { return name_of(kFlags, f); }
std::string_view to_string(CaseKind k) noexcept { return name_of(kCases, k); }

ModelTier parse_model_tier(std::string_view s) { return value_of(kTiers, s, "model tier"); }
ComparatorStrategy parse_comparator_strategy(std::string_view s) {
  return value_of(kStrategies, s, "comparator strategy");
}
EntryFlag parse_entry_flag(std::string_view s) { return value_of(kFlags, s, "entry flag"); }
CaseKind parse_case_kind(std::string_view s) { return value_of(kCases, s, "case kind"); }

std::string_view trim(std::string_view s) noexcept {
  constexpr std::string_view ws = " \t\r\n\f\v";
  const auto first = s.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(ws);
  return s.substr(first, last - first + 1);
}

void validate_request(const RequestRecord& request, std::size_t dimension) {
  if (trim(request.text).empty()) throw EmptyText();
  if (request.choices) {
    const auto& choices = *request.choices;
    if (choices.size() < 2) throw InvariantViolation("choices must have at least 2 entries");
    if (choices.size() > 26) throw InvariantViolation("at most 26 choices are supported");
    std::set<std::string> seen(choices.begin(), choices.end());
    if (seen.size() != choices.size()) throw InvariantViolation("choices must be distinct");
  }
  if (request.embedding) {
    const auto& e = *request.embedding;
    if (e.size() != dimension) throw DimensionMismatch(dimension, e.size());
    double sq = 0.0;
    for (double v : e) sq += v * v;
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6) {
      throw InvariantViolation("cached embedding is not unit-normalized");
    }
  }
}

RarConfig validate_config(RarConfig cfg) {
  if (cfg.embedding_dim < 1) throw RangeError("embedding_dim");
  if (!in_unit_interval(cfg.memory_sim_threshold)) throw RangeError("memory_sim_threshold");
  if (!in_unit_interval(cfg.response_sim_threshold)) throw RangeError("response_sim_threshold");
  if (cfg.max_fresh_guides < 1) throw RangeError("max_fresh_guides");
  if (cfg.retry_period < 1) throw RangeError("retry_period");
  return cfg;
}

nlohmann::json config_to_json(const RarConfig& cfg) {
  return {
      {"embedding_dim", cfg.embedding_dim},
      {"memory_sim_threshold", cfg.memory_sim_threshold},
      {"response_sim_threshold", cfg.response_sim_threshold},
      {"max_fresh_guides", cfg.max_fresh_guides},
      {"retry_period", cfg.retry_period},
      {"comparator_strategy", std::string(to_string(cfg.comparator_strategy))},
      {"rng_seed", cfg.rng_seed},
  };
}

RarConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RarConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "embedding_dim") {
        cfg.embedding_dim = value.get<std::size_t>();
      } else if (key == "memory_sim_threshold") {
        cfg.memory_sim_threshold = value.get<double>();
      } else if (key == "response_sim_threshold") {
        cfg.response_sim_threshold = value.get<double>();
      } else if (key == "max_fresh_guides") {
        cfg.max_fresh_guides = value.get<std::uint32_t>();
      } else if (key == "retry_period") {
        cfg.retry_period = value.get<std::uint64_t>();
      } else if (key == "comparator_strategy") {
        cfg.comparator_strategy = parse_comparator_strategy(value.get<std::string>());
      } else if (key == "rng_seed") {
        cfg.rng_seed = value.get<std::uint64_t>();
      } else {
        throw ConfigError("unknown config key: " + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return validate_config(cfg);
}

RarConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const RarConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << config_to_json(cfg).dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace rar
