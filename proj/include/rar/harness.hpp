#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rar/core.hpp"
#include "rar/engine.hpp"
#include "rar/fm_backends.hpp"

namespace rar::harness {

struct DatasetItem {
  std::string id;
  std::string question;
  std::vector<std::string> choices;
  std::string answer_label;
  std::string domain;

  friend bool operator==(const DatasetItem&, const DatasetItem&) = default;
};

// Line-delimited JSON with fields id, question, choices, answer_label, domain.
// Throws FormatError naming the 1-based line.
std::vector<DatasetItem> read_dataset(std::istream& in);
std::vector<DatasetItem> load_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& out, std::span<const DatasetItem> items);
void save_dataset(const std::filesystem::path& path, std::span<const DatasetItem> items);

RequestRecord to_request(const DatasetItem& item);
std::shared_ptr<const AnswerKey> answer_key(std::span<const DatasetItem> items);

// Deterministic multiple-choice corpus. Questions in the same domain share
// vocabulary, so they sit closer to each other in feature-hash space than to
// other domains.
std::vector<DatasetItem> make_synthetic_dataset(std::size_t count,
                                                std::span<const std::string> domains,
                                                std::uint64_t seed);

// Items whose weak direct answer does not extract to the reference label.
// Unparseable answers count as failing.
std::vector<DatasetItem> profile_failing_subset(std::span<const DatasetItem> items,
                                                FmClient& weak);

// Seeded Fisher-Yates: for i = n-1 .. 1, j = next() % (i + 1), swap(i, j),
// with SplitMix64 seeded by seed + 0x9e3779b97f4a7c15 * (shuffle_index + 1).
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed,
                                     std::size_t shuffle_index);

struct ChiSquareResult {
  double statistic = 0.0;
  bool significant_95 = false;
};

// df = 1 critical value at 95%.
inline constexpr double kChiSquareCritical95 = 3.841459;

// Uncorrected Pearson statistic of the table [[a, b], [c, d]].
// Throws DegenerateTable when a row or column sums to zero.
ChiSquareResult chi_square_2x2(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                               std::uint64_t d);

struct StageMetrics {
  std::size_t stage_index = 0;
  std::size_t samples = 0;
  // Served response matches the strong reference.
  std::size_t aligned = 0;
  // Weak tier produced an aligned answer, served or during shadow inference.
  std::size_t weak_aligned = 0;
  std::size_t strong_served = 0;
  std::size_t strong_calls = 0;
  // Aligned responses produced with a memory guide / a freshly generated one.
  std::size_t guides_from_memory = 0;
  std::size_t guides_fresh = 0;
  std::size_t case1 = 0;
  std::size_t case2 = 0;
  std::size_t case3 = 0;
  std::size_t static_weak = 0;
  std::size_t memory_direct = 0;
  std::size_t memory_guided = 0;
  std::size_t memory_forced = 0;

  friend bool operator==(const StageMetrics&, const StageMetrics&) = default;
};

nlohmann::json stage_to_json(const StageMetrics& m);
StageMetrics stage_from_json(const nlohmann::json& j);

inline const std::vector<std::string> kAllBaselines{"weak", "strong", "cot", "oracle"};

struct ExperimentConfig {
  RarConfig engine;
  SyntheticProfile weak;
  SyntheticProfile strong;
  std::size_t shuffles = 5;
  std::size_t stages = 5;
  std::uint64_t seed = 0;
  // Stage 1 only probes the weak tier alone; guides activate from stage 2.
  bool profiling_stage = true;
  std::vector<std::string> baselines = kAllBaselines;
};

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
// Keys: "engine" (a RarConfig object), "weak", "strong" (synthetic profiles),
// "shuffles", "stages", "seed", "profiling_stage", "baselines". Unknown keys
// are rejected.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct ShuffleResult {
  std::size_t shuffle_index = 0;
  std::vector<StageMetrics> rar;
  std::map<std::string, std::vector<StageMetrics>> baselines;
};

struct ExperimentReport {
  std::string mode = "rar";
  ExperimentConfig config;
  std::size_t items = 0;
  std::vector<ShuffleResult> shuffles;
  bool valid = true;
  std::optional<std::string> error;

  nlohmann::json to_json() const;
};

// Builds a fresh engine for one shuffle.
using EngineFactory = std::function<std::unique_ptr<Engine>(std::size_t shuffle_index)>;

// Engine over synthetic weak/strong models answering from `key`.
EngineFactory synthetic_engine_factory(const ExperimentConfig& cfg,
                                       std::shared_ptr<const AnswerKey> key,
                                       EngineOptions options = {});

// Runs S shuffles x T stages of RAR plus the configured baselines. A backend
// failure stops the run and returns a partial report with valid = false.
// An empty factory uses synthetic_engine_factory.
ExperimentReport run_experiment(const ExperimentConfig& cfg, std::span<const DatasetItem> items,
                                EngineFactory factory = {});

// Replays target items against a fixed guide memory loaded from
// `guide_memory_path` (only entries carrying a guide are kept). Fresh guide
// generation is off, memory is frozen and the memory threshold is 0.1.
ExperimentReport run_cross_domain(const ExperimentConfig& cfg,
                                  const std::filesystem::path& guide_memory_path,
                                  std::span<const DatasetItem> target_items);

// Writes report.json, cumulative_aligned.csv, cumulative_strong_calls.csv and
// guide_source_per_stage.csv (means and population std-devs across shuffles).
void emit_report(const ExperimentReport& report, const std::filesystem::path& dir);

}  // namespace rar::harness
