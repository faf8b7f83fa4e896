#pragma once

// Independent reference implementations used to check the library.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "rar/harness.hpp"
#include "rar/memory.hpp"

namespace rar::oracle {

// Textbook cosine: sum of products over the product of the two norms.
double dense_cosine(const std::vector<double>& a, const std::vector<double>& b);

struct BruteHit {
  std::string id;
  double score = 0.0;
};

// Linear scan for the best entry at or above `threshold`; later-created wins ties.
std::optional<BruteHit> brute_top1(const std::vector<MemoryEntry>& entries,
                                   const std::vector<double>& q, double threshold,
                                   const std::set<EntryFlag>& flags);

// Pearson statistic from expected counts: sum over cells of (O - E)^2 / E.
double chi_square_expected_form(double a, double b, double c, double d);

// Step-by-step replay of the adaptive routing protocol on synthetic models,
// written against the behavioural description only (no Engine, no
// MemoryStore, no SyntheticFm). Returns per-stage metrics for one shuffle.
std::vector<harness::StageMetrics> simulate_rar(const harness::ExperimentConfig& cfg,
                                                const std::vector<harness::DatasetItem>& items,
                                                const std::vector<std::size_t>& order);

}  // namespace rar::oracle
