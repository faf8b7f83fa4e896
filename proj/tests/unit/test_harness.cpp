#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "rar/embedding.hpp"
#include "rar/harness.hpp"

using namespace rar;
using namespace rar::harness;
using nlohmann::json;

namespace {

// Reference SplitMix64, written out from its published constants.
struct RefSplitMix {
  std::uint64_t s;
  std::uint64_t next() {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
};

std::vector<std::size_t> ref_permutation(std::size_t n, std::uint64_t seed, std::size_t k) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  RefSplitMix rng{seed + 0x9e3779b97f4a7c15ULL * (k + 1)};
  for (std::size_t i = n - 1; i >= 1; --i) {
    std::swap(p[i], p[rng.next() % (i + 1)]);
  }
  return p;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.weak = {21, 0.2, 0.4, true};
  cfg.shuffles = 2;
  cfg.stages = 3;
  cfg.seed = 5;
  return cfg;
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

const std::vector<std::string> kDomains{"professional_law", "high_school_psychology",
                                        "moral_scenarios"};

}  // namespace

TEST(Permutation, MatchesReferenceShuffle) {
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(permutation(100, 42, k), ref_permutation(100, 42, k));
  }
  auto p = permutation(1000, 1, 0);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_EQ(p[i], i);
  EXPECT_NE(permutation(50, 1, 0), permutation(50, 1, 1));
  EXPECT_TRUE(permutation(0, 1, 0).empty());
}

TEST(ChiSquare, Examples) {
  const auto a = chi_square_2x2(10, 20, 20, 10);
  EXPECT_NEAR(a.statistic, 20.0 / 3.0, 1e-9);
  EXPECT_TRUE(a.significant_95);
  const auto b = chi_square_2x2(10, 10, 10, 10);
  EXPECT_EQ(b.statistic, 0.0);
  EXPECT_FALSE(b.significant_95);
  EXPECT_NEAR(chi_square_2x2(5, 0, 0, 5).statistic, 10.0, 1e-12);
  EXPECT_THROW(chi_square_2x2(0, 0, 3, 4), DegenerateTable);
  EXPECT_THROW(chi_square_2x2(1, 0, 3, 0), DegenerateTable);
}

TEST(ChiSquare, MatchesExpectedCountForm) {
  std::mt19937_64 rng(17);
  int checked = 0;
  while (checked < 1000) {
    const std::uint64_t a = rng() % 200, b = rng() % 200, c = rng() % 200, d = rng() % 200;
    if (a + b == 0 || c + d == 0 || a + c == 0 || b + d == 0) continue;
    EXPECT_NEAR(chi_square_2x2(a, b, c, d).statistic,
                oracle::chi_square_expected_form(a, b, c, d), 1e-9);
    ++checked;
  }
}

TEST(Dataset, RoundTripAndValidation) {
  const auto items = make_synthetic_dataset(20, kDomains, 3);
  std::stringstream buf;
  write_dataset(buf, items);
  EXPECT_EQ(read_dataset(buf), items);

  auto line_of = [](const std::string& text) -> std::size_t {
    std::stringstream in(text);
    try {
      read_dataset(in);
    } catch (const FormatError& e) {
      return e.line();
    }
    return 0;
  };
  std::stringstream good;
  write_dataset(good, std::span(items).first(2));
  EXPECT_EQ(line_of(good.str() + "{broken\n"), 3u);
  EXPECT_EQ(line_of(good.str() +
                    R"({"id":"z","question":"q?","choices":["a","b"],"answer_label":"C","domain":"d"})" +
                    "\n"),
            3u);
  EXPECT_EQ(line_of(good.str() + good.str()), 3u);  // duplicate id
}

TEST(Dataset, SyntheticCorpusShape) {
  const auto items = make_synthetic_dataset(300, kDomains, 9);
  EXPECT_EQ(items, make_synthetic_dataset(300, kDomains, 9));
  std::set<std::string> ids, questions;
  for (const auto& it : items) {
    ids.insert(it.id);
    questions.insert(it.question);
    EXPECT_EQ(it.choices.size(), 4u);
  }
  EXPECT_EQ(ids.size(), 300u);
  EXPECT_EQ(questions.size(), 300u);

  // Same-domain pairs sit closer than cross-domain pairs on average.
  FeatureHashEmbedder e;
  double same = 0, cross = 0;
  int n_same = 0, n_cross = 0;
  for (std::size_t i = 0; i < 60; ++i) {
    for (std::size_t j = i + 1; j < 60; ++j) {
      const double s = cosine_similarity(e.embed(items[i].question), e.embed(items[j].question));
      if (items[i].domain == items[j].domain) {
        same += s;
        ++n_same;
      } else {
        cross += s;
        ++n_cross;
      }
    }
  }
  EXPECT_GT(same / n_same, cross / n_cross + 0.1);
}

TEST(Dataset, ProfileFailingSubset) {
  const auto items = make_synthetic_dataset(200, kDomains, 1);
  const SyntheticProfile p{13, 0.4, 0.0, true};
  SyntheticFm weak(ModelTier::Weak, p, answer_key(items));
  const auto failing = profile_failing_subset(items, weak);
  std::size_t expected = 0;
  for (const auto& it : items) {
    if (!(draw1(p.seed, it.id) < p.p_alone)) ++expected;
  }
  EXPECT_EQ(failing.size(), expected);
}

TEST(ExperimentConfig, JsonRoundTrip) {
  auto cfg = small_config();
  cfg.baselines = {"weak", "oracle"};
  cfg.engine.retry_period = 123;
  const auto back = experiment_config_from_json(experiment_config_to_json(cfg));
  EXPECT_EQ(back.engine, cfg.engine);
  EXPECT_EQ(back.weak.seed, cfg.weak.seed);
  EXPECT_EQ(back.weak.p_guided, cfg.weak.p_guided);
  EXPECT_EQ(back.baselines, cfg.baselines);
  EXPECT_EQ(back.stages, cfg.stages);

  auto j = experiment_config_to_json(cfg);
  j["surprise"] = 1;
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
  j = experiment_config_to_json(cfg);
  j["baselines"] = {"bogus"};
  EXPECT_THROW(experiment_config_from_json(j), ConfigError);
  j = experiment_config_to_json(cfg);
  j["engine"]["memory_sim_threshold"] = 2.0;
  EXPECT_THROW(experiment_config_from_json(j), RangeError);
}

TEST(Experiment, EngineAgreesWithSimulationOracle) {
  const auto cfg = small_config();
  const auto items = make_synthetic_dataset(90, kDomains, 4);
  const auto report = run_experiment(cfg, items);
  ASSERT_TRUE(report.valid) << report.error.value_or("");
  ASSERT_EQ(report.shuffles.size(), cfg.shuffles);
  for (const auto& s : report.shuffles) {
    const auto expected =
        oracle::simulate_rar(cfg, items, permutation(items.size(), cfg.seed, s.shuffle_index));
    EXPECT_EQ(s.rar, expected) << "shuffle " << s.shuffle_index;
  }
}

TEST(Experiment, BaselineAccounting) {
  const auto cfg = small_config();
  const auto items = make_synthetic_dataset(90, kDomains, 4);
  const auto report = run_experiment(cfg, items);
  std::size_t weak_ok = 0;
  for (const auto& it : items) {
    if (draw1(cfg.weak.seed, it.id) < cfg.weak.p_alone) ++weak_ok;
  }
  for (const auto& s : report.shuffles) {
    for (const auto& m : s.baselines.at("strong")) {
      EXPECT_EQ(m.aligned, items.size());
      EXPECT_EQ(m.strong_calls, items.size());
    }
    for (const auto& m : s.baselines.at("weak")) {
      EXPECT_EQ(m.aligned, weak_ok);
      EXPECT_EQ(m.strong_calls, 0u);
    }
    for (const auto& m : s.baselines.at("cot")) EXPECT_EQ(m.aligned, weak_ok);
    for (const auto& m : s.baselines.at("oracle")) {
      EXPECT_EQ(m.aligned, items.size());
      EXPECT_EQ(m.strong_calls, items.size() - weak_ok);
    }
  }
}

TEST(Experiment, ReportIsDeterministic) {
  const auto cfg = small_config();
  const auto items = make_synthetic_dataset(60, kDomains, 8);
  EXPECT_EQ(run_experiment(cfg, items).to_json().dump(),
            run_experiment(cfg, items).to_json().dump());
}

TEST(Experiment, BackendFailureGivesPartialReport) {
  const auto cfg = small_config();
  const auto items = make_synthetic_dataset(30, kDomains, 8);
  class Down final : public FmClient {
   public:
    ModelTier tier() const noexcept override { return ModelTier::Strong; }
    std::string complete(PromptKind, const RequestRecord&, const Guide*) override {
      throw TransportError(ModelTier::Strong, "down");
    }
  };
  EngineFactory factory = [&](std::size_t) {
    return std::make_unique<Engine>(
        cfg.engine, std::make_shared<SyntheticFm>(ModelTier::Weak, cfg.weak),
        std::make_shared<Down>(), make_static_router({}),
        std::make_shared<FeatureHashEmbedder>(), nullptr);
  };
  const auto report = run_experiment(cfg, items, factory);
  EXPECT_FALSE(report.valid);
  ASSERT_TRUE(report.error);
  EXPECT_NE(report.error->find("down"), std::string::npos);
  EXPECT_FALSE(report.to_json()["valid"].get<bool>());
}

TEST(Report, CsvMeansMatchReportJson) {
  auto cfg = small_config();
  cfg.shuffles = 5;
  const auto items = make_synthetic_dataset(60, kDomains, 2);
  const auto dir = temp_dir("rar_harness_csv");
  emit_report(run_experiment(cfg, items), dir);

  json report;
  std::ifstream(dir / "report.json") >> report;
  const auto rows = read_csv(dir / "cumulative_aligned.csv");
  ASSERT_EQ(rows.size(), cfg.stages + 1);
  EXPECT_EQ(rows[0][0], "stage");
  EXPECT_EQ(rows[0][1], "rar_mean");
  EXPECT_EQ(rows[0][2], "rar_std");
  for (std::size_t t = 0; t < cfg.stages; ++t) {
    std::vector<double> cum;
    for (const auto& s : report["shuffles"]) {
      double acc = 0;
      for (std::size_t i = 0; i <= t; ++i) acc += s["rar"][i]["aligned"].get<double>();
      cum.push_back(acc);
    }
    double mean = 0;
    for (double x : cum) mean += x;
    mean /= static_cast<double>(cum.size());
    double var = 0;
    for (double x : cum) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(cum.size()));
    EXPECT_NEAR(std::stod(rows[t + 1][1]), mean, 1e-9);
    EXPECT_NEAR(std::stod(rows[t + 1][2]), sd, 1e-9);
  }

  const auto guides = read_csv(dir / "guide_source_per_stage.csv");
  EXPECT_EQ(guides[0], (std::vector<std::string>{"stage", "fresh_mean", "fresh_std",
                                                 "from_memory_mean", "from_memory_std"}));
  EXPECT_EQ(guides.size(), cfg.stages + 1);
  std::filesystem::remove_all(dir);
}

TEST(Report, EmptyReportWritesHeadersOnly) {
  ExperimentReport empty;
  empty.config.baselines = {"weak"};
  const auto dir = temp_dir("rar_harness_empty");
  emit_report(empty, dir);
  const auto rows = read_csv(dir / "cumulative_strong_calls.csv");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"stage", "rar_mean", "rar_std", "weak_mean",
                                               "weak_std"}));
  std::filesystem::remove_all(dir);
}

TEST(Report, ChiSquareSectionFlagsDegenerateTables) {
  const auto cfg = small_config();
  const auto items = make_synthetic_dataset(30, kDomains, 2);
  const auto j = run_experiment(cfg, items).to_json();
  bool saw_degenerate = false;
  for (const auto& c : j["chi_square"]) {
    // Strong and RAR are both fully aligned: the aligned table has an empty column.
    if (c["baseline"] == "strong" && c["metric"] == "aligned") {
      EXPECT_TRUE(c["degenerate"].get<bool>());
      EXPECT_TRUE(c["statistic"].is_null());
      saw_degenerate = true;
    }
  }
  EXPECT_TRUE(saw_degenerate);
}

TEST(CrossDomain, OutOfDomainMemoryIsInert) {
  auto cfg = small_config();
  const std::vector<std::string> source_domain{"professional_law"};
  const std::vector<std::string> target_domain{"moral_scenarios"};
  const auto source = make_synthetic_dataset(60, source_domain, 1);
  auto target = make_synthetic_dataset(60, target_domain, 2);
  for (auto& it : target) it.id = "t-" + it.id;

  // Build a guide memory on the source domain.
  std::shared_ptr<MemoryStore> memory;
  auto base = synthetic_engine_factory(cfg, answer_key(source));
  run_experiment(cfg, source, [&](std::size_t k) {
    auto e = base(k);
    if (k == 0) memory = e->memory_handle();
    return e;
  });
  ASSERT_TRUE(memory);
  const auto path = std::filesystem::temp_directory_path() / "rar_cross_source.jsonl";
  memory->persist(path);

  const auto out = run_cross_domain(cfg, path, target);
  ASSERT_TRUE(out.valid) << out.error.value_or("");
  for (const auto& s : out.shuffles) {
    for (std::size_t t = 0; t < s.rar.size(); ++t) {
      EXPECT_EQ(s.rar[t].weak_aligned, s.baselines.at("weak")[t].aligned);
    }
  }
  const auto in = run_cross_domain(cfg, path, source);
  ASSERT_TRUE(in.valid);
  for (const auto& s : in.shuffles) {
    for (std::size_t t = 0; t < s.rar.size(); ++t) {
      EXPECT_GT(s.rar[t].weak_aligned, s.baselines.at("weak")[t].aligned);
    }
  }
  EXPECT_TRUE(in.to_json().contains("cross_domain"));
  std::filesystem::remove(path);
}
