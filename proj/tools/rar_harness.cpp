// rar-harness: offline experiments over a multiple-choice dataset.
//
//   rar-harness run --dataset d.jsonl --config c.json --out dir [--shuffles N]
//               [--stages T] [--seed S] [--baseline all|weak|strong|cot|oracle]
//               [--memory-out m.jsonl]
//   rar-harness cross-domain --memory m.jsonl --dataset d.jsonl --out dir [--config c.json]
//   rar-harness profile --dataset d.jsonl --out failing.jsonl [--config c.json]
//   rar-harness synth --count N --domain a --domain b --seed S --out d.jsonl

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "rar/harness.hpp"

namespace h = rar::harness;

namespace {

h::ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? h::ExperimentConfig{} : h::load_experiment_config(path);
}

int finish(const h::ExperimentReport& report, const std::string& out) {
  h::emit_report(report, out);
  if (!report.valid) {
    std::cerr << "run incomplete: " << report.error.value_or("unknown error") << "\n";
    return 1;
  }
  std::cout << "report written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RAR offline experiment harness"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off");

  std::string dataset, config_path, out, memory_path, memory_out;
  std::optional<std::size_t> shuffles, stages;
  std::optional<std::uint64_t> seed;
  std::string baseline = "all";

  auto* run = app.add_subcommand("run", "RAR against the baselines");
  run->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  run->add_option("--config", config_path)->check(CLI::ExistingFile);
  run->add_option("--out", out)->required();
  run->add_option("--shuffles", shuffles)->check(CLI::PositiveNumber);
  run->add_option("--stages", stages)->check(CLI::PositiveNumber);
  run->add_option("--seed", seed);
  run->add_option("--baseline", baseline)
      ->check(CLI::IsMember({"all", "none", "weak", "strong", "cot", "oracle"}));
  run->add_option("--memory-out", memory_out, "persist the first shuffle's final memory");

  auto* cross = app.add_subcommand("cross-domain", "replay a fixed guide memory");
  cross->add_option("--memory", memory_path)->required()->check(CLI::ExistingFile);
  cross->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  cross->add_option("--out", out)->required();
  cross->add_option("--config", config_path)->check(CLI::ExistingFile);

  auto* profile = app.add_subcommand("profile", "write the items the weak model fails alone");
  profile->add_option("--dataset", dataset)->required()->check(CLI::ExistingFile);
  profile->add_option("--out", out)->required();
  profile->add_option("--config", config_path)->check(CLI::ExistingFile);

  std::size_t count = 1000;
  std::vector<std::string> domains;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--count", count)->check(CLI::PositiveNumber);
  synth->add_option("--domain", domains)->required();
  synth->add_option("--seed", synth_seed);
  synth->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*run) {
      auto cfg = config_or_default(config_path);
      if (shuffles) cfg.shuffles = *shuffles;
      if (stages) cfg.stages = *stages;
      if (seed) cfg.seed = *seed;
      if (baseline == "none") {
        cfg.baselines.clear();
      } else if (baseline != "all") {
        cfg.baselines = {baseline};
      }
      const auto items = h::load_dataset(dataset);

      std::shared_ptr<rar::MemoryStore> first_memory;
      auto base = h::synthetic_engine_factory(cfg, h::answer_key(items));
      h::EngineFactory factory = [&](std::size_t shuffle) {
        auto engine = base(shuffle);
        if (shuffle == 0) first_memory = engine->memory_handle();
        return engine;
      };
      const auto report = h::run_experiment(cfg, items, factory);
      if (!memory_out.empty() && first_memory) first_memory->persist(memory_out);
      return finish(report, out);
    }
    if (*cross) {
      const auto cfg = config_or_default(config_path);
      const auto items = h::load_dataset(dataset);
      return finish(h::run_cross_domain(cfg, memory_path, items), out);
    }
    if (*profile) {
      const auto cfg = config_or_default(config_path);
      const auto items = h::load_dataset(dataset);
      rar::SyntheticFm weak(rar::ModelTier::Weak, cfg.weak, h::answer_key(items));
      const auto failing = h::profile_failing_subset(items, weak);
      h::save_dataset(out, failing);
      std::cout << failing.size() << " of " << items.size() << " items fail unaided\n";
      return 0;
    }
    if (*synth) {
      h::save_dataset(out, h::make_synthetic_dataset(count, domains, synth_seed));
      return 0;
    }
  } catch (const rar::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const rar::RangeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
