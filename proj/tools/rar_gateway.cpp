// rar-gateway: serves the adaptive router over HTTP.
//
// Backends are either OpenAI-style chat endpoints (--weak-url/--strong-url) or,
// with --synthetic-dataset, deterministic synthetic models answering from the
// dataset's answer key.

#include <csignal>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "rar/gateway.hpp"
#include "rar/harness.hpp"

namespace {

rar::Gateway* g_gateway = nullptr;

void on_signal(int) {
  if (g_gateway != nullptr) g_gateway->stop();
}

std::pair<std::string, int> split_listen(const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw rar::ConfigError("--listen expects host:port");
  return {listen.substr(0, colon), std::stoi(listen.substr(colon + 1))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RAR gateway"};

  std::string listen = "127.0.0.1:8080";
  std::string config_path, memory_path, log_level = "info";
  app.add_option("--listen", listen, "host:port")->envname("RAR_LISTEN");
  app.add_option("--config", config_path, "RarConfig JSON")->envname("RAR_CONFIG");
  app.add_option("--memory", memory_path, "memory file, loaded at start and written on drain")
      ->envname("RAR_MEMORY");
  app.add_option("--log-level", log_level)->envname("RAR_LOG_LEVEL");

  std::string weak_url, strong_url, weak_model = "weak", strong_model = "strong", api_key;
  std::size_t max_in_flight = 8;
  app.add_option("--weak-url", weak_url)->envname("RAR_WEAK_URL");
  app.add_option("--strong-url", strong_url)->envname("RAR_STRONG_URL");
  app.add_option("--weak-model", weak_model)->envname("RAR_WEAK_MODEL");
  app.add_option("--strong-model", strong_model)->envname("RAR_STRONG_MODEL");
  app.add_option("--api-key", api_key)->envname("RAR_API_KEY");
  app.add_option("--max-in-flight", max_in_flight)->check(CLI::PositiveNumber);

  std::string synthetic_dataset;
  rar::SyntheticProfile weak_profile{.seed = 0, .p_alone = 0.6, .p_guided = 0.3};
  app.add_option("--synthetic-dataset", synthetic_dataset)->check(CLI::ExistingFile);
  app.add_option("--p-alone", weak_profile.p_alone)->check(CLI::Range(0.0, 1.0));
  app.add_option("--p-guided", weak_profile.p_guided)->check(CLI::Range(0.0, 1.0));
  app.add_option("--synthetic-seed", weak_profile.seed);
  app.add_option("--domain-strict", weak_profile.domain_strict);

  std::string router = "always_strong", router_url, judge_url, embedder_url;
  app.add_option("--router", router)
      ->check(CLI::IsMember({"always_strong", "always_weak", "external"}));
  app.add_option("--router-url", router_url)->envname("RAR_ROUTER_URL");
  app.add_option("--judge-url", judge_url, "chat endpoint for the judge comparator")
      ->envname("RAR_JUDGE_URL");
  app.add_option("--embedder-url", embedder_url)->envname("RAR_EMBEDDER_URL");

  std::size_t shadow_workers = 1;
  int drain_timeout_ms = 30000;
  app.add_option("--shadow-workers", shadow_workers)->check(CLI::PositiveNumber);
  app.add_option("--drain-timeout-ms", drain_timeout_ms)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    const rar::RarConfig cfg = config_path.empty() ? rar::RarConfig{} : rar::load_config(config_path);

    std::shared_ptr<rar::FmClient> weak, strong, judge;
    if (!synthetic_dataset.empty()) {
      const auto key = rar::harness::answer_key(rar::harness::load_dataset(synthetic_dataset));
      rar::validate_profile(weak_profile);
      weak = std::make_shared<rar::SyntheticFm>(rar::ModelTier::Weak, weak_profile, key);
      strong = std::make_shared<rar::SyntheticFm>(rar::ModelTier::Strong, rar::SyntheticProfile{},
                                                  key);
    } else {
      if (weak_url.empty() || strong_url.empty()) {
        throw rar::ConfigError("need --weak-url and --strong-url, or --synthetic-dataset");
      }
      auto spec = [&](const std::string& url, const std::string& model) {
        rar::HttpChatSpec s;
        s.endpoint = url;
        s.model = model;
        if (!api_key.empty()) s.api_key = api_key;
        s.max_in_flight = max_in_flight;
        return s;
      };
      weak = std::make_shared<rar::HttpChatClient>(rar::ModelTier::Weak, spec(weak_url, weak_model));
      strong = std::make_shared<rar::HttpChatClient>(rar::ModelTier::Strong,
                                                     spec(strong_url, strong_model));
    }
    if (!judge_url.empty()) {
      rar::HttpChatSpec s;
      s.endpoint = judge_url;
      s.model = strong_model;
      if (!api_key.empty()) s.api_key = api_key;
      judge = std::make_shared<rar::HttpChatClient>(rar::ModelTier::Strong, s);
    }

    rar::StaticRouterSpec router_spec;
    if (router == "always_weak") {
      router_spec.kind = rar::StaticRouterSpec::Kind::AlwaysWeak;
    } else if (router == "external") {
      if (router_url.empty()) throw rar::ConfigError("--router external needs --router-url");
      router_spec.kind = rar::StaticRouterSpec::Kind::External;
      router_spec.endpoint = router_url;
    }

    rar::EmbedderSpec embedder_spec;
    if (!embedder_url.empty()) {
      embedder_spec.kind = rar::EmbedderSpec::Kind::ExternalService;
      embedder_spec.endpoint = embedder_url;
    }
    std::shared_ptr<const rar::Embedder> embedder =
        rar::make_embedder(embedder_spec, cfg.embedding_dim);

    auto memory = std::make_shared<rar::MemoryStore>(cfg.embedding_dim);
    if (!memory_path.empty() && std::filesystem::exists(memory_path)) {
      *memory = rar::MemoryStore::load(memory_path, cfg.embedding_dim);
      spdlog::info("loaded {} memory entries from {}", memory->size(), memory_path);
    }

    rar::EngineOptions options;
    options.shadow_workers = shadow_workers;
    auto engine = std::make_shared<rar::Engine>(cfg, weak, strong,
                                                rar::make_static_router(router_spec), embedder,
                                                memory, options, judge);

    rar::GatewayOptions gw_options;
    gw_options.drain_timeout = std::chrono::milliseconds(drain_timeout_ms);
    if (!memory_path.empty()) gw_options.memory_path = memory_path;
    rar::Gateway gateway(engine, gw_options);

    g_gateway = &gateway;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    const auto [host, port] = split_listen(listen);
    spdlog::info("listening on {}:{}", host, port);
    gateway.run(host, port);

    engine->quiesce(gw_options.drain_timeout);
    if (gw_options.memory_path) memory->persist(*gw_options.memory_path);
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
