#include <sstream>

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rar/embedding.hpp"
#include "rar/gateway.hpp"

using namespace rar;
using nlohmann::json;

namespace {

class DownStrong final : public FmClient {
 public:
  ModelTier tier() const noexcept override { return ModelTier::Strong; }
  std::string complete(PromptKind, const RequestRecord&, const Guide*) override {
    throw TransportError(ModelTier::Strong, "connection refused");
  }
};

std::shared_ptr<Engine> make_engine(StaticRouterSpec router = {},
                                    std::shared_ptr<FmClient> strong = {},
                                    std::shared_ptr<MemoryStore> memory = {}) {
  auto weak = std::make_shared<SyntheticFm>(ModelTier::Weak, SyntheticProfile{2, 0.5, 0.3, true});
  if (!strong) strong = std::make_shared<SyntheticFm>(ModelTier::Strong, SyntheticProfile{});
  return std::make_shared<Engine>(RarConfig{}, weak, strong, make_static_router(router),
                                  std::make_shared<FeatureHashEmbedder>(), std::move(memory));
}

json body_for(int i) {
  return {{"id", "g-" + std::to_string(i)},
          {"text", "Gateway question " + std::to_string(i) + " about contracts"},
          {"domain", "law"},
          {"choices", {"yes", "no", "maybe", "never"}}};
}

struct Served {
  explicit Served(std::shared_ptr<Engine> engine, GatewayOptions options = {})
      : gateway(std::move(engine), options) {
    port = gateway.start("127.0.0.1", 0);
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
  Gateway gateway;
  int port = 0;
};

}  // namespace

TEST(Gateway, FreshStatsAreZero) {
  Served s(make_engine());
  auto c = s.client();
  auto res = c.Get("/v1/stats");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto stats = json::parse(res->body);
  for (const auto& [key, value] : stats.items()) EXPECT_EQ(value, 0) << key;
}

TEST(Gateway, WeakRouterServesWeak) {
  Served s(make_engine({StaticRouterSpec::Kind::AlwaysWeak, {}, {}}));
  auto c = s.client();
  auto res = c.Post("/v1/complete", body_for(1).dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  const auto j = json::parse(res->body);
  EXPECT_EQ(j["tier"], "weak");
  EXPECT_EQ(j["case"], "static_weak");
}

TEST(Gateway, MalformedBodiesAre400) {
  Served s(make_engine());
  auto c = s.client();
  for (const std::string body : {"not json", R"({"text": "   "})", R"({"id": "x"})",
                                 R"({"text": "q", "choices": ["only"]})", R"([1,2])"}) {
    auto res = c.Post("/v1/complete", body, "application/json");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400) << body;
    EXPECT_TRUE(json::parse(res->body).contains("error"));
  }
}

TEST(Gateway, StrongOutageIs502WithTier) {
  Served s(make_engine({}, std::make_shared<DownStrong>()));
  auto c = s.client();
  auto res = c.Post("/v1/complete", body_for(1).dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 502);
  EXPECT_EQ(json::parse(res->body)["failed_tier"], "strong");
}

TEST(Gateway, DrainCompletesShadowWork) {
  Served s(make_engine());
  auto c = s.client();
  auto res = c.Post("/v1/complete", body_for(1).dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["tier"], "strong");
  auto drained = c.Post("/v1/drain", "", "application/json");
  ASSERT_TRUE(drained);
  EXPECT_EQ(json::parse(drained->body)["drained"], true);
  const auto stats = json::parse(c.Get("/v1/stats")->body);
  EXPECT_EQ(stats["shadow_completed"], 1);
}

TEST(Gateway, EmptyExportIsEmptyBody) {
  Served s(make_engine());
  auto c = s.client();
  auto res = c.Get("/v1/memory/export");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_TRUE(res->body.empty());
}

TEST(Gateway, ExportMatchesPersistenceAndReloads) {
  auto engine = make_engine();
  Served s(engine);
  auto c = s.client();
  std::vector<std::string> case1_ids;
  for (int i = 0; i < 30; ++i) {
    auto res = c.Post("/v1/complete", body_for(i).dump(), "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200);
  }
  ASSERT_EQ(c.Post("/v1/drain", "", "application/json")->status, 200);
  const auto stats = json::parse(c.Get("/v1/stats")->body);
  EXPECT_EQ(stats["weak_served"].get<int>() + stats["strong_served"].get<int>(),
            stats["total_requests"].get<int>());
  EXPECT_EQ(stats["guides_from_memory"].get<int>() + stats["guides_fresh"].get<int>(),
            stats["case2_count"].get<int>());

  const auto exported = c.Get("/v1/memory/export")->body;
  std::ostringstream direct;
  engine->memory().write(direct);
  EXPECT_EQ(exported, direct.str());

  std::istringstream in(exported);
  auto reloaded = std::make_shared<MemoryStore>(MemoryStore::read(in, 384));
  EXPECT_EQ(reloaded->entries(), engine->memory().entries());
}

TEST(Gateway, DrainPersistsMemory) {
  const auto path = std::filesystem::temp_directory_path() / "rar_gateway_drain.jsonl";
  std::filesystem::remove(path);
  GatewayOptions options;
  options.memory_path = path;
  auto engine = make_engine();
  Served s(engine, options);
  auto c = s.client();
  c.Post("/v1/complete", body_for(1).dump(), "application/json");
  ASSERT_EQ(c.Post("/v1/drain", "", "application/json")->status, 200);
  EXPECT_EQ(MemoryStore::load(path, 384).entries(), engine->memory().entries());
  std::filesystem::remove(path);
}

TEST(Gateway, ParseCompleteBody) {
  const auto r = parse_complete_body(R"({"text": "hi there", "domain": null})");
  EXPECT_EQ(r.text, "hi there");
  EXPECT_FALSE(r.domain);
  EXPECT_THROW(parse_complete_body(R"({"text": 5})"), InvariantViolation);
  EXPECT_THROW(parse_complete_body(R"({"text": ""})"), EmptyText);
}
