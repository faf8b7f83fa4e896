#include "rar/gateway.hpp"

#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

namespace rar {

namespace {

constexpr const char* kJson = "application/json";

void reply_error(httplib::Response& res, int status, const std::string& message,
                 std::optional<ModelTier> failed_tier = std::nullopt) {
  nlohmann::json body = {{"error", message}};
  if (failed_tier) body["failed_tier"] = std::string(to_string(*failed_tier));
  res.status = status;
  res.set_content(body.dump(), kJson);
}

}  // namespace

RequestRecord parse_complete_body(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvariantViolation(std::string("body is not JSON: ") + e.what());
  }
  if (!j.is_object()) throw InvariantViolation("body must be a JSON object");
  RequestRecord r;
  try {
    if (auto it = j.find("id"); it != j.end() && !it->is_null()) r.id = it->get<std::string>();
    r.text = j.at("text").get<std::string>();
    if (auto it = j.find("domain"); it != j.end() && !it->is_null()) {
      r.domain = it->get<std::string>();
    }
    if (auto it = j.find("choices"); it != j.end() && !it->is_null()) {
      r.choices = it->get<std::vector<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvariantViolation(std::string("bad field: ") + e.what());
  }
  validate_request(r, 0);
  return r;
}

struct Gateway::Impl {
  httplib::Server server;
  std::thread thread;
};

Gateway::Gateway(std::shared_ptr<Engine> engine, GatewayOptions options)
    : engine_(std::move(engine)), impl_(std::make_unique<Impl>()) {
  if (!engine_) throw InvariantViolation("gateway needs an engine");
  auto& srv = impl_->server;
  Engine* eng = engine_.get();

  srv.Post("/v1/complete", [eng](const httplib::Request& req, httplib::Response& res) {
    RequestRecord request;
    try {
      request = parse_complete_body(req.body);
    } catch (const Error& e) {
      reply_error(res, 400, e.what());
      return;
    }
    try {
      const CompletionResponse r = eng->handle(std::move(request));
      nlohmann::json body = {
          {"text", r.text},
          {"tier", std::string(to_string(r.tier))},
          {"case", r.outcome ? std::string(to_string(r.outcome->kind)) : "shadow_pending"},
      };
      if (r.guide_id) body["guide_id"] = *r.guide_id;
      res.set_content(body.dump(), kJson);
    } catch (const TransportError& e) {
      reply_error(res, 502, e.what(), e.tier());
    } catch (const Error& e) {
      reply_error(res, 400, e.what());
    }
  });

  srv.Get("/v1/stats", [eng](const httplib::Request&, httplib::Response& res) {
    res.set_content(stats_to_json(eng->stats()).dump(), kJson);
  });

  srv.Post("/v1/drain", [eng, options](const httplib::Request&, httplib::Response& res) {
    if (!eng->quiesce(options.drain_timeout)) {
      reply_error(res, 503, "drain timed out");
      return;
    }
    if (options.memory_path) {
      try {
        eng->memory().persist(*options.memory_path);
      } catch (const Error& e) {
        spdlog::error("persisting memory failed: {}", e.what());
      }
    }
    res.set_content(nlohmann::json{{"drained", true}}.dump(), kJson);
  });

  srv.Get("/v1/memory/export", [eng](const httplib::Request&, httplib::Response& res) {
    std::ostringstream out;
    eng->memory().write(out);
    res.set_content(out.str(), "application/x-ndjson");
  });
}

Gateway::~Gateway() { stop(); }

int Gateway::start(const std::string& host, int port) {
  auto& srv = impl_->server;
  int bound = port;
  if (port == 0) {
    bound = srv.bind_to_any_port(host);
  } else if (!srv.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void Gateway::run(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) {
    throw IoError("cannot listen on " + host + ":" + std::to_string(port));
  }
}

void Gateway::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace rar
