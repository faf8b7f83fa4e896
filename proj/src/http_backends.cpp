// HTTP-backed implementations: chat-completion client, external embedder and
// external static router. Kept in one translation unit so only this file pays
// for cpp-httplib.

#include <algorithm>
#include <semaphore>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rar/embedding.hpp"
#include "rar/engine.hpp"
#include "rar/fm_backends.hpp"

namespace rar {

namespace {

struct Url {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Url split_url(const std::string& url, std::string_view default_path) {
  const auto scheme = url.find("://");
  const auto host_start = scheme == std::string::npos ? 0 : scheme + 3;
  const auto slash = url.find('/', host_start);
  Url u;
  if (slash == std::string::npos) {
    u.origin = url;
    u.path = std::string(default_path);
  } else {
    u.origin = url.substr(0, slash);
    u.path = url.substr(slash);
    if (u.path == "/") u.path = std::string(default_path);
  }
  return u;
}

// POSTs JSON and parses a JSON reply; throws std::runtime_error on failure.
nlohmann::json post_json(const Url& url, const nlohmann::json& body,
                         std::chrono::milliseconds timeout,
                         const std::optional<std::string>& bearer = std::nullopt) {
  httplib::Client client(url.origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (bearer) headers.emplace("Authorization", "Bearer " + *bearer);
  auto res = client.Post(url.path, headers, body.dump(), "application/json");
  if (!res) {
    throw std::runtime_error("request to " + url.origin + url.path +
                             " failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw std::runtime_error("HTTP " + std::to_string(res->status) + " from " + url.origin +
                             url.path);
  }
  return nlohmann::json::parse(res->body);
}

class ExternalRouter final : public StaticRouter {
 public:
  explicit ExternalRouter(const std::string& endpoint)
      : url_(split_url(endpoint, "/route")) {}

  ModelTier route(const RequestRecord& request) override {
    nlohmann::json reply;
    try {
      reply = post_json(url_, {{"text", request.text}}, std::chrono::seconds(10));
      return parse_model_tier(reply.at("tier").get<std::string>());
    } catch (const std::exception& e) {
      // The router fronts the strong path; report it as such.
      throw TransportError(ModelTier::Strong, std::string("static router: ") + e.what());
    }
  }

 private:
  Url url_;
};

}  // namespace

std::unique_ptr<StaticRouter> make_external_router(const std::string& endpoint) {
  return std::make_unique<ExternalRouter>(endpoint);
}

struct HttpChatClient::Slots {
  explicit Slots(std::ptrdiff_t n) : sem(n) {}
  std::counting_semaphore<1024> sem;
};

HttpChatClient::HttpChatClient(ModelTier tier, HttpChatSpec spec)
    : tier_(tier), spec_(std::move(spec)) {
  if (spec_.endpoint.empty()) throw InvariantViolation("chat client needs an endpoint");
  const auto n = std::clamp<std::size_t>(spec_.max_in_flight, 1, 1024);
  slots_ = std::make_unique<Slots>(static_cast<std::ptrdiff_t>(n));
}

HttpChatClient::~HttpChatClient() = default;

std::string HttpChatClient::complete(PromptKind kind, const RequestRecord& request,
                                     const Guide* guide) {
  const std::string prompt = render_prompt(kind, request, guide);
  const nlohmann::json body = {
      {"model", spec_.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
  };
  const Url url = split_url(spec_.endpoint, "/v1/chat/completions");

  slots_->sem.acquire();
  struct Release {
    Slots& s;
    ~Release() { s.sem.release(); }
  } release{*slots_};

  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      const auto reply = post_json(url, body, spec_.timeout, spec_.api_key);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(tier_, std::string("malformed chat reply: ") + e.what());
    } catch (const std::exception& e) {
      last_error = e.what();
    }
  }
  throw TransportError(tier_, last_error);
}

HttpEmbedder::HttpEmbedder(std::string endpoint, std::size_t dimension)
    : endpoint_(std::move(endpoint)), dimension_(dimension) {
  if (dimension_ == 0) throw RangeError("embedding_dim");
}

Embedding HttpEmbedder::embed(std::string_view text) const {
  if (trim(text).empty()) throw EmptyText();
  const Url url = split_url(endpoint_, "/embed");
  Embedding v;
  try {
    v = post_json(url, {{"input", std::string(text)}}, std::chrono::seconds(30))
            .at("embedding")
            .get<Embedding>();
  } catch (const DimensionMismatch&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(std::string("embedding service: ") + e.what());
  }
  if (v.size() != dimension_) throw DimensionMismatch(dimension_, v.size());
  if (!normalize(v)) throw InvariantViolation("embedding service returned a zero vector");
  return v;
}

}  // namespace rar
