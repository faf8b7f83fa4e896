#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "rar/engine.hpp"

namespace rar {

struct GatewayOptions {
  // Upper bound for POST /v1/drain before answering 503.
  std::chrono::milliseconds drain_timeout{30000};
  // When set, memory is persisted here after every successful drain.
  std::optional<std::filesystem::path> memory_path;
};

// HTTP facade over an Engine.
//
//   POST /v1/complete        {id?, text, domain?, choices?} -> {text, tier, case, guide_id?}
//   GET  /v1/stats           engine counters
//   POST /v1/drain           waits for shadow work -> {"drained": true}
//   GET  /v1/memory/export   memory in its line-delimited persistence format
class Gateway {
 public:
  Gateway(std::shared_ptr<Engine> engine, GatewayOptions options = {});
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  // Returns the bound port.
  int start(const std::string& host, int port);
  // Binds and serves on the calling thread until stop().
  void run(const std::string& host, int port);
  void stop();

  Engine& engine() noexcept { return *engine_; }

 private:
  struct Impl;
  std::shared_ptr<Engine> engine_;
  std::unique_ptr<Impl> impl_;
};

// Parses a /v1/complete body. Throws InvariantViolation/EmptyText on a bad body.
RequestRecord parse_complete_body(const std::string& body);

}  // namespace rar
