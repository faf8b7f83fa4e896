#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "rar/core.hpp"
#include "rar/embedding.hpp"
#include "rar/fm_backends.hpp"
#include "rar/memory.hpp"
#include "rar/semantic_compare.hpp"
#include "rar/task_queue.hpp"

namespace rar {

// First-stage routing decision made before any memory lookup.
class StaticRouter {
 public:
  virtual ~StaticRouter() = default;
  virtual ModelTier route(const RequestRecord& request) = 0;
};

struct StaticRouterSpec {
  enum class Kind { AlwaysStrong, AlwaysWeak, OracleProfile, External };
  Kind kind = Kind::AlwaysStrong;
  // Ids the weak tier is known to solve (OracleProfile).
  std::optional<std::set<std::string>> profile_set;
  // POST {"text"} -> {"tier": "weak"|"strong"} (External).
  std::optional<std::string> endpoint;
};

std::unique_ptr<StaticRouter> make_static_router(const StaticRouterSpec& spec);
ModelTier static_route(const StaticRouterSpec& spec, const RequestRecord& request);

// Running counters. Snapshots are taken under one lock, so the invariants
//   weak_served + strong_served == total_requests
//   guides_from_memory + guides_fresh == case2_count
// hold in every snapshot.
struct EngineStats {
  std::uint64_t total_requests = 0;
  std::uint64_t weak_served = 0;
  std::uint64_t strong_served = 0;
  std::uint64_t shadow_completed = 0;
  std::uint64_t shadow_failed = 0;
  std::uint64_t case1_count = 0;
  std::uint64_t case2_count = 0;
  std::uint64_t case3_count = 0;
  std::uint64_t guides_from_memory = 0;
  std::uint64_t guides_fresh = 0;
  std::uint64_t strong_calls_total = 0;
  std::uint64_t static_weak = 0;
  std::uint64_t memory_direct_weak = 0;
  std::uint64_t memory_guided_weak = 0;
  std::uint64_t memory_forced_strong = 0;

  bool consistent() const noexcept {
    return weak_served + strong_served == total_requests &&
           guides_from_memory + guides_fresh == case2_count;
  }
};

nlohmann::json stats_to_json(const EngineStats& s);

enum class EngineMode {
  // Full procedure.
  Adaptive,
  // Skip memory routing; shadow inference only probes the weak tier alone.
  // Failures are stored RequiresStrong, due for retry on the next visit.
  Profiling,
};

struct EngineOptions {
  std::size_t shadow_workers = 1;
  bool allow_fresh_guides = true;
  // Never mutate memory (replaying a fixed guide memory).
  bool freeze_memory = false;
  EngineMode mode = EngineMode::Adaptive;
};

// Final disposition of one request, published once its shadow work (if any)
// is done.
struct OutcomeRecord {
  std::string request_id;
  std::uint64_t seq = 0;
  CaseOutcome outcome;
  ModelTier served_tier = ModelTier::Strong;
  std::string served_text;
  std::optional<std::string> guide_id;
  // Set when the shadow task was aborted; `outcome` is then meaningless.
  std::optional<std::string> error;
};

class Engine {
 public:
  Engine(RarConfig cfg, std::shared_ptr<FmClient> weak, std::shared_ptr<FmClient> strong,
         std::shared_ptr<StaticRouter> router, std::shared_ptr<const Embedder> embedder,
         std::shared_ptr<MemoryStore> memory = {}, EngineOptions options = {},
         std::shared_ptr<FmClient> judge = {});
  ~Engine();

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  // Serves a request. Shadow inference, when triggered, is queued and runs
  // after this returns. Backend failures throw TransportError.
  CompletionResponse handle(RequestRecord request);

  // Synchronous shadow inference for a request already answered by the
  // strong tier. `retry_entry_id` names a RequiresStrong row being retried.
  CaseOutcome shadow_infer(const RequestRecord& request, std::uint64_t seq,
                           const std::string& strong_response,
                           const std::optional<std::string>& retry_entry_id = std::nullopt);

  // Blocks until no shadow task is queued or running. False on timeout.
  bool quiesce(std::optional<std::chrono::milliseconds> timeout = std::nullopt);

  EngineStats stats() const;
  const RarConfig& config() const noexcept { return cfg_; }
  MemoryStore& memory() noexcept { return *memory_; }
  std::shared_ptr<MemoryStore> memory_handle() const noexcept { return memory_; }
  std::uint64_t seq() const noexcept { return seq_.load(); }

  void set_mode(EngineMode mode) noexcept { mode_.store(mode); }
  EngineMode mode() const noexcept { return mode_.load(); }

  // Called from the thread that completes the request (caller or shadow worker).
  void set_outcome_listener(std::function<void(const OutcomeRecord&)> listener);

 private:
  struct ShadowResult {
    CaseOutcome outcome;
    std::optional<std::string> guide_text;
    std::optional<std::string> guide_id;
  };

  ShadowResult run_shadow(const RequestRecord& request, std::uint64_t seq,
                          const std::string& strong_response,
                          const std::optional<std::string>& retry_entry, bool profiling);
  Embedding embedding_for(const RequestRecord& request) const;
  bool aligned(std::string_view weak, std::string_view strong,
               const RequestRecord& request) const;
  void commit(const RequestRecord& request, std::uint64_t seq, EntryFlag flag,
              std::optional<std::string> guide_text,
              const std::optional<std::string>& retry_entry_id, bool profiling);
  void record_foreground(ModelTier served, const CaseOutcome& outcome);
  void record_shadow(const CaseOutcome& outcome);
  void publish(const OutcomeRecord& record);

  RarConfig cfg_;
  std::shared_ptr<FmClient> weak_;
  std::shared_ptr<FmClient> strong_;
  std::shared_ptr<StaticRouter> router_;
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<MemoryStore> memory_;
  EngineOptions options_;
  SemanticComparator comparator_;

  std::atomic<std::uint64_t> seq_{0};
  std::atomic<EngineMode> mode_;
  std::mutex commit_mutex_;
  mutable std::mutex stats_mutex_;
  EngineStats stats_;
  std::mutex listener_mutex_;
  std::function<void(const OutcomeRecord&)> listener_;
  IdGenerator guide_ids_{"guide"};
  // Declared last: workers must stop before the members they use go away.
  TaskQueue shadow_queue_;
};

}  // namespace rar
