#include "rar/engine.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

namespace rar {

namespace {

class FixedRouter final : public StaticRouter {
 public:
  explicit FixedRouter(ModelTier tier) : tier_(tier) {}
  ModelTier route(const RequestRecord&) override { return tier_; }

 private:
  ModelTier tier_;
};

class OracleProfileRouter final : public StaticRouter {
 public:
  explicit OracleProfileRouter(std::set<std::string> solvable) : solvable_(std::move(solvable)) {}
  ModelTier route(const RequestRecord& request) override {
    return solvable_.contains(request.id) ? ModelTier::Weak : ModelTier::Strong;
  }

 private:
  std::set<std::string> solvable_;
};

}  // namespace

// Defined in http_backends.cpp.
std::unique_ptr<StaticRouter> make_external_router(const std::string& endpoint);

std::unique_ptr<StaticRouter> make_static_router(const StaticRouterSpec& spec) {
  using Kind = StaticRouterSpec::Kind;
  switch (spec.kind) {
    case Kind::AlwaysStrong: return std::make_unique<FixedRouter>(ModelTier::Strong);
    case Kind::AlwaysWeak: return std::make_unique<FixedRouter>(ModelTier::Weak);
    case Kind::OracleProfile:
      if (!spec.profile_set) throw InvariantViolation("oracle router requires a profile set");
      return std::make_unique<OracleProfileRouter>(*spec.profile_set);
    case Kind::External:
      if (!spec.endpoint) throw InvariantViolation("external router requires an endpoint");
      return make_external_router(*spec.endpoint);
  }
  throw InvariantViolation("unknown router kind");
}

ModelTier static_route(const StaticRouterSpec& spec, const RequestRecord& request) {
  return make_static_router(spec)->route(request);
}

nlohmann::json stats_to_json(const EngineStats& s) {
  return {
      {"total_requests", s.total_requests},
      {"weak_served", s.weak_served},
      {"strong_served", s.strong_served},
      {"shadow_completed", s.shadow_completed},
      {"shadow_failed", s.shadow_failed},
      {"case1_count", s.case1_count},
      {"case2_count", s.case2_count},
      {"case3_count", s.case3_count},
      {"guides_from_memory", s.guides_from_memory},
      {"guides_fresh", s.guides_fresh},
      {"strong_calls_total", s.strong_calls_total},
      {"static_weak", s.static_weak},
      {"memory_direct_weak", s.memory_direct_weak},
      {"memory_guided_weak", s.memory_guided_weak},
      {"memory_forced_strong", s.memory_forced_strong},
  };
}

Engine::Engine(RarConfig cfg, std::shared_ptr<FmClient> weak, std::shared_ptr<FmClient> strong,
               std::shared_ptr<StaticRouter> router, std::shared_ptr<const Embedder> embedder,
               std::shared_ptr<MemoryStore> memory, EngineOptions options,
               std::shared_ptr<FmClient> judge)
    : cfg_(validate_config(cfg)),
      weak_(std::move(weak)),
      strong_(std::move(strong)),
      router_(std::move(router)),
      embedder_(std::move(embedder)),
      memory_(memory ? std::move(memory) : std::make_shared<MemoryStore>(cfg_.embedding_dim)),
      options_(options),
      comparator_(cfg_, embedder_, std::move(judge)),
      mode_(options.mode),
      shadow_queue_(options.shadow_workers) {
  if (!weak_ || !strong_ || !router_ || !embedder_) {
    throw InvariantViolation("engine needs weak and strong clients, a router and an embedder");
  }
  if (weak_->tier() != ModelTier::Weak || strong_->tier() != ModelTier::Strong) {
    throw InvariantViolation("client tiers are swapped");
  }
  if (embedder_->dimension() != cfg_.embedding_dim) {
    throw DimensionMismatch(cfg_.embedding_dim, embedder_->dimension());
  }
  if (const auto d = memory_->dimension(); d != 0 && d != cfg_.embedding_dim) {
    throw DimensionMismatch(cfg_.embedding_dim, d);
  }
  seq_.store(memory_->last_seq());
}

Engine::~Engine() { shadow_queue_.wait_idle(); }

void Engine::set_outcome_listener(std::function<void(const OutcomeRecord&)> listener) {
  std::lock_guard lock(listener_mutex_);
  listener_ = std::move(listener);
}

void Engine::publish(const OutcomeRecord& record) {
  std::lock_guard lock(listener_mutex_);
  if (listener_) listener_(record);
}

EngineStats Engine::stats() const {
  std::lock_guard lock(stats_mutex_);
  return stats_;
}

bool Engine::quiesce(std::optional<std::chrono::milliseconds> timeout) {
  return shadow_queue_.wait_idle(timeout);
}

Embedding Engine::embedding_for(const RequestRecord& request) const {
  if (request.embedding) return *request.embedding;
  return embedder_->embed(request.text);
}

bool Engine::aligned(std::string_view weak, std::string_view strong,
                     const RequestRecord& request) const {
  std::optional<std::span<const std::string>> choices;
  if (request.choices) choices = std::span<const std::string>(*request.choices);
  try {
    return comparator_.compare(weak, strong, choices).similar;
  } catch (const ChoiceExtractionError&) {
    return false;
  } catch (const EmptyText&) {
    return false;
  }
}

void Engine::record_foreground(ModelTier served, const CaseOutcome& outcome) {
  std::lock_guard lock(stats_mutex_);
  ++stats_.total_requests;
  if (served == ModelTier::Weak) {
    ++stats_.weak_served;
  } else {
    ++stats_.strong_served;
  }
  stats_.strong_calls_total += outcome.strong_calls;
  switch (outcome.kind) {
    case CaseKind::StaticWeak: ++stats_.static_weak; break;
    case CaseKind::MemoryDirectWeak: ++stats_.memory_direct_weak; break;
    case CaseKind::MemoryGuidedWeak: ++stats_.memory_guided_weak; break;
    case CaseKind::MemoryForcedStrong: ++stats_.memory_forced_strong; break;
    default: break;
  }
}

void Engine::record_shadow(const CaseOutcome& outcome) {
  std::lock_guard lock(stats_mutex_);
  ++stats_.shadow_completed;
  // The foreground call was counted when the response went out.
  stats_.strong_calls_total += outcome.strong_calls - 1;
  switch (outcome.kind) {
    case CaseKind::Case1SolvedAlone: ++stats_.case1_count; break;
    case CaseKind::Case2SolvedWithGuide:
      ++stats_.case2_count;
      if (outcome.guide_source == GuideSource::FromMemory) {
        ++stats_.guides_from_memory;
      } else {
        ++stats_.guides_fresh;
      }
      break;
    case CaseKind::Case3Failed: ++stats_.case3_count; break;
    default: break;
  }
}

CompletionResponse Engine::handle(RequestRecord request) {
  validate_request(request, cfg_.embedding_dim);
  const std::uint64_t seq = ++seq_;
  if (request.id.empty()) request.id = "req-" + std::to_string(seq);
  const EngineMode mode = mode_.load();

  auto finish = [&](std::string text, ModelTier tier, CaseOutcome outcome,
                    std::optional<std::string> guide_id) {
    record_foreground(tier, outcome);
    publish({request.id, seq, outcome, tier, text, guide_id, std::nullopt});
    CompletionResponse r;
    r.text = std::move(text);
    r.tier = tier;
    r.guide_id = std::move(guide_id);
    r.strong_calls_incurred = outcome.strong_calls;
    r.outcome = outcome;
    return r;
  };

  if (router_->route(request) == ModelTier::Weak) {
    std::string text = weak_->complete(PromptKind::DirectAnswer, request);
    return finish(std::move(text), ModelTier::Weak, {CaseKind::StaticWeak, std::nullopt, 0},
                  std::nullopt);
  }

  request.embedding = embedding_for(request);
  std::optional<std::string> retry_entry;
  if (mode != EngineMode::Profiling) {
    if (auto hit = memory_->query(*request.embedding, cfg_.memory_sim_threshold)) {
      const MemoryEntry& e = hit->entry;
      switch (e.flag) {
        case EntryFlag::SolvedAlone: {
          std::string text = weak_->complete(PromptKind::DirectAnswer, request);
          return finish(std::move(text), ModelTier::Weak,
                        {CaseKind::MemoryDirectWeak, std::nullopt, 0}, std::nullopt);
        }
        case EntryFlag::SolvedWithGuide: {
          const Guide guide{e.id, *e.guide_text, e.id, GuideSource::FromMemory, e.domain};
          std::string text = weak_->complete(PromptKind::GuidedAnswer, request, &guide);
          return finish(std::move(text), ModelTier::Weak,
                        {CaseKind::MemoryGuidedWeak, GuideSource::FromMemory, 0}, e.id);
        }
        case EntryFlag::RequiresStrong:
          if (seq < e.retry_at_seq.value_or(0)) {
            std::string text = strong_->complete(PromptKind::DirectAnswer, request);
            return finish(std::move(text), ModelTier::Strong,
                          {CaseKind::MemoryForcedStrong, std::nullopt, 1}, std::nullopt);
          }
          retry_entry = e.id;
          break;
      }
    }
  }

  std::string strong_text = strong_->complete(PromptKind::DirectAnswer, request);
  {
    std::lock_guard lock(stats_mutex_);
    ++stats_.total_requests;
    ++stats_.strong_served;
    ++stats_.strong_calls_total;
  }

  const bool profiling = mode == EngineMode::Profiling;
  shadow_queue_.submit([this, request, seq, strong_text, retry_entry, profiling] {
    OutcomeRecord record{request.id, seq, {}, ModelTier::Strong, strong_text, std::nullopt,
                         std::nullopt};
    try {
      ShadowResult r = run_shadow(request, seq, strong_text, retry_entry, profiling);
      record.outcome = r.outcome;
      record_shadow(r.outcome);
    } catch (const std::exception& e) {
      record.error = e.what();
      {
        std::lock_guard lock(stats_mutex_);
        ++stats_.shadow_failed;
      }
      spdlog::warn("shadow inference for {} dropped: {}", request.id, e.what());
    }
    publish(record);
  });

  CompletionResponse r;
  r.text = std::move(strong_text);
  r.tier = ModelTier::Strong;
  r.strong_calls_incurred = 1;
  return r;
}

CaseOutcome Engine::shadow_infer(const RequestRecord& request, std::uint64_t seq,
                                 const std::string& strong_response,
                                 const std::optional<std::string>& retry_entry_id) {
  RequestRecord r = request;
  if (!r.embedding) r.embedding = embedding_for(r);
  return run_shadow(r, seq, strong_response, retry_entry_id,
                    mode_.load() == EngineMode::Profiling)
      .outcome;
}

Engine::ShadowResult Engine::run_shadow(const RequestRecord& request, std::uint64_t seq,
                                        const std::string& strong_response,
                                        const std::optional<std::string>& retry_entry,
                                        bool profiling) {
  std::uint32_t strong_calls = 1;

  const std::string alone = weak_->complete(PromptKind::DirectAnswer, request);
  if (aligned(alone, strong_response, request)) {
    commit(request, seq, EntryFlag::SolvedAlone, std::nullopt, retry_entry, profiling);
    return {{CaseKind::Case1SolvedAlone, std::nullopt, strong_calls}, std::nullopt, std::nullopt};
  }

  if (!profiling) {
    if (auto hit = memory_->query(*request.embedding, cfg_.memory_sim_threshold,
                                  {EntryFlag::SolvedWithGuide})) {
      const MemoryEntry& e = hit->entry;
      const Guide guide{e.id, *e.guide_text, e.id, GuideSource::FromMemory, e.domain};
      const std::string out = weak_->complete(PromptKind::GuidedAnswer, request, &guide);
      if (aligned(out, strong_response, request)) {
        commit(request, seq, EntryFlag::SolvedWithGuide, guide.text, retry_entry, profiling);
        return {{CaseKind::Case2SolvedWithGuide, GuideSource::FromMemory, strong_calls},
                guide.text,
                e.id};
      }
    }

    if (options_.allow_fresh_guides) {
      for (std::uint32_t k = 0; k < cfg_.max_fresh_guides; ++k) {
        Guide guide;
        guide.text = strong_->complete(PromptKind::GuideGeneration, request);
        ++strong_calls;
        guide.id = guide_ids_.next();
        guide.origin_request_id = request.id;
        guide.source = GuideSource::FreshFromStrong;
        guide.domain = request.domain;
        const std::string out = weak_->complete(PromptKind::GuidedAnswer, request, &guide);
        if (aligned(out, strong_response, request)) {
          commit(request, seq, EntryFlag::SolvedWithGuide, guide.text, retry_entry, profiling);
          return {{CaseKind::Case2SolvedWithGuide, GuideSource::FreshFromStrong, strong_calls},
                  guide.text,
                  guide.id};
        }
      }
    }
  }

  commit(request, seq, EntryFlag::RequiresStrong, std::nullopt, retry_entry, profiling);
  return {{CaseKind::Case3Failed, std::nullopt, strong_calls}, std::nullopt, std::nullopt};
}

void Engine::commit(const RequestRecord& request, std::uint64_t seq, EntryFlag flag,
                    std::optional<std::string> guide_text,
                    const std::optional<std::string>& retry_entry_id, bool profiling) {
  if (options_.freeze_memory) return;
  std::lock_guard lock(commit_mutex_);

  if (retry_entry_id) {
    if (auto existing = memory_->get(*retry_entry_id);
        existing && existing->request_text == request.text) {
      if (flag == EntryFlag::RequiresStrong) {
        memory_->mark_requires_strong(
            existing->id, std::max(seq + cfg_.retry_period, existing->created_seq + 1));
      } else {
        memory_->resolve(existing->id, flag, std::move(guide_text));
      }
      return;
    }
  }

  MemoryEntry e;
  e.embedding = *request.embedding;
  e.request_text = request.text;
  e.flag = flag;
  e.guide_text = std::move(guide_text);
  e.domain = request.domain;
  e.created_seq = std::max(seq, memory_->last_seq() + 1);
  if (flag == EntryFlag::RequiresStrong) {
    e.retry_at_seq = profiling ? e.created_seq + 1
                               : std::max(seq + cfg_.retry_period, e.created_seq + 1);
  }
  memory_->insert(std::move(e));
}

}  // namespace rar
