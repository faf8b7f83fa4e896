#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "rar/core.hpp"

namespace rar {

enum class PromptKind { DirectAnswer, GuidedAnswer, GuideGeneration, ZeroShotCot, Judge };

std::string_view to_string(PromptKind kind) noexcept;

// Template constants. Tests assert on these literally.
inline constexpr std::string_view kGuideInstruction =
    "Write step-by-step guidance that would help someone answer the following request. "
    "Give instructions or hints only: do not reveal or state the final answer.";
inline constexpr std::string_view kCotSuffix = "Let's think step by step.";
inline constexpr std::string_view kJudgeInstruction =
    "Are the following two responses semantically similar? Reply with exactly one word: "
    "similar or different.";

// Label of the i-th choice: A, B, C, ...
std::string choice_label(std::size_t index);

// Renders the prompt for `kind`. For Judge the request text carries the two
// responses (see judge_request). Throws TemplateError when GuidedAnswer has
// no guide.
std::string render_prompt(PromptKind kind, const RequestRecord& request,
                          const Guide* guide = nullptr);

// Request whose text holds two responses to be compared by a judge model.
RequestRecord judge_request(std::string_view a, std::string_view b);

class FmClient {
 public:
  virtual ~FmClient() = default;
  virtual ModelTier tier() const noexcept = 0;
  virtual std::string complete(PromptKind kind, const RequestRecord& request,
                               const Guide* guide = nullptr) = 0;
};

// Ground-truth knobs for a synthetic model.
struct SyntheticProfile {
  std::uint64_t seed = 0;
  // Mass of items answered correctly without help.
  double p_alone = 0.0;
  // Additional mass answered correctly only with a (domain-matching) guide.
  double p_guided = 0.0;
  bool domain_strict = true;
};

void validate_profile(const SyntheticProfile& p);

// Request id -> reference answer label.
using AnswerKey = std::unordered_map<std::string, std::string>;

// (hash64(id, seed) mod 10^6) / 10^6.
double draw1(std::uint64_t seed, std::string_view id) noexcept;

// Deterministic stand-in for a model tier.
//
// Strong: always "Answer: <reference>". Weak: the reference when
// draw1 < p_alone, or for GuidedAnswer when the guide is acceptable (same
// domain as the request, or any guide if !domain_strict) and
// draw1 < p_alone + p_guided; otherwise the reference rotated by one label.
// Ids missing from the answer key get a reference derived from the id hash.
class SyntheticFm final : public FmClient {
 public:
  SyntheticFm(ModelTier tier, SyntheticProfile profile,
              std::shared_ptr<const AnswerKey> answers = {});

  ModelTier tier() const noexcept override { return tier_; }
  std::string complete(PromptKind kind, const RequestRecord& request,
                       const Guide* guide = nullptr) override;

  std::string reference_label(const RequestRecord& request) const;
  const SyntheticProfile& profile() const noexcept { return profile_; }

 private:
  ModelTier tier_;
  SyntheticProfile profile_;
  std::shared_ptr<const AnswerKey> answers_;
};

struct HttpChatSpec {
  // Base URL, e.g. "http://127.0.0.1:8000"; requests go to <base>/v1/chat/completions
  // unless the URL already carries a path.
  std::string endpoint;
  std::string model;
  std::optional<std::string> api_key;
  std::size_t max_in_flight = 8;
  std::chrono::milliseconds timeout{60000};
};

// Chat-completion client: {model, messages:[{role:"user", content}]} ->
// choices[0].message.content. One retry on transport failure.
class HttpChatClient final : public FmClient {
 public:
  HttpChatClient(ModelTier tier, HttpChatSpec spec);
  ~HttpChatClient() override;

  ModelTier tier() const noexcept override { return tier_; }
  std::string complete(PromptKind kind, const RequestRecord& request,
                       const Guide* guide = nullptr) override;

 private:
  struct Slots;
  ModelTier tier_;
  HttpChatSpec spec_;
  std::unique_ptr<Slots> slots_;
};

// Decorator that counts invocations of the wrapped client.
class CountingClient final : public FmClient {
 public:
  explicit CountingClient(std::shared_ptr<FmClient> inner) : inner_(std::move(inner)) {}

  ModelTier tier() const noexcept override { return inner_->tier(); }
  std::string complete(PromptKind kind, const RequestRecord& request,
                       const Guide* guide = nullptr) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_->complete(kind, request, guide);
  }

  std::uint64_t calls() const noexcept { return calls_.load(); }
  void reset() noexcept { calls_.store(0); }

 private:
  std::shared_ptr<FmClient> inner_;
  std::atomic<std::uint64_t> calls_{0};
};

}  // namespace rar
