#include "rar/fm_backends.hpp"

#include <cstdio>

#include "rar/hash.hpp"

namespace rar {

namespace {

constexpr std::string_view kResponseA = "Response 1:\n";
constexpr std::string_view kResponseB = "\n\nResponse 2:\n";

// Seed for reference labels of requests missing from the answer key.
constexpr std::uint64_t kFallbackAnswerSeed = 0x5241525f414e5357ULL;

std::string question_block(const RequestRecord& request) {
  std::string out(request.text);
  if (request.choices) {
    out += "\n";
    for (std::size_t i = 0; i < request.choices->size(); ++i) {
      out += "\n" + choice_label(i) + ". " + (*request.choices)[i];
    }
    out += "\n\nEnd your reply with \"Answer: <letter>\".";
  }
  return out;
}

std::size_t option_count(const RequestRecord& request) {
  return request.choices ? request.choices->size() : 4;
}

std::size_t label_index(std::string_view label) {
  return label.empty() ? 0 : static_cast<std::size_t>(label.front() - 'A');
}

}  // namespace

std::string_view to_string(PromptKind kind) noexcept {
  switch (kind) {
    case PromptKind::DirectAnswer: return "direct_answer";
    case PromptKind::GuidedAnswer: return "guided_answer";
    case PromptKind::GuideGeneration: return "guide_generation";
    case PromptKind::ZeroShotCot: return "zero_shot_cot";
    case PromptKind::Judge: return "judge";
  }
  return "?";
}

std::string choice_label(std::size_t index) {
  if (index >= 26) throw TemplateError("at most 26 choices are supported");
  return std::string(1, static_cast<char>('A' + index));
}

std::string render_prompt(PromptKind kind, const RequestRecord& request, const Guide* guide) {
  switch (kind) {
    case PromptKind::DirectAnswer:
      return "Answer the following question.\n\n" + question_block(request);
    case PromptKind::GuidedAnswer:
      if (guide == nullptr || guide->text.empty()) {
        throw TemplateError("guided_answer requires a guide");
      }
      return "Use this guide:\n" + guide->text + "\n\nAnswer the following question.\n\n" +
             question_block(request);
    case PromptKind::GuideGeneration:
      return std::string(kGuideInstruction) + "\n\nRequest:\n" + question_block(request);
    case PromptKind::ZeroShotCot:
      return "Answer the following question.\n\n" + question_block(request) + "\n\n" +
             std::string(kCotSuffix);
    case PromptKind::Judge:
      return std::string(kJudgeInstruction) + "\n\n" + request.text;
  }
  throw TemplateError("unknown prompt kind");
}

RequestRecord judge_request(std::string_view a, std::string_view b) {
  RequestRecord r;
  r.id = "judge";
  r.text = std::string(kResponseA) + std::string(a) + std::string(kResponseB) + std::string(b);
  return r;
}

void validate_profile(const SyntheticProfile& p) {
  if (!(p.p_alone >= 0.0 && p.p_alone <= 1.0)) throw RangeError("p_alone");
  if (!(p.p_guided >= 0.0 && p.p_guided <= 1.0)) throw RangeError("p_guided");
  if (p.p_alone + p.p_guided > 1.0 + 1e-12) throw RangeError("p_alone + p_guided");
}

double draw1(std::uint64_t seed, std::string_view id) noexcept {
  return static_cast<double>(hash64(id, seed) % 1000000ULL) / 1e6;
}

SyntheticFm::SyntheticFm(ModelTier tier, SyntheticProfile profile,
                         std::shared_ptr<const AnswerKey> answers)
    : tier_(tier), profile_(profile), answers_(std::move(answers)) {
  validate_profile(profile_);
}

std::string SyntheticFm::reference_label(const RequestRecord& request) const {
  if (answers_) {
    if (auto it = answers_->find(request.id); it != answers_->end()) return it->second;
  }
  return choice_label(hash64(request.id, kFallbackAnswerSeed) % option_count(request));
}

std::string SyntheticFm::complete(PromptKind kind, const RequestRecord& request,
                                  const Guide* guide) {
  // Enforces the same template preconditions as a real backend.
  (void)render_prompt(kind, request, guide);

  if (kind == PromptKind::Judge) {
    const std::string_view text(request.text);
    const auto split = text.find(kResponseB);
    if (!text.starts_with(kResponseA) || split == std::string_view::npos) {
      return "unsure";
    }
    const auto a = trim(text.substr(kResponseA.size(), split - kResponseA.size()));
    const auto b = trim(text.substr(split + kResponseB.size()));
    return a == b ? "similar" : "different";
  }

  if (kind == PromptKind::GuideGeneration) {
    if (tier_ != ModelTier::Strong) {
      throw TemplateError("guide generation must run on the strong tier");
    }
    char tag[17];
    std::snprintf(tag, sizeof tag, "%016llx",
                  static_cast<unsigned long long>(hash64(request.id, profile_.seed)));
    const std::string domain = request.domain.value_or("general");
    return "Identify the " + domain +
           " principle the question turns on, restate it in your own words, rule out "
           "options that contradict it, then commit to the remaining option. (guide " +
           tag + ")";
  }

  const std::string reference = reference_label(request);
  if (tier_ == ModelTier::Strong) return "Answer: " + reference;

  const double d = draw1(profile_.seed, request.id);
  bool correct = d < profile_.p_alone;
  if (!correct && kind == PromptKind::GuidedAnswer) {
    const bool in_domain = !profile_.domain_strict || guide->domain == request.domain;
    correct = in_domain && d < profile_.p_alone + profile_.p_guided;
  }
  const std::string label =
      correct ? reference
              : choice_label((label_index(reference) + 1) % option_count(request));
  if (kind == PromptKind::ZeroShotCot) {
    return std::string(kCotSuffix) + " Weighing the options in turn. Answer: " + label;
  }
  return "Answer: " + label;
}

}  // namespace rar
