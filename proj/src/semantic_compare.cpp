#include "rar/semantic_compare.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace rar {

namespace {

const std::regex& answer_pattern() {
  static const std::regex re(R"([Aa]nswer(?:\s+is\s*:?|\s*:)\s*\(?([A-Z])\)?(?![A-Za-z0-9]))");
  return re;
}

const std::regex& lone_letter_pattern() {
  static const std::regex re(R"(\s*\(?([A-Z])[.)]?\s*)");
  return re;
}

bool valid_label(char c, std::size_t n) {
  return c >= 'A' && static_cast<std::size_t>(c - 'A') < n;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string extract_choice(std::string_view text, std::span<const std::string> choices) {
  const std::size_t n = choices.size();
  if (n == 0) throw ChoiceExtractionError("no choices to extract from");

  const std::string s(text);
  std::optional<char> found;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), answer_pattern());
       it != std::sregex_iterator(); ++it) {
    const char c = (*it)[1].str().front();
    if (valid_label(c, n)) found = c;
  }
  if (found) return std::string(1, *found);

  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find('\n', start);
    if (end == std::string::npos) end = s.size();
    std::smatch m;
    const std::string line = s.substr(start, end - start);
    if (std::regex_match(line, m, lone_letter_pattern())) {
      const char c = m[1].str().front();
      if (valid_label(c, n)) found = c;
    }
    start = end + 1;
  }
  if (found) return std::string(1, *found);

  std::optional<std::size_t> best;
  std::size_t best_pos = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (choices[i].empty()) continue;
    const auto pos = s.rfind(choices[i]);
    if (pos == std::string::npos) continue;
    if (!best || pos > best_pos ||
        (pos == best_pos && choices[i].size() > choices[*best].size())) {
      best = i;
      best_pos = pos;
    }
  }
  if (best) return choice_label(*best);

  throw ChoiceExtractionError("no answer found in response");
}

SemanticComparator::SemanticComparator(RarConfig cfg, std::shared_ptr<const Embedder> embedder,
                                       std::shared_ptr<FmClient> judge)
    : cfg_(validate_config(cfg)), embedder_(std::move(embedder)), judge_(std::move(judge)) {}

SimilarityVerdict SemanticComparator::compare(
    std::string_view a, std::string_view b,
    std::optional<std::span<const std::string>> choices) const {
  return compare(a, b, cfg_.comparator_strategy, choices);
}

SimilarityVerdict SemanticComparator::compare(
    std::string_view a, std::string_view b, ComparatorStrategy strategy,
    std::optional<std::span<const std::string>> choices) const {
  if (trim(a).empty() || trim(b).empty()) throw EmptyText();

  SimilarityVerdict v;
  v.strategy = strategy;
  switch (strategy) {
    case ComparatorStrategy::VectorThreshold: {
      if (!embedder_) throw InvariantViolation("vector comparison needs an embedder");
      const double score = cosine_similarity(embedder_->embed(a), embedder_->embed(b));
      v.score = score;
      v.similar = score >= cfg_.response_sim_threshold;
      return v;
    }
    case ComparatorStrategy::JudgeClient: {
      if (!judge_) throw InvariantViolation("judge comparison needs a judge client");
      const std::string reply = judge_->complete(PromptKind::Judge, judge_request(a, b));
      const std::string word = lowercase(trim(reply));
      if (word == "similar") {
        v.similar = true;
      } else if (word == "different") {
        v.similar = false;
      } else {
        throw JudgeParseError(reply);
      }
      return v;
    }
    case ComparatorStrategy::ExactChoice: {
      if (!choices) throw ChoiceExtractionError("exact_choice comparison needs choices");
      v.similar = extract_choice(a, *choices) == extract_choice(b, *choices);
      return v;
    }
  }
  throw InvariantViolation("unknown comparator strategy");
}

}  // namespace rar
