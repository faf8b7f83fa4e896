#include "rar/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <set>

#include <spdlog/spdlog.h>

#include "rar/hash.hpp"
#include "rar/semantic_compare.hpp"

namespace rar::harness {

namespace {

// ---------------------------------------------------------------------------
// Synthetic corpus vocabulary

const std::map<std::string, std::vector<std::string>>& domain_vocabulary() {
  static const std::map<std::string, std::vector<std::string>> vocab{
      {"professional_law",
       {"plaintiff",  "defendant",   "statute",     "negligence",  "contract",   "tort",
        "easement",   "covenant",    "jurisdiction", "testimony",  "hearsay",    "appellate",
        "injunction", "liability",   "estoppel",    "mortgage",    "tenancy",    "felony",
        "indictment", "precedent",   "damages",     "breach",      "consideration", "trustee",
        "grantor",    "conveyance",  "probate",     "warranty",    "verdict",    "counsel"}},
      {"high_school_psychology",
       {"cognition",   "stimulus",    "reinforcement", "neuron",     "memory",     "perception",
        "conditioning", "hypothesis", "personality",   "amygdala",   "dopamine",   "schema",
        "attachment",  "adolescent",  "behaviorism",   "heuristic",  "sensation",  "motivation",
        "emotion",     "therapy",     "disorder",      "cortex",     "placebo",    "survey",
        "correlation", "temperament", "habituation",   "intelligence", "anxiety",  "learning"}},
      {"moral_scenarios",
       {"honesty",   "promise",   "neighbor",  "stealing",   "kindness",  "betrayal",
        "charity",   "cheating",  "loyalty",   "fairness",   "lying",     "apology",
        "gossip",    "donation",  "harm",      "respect",    "obligation", "virtue",
        "temptation", "friendship", "sacrifice", "deception", "gratitude", "selfish",
        "wallet",    "stranger",  "favor",     "insult",     "rescue",    "conscience"}},
  };
  return vocab;
}

std::vector<std::string> vocabulary_for(const std::string& domain) {
  const auto& vocab = domain_vocabulary();
  if (auto it = vocab.find(domain); it != vocab.end()) return it->second;
  // Pronounceable pseudo-words derived from the domain name.
  static constexpr std::string_view consonants = "bcdfghklmnprstvz";
  static constexpr std::string_view vowels = "aeiou";
  SplitMix64 rng(hash64(domain, 0x564f434142ULL));
  std::vector<std::string> words;
  while (words.size() < 30) {
    std::string w;
    const std::size_t syllables = 2 + rng() % 3;
    for (std::size_t s = 0; s < syllables; ++s) {
      w += consonants[rng() % consonants.size()];
      w += vowels[rng() % vowels.size()];
    }
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  }
  return words;
}

// ---------------------------------------------------------------------------
// JSON helpers

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

nlohmann::json profile_to_json(const SyntheticProfile& p) {
  return {{"seed", p.seed},
          {"p_alone", p.p_alone},
          {"p_guided", p.p_guided},
          {"domain_strict", p.domain_strict}};
}

SyntheticProfile profile_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("synthetic profile must be an object");
  SyntheticProfile p;
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") {
      p.seed = value.get<std::uint64_t>();
    } else if (key == "p_alone") {
      p.p_alone = value.get<double>();
    } else if (key == "p_guided") {
      p.p_guided = value.get<double>();
    } else if (key == "domain_strict") {
      p.domain_strict = value.get<bool>();
    } else {
      throw ConfigError("unknown synthetic profile key: " + key);
    }
  }
  validate_profile(p);
  return p;
}

std::optional<std::string> extract_or_none(const std::string& text,
                                           const std::vector<std::string>& choices) {
  try {
    return extract_choice(text, choices);
  } catch (const ChoiceExtractionError&) {
    return std::nullopt;
  }
}

struct Mean {
  double mean = 0.0;
  double stddev = 0.0;
};

Mean mean_std(std::span<const double> xs) {
  if (xs.empty()) return {};
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  return {mean, std::sqrt(sq / static_cast<double>(xs.size()))};
}

// Names of series in report order: rar first, then baselines as configured.
std::vector<std::string> series_names(const ExperimentReport& report) {
  std::vector<std::string> names{"rar"};
  for (const auto& b : report.config.baselines) names.push_back(b);
  return names;
}

const std::vector<StageMetrics>* series_of(const ShuffleResult& s, const std::string& name) {
  if (name == "rar") return &s.rar;
  auto it = s.baselines.find(name);
  return it == s.baselines.end() ? nullptr : &it->second;
}

std::size_t stage_count(const ExperimentReport& report) {
  std::size_t n = 0;
  for (const auto& s : report.shuffles) n = std::max(n, s.rar.size());
  return n;
}

// Cumulative value of `field` at stage t for every shuffle.
template <typename Field>
std::vector<double> cumulative_at(const ExperimentReport& report, const std::string& name,
                                  std::size_t t, Field field) {
  std::vector<double> out;
  for (const auto& s : report.shuffles) {
    const auto* series = series_of(s, name);
    if (series == nullptr || series->size() <= t) continue;
    double acc = 0.0;
    for (std::size_t i = 0; i <= t; ++i) acc += static_cast<double>(field((*series)[i]));
    out.push_back(acc);
  }
  return out;
}

template <typename Field>
std::vector<double> per_stage_at(const ExperimentReport& report, const std::string& name,
                                 std::size_t t, Field field) {
  std::vector<double> out;
  for (const auto& s : report.shuffles) {
    const auto* series = series_of(s, name);
    if (series == nullptr || series->size() <= t) continue;
    out.push_back(static_cast<double>(field((*series)[t])));
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("write failed: " + path.string());
}

// Totals over every stage and shuffle of one series.
struct Totals {
  std::uint64_t samples = 0;
  std::uint64_t aligned = 0;
  std::uint64_t strong_served = 0;
};

Totals totals(const ExperimentReport& report, const std::string& name) {
  Totals t;
  for (const auto& s : report.shuffles) {
    if (const auto* series = series_of(s, name)) {
      for (const auto& m : *series) {
        t.samples += m.samples;
        t.aligned += m.aligned;
        t.strong_served += m.strong_served;
      }
    }
  }
  return t;
}

nlohmann::json chi_square_entry(const std::string& metric, const std::string& baseline,
                                std::uint64_t a, std::uint64_t b, std::uint64_t c,
                                std::uint64_t d) {
  nlohmann::json j = {{"metric", metric},
                      {"baseline", baseline},
                      {"table", {a, b, c, d}}};
  try {
    const auto r = chi_square_2x2(a, b, c, d);
    j["statistic"] = r.statistic;
    j["significant_95"] = r.significant_95;
    j["degenerate"] = false;
  } catch (const DegenerateTable&) {
    j["statistic"] = nullptr;
    j["significant_95"] = false;
    j["degenerate"] = true;
  }
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset

std::vector<DatasetItem> read_dataset(std::istream& in) {
  std::vector<DatasetItem> items;
  std::set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    DatasetItem item;
    try {
      const auto j = nlohmann::json::parse(line);
      item.id = j.at("id").get<std::string>();
      item.question = j.at("question").get<std::string>();
      item.choices = j.at("choices").get<std::vector<std::string>>();
      item.answer_label = j.at("answer_label").get<std::string>();
      item.domain = j.at("domain").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(line_no, e.what());
    }
    if (item.id.empty()) throw FormatError(line_no, "empty id");
    if (!ids.insert(item.id).second) throw FormatError(line_no, "duplicate id " + item.id);
    if (trim(item.question).empty()) throw FormatError(line_no, "empty question");
    try {
      validate_request(to_request(item), 0);
    } catch (const Error& e) {
      throw FormatError(line_no, e.what());
    }
    bool label_ok = false;
    for (std::size_t i = 0; i < item.choices.size(); ++i) {
      if (item.answer_label == choice_label(i)) label_ok = true;
    }
    if (!label_ok) {
      throw FormatError(line_no, "answer_label " + item.answer_label + " is not a choice label");
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<DatasetItem> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return read_dataset(in);
}

void write_dataset(std::ostream& out, std::span<const DatasetItem> items) {
  for (const auto& item : items) {
    const nlohmann::json j = {{"id", item.id},
                              {"question", item.question},
                              {"choices", item.choices},
                              {"answer_label", item.answer_label},
                              {"domain", item.domain}};
    out << j.dump() << '\n';
  }
}

void save_dataset(const std::filesystem::path& path, std::span<const DatasetItem> items) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write dataset " + path.string());
  write_dataset(out, items);
  if (!out) throw IoError("write failed: " + path.string());
}

RequestRecord to_request(const DatasetItem& item) {
  RequestRecord r;
  r.id = item.id;
  r.text = item.question;
  r.domain = item.domain;
  r.choices = item.choices;
  return r;
}

std::shared_ptr<const AnswerKey> answer_key(std::span<const DatasetItem> items) {
  auto key = std::make_shared<AnswerKey>();
  for (const auto& item : items) (*key)[item.id] = item.answer_label;
  return key;
}

std::vector<DatasetItem> make_synthetic_dataset(std::size_t count,
                                                std::span<const std::string> domains,
                                                std::uint64_t seed) {
  if (domains.empty()) throw InvariantViolation("at least one domain is required");
  std::vector<std::vector<std::string>> vocab;
  for (const auto& d : domains) vocab.push_back(vocabulary_for(d));

  std::vector<DatasetItem> items;
  items.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t di = i % domains.size();
    const auto& words = vocab[di];
    SplitMix64 rng(mix64(seed) ^ mix64(i + 1));
    auto word = [&] { return words[rng() % words.size()]; };

    DatasetItem item;
    char id[32];
    std::snprintf(id, sizeof id, "item-%05zu", i);
    item.id = id;
    item.domain = domains[di];
    item.question = "Question " + std::to_string(i) + " on " + domains[di] + ":";
    for (int w = 0; w < 8; ++w) item.question += " " + word();
    item.question += ". Which option applies?";

    std::set<std::string> seen;
    while (item.choices.size() < 4) {
      std::string c = word() + " " + word();
      if (seen.insert(c).second) item.choices.push_back(std::move(c));
    }
    item.answer_label = choice_label(rng() % item.choices.size());
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<DatasetItem> profile_failing_subset(std::span<const DatasetItem> items,
                                                FmClient& weak) {
  std::vector<DatasetItem> failing;
  for (const auto& item : items) {
    const std::string reply = weak.complete(PromptKind::DirectAnswer, to_request(item));
    if (extract_or_none(reply, item.choices) != item.answer_label) failing.push_back(item);
  }
  return failing;
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed,
                                     std::size_t shuffle_index) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  SplitMix64 rng(seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(shuffle_index) + 1));
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(p[i - 1], p[j]);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Statistics

ChiSquareResult chi_square_2x2(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                               std::uint64_t d) {
  const double r1 = static_cast<double>(a + b);
  const double r2 = static_cast<double>(c + d);
  const double c1 = static_cast<double>(a + c);
  const double c2 = static_cast<double>(b + d);
  if (r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0) throw DegenerateTable();
  const double n = static_cast<double>(a + b + c + d);
  const double diff = static_cast<double>(a) * static_cast<double>(d) -
                      static_cast<double>(b) * static_cast<double>(c);
  const double stat = n * diff * diff / (r1 * r2 * c1 * c2);
  return {stat, stat > kChiSquareCritical95};
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json stage_to_json(const StageMetrics& m) {
  return {{"stage_index", m.stage_index},
          {"samples", m.samples},
          {"aligned", m.aligned},
          {"weak_aligned", m.weak_aligned},
          {"strong_served", m.strong_served},
          {"strong_calls", m.strong_calls},
          {"guides_from_memory", m.guides_from_memory},
          {"guides_fresh", m.guides_fresh},
          {"case1", m.case1},
          {"case2", m.case2},
          {"case3", m.case3},
          {"static_weak", m.static_weak},
          {"memory_direct", m.memory_direct},
          {"memory_guided", m.memory_guided},
          {"memory_forced", m.memory_forced}};
}

StageMetrics stage_from_json(const nlohmann::json& j) {
  StageMetrics m;
  m.stage_index = j.at("stage_index").get<std::size_t>();
  m.samples = j.at("samples").get<std::size_t>();
  m.aligned = j.at("aligned").get<std::size_t>();
  m.weak_aligned = j.at("weak_aligned").get<std::size_t>();
  m.strong_served = j.at("strong_served").get<std::size_t>();
  m.strong_calls = j.at("strong_calls").get<std::size_t>();
  m.guides_from_memory = j.at("guides_from_memory").get<std::size_t>();
  m.guides_fresh = j.at("guides_fresh").get<std::size_t>();
  m.case1 = j.at("case1").get<std::size_t>();
  m.case2 = j.at("case2").get<std::size_t>();
  m.case3 = j.at("case3").get<std::size_t>();
  m.static_weak = j.at("static_weak").get<std::size_t>();
  m.memory_direct = j.at("memory_direct").get<std::size_t>();
  m.memory_guided = j.at("memory_guided").get<std::size_t>();
  m.memory_forced = j.at("memory_forced").get<std::size_t>();
  return m;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  return {{"engine", config_to_json(cfg.engine)},
          {"weak", profile_to_json(cfg.weak)},
          {"strong", profile_to_json(cfg.strong)},
          {"shuffles", cfg.shuffles},
          {"stages", cfg.stages},
          {"seed", cfg.seed},
          {"profiling_stage", cfg.profiling_stage},
          {"baselines", cfg.baselines}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig cfg;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "engine") {
        cfg.engine = config_from_json(value);
      } else if (key == "weak") {
        cfg.weak = profile_from_json(value);
      } else if (key == "strong") {
        cfg.strong = profile_from_json(value);
      } else if (key == "shuffles") {
        cfg.shuffles = value.get<std::size_t>();
      } else if (key == "stages") {
        cfg.stages = value.get<std::size_t>();
      } else if (key == "seed") {
        cfg.seed = value.get<std::uint64_t>();
      } else if (key == "profiling_stage") {
        cfg.profiling_stage = value.get<bool>();
      } else if (key == "baselines") {
        cfg.baselines = value.get<std::vector<std::string>>();
      } else {
        throw ConfigError("unknown experiment config key: " + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad experiment config value: ") + e.what());
  }
  for (const auto& b : cfg.baselines) {
    if (std::find(kAllBaselines.begin(), kAllBaselines.end(), b) == kAllBaselines.end()) {
      throw ConfigError("unknown baseline: " + b);
    }
  }
  if (cfg.shuffles < 1) throw RangeError("shuffles");
  if (cfg.stages < 1) throw RangeError("stages");
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json j;
  j["mode"] = mode;
  j["seed"] = config.seed;
  j["valid"] = valid;
  j["error"] = error ? nlohmann::json(*error) : nlohmann::json(nullptr);
  j["items"] = items;
  j["config"] = experiment_config_to_json(config);

  auto& shuffles_json = j["shuffles"] = nlohmann::json::array();
  for (const auto& s : shuffles) {
    nlohmann::json sj;
    sj["index"] = s.shuffle_index;
    sj["rar"] = nlohmann::json::array();
    for (const auto& m : s.rar) sj["rar"].push_back(stage_to_json(m));
    sj["baselines"] = nlohmann::json::object();
    for (const auto& [name, stages] : s.baselines) {
      auto& arr = sj["baselines"][name] = nlohmann::json::array();
      for (const auto& m : stages) arr.push_back(stage_to_json(m));
    }
    shuffles_json.push_back(std::move(sj));
  }

  auto& cumulative = j["cumulative"] = nlohmann::json::object();
  for (const auto& name : series_names(*this)) {
    nlohmann::json aligned = nlohmann::json::array();
    nlohmann::json strong = nlohmann::json::array();
    for (const auto& s : shuffles) {
      const auto* series = series_of(s, name);
      if (series == nullptr) continue;
      std::size_t acc_a = 0;
      std::size_t acc_s = 0;
      nlohmann::json ra = nlohmann::json::array();
      nlohmann::json rs = nlohmann::json::array();
      for (const auto& m : *series) {
        acc_a += m.aligned;
        acc_s += m.strong_calls;
        ra.push_back(acc_a);
        rs.push_back(acc_s);
      }
      aligned.push_back(std::move(ra));
      strong.push_back(std::move(rs));
    }
    cumulative[name] = {{"aligned", std::move(aligned)}, {"strong_calls", std::move(strong)}};
  }

  auto& chi = j["chi_square"] = nlohmann::json::array();
  const Totals rar = totals(*this, "rar");
  for (const auto& b : config.baselines) {
    const Totals base = totals(*this, b);
    chi.push_back(chi_square_entry("aligned", b, rar.aligned, rar.samples - rar.aligned,
                                   base.aligned, base.samples - base.aligned));
    chi.push_back(chi_square_entry("strong_served", b, rar.strong_served,
                                   rar.samples - rar.strong_served, base.strong_served,
                                   base.samples - base.strong_served));
  }

  if (mode == "cross_domain") {
    auto& cd = j["cross_domain"] = nlohmann::json::array();
    for (std::size_t t = 0; t < stage_count(*this); ++t) {
      const auto guided = mean_std(
          per_stage_at(*this, "rar", t, [](const StageMetrics& m) { return m.weak_aligned; }));
      const auto unguided = mean_std(
          per_stage_at(*this, "weak", t, [](const StageMetrics& m) { return m.aligned; }));
      cd.push_back({{"stage", t + 1},
                    {"guided_weak_aligned_mean", guided.mean},
                    {"unguided_weak_aligned_mean", unguided.mean},
                    {"delta", guided.mean - unguided.mean}});
    }
  }
  return j;
}

// ---------------------------------------------------------------------------
// Experiment driver

EngineFactory synthetic_engine_factory(const ExperimentConfig& cfg,
                                       std::shared_ptr<const AnswerKey> key,
                                       EngineOptions options) {
  return [cfg, key, options](std::size_t) {
    auto weak = std::make_shared<SyntheticFm>(ModelTier::Weak, cfg.weak, key);
    auto strong = std::make_shared<SyntheticFm>(ModelTier::Strong, cfg.strong, key);
    auto router = make_static_router({StaticRouterSpec::Kind::AlwaysStrong, {}, {}});
    auto embedder = std::make_shared<FeatureHashEmbedder>(cfg.engine.embedding_dim);
    return std::make_unique<Engine>(cfg.engine, weak, strong, std::move(router), embedder,
                                     nullptr, options);
  };
}

namespace {

StageMetrics stage_from_records(std::size_t stage_index, std::span<const OutcomeRecord> records,
                                const std::map<std::string, const DatasetItem*>& by_id,
                                const std::map<std::string, std::string>& reference) {
  StageMetrics m;
  m.stage_index = stage_index;
  for (const auto& r : records) {
    if (r.error) throw Error("shadow inference failed for " + r.request_id + ": " + *r.error);
    const DatasetItem& item = *by_id.at(r.request_id);
    const bool aligned = extract_or_none(r.served_text, item.choices) == reference.at(item.id);
    const CaseKind kind = r.outcome.kind;
    ++m.samples;
    if (aligned) ++m.aligned;
    if (r.served_tier == ModelTier::Strong) ++m.strong_served;
    m.strong_calls += r.outcome.strong_calls;
    const bool shadow_weak_success =
        kind == CaseKind::Case1SolvedAlone || kind == CaseKind::Case2SolvedWithGuide;
    if ((r.served_tier == ModelTier::Weak && aligned) || shadow_weak_success) ++m.weak_aligned;
    switch (kind) {
      case CaseKind::StaticWeak: ++m.static_weak; break;
      case CaseKind::MemoryDirectWeak: ++m.memory_direct; break;
      case CaseKind::MemoryGuidedWeak:
        ++m.memory_guided;
        if (aligned) ++m.guides_from_memory;
        break;
      case CaseKind::MemoryForcedStrong: ++m.memory_forced; break;
      case CaseKind::Case1SolvedAlone: ++m.case1; break;
      case CaseKind::Case2SolvedWithGuide:
        ++m.case2;
        if (r.outcome.guide_source == GuideSource::FromMemory) {
          ++m.guides_from_memory;
        } else {
          ++m.guides_fresh;
        }
        break;
      case CaseKind::Case3Failed: ++m.case3; break;
    }
  }
  return m;
}

// One stateless baseline pass over the permuted items.
StageMetrics run_baseline_stage(const std::string& name, std::size_t stage_index,
                                std::span<const DatasetItem> items,
                                std::span<const std::size_t> order, FmClient& weak,
                                FmClient& strong, StaticRouter* oracle,
                                const std::map<std::string, std::string>& reference) {
  StageMetrics m;
  m.stage_index = stage_index;
  for (std::size_t idx : order) {
    const DatasetItem& item = items[idx];
    const RequestRecord req = to_request(item);
    ModelTier tier = ModelTier::Weak;
    PromptKind kind = PromptKind::DirectAnswer;
    if (name == "strong") {
      tier = ModelTier::Strong;
    } else if (name == "cot") {
      kind = PromptKind::ZeroShotCot;
    } else if (name == "oracle") {
      tier = oracle->route(req);
    }
    const std::string reply =
        tier == ModelTier::Strong ? strong.complete(kind, req) : weak.complete(kind, req);
    const bool aligned = extract_or_none(reply, item.choices) == reference.at(item.id);
    ++m.samples;
    if (aligned) ++m.aligned;
    if (tier == ModelTier::Strong) {
      ++m.strong_served;
      ++m.strong_calls;
    } else {
      if (aligned) ++m.weak_aligned;
      if (name == "oracle") ++m.static_weak;
    }
  }
  return m;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg, std::span<const DatasetItem> items,
                                EngineFactory factory) {
  validate_config(cfg.engine);
  ExperimentReport report;
  report.config = cfg;
  report.items = items.size();

  const auto key = answer_key(items);
  if (!factory) factory = synthetic_engine_factory(cfg, key);

  SyntheticFm weak(ModelTier::Weak, cfg.weak, key);
  SyntheticFm strong(ModelTier::Strong, cfg.strong, key);

  std::map<std::string, const DatasetItem*> by_id;
  std::map<std::string, std::string> reference;
  for (const auto& item : items) {
    by_id[item.id] = &item;
    const auto label =
        extract_or_none(strong.complete(PromptKind::DirectAnswer, to_request(item)), item.choices);
    reference[item.id] = label.value_or("");
  }

  try {
    for (std::size_t s = 0; s < cfg.shuffles; ++s) {
      ShuffleResult result;
      result.shuffle_index = s;
      report.shuffles.push_back(result);
      ShuffleResult& out = report.shuffles.back();
      const auto order = permutation(items.size(), cfg.seed, s);

      auto engine = factory(s);
      std::mutex records_mutex;
      std::vector<OutcomeRecord> records;
      engine->set_outcome_listener([&](const OutcomeRecord& r) {
        std::lock_guard lock(records_mutex);
        records.push_back(r);
      });

      for (std::size_t t = 0; t < cfg.stages; ++t) {
        engine->set_mode(t == 0 && cfg.profiling_stage ? EngineMode::Profiling
                                                       : EngineMode::Adaptive);
        for (std::size_t idx : order) {
          engine->handle(to_request(items[idx]));
          engine->quiesce();
        }
        std::vector<OutcomeRecord> stage_records;
        {
          std::lock_guard lock(records_mutex);
          stage_records.swap(records);
        }
        out.rar.push_back(stage_from_records(t, stage_records, by_id, reference));
      }
      engine->set_outcome_listener({});

      std::unique_ptr<StaticRouter> oracle;
      if (std::find(cfg.baselines.begin(), cfg.baselines.end(), "oracle") !=
          cfg.baselines.end()) {
        // Profile: what the weak tier solves unaided on the first pass.
        std::set<std::string> solvable;
        for (std::size_t idx : order) {
          const auto& item = items[idx];
          const auto reply = weak.complete(PromptKind::DirectAnswer, to_request(item));
          if (extract_or_none(reply, item.choices) == reference.at(item.id)) {
            solvable.insert(item.id);
          }
        }
        oracle = make_static_router({StaticRouterSpec::Kind::OracleProfile, solvable, {}});
      }
      for (const auto& name : cfg.baselines) {
        auto& stages = out.baselines[name];
        for (std::size_t t = 0; t < cfg.stages; ++t) {
          stages.push_back(
              run_baseline_stage(name, t, items, order, weak, strong, oracle.get(), reference));
        }
      }
    }
  } catch (const std::exception& e) {
    report.valid = false;
    report.error = e.what();
    spdlog::error("experiment aborted: {}", e.what());
  }
  return report;
}

ExperimentReport run_cross_domain(const ExperimentConfig& cfg,
                                  const std::filesystem::path& guide_memory_path,
                                  std::span<const DatasetItem> target_items) {
  const MemoryStore loaded = MemoryStore::load(guide_memory_path, cfg.engine.embedding_dim);
  std::vector<MemoryEntry> guides;
  for (auto& e : loaded.entries()) {
    if (e.flag == EntryFlag::SolvedWithGuide) guides.push_back(e);
  }

  ExperimentConfig cross = cfg;
  cross.engine.memory_sim_threshold = 0.1;
  cross.profiling_stage = false;
  cross.baselines = {"weak"};

  EngineOptions options;
  options.allow_fresh_guides = false;
  options.freeze_memory = true;

  const auto key = answer_key(target_items);
  EngineFactory factory = [cross, key, options, guides](std::size_t) {
    auto memory = std::make_shared<MemoryStore>(cross.engine.embedding_dim);
    for (const auto& e : guides) memory->insert(e);
    auto weak = std::make_shared<SyntheticFm>(ModelTier::Weak, cross.weak, key);
    auto strong = std::make_shared<SyntheticFm>(ModelTier::Strong, cross.strong, key);
    auto router = make_static_router({StaticRouterSpec::Kind::AlwaysStrong, {}, {}});
    auto embedder = std::make_shared<FeatureHashEmbedder>(cross.engine.embedding_dim);
    return std::make_unique<Engine>(cross.engine, weak, strong, std::move(router), embedder,
                                    memory, options);
  };

  ExperimentReport report = run_experiment(cross, target_items, factory);
  report.mode = "cross_domain";
  return report;
}

// ---------------------------------------------------------------------------
// Report emission

void emit_report(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  write_file(dir / "report.json", report.to_json().dump(2) + "\n");

  const auto names = series_names(report);
  const std::size_t stages = stage_count(report);

  auto cumulative_csv = [&](auto field) {
    std::string csv = "stage";
    for (const auto& n : names) csv += "," + n + "_mean," + n + "_std";
    csv += "\n";
    for (std::size_t t = 0; t < stages; ++t) {
      csv += std::to_string(t + 1);
      for (const auto& n : names) {
        const auto ms = mean_std(cumulative_at(report, n, t, field));
        csv += "," + format_number(ms.mean) + "," + format_number(ms.stddev);
      }
      csv += "\n";
    }
    return csv;
  };
  write_file(dir / "cumulative_aligned.csv",
             cumulative_csv([](const StageMetrics& m) { return m.aligned; }));
  write_file(dir / "cumulative_strong_calls.csv",
             cumulative_csv([](const StageMetrics& m) { return m.strong_calls; }));

  std::string guides = "stage,fresh_mean,fresh_std,from_memory_mean,from_memory_std\n";
  for (std::size_t t = 0; t < stages; ++t) {
    const auto fresh =
        mean_std(per_stage_at(report, "rar", t, [](const StageMetrics& m) { return m.guides_fresh; }));
    const auto memory = mean_std(
        per_stage_at(report, "rar", t, [](const StageMetrics& m) { return m.guides_from_memory; }));
    guides += std::to_string(t + 1) + "," + format_number(fresh.mean) + "," +
              format_number(fresh.stddev) + "," + format_number(memory.mean) + "," +
              format_number(memory.stddev) + "\n";
  }
  write_file(dir / "guide_source_per_stage.csv", guides);
}

}  // namespace rar::harness
