#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "rar/embedding.hpp"
#include "rar/hash.hpp"

namespace rar::oracle {

double dense_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  double s = dot / std::sqrt(na * nb);
  if (s > 1.0) s = 1.0;
  if (s < -1.0) s = -1.0;
  return s;
}

std::optional<BruteHit> brute_top1(const std::vector<MemoryEntry>& entries,
                                   const std::vector<double>& q, double threshold,
                                   const std::set<EntryFlag>& flags) {
  std::optional<BruteHit> best;
  std::uint64_t best_seq = 0;
  for (const auto& e : entries) {
    if (!flags.count(e.flag)) continue;
    const double s = dense_cosine(q, e.embedding);
    if (s < threshold) continue;
    if (!best || s > best->score || (s == best->score && e.created_seq > best_seq)) {
      best = BruteHit{e.id, s};
      best_seq = e.created_seq;
    }
  }
  return best;
}

double chi_square_expected_form(double a, double b, double c, double d) {
  const double n = a + b + c + d;
  const double obs[2][2] = {{a, b}, {c, d}};
  const double rows[2] = {a + b, c + d};
  const double cols[2] = {a + c, b + d};
  double stat = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double expected = rows[i] * cols[j] / n;
      stat += (obs[i][j] - expected) * (obs[i][j] - expected) / expected;
    }
  }
  return stat;
}

namespace {

enum class Flag { Alone, Guided, Strong };

struct Row {
  std::string text;
  std::vector<double> embedding;
  Flag flag;
  std::optional<std::string> domain;
  std::uint64_t created = 0;
  std::uint64_t retry_at = 0;
};

struct Sim {
  const harness::ExperimentConfig& cfg;
  std::vector<Row> rows;
  std::uint64_t seq = 0;

  double draw(const std::string& id) const {
    return static_cast<double>(hash64(id, cfg.weak.seed) % 1000000ULL) / 1e6;
  }
  bool alone_ok(const std::string& id) const { return draw(id) < cfg.weak.p_alone; }
  bool guided_ok(const harness::DatasetItem& item,
                 const std::optional<std::string>& guide_domain) const {
    if (alone_ok(item.id)) return true;
    const bool usable = !cfg.weak.domain_strict || guide_domain == item.domain;
    return usable && draw(item.id) < cfg.weak.p_alone + cfg.weak.p_guided;
  }

  // Index of the best row at or above the threshold, restricted to Guided
  // rows when `guided_only`.
  std::optional<std::size_t> nearest(const std::vector<double>& q, bool guided_only) const {
    std::optional<std::size_t> best;
    double best_score = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (guided_only && rows[i].flag != Flag::Guided) continue;
      const double s = dense_cosine(q, rows[i].embedding);
      if (s < cfg.engine.memory_sim_threshold) continue;
      if (!best || s > best_score || (s == best_score && rows[i].created > rows[*best].created)) {
        best = i;
        best_score = s;
      }
    }
    return best;
  }

  void store(const harness::DatasetItem& item, const std::vector<double>& emb, Flag flag,
             std::optional<std::size_t> retry_row,
             bool profiling, std::uint64_t at_seq) {
    if (retry_row && rows[*retry_row].text == item.question) {
      Row& r = rows[*retry_row];
      r.flag = flag;
      if (flag == Flag::Strong) {
        r.retry_at = std::max(at_seq + cfg.engine.retry_period, r.created + 1);
      }
      return;
    }
    for (const auto& r : rows) {
      if (r.text == item.question && r.flag == flag) return;
    }
    Row r;
    r.text = item.question;
    r.embedding = emb;
    r.flag = flag;
    r.domain = item.domain;
    r.created = std::max(at_seq, rows.empty() ? 1 : rows.back().created + 1);
    if (flag == Flag::Strong) {
      r.retry_at = profiling ? r.created + 1
                             : std::max(at_seq + cfg.engine.retry_period, r.created + 1);
    }
    rows.push_back(std::move(r));
  }

  void step(const harness::DatasetItem& item, const std::vector<double>& emb, bool profiling,
            harness::StageMetrics& m) {
    const std::uint64_t s = ++seq;
    ++m.samples;
    std::optional<std::size_t> retry_row;
    if (!profiling) {
      if (auto hit = nearest(emb, false)) {
        const Row& r = rows[*hit];
        if (r.flag == Flag::Alone) {
          ++m.memory_direct;
          if (alone_ok(item.id)) {
            ++m.aligned;
            ++m.weak_aligned;
          }
          return;
        }
        if (r.flag == Flag::Guided) {
          ++m.memory_guided;
          if (guided_ok(item, r.domain)) {
            ++m.aligned;
            ++m.weak_aligned;
            ++m.guides_from_memory;
          }
          return;
        }
        if (s < r.retry_at) {
          ++m.memory_forced;
          ++m.aligned;
          ++m.strong_served;
          ++m.strong_calls;
          return;
        }
        retry_row = *hit;
      }
    }

    // Served by the strong model, then probed in the background.
    ++m.aligned;
    ++m.strong_served;
    ++m.strong_calls;

    if (alone_ok(item.id)) {
      ++m.case1;
      ++m.weak_aligned;
      store(item, emb, Flag::Alone, retry_row, profiling, s);
      return;
    }
    if (!profiling) {
      if (auto g = nearest(emb, true); g && guided_ok(item, rows[*g].domain)) {
        ++m.case2;
        ++m.weak_aligned;
        ++m.guides_from_memory;
        store(item, emb, Flag::Guided, retry_row, profiling, s);
        return;
      }
      for (std::uint32_t k = 0; k < cfg.engine.max_fresh_guides; ++k) {
        ++m.strong_calls;
        if (guided_ok(item, item.domain)) {
          ++m.case2;
          ++m.weak_aligned;
          ++m.guides_fresh;
          store(item, emb, Flag::Guided, retry_row, profiling, s);
          return;
        }
      }
    }
    ++m.case3;
    store(item, emb, Flag::Strong, retry_row, profiling, s);
  }
};

}  // namespace

std::vector<harness::StageMetrics> simulate_rar(const harness::ExperimentConfig& cfg,
                                                const std::vector<harness::DatasetItem>& items,
                                                const std::vector<std::size_t>& order) {
  FeatureHashEmbedder embedder(cfg.engine.embedding_dim);
  std::vector<std::vector<double>> embeddings;
  for (const auto& item : items) embeddings.push_back(embedder.embed(item.question));

  Sim sim{cfg, {}, 0};
  std::vector<harness::StageMetrics> stages;
  for (std::size_t t = 0; t < cfg.stages; ++t) {
    harness::StageMetrics m;
    m.stage_index = t;
    const bool profiling = t == 0 && cfg.profiling_stage;
    for (std::size_t idx : order) sim.step(items[idx], embeddings[idx], profiling, m);
    stages.push_back(m);
  }
  return stages;
}

}  // namespace rar::oracle
