#include "rar/memory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <mutex>
#include <ostream>
#include <set>

#include "rar/core.hpp"
#include "rar/embedding.hpp"

namespace rar {

namespace {

template <typename T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> optional_field(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

nlohmann::json entry_to_json(const MemoryEntry& e) {
  return {
      {"id", e.id},
      {"embedding", e.embedding},
      {"request_text", e.request_text},
      {"flag", std::string(to_string(e.flag))},
      {"guide_text", optional_json(e.guide_text)},
      {"domain", optional_json(e.domain)},
      {"created_seq", e.created_seq},
      {"retry_at_seq", optional_json(e.retry_at_seq)},
  };
}

MemoryEntry entry_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvariantViolation("entry is not a JSON object");
  try {
    MemoryEntry e;
    e.id = j.at("id").get<std::string>();
    e.embedding = j.at("embedding").get<Embedding>();
    e.request_text = j.at("request_text").get<std::string>();
    e.flag = parse_entry_flag(j.at("flag").get<std::string>());
    e.guide_text = optional_field<std::string>(j, "guide_text");
    e.domain = optional_field<std::string>(j, "domain");
    e.created_seq = j.at("created_seq").get<std::uint64_t>();
    e.retry_at_seq = optional_field<std::uint64_t>(j, "retry_at_seq");
    for (const auto& [key, _] : j.items()) {
      static const std::set<std::string> known{"id",     "embedding",   "request_text",
                                               "flag",   "guide_text",  "domain",
                                               "created_seq", "retry_at_seq"};
      if (!known.contains(key)) throw InvariantViolation("unknown field: " + key);
    }
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw InvariantViolation(ex.what());
  } catch (const ConfigError& ex) {
    throw InvariantViolation(ex.what());
  }
}

MemoryStore::MemoryStore(std::size_t dimension) : dimension_(dimension) {}

MemoryStore::MemoryStore(MemoryStore&& other) noexcept {
  std::unique_lock lock(other.mutex_);
  dimension_ = other.dimension_;
  entries_ = std::move(other.entries_);
  norms_sq_ = std::move(other.norms_sq_);
  by_id_ = std::move(other.by_id_);
  by_key_ = std::move(other.by_key_);
  last_seq_ = other.last_seq_;
  id_counter_ = other.id_counter_;
}

MemoryStore& MemoryStore::operator=(MemoryStore&& other) noexcept {
  if (this == &other) return *this;
  std::scoped_lock lock(mutex_, other.mutex_);
  dimension_ = other.dimension_;
  entries_ = std::move(other.entries_);
  norms_sq_ = std::move(other.norms_sq_);
  by_id_ = std::move(other.by_id_);
  by_key_ = std::move(other.by_key_);
  last_seq_ = other.last_seq_;
  id_counter_ = other.id_counter_;
  return *this;
}

void MemoryStore::check_entry(const MemoryEntry& e) const {
  if (dimension_ != 0 && e.embedding.size() != dimension_) {
    throw InvariantViolation("embedding dimension " + std::to_string(e.embedding.size()) +
                             " != store dimension " + std::to_string(dimension_));
  }
  if (e.embedding.empty()) throw InvariantViolation("embedding is empty");
  double sq = 0.0;
  for (double v : e.embedding) sq += v * v;
  if (!(std::abs(std::sqrt(sq) - 1.0) <= 1e-6)) {
    throw InvariantViolation("embedding is not unit-normalized");
  }
  const bool has_guide = e.guide_text && !e.guide_text->empty();
  if ((e.flag == EntryFlag::SolvedWithGuide) != has_guide) {
    throw InvariantViolation("guide_text must be present exactly for solved_with_guide entries");
  }
  if (e.flag == EntryFlag::RequiresStrong &&
      (!e.retry_at_seq || *e.retry_at_seq <= e.created_seq)) {
    throw InvariantViolation("requires_strong entries need retry_at_seq > created_seq");
  }
}

std::string MemoryStore::fresh_id_locked() {
  std::string id;
  do {
    id = "mem-" + std::to_string(++id_counter_);
  } while (by_id_.contains(id));
  return id;
}

void MemoryStore::append_locked(MemoryEntry e) {
  if (dimension_ == 0) dimension_ = e.embedding.size();
  const std::size_t index = entries_.size();
  by_id_.emplace(e.id, index);
  by_key_[{e.request_text, e.flag}] = index;
  last_seq_ = e.created_seq;
  double sq = 0.0;
  for (double v : e.embedding) sq += v * v;
  norms_sq_.push_back(sq);
  entries_.push_back(std::move(e));
}

std::string MemoryStore::insert(MemoryEntry entry) {
  std::unique_lock lock(mutex_);
  check_entry(entry);
  if (auto it = by_key_.find({entry.request_text, entry.flag}); it != by_key_.end()) {
    return entries_[it->second].id;
  }
  if (!entries_.empty() && entry.created_seq <= last_seq_) {
    throw InvariantViolation("created_seq " + std::to_string(entry.created_seq) +
                             " is not greater than " + std::to_string(last_seq_));
  }
  if (entry.id.empty()) {
    entry.id = fresh_id_locked();
  } else if (by_id_.contains(entry.id)) {
    throw InvariantViolation("duplicate entry id: " + entry.id);
  }
  std::string id = entry.id;
  append_locked(std::move(entry));
  return id;
}

std::optional<QueryHit> MemoryStore::query(std::span<const double> q, double threshold,
                                           FlagSet filter) const {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw RangeError("threshold");
  std::shared_lock lock(mutex_);
  if (entries_.empty()) return std::nullopt;
  if (q.size() != dimension_) throw DimensionMismatch(dimension_, q.size());

  // Feature-hash embeddings are sparse. Summing only the query's nonzero
  // coordinates, in ascending order, gives the same doubles as the dense
  // cosine_similarity loop because every skipped term is an exact zero.
  std::vector<std::size_t> nz;
  double q_sq = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    q_sq += q[i] * q[i];
    if (q[i] != 0.0) nz.push_back(i);
  }

  const MemoryEntry* best = nullptr;
  double best_score = 0.0;
  for (std::size_t k = 0; k < entries_.size(); ++k) {
    const MemoryEntry& e = entries_[k];
    if (!filter.contains(e.flag)) continue;
    double s = 0.0;
    if (q_sq != 0.0 && norms_sq_[k] != 0.0) {
      double dot = 0.0;
      for (std::size_t i : nz) dot += q[i] * e.embedding[i];
      s = std::clamp(dot / std::sqrt(q_sq * norms_sq_[k]), -1.0, 1.0);
    }
    if (s < threshold) continue;
    if (best == nullptr || s > best_score ||
        (s == best_score && e.created_seq > best->created_seq)) {
      best = &e;
      best_score = s;
    }
  }
  if (best == nullptr) return std::nullopt;
  return QueryHit{*best, best_score};
}

MemoryEntry& MemoryStore::at_locked(const std::string& id) {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw UnknownId(id);
  return entries_[it->second];
}

void MemoryStore::reflag_locked(MemoryEntry& e, EntryFlag flag) {
  const std::size_t index = by_id_.at(e.id);
  if (auto it = by_key_.find({e.request_text, e.flag}); it != by_key_.end() && it->second == index) {
    by_key_.erase(it);
  }
  e.flag = flag;
  by_key_[{e.request_text, e.flag}] = index;
}

MemoryEntry MemoryStore::mark_requires_strong(const std::string& id, std::uint64_t retry_at_seq) {
  std::unique_lock lock(mutex_);
  MemoryEntry& e = at_locked(id);
  if (retry_at_seq <= e.created_seq) {
    throw InvariantViolation("retry_at_seq must exceed created_seq");
  }
  e.guide_text.reset();
  e.retry_at_seq = retry_at_seq;
  reflag_locked(e, EntryFlag::RequiresStrong);
  return e;
}

MemoryEntry MemoryStore::resolve(const std::string& id, EntryFlag flag,
                                 std::optional<std::string> guide_text) {
  std::unique_lock lock(mutex_);
  MemoryEntry& e = at_locked(id);
  if (flag == EntryFlag::RequiresStrong) {
    throw InvariantViolation("resolve cannot set requires_strong; use mark_requires_strong");
  }
  const bool has_guide = guide_text && !guide_text->empty();
  if ((flag == EntryFlag::SolvedWithGuide) != has_guide) {
    throw InvariantViolation("guide_text must be present exactly for solved_with_guide entries");
  }
  e.guide_text = std::move(guide_text);
  e.retry_at_seq.reset();
  reflag_locked(e, flag);
  return e;
}

std::optional<MemoryEntry> MemoryStore::get(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return entries_[it->second];
}

std::vector<MemoryEntry> MemoryStore::entries() const {
  std::shared_lock lock(mutex_);
  return entries_;
}

std::size_t MemoryStore::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::size_t MemoryStore::dimension() const {
  std::shared_lock lock(mutex_);
  return dimension_;
}

std::uint64_t MemoryStore::last_seq() const {
  std::shared_lock lock(mutex_);
  return last_seq_;
}

void MemoryStore::write(std::ostream& out) const {
  std::shared_lock lock(mutex_);
  for (const auto& e : entries_) {
    out << entry_to_json(e).dump() << '\n';
  }
}

void MemoryStore::persist(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write(out);
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

MemoryStore MemoryStore::read(std::istream& in, std::size_t dimension) {
  MemoryStore store(dimension);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      MemoryEntry e = entry_from_json(nlohmann::json::parse(line));
      store.check_entry(e);
      if (!store.entries_.empty() && e.created_seq <= store.last_seq_) {
        throw InvariantViolation("created_seq is not increasing");
      }
      if (e.id.empty() || store.by_id_.contains(e.id)) {
        throw InvariantViolation("missing or duplicate id");
      }
      store.append_locked(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(line_no, ex.what());
    } catch (const InvariantViolation& ex) {
      throw FormatError(line_no, ex.what());
    }
  }
  return store;
}

MemoryStore MemoryStore::load(const std::filesystem::path& path, std::size_t dimension) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read(in, dimension);
}

}  // namespace rar
