#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rar/types.hpp"

namespace rar {

// One row of the skill-and-guide memory.
struct MemoryEntry {
  std::string id;
  Embedding embedding;
  std::string request_text;
  EntryFlag flag = EntryFlag::SolvedAlone;
  std::optional<std::string> guide_text;
  std::optional<std::string> domain;
  std::uint64_t created_seq = 0;
  std::optional<std::uint64_t> retry_at_seq;

  friend bool operator==(const MemoryEntry&, const MemoryEntry&) = default;
};

struct QueryHit {
  MemoryEntry entry;
  double score = 0.0;
};

// Bit set over EntryFlag values.
class FlagSet {
 public:
  constexpr FlagSet() = default;
  constexpr FlagSet(std::initializer_list<EntryFlag> flags) {
    for (auto f : flags) bits_ |= bit(f);
  }
  static constexpr FlagSet all() {
    return {EntryFlag::SolvedAlone, EntryFlag::SolvedWithGuide, EntryFlag::RequiresStrong};
  }
  constexpr bool contains(EntryFlag f) const { return (bits_ & bit(f)) != 0; }

 private:
  static constexpr unsigned bit(EntryFlag f) { return 1u << static_cast<unsigned>(f); }
  unsigned bits_ = 0;
};

nlohmann::json entry_to_json(const MemoryEntry& e);
// Throws InvariantViolation on missing or mistyped fields.
MemoryEntry entry_from_json(const nlohmann::json& j);

// Vector store keyed by request embeddings. Exhaustive-scan search; many
// concurrent readers or one writer.
//
// Persistence format: UTF-8, one JSON object per line with the MemoryEntry
// fields; absent optionals are written as null; embedding values use the
// shortest decimal that round-trips the double exactly.
class MemoryStore {
 public:
  // dimension 0 adopts the dimension of the first inserted entry.
  explicit MemoryStore(std::size_t dimension = 0);
  MemoryStore(MemoryStore&& other) noexcept;
  MemoryStore& operator=(MemoryStore&& other) noexcept;
  MemoryStore(const MemoryStore&) = delete;
  MemoryStore& operator=(const MemoryStore&) = delete;

  // Inserts and returns the entry id. An empty id is assigned "mem-<n>".
  // If an entry with the same (request_text, flag) exists, its id is
  // returned and nothing changes.
  std::string insert(MemoryEntry entry);

  // Best entry by cosine similarity with score >= threshold among entries
  // whose flag is in `filter`. Ties go to the larger created_seq.
  std::optional<QueryHit> query(std::span<const double> q, double threshold,
                                FlagSet filter = FlagSet::all()) const;

  MemoryEntry mark_requires_strong(const std::string& id, std::uint64_t retry_at_seq);

  // Flips an entry to SolvedAlone or SolvedWithGuide after a successful retry.
  MemoryEntry resolve(const std::string& id, EntryFlag flag,
                      std::optional<std::string> guide_text);

  std::optional<MemoryEntry> get(const std::string& id) const;
  std::vector<MemoryEntry> entries() const;
  std::size_t size() const;
  std::size_t dimension() const;
  // Largest created_seq stored, 0 when empty.
  std::uint64_t last_seq() const;

  void write(std::ostream& out) const;
  void persist(const std::filesystem::path& path) const;
  // Throws FormatError naming the 1-based line on any corrupt line.
  static MemoryStore read(std::istream& in, std::size_t dimension = 0);
  static MemoryStore load(const std::filesystem::path& path, std::size_t dimension = 0);

 private:
  using DedupKey = std::pair<std::string, EntryFlag>;

  void check_entry(const MemoryEntry& e) const;
  void append_locked(MemoryEntry e);
  std::string fresh_id_locked();
  MemoryEntry& at_locked(const std::string& id);
  void reflag_locked(MemoryEntry& e, EntryFlag flag);

  mutable std::shared_mutex mutex_;
  std::size_t dimension_;
  std::vector<MemoryEntry> entries_;
  // Squared norm of each entry embedding, parallel to entries_.
  std::vector<double> norms_sq_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::map<DedupKey, std::size_t> by_key_;
  std::uint64_t last_seq_ = 0;
  std::uint64_t id_counter_ = 0;
};

}  // namespace rar
