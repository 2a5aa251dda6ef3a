#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace rcl {

/// Dense item id. 0 is the padding id and never denotes a real item.
using ItemId = std::int32_t;
/// Dense user id, contiguous from 1.
using UserId = std::int32_t;

inline constexpr ItemId kPaddingItem = 0;

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class EmptyCorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class InteractionFormat { tsv, csv, movielens_dat };

InteractionFormat parse_interaction_format(const std::string& name);

struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  std::int64_t timestamp = 0;
};

/// Maps external string ids to dense ids assigned in first-appearance order.
class Vocabulary {
 public:
  /// Returns the dense id, inserting `key` if unseen.
  std::int32_t intern(const std::string& key);
  std::int32_t find(const std::string& key) const;  // 0 when absent
  const std::string& name(std::int32_t id) const { return names_.at(static_cast<std::size_t>(id - 1)); }
  std::size_t size() const noexcept { return names_.size(); }

 private:
  std::unordered_map<std::string, std::int32_t> ids_;
  std::vector<std::string> names_;
};

/// Raw (user, item, timestamp) events in input order.
struct InteractionCorpus {
  std::vector<Interaction> events;
  Vocabulary users;
  Vocabulary items;

  std::size_t user_count() const noexcept { return users.size(); }
  std::size_t item_count() const noexcept { return items.size(); }
};

InteractionCorpus load_interactions(const std::filesystem::path& path, InteractionFormat format);
InteractionCorpus parse_interactions(std::istream& in, InteractionFormat format);

/// Iteratively drops users and items with fewer than `k` events until nothing
/// changes, then re-densifies ids in first-appearance order.
InteractionCorpus k_core_filter(const InteractionCorpus& corpus, int k);

/// One user's chronological prefix and the item that follows it.
struct SequenceRecord {
  UserId user = 0;
  std::vector<ItemId> items;
  ItemId target = kPaddingItem;
};

struct SequenceSet {
  std::vector<SequenceRecord> train;
  std::vector<SequenceRecord> valid;
  std::vector<SequenceRecord> test;
  std::size_t item_count = 0;
  std::size_t max_len = 0;
  // Untruncated totals of the source corpus, kept for statistics.
  std::size_t user_count = 0;
  std::size_t action_count = 0;
};

/// Leave-one-out split: test target is the last interaction, valid target the
/// second-to-last, train target the third-to-last. Every record keeps at most
/// `max_len` of the most recent preceding items.
SequenceSet build_sequences(const InteractionCorpus& corpus, std::size_t max_len);

struct StatsReport {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t actions = 0;
  double average_length = 0.0;
  double sparsity = 0.0;
};

StatsReport corpus_stats(const SequenceSet& set);

void write_stats(std::ostream& out, const StatsReport& stats);
StatsReport read_stats(std::istream& in);

/// `user<TAB>space-joined items<TAB>target`, one record per line.
void write_records(std::ostream& out, const std::vector<SequenceRecord>& records);
std::vector<SequenceRecord> read_records(std::istream& in);

/// Writes train.tsv, valid.tsv, test.tsv and meta.txt under `dir`.
void save_sequence_set(const std::filesystem::path& dir, const SequenceSet& set);
SequenceSet load_sequence_set(const std::filesystem::path& dir);

}  // namespace rcl
