#include "rcl/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string_view>

namespace rcl {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, std::string_view delim) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + delim.size();
  }
  return fields;
}

template <typename Int>
bool parse_int(std::string_view text, Int& out) {
  text = trim(text);
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace

InteractionFormat parse_interaction_format(const std::string& name) {
  if (name == "tsv") return InteractionFormat::tsv;
  if (name == "csv") return InteractionFormat::csv;
  if (name == "movielens-dat" || name == "dat") return InteractionFormat::movielens_dat;
  throw std::invalid_argument("unknown interaction format: " + name);
}

std::int32_t Vocabulary::intern(const std::string& key) {
  auto [it, inserted] = ids_.try_emplace(key, static_cast<std::int32_t>(names_.size() + 1));
  if (inserted) names_.push_back(key);
  return it->second;
}

std::int32_t Vocabulary::find(const std::string& key) const {
  auto it = ids_.find(key);
  return it == ids_.end() ? 0 : it->second;
}

InteractionCorpus parse_interactions(std::istream& in, InteractionFormat format) {
  const std::string_view delim = format == InteractionFormat::tsv   ? "\t"
                                 : format == InteractionFormat::csv ? ","
                                                                    : "::";
  const std::size_t ts_column = format == InteractionFormat::movielens_dat ? 3 : 2;

  InteractionCorpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty()) continue;
    const auto fields = split(view, delim);
    if (fields.size() <= ts_column) {
      throw ParseError("expected at least " + std::to_string(ts_column + 1) + " fields", line_no);
    }
    if (line_no == 1 && trim(fields[ts_column]) == "timestamp") continue;  // header

    std::int64_t ts = 0;
    if (!parse_int(fields[ts_column], ts)) {
      throw ParseError("non-numeric timestamp '" + std::string(fields[ts_column]) + "'", line_no);
    }
    const auto user = trim(fields[0]);
    const auto item = trim(fields[1]);
    if (user.empty() || item.empty()) throw ParseError("empty user or item field", line_no);

    corpus.events.push_back({corpus.users.intern(std::string(user)),
                             corpus.items.intern(std::string(item)), ts});
  }
  if (corpus.events.empty()) throw EmptyCorpusError("no interactions in input");
  return corpus;
}

InteractionCorpus load_interactions(const std::filesystem::path& path, InteractionFormat format) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_interactions(in, format);
}

InteractionCorpus k_core_filter(const InteractionCorpus& corpus, int k) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");

  std::vector<char> keep(corpus.events.size(), 1);
  std::vector<int> user_deg(corpus.user_count() + 1);
  std::vector<int> item_deg(corpus.item_count() + 1);

  bool changed = true;
  while (changed) {
    std::fill(user_deg.begin(), user_deg.end(), 0);
    std::fill(item_deg.begin(), item_deg.end(), 0);
    for (std::size_t i = 0; i < corpus.events.size(); ++i) {
      if (!keep[i]) continue;
      ++user_deg[corpus.events[i].user];
      ++item_deg[corpus.events[i].item];
    }
    changed = false;
    for (std::size_t i = 0; i < corpus.events.size(); ++i) {
      if (keep[i] && (user_deg[corpus.events[i].user] < k || item_deg[corpus.events[i].item] < k)) {
        keep[i] = 0;
        changed = true;
      }
    }
  }

  InteractionCorpus out;
  for (std::size_t i = 0; i < corpus.events.size(); ++i) {
    if (!keep[i]) continue;
    const auto& e = corpus.events[i];
    out.events.push_back({out.users.intern(corpus.users.name(e.user)),
                          out.items.intern(corpus.items.name(e.item)), e.timestamp});
  }
  if (out.events.empty()) throw EmptyCorpusError("k-core filter with k=" + std::to_string(k) + " removed everything");
  return out;
}

SequenceSet build_sequences(const InteractionCorpus& corpus, std::size_t max_len) {
  if (max_len < 2) throw std::invalid_argument("max_len must be >= 2");

  // Stable bucket by user keeps input order for equal timestamps.
  std::vector<std::vector<std::size_t>> by_user(corpus.user_count() + 1);
  for (std::size_t i = 0; i < corpus.events.size(); ++i) by_user[corpus.events[i].user].push_back(i);

  SequenceSet set;
  set.item_count = corpus.item_count();
  set.max_len = max_len;
  set.user_count = corpus.user_count();
  set.action_count = corpus.events.size();

  auto make_record = [&](UserId user, const std::vector<ItemId>& history, std::size_t target_pos) {
    SequenceRecord rec;
    rec.user = user;
    rec.target = history[target_pos];
    const std::size_t begin = target_pos > max_len ? target_pos - max_len : 0;
    rec.items.assign(history.begin() + static_cast<std::ptrdiff_t>(begin),
                     history.begin() + static_cast<std::ptrdiff_t>(target_pos));
    return rec;
  };

  std::size_t short_users = 0;
  std::vector<ItemId> history;
  for (UserId user = 1; user <= static_cast<UserId>(corpus.user_count()); ++user) {
    auto& idx = by_user[static_cast<std::size_t>(user)];
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return corpus.events[a].timestamp < corpus.events[b].timestamp;
    });
    history.clear();
    for (auto i : idx) history.push_back(corpus.events[i].item);
    const std::size_t n = history.size();

    if (n < 3) {
      ++short_users;
      if (n == 2) set.train.push_back(make_record(user, history, 1));
      continue;
    }
    if (n >= 4) set.train.push_back(make_record(user, history, n - 3));
    set.valid.push_back(make_record(user, history, n - 2));
    set.test.push_back(make_record(user, history, n - 1));
  }
  if (short_users > 0) {
    spdlog::info("{} users with fewer than 3 interactions have no valid/test records", short_users);
  }
  return set;
}

StatsReport corpus_stats(const SequenceSet& set) {
  StatsReport r;
  r.users = set.user_count;
  r.items = set.item_count;
  r.actions = set.action_count;
  if (r.users > 0) r.average_length = static_cast<double>(r.actions) / static_cast<double>(r.users);
  if (r.users > 0 && r.items > 0) {
    r.sparsity = 1.0 - static_cast<double>(r.actions) / (static_cast<double>(r.users) * static_cast<double>(r.items));
  }
  return r;
}

void write_stats(std::ostream& out, const StatsReport& s) {
  out.precision(17);
  out << "users=" << s.users << '\n'
      << "items=" << s.items << '\n'
      << "actions=" << s.actions << '\n'
      << "average_length=" << s.average_length << '\n'
      << "sparsity=" << s.sparsity << '\n';
}

StatsReport read_stats(std::istream& in) {
  StatsReport s;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    if (key == "users") s.users = std::stoull(value);
    else if (key == "items") s.items = std::stoull(value);
    else if (key == "actions") s.actions = std::stoull(value);
    else if (key == "average_length") s.average_length = std::stod(value);
    else if (key == "sparsity") s.sparsity = std::stod(value);
  }
  return s;
}

void write_records(std::ostream& out, const std::vector<SequenceRecord>& records) {
  for (const auto& r : records) {
    out << r.user << '\t';
    for (std::size_t i = 0; i < r.items.size(); ++i) {
      if (i) out << ' ';
      out << r.items[i];
    }
    out << '\t' << r.target << '\n';
  }
}

std::vector<SequenceRecord> read_records(std::istream& in) {
  std::vector<SequenceRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line, "\t");
    if (fields.size() != 3) throw ParseError("expected 3 tab-separated fields", line_no);
    SequenceRecord rec;
    if (!parse_int(fields[0], rec.user) || !parse_int(fields[2], rec.target)) {
      throw ParseError("bad user or target", line_no);
    }
    for (auto tok : split(trim(fields[1]), " ")) {
      if (trim(tok).empty()) continue;
      ItemId item = 0;
      if (!parse_int(tok, item)) throw ParseError("bad item id", line_no);
      rec.items.push_back(item);
    }
    if (rec.items.empty()) throw ParseError("record without items", line_no);
    records.push_back(std::move(rec));
  }
  return records;
}

void save_sequence_set(const std::filesystem::path& dir, const SequenceSet& set) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::vector<SequenceRecord>& recs) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    write_records(out, recs);
  };
  write("train.tsv", set.train);
  write("valid.tsv", set.valid);
  write("test.tsv", set.test);
  std::ofstream meta(dir / "meta.txt");
  meta << "item_count=" << set.item_count << '\n'
       << "max_len=" << set.max_len << '\n'
       << "user_count=" << set.user_count << '\n'
       << "action_count=" << set.action_count << '\n';
}

SequenceSet load_sequence_set(const std::filesystem::path& dir) {
  SequenceSet set;
  auto read = [&](const char* name) {
    std::ifstream in(dir / name);
    if (!in) throw std::runtime_error("cannot open " + (dir / name).string());
    return read_records(in);
  };
  set.train = read("train.tsv");
  set.valid = read("valid.tsv");
  set.test = read("test.tsv");
  std::ifstream meta(dir / "meta.txt");
  if (!meta) throw std::runtime_error("cannot open " + (dir / "meta.txt").string());
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    const auto value = std::stoull(line.substr(eq + 1));
    if (key == "item_count") set.item_count = value;
    else if (key == "max_len") set.max_len = value;
    else if (key == "user_count") set.user_count = value;
    else if (key == "action_count") set.action_count = value;
  }
  return set;
}

}  // namespace rcl
