#include "rcl/topk_index.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <thread>

namespace rcl {

namespace {

constexpr char kIndexMagic[4] = {'R', 'S', 'I', 'X'};
constexpr std::uint32_t kIndexVersion = 1;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw std::runtime_error("truncated index file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

void fill_row(const PairScorer& scorer, std::size_t u, std::size_t k, std::vector<Neighbor>& heap) {
  heap.clear();
  heap.reserve(k);
  const std::size_t n = scorer.size();
  for (std::size_t v = 0; v < n; ++v) {
    if (v == u) continue;
    const Neighbor cand{static_cast<std::uint32_t>(v), scorer.score(u, v)};
    if (heap.size() < k) {
      heap.push_back(cand);
      std::push_heap(heap.begin(), heap.end(), ranks_before);
    } else if (ranks_before(cand, heap.front())) {
      // heap.front() is the worst retained candidate.
      std::pop_heap(heap.begin(), heap.end(), ranks_before);
      heap.back() = cand;
      std::push_heap(heap.begin(), heap.end(), ranks_before);
    }
  }
  std::sort_heap(heap.begin(), heap.end(), ranks_before);
}

}  // namespace

double SimilarityIndex::lookup(std::size_t u, std::size_t v) const {
  for (const auto& nb : neighbors[u])
    if (nb.id == v) return nb.score;
  return 0.0;
}

std::size_t neighbor_count(std::size_t n, double alpha) {
  if (n < 2) return 0;
  // alpha * n lands a few ulps above an integer for values like 0.07 * 100
  const double x = alpha * static_cast<double>(n);
  const double nearest = std::round(x);
  auto k = static_cast<std::size_t>(std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x));
  if (k >= n) {
    spdlog::warn("top-alpha neighbor count {} >= N={}, clamping to N-1", k, n);
    k = n - 1;
  }
  return std::max<std::size_t>(k, 1);
}

SimilarityIndex build_topk_index(const PairScorer& scorer, double alpha, std::size_t workers) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  SimilarityIndex index;
  index.metric = scorer.metric();
  index.alpha = alpha;
  const std::size_t n = scorer.size();
  index.k = neighbor_count(n, alpha);
  index.neighbors.resize(n);
  if (n < 2) return index;

  workers = std::clamp<std::size_t>(workers, 1, n);
  std::atomic<std::size_t> next_row{0};
  auto work = [&] {
    std::vector<Neighbor> heap;
    for (std::size_t u = next_row++; u < n; u = next_row++) {
      fill_row(scorer, u, index.k, heap);
      index.neighbors[u] = heap;
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return index;
}

SimilarityIndex build_topk_index(const std::vector<SequenceRecord>& sequences, Metric metric, double alpha,
                                 std::size_t workers) {
  return build_topk_index(PairScorer::for_sequences(sequences, metric), alpha, workers);
}

SimilarityIndex build_topk_index(const SequenceSet& set, Metric metric, double alpha, std::size_t workers) {
  return build_topk_index(set.train, metric, alpha, workers);
}

void write_index(std::ostream& out, const SimilarityIndex& index) {
  out.write(kIndexMagic, 4);
  put_le<std::uint32_t>(out, kIndexVersion);
  const auto tag = index.metric.tag();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tag.size()));
  out.write(tag.data(), static_cast<std::streamsize>(tag.size()));
  put_le<double>(out, index.alpha);
  put_le<std::uint64_t>(out, index.neighbors.size());
  put_le<std::uint64_t>(out, index.k);
  for (const auto& row : index.neighbors) {
    if (row.size() != index.k) throw std::logic_error("index row length differs from K");
    for (const auto& nb : row) {
      put_le<std::uint32_t>(out, nb.id);
      put_le<double>(out, nb.score);
    }
  }
}

SimilarityIndex read_index(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kIndexMagic, 4) != 0) throw std::runtime_error("not an index file");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kIndexVersion) throw std::runtime_error("unsupported index version " + std::to_string(version));
  const auto tag_len = get_le<std::uint32_t>(in);
  std::string tag(tag_len, '\0');
  if (!in.read(tag.data(), tag_len)) throw std::runtime_error("truncated index file");

  SimilarityIndex index;
  index.metric = Metric::parse(tag);
  index.alpha = get_le<double>(in);
  const auto n = get_le<std::uint64_t>(in);
  index.k = get_le<std::uint64_t>(in);
  index.neighbors.resize(n);
  for (auto& row : index.neighbors) {
    row.resize(index.k);
    for (auto& nb : row) {
      nb.id = get_le<std::uint32_t>(in);
      nb.score = get_le<double>(in);
    }
  }
  return index;
}

void save_index(const std::filesystem::path& path, const SimilarityIndex& index) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_index(out, index);
}

SimilarityIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_index(in);
}

void write_index_csv(std::ostream& out, const SimilarityIndex& index) {
  out.precision(17);
  out << "sequence,rank,neighbor,score\n";
  for (std::size_t u = 0; u < index.neighbors.size(); ++u) {
    for (std::size_t r = 0; r < index.neighbors[u].size(); ++r) {
      out << u << ',' << r << ',' << index.neighbors[u][r].id << ',' << index.neighbors[u][r].score << '\n';
    }
  }
}

Histogram similarity_histogram(const std::vector<SequenceRecord>& sequences, Metric metric, std::size_t bins,
                               double threshold) {
  if (bins < 2) throw std::invalid_argument("histogram needs at least 2 bins");
  const auto scorer = PairScorer::for_sequences(sequences, metric);

  Histogram h;
  h.threshold = threshold;
  h.counts.assign(bins, 0);
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = static_cast<double>(i) / static_cast<double>(bins);

  for (std::size_t u = 0; u < sequences.size(); ++u) {
    for (std::size_t v = u + 1; v < sequences.size(); ++v) {
      if (sequences[u].target == sequences[v].target) continue;
      const double s = scorer.score(u, v);
      auto bin = static_cast<std::size_t>(s * static_cast<double>(bins));
      bin = std::min(bin, bins - 1);
      ++h.counts[bin];
      ++h.pairs;
      if (s > threshold) ++h.above_threshold;
    }
  }
  return h;
}

Histogram similarity_histogram(const SequenceSet& set, Metric metric, std::size_t bins, double threshold) {
  return similarity_histogram(set.train, metric, bins, threshold);
}

void write_histogram_csv(std::ostream& out, const Histogram& hist) {
  out << "bin_low,bin_high,count\n";
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    out << hist.edges[i] << ',' << hist.edges[i + 1] << ',' << hist.counts[i] << '\n';
  }
}

}  // namespace rcl
