#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rcl/losses.hpp"
#include "rcl/model.hpp"
#include "rcl/similarity.hpp"

namespace rcl {

enum class SemanticRefresh { epoch, batch };

struct TrainConfig {
  Metric metric{MetricKind::ngram, 2};
  LossVariant variant = LossVariant::wrcl;
  double lambda = 0.1;
  double alpha = 0.05;
  double tau = 1.0;
  double dropout = 0.2;
  double lr = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 50;
  std::size_t dim = 64;
  std::size_t blocks = 2;
  std::size_t heads = 2;
  std::size_t ffn_dim = 64;
  std::size_t max_len = 50;
  std::uint64_t seed = 42;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t patience = 10;  // 0 disables early stopping
  std::size_t checkpoint_every = 0;
  bool weighted_fallback = true;
  SemanticRefresh semantic_refresh = SemanticRefresh::epoch;
  std::size_t workers = 1;
  std::vector<std::size_t> eval_ks{5, 10, 20};

  /// Throws std::invalid_argument naming the offending key.
  void validate() const;
  ModelShape shape(std::size_t item_count) const;

  /// Sets one key from its text form; unknown keys throw.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;

  /// Flat `key=value` lines sorted by key; `#` starts a comment.
  void write(std::ostream& out) const;
  static TrainConfig read(std::istream& in);
  static TrainConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// 16 hex digits over every key except the seed.
  std::string hash() const;

  bool operator==(const TrainConfig& other) const { return to_map() == other.to_map(); }
};

}  // namespace rcl
