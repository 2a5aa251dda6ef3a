#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include "rcl/corpus.hpp"

namespace rcl {

/// Planted-cluster generator. Items are split into `intents` disjoint pools,
/// each arranged in a fixed cycle. A user picks one intent and walks its
/// cycle: each step moves to the successor, or with probability `jump` to a
/// uniform pool item. With probability `noise` the emitted item is replaced by
/// an item from another pool. When `overlap` > 0 the first `shared_items` ids
/// form a block outside every pool that each emitted item is drawn from with
/// probability `overlap`, so sequences of different intents share items.
struct SynthConfig {
  std::size_t users = 2000;
  std::size_t items = 500;
  std::size_t intents = 20;
  std::size_t min_len = 8;
  std::size_t max_len = 20;
  double noise = 0.1;
  double jump = 0.3;
  double overlap = 0.0;
  std::size_t shared_items = 4;
  std::uint64_t seed = 1;

  void validate() const;
  void set(const std::string& key, const std::string& value);
  void write(std::ostream& out) const;
};

/// Events carry per-user increasing timestamps; user and item names are
/// "u<k>" and "i<k>" with k counting from 1.
InteractionCorpus generate_synthetic(const SynthConfig& config);

/// `user<TAB>item<TAB>timestamp` with a header line.
void write_interactions_tsv(std::ostream& out, const InteractionCorpus& corpus);

}  // namespace rcl
