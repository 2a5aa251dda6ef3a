#include "rcl/synth.hpp"

#include <charconv>
#include <ostream>
#include <random>
#include <stdexcept>
#include <vector>

#include "rcl/model.hpp"
#include "rcl/selection.hpp"

namespace rcl {

namespace {

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  const std::size_t pooled = overlap > 0.0 ? items - std::min(items, shared_items) : items;
  if (intents == 0 || pooled < 2 * intents) throw std::invalid_argument("synth needs at least two pool items per intent");
  if (min_len < 4 || max_len < min_len) throw std::invalid_argument("synth lengths need 4 <= min_len <= max_len");
  if (!(noise >= 0.0 && noise < 1.0)) throw std::invalid_argument("synth noise must lie in [0, 1)");
  if (!(jump >= 0.0 && jump <= 1.0)) throw std::invalid_argument("synth jump must lie in [0, 1]");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw std::invalid_argument("synth overlap must lie in [0, 1)");
  if (overlap > 0.0 && shared_items == 0) throw std::invalid_argument("synth overlap needs shared_items > 0");
  if (intents < 2 && noise > 0.0) throw std::invalid_argument("synth noise needs at least two intents");
  if (users == 0) throw std::invalid_argument("synth needs users");
}

void SynthConfig::set(const std::string& key, const std::string& value) {
  if (key == "users") users = parse_value<std::size_t>(key, value);
  else if (key == "items") items = parse_value<std::size_t>(key, value);
  else if (key == "intents") intents = parse_value<std::size_t>(key, value);
  else if (key == "min_len") min_len = parse_value<std::size_t>(key, value);
  else if (key == "max_len") max_len = parse_value<std::size_t>(key, value);
  else if (key == "noise") noise = parse_value<double>(key, value);
  else if (key == "jump") jump = parse_value<double>(key, value);
  else if (key == "overlap") overlap = parse_value<double>(key, value);
  else if (key == "shared_items") shared_items = parse_value<std::size_t>(key, value);
  else if (key == "seed") seed = parse_value<std::uint64_t>(key, value);
  else throw std::invalid_argument("unknown synth key: " + key);
}

void SynthConfig::write(std::ostream& out) const {
  out << "users=" << users << "\nitems=" << items << "\nintents=" << intents << "\nmin_len=" << min_len
      << "\nmax_len=" << max_len << "\nnoise=" << noise << "\njump=" << jump << "\noverlap=" << overlap
      << "\nshared_items=" << shared_items << "\nseed=" << seed << '\n';
}

InteractionCorpus generate_synthetic(const SynthConfig& config) {
  config.validate();
  Rng rng(config.seed);

  const std::size_t shared = config.overlap > 0.0 ? config.shared_items : 0;
  std::vector<std::size_t> pool_items;
  for (std::size_t i = shared + 1; i <= config.items; ++i) pool_items.push_back(i);
  for (std::size_t i = pool_items.size(); i > 1; --i) std::swap(pool_items[i - 1], pool_items[uniform_index(rng, i)]);

  std::vector<std::vector<std::size_t>> pools(config.intents);
  for (std::size_t g = 0; g < config.intents; ++g) {
    const std::size_t begin = g * pool_items.size() / config.intents;
    const std::size_t end = (g + 1) * pool_items.size() / config.intents;
    pools[g].assign(pool_items.begin() + static_cast<std::ptrdiff_t>(begin),
                    pool_items.begin() + static_cast<std::ptrdiff_t>(end));
  }

  InteractionCorpus corpus;
  const std::size_t span = config.max_len - config.min_len + 1;
  for (std::size_t u = 1; u <= config.users; ++u) {
    const std::size_t g = uniform_index(rng, config.intents);
    const auto& pool = pools[g];
    const std::size_t len = config.min_len + uniform_index(rng, span);
    std::size_t pos = uniform_index(rng, pool.size());
    const UserId user = corpus.users.intern("u" + std::to_string(u));
    for (std::size_t t = 0; t < len; ++t) {
      std::size_t item = pool[pos];
      if (shared > 0 && uniform01(rng) < config.overlap) {
        item = 1 + uniform_index(rng, shared);
      } else if (uniform01(rng) < config.noise) {
        std::size_t h = uniform_index(rng, config.intents - 1);
        if (h >= g) ++h;
        item = pools[h][uniform_index(rng, pools[h].size())];
      }
      corpus.events.push_back(
          {user, corpus.items.intern("i" + std::to_string(item)), static_cast<std::int64_t>(t)});
      pos = uniform01(rng) < config.jump ? uniform_index(rng, pool.size()) : (pos + 1) % pool.size();
    }
  }
  return corpus;
}

void write_interactions_tsv(std::ostream& out, const InteractionCorpus& corpus) {
  out << "user\titem\ttimestamp\n";
  for (const auto& e : corpus.events) {
    out << corpus.users.name(e.user) << '\t' << corpus.items.name(e.item) << '\t' << e.timestamp << '\n';
  }
}

}  // namespace rcl
