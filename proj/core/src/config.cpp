#include "rcl/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace rcl {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("bad value for " + key + ": '" + value + "'");
}

std::string format_double(double v) { return fmt::format("{}", v); }

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw std::invalid_argument("config " + key + " " + why);
  };
  if (!(lambda >= 0.0 && lambda <= 1.0)) fail("lambda", "must lie in [0, 1]");
  if (!(alpha > 0.0 && alpha < 1.0)) fail("alpha", "must lie in (0, 1)");
  if (!(tau > 0.0)) fail("tau", "must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout", "must lie in [0, 1)");
  if (!(lr > 0.0)) fail("lr", "must be positive");
  if (batch_size < 2) fail("batch_size", "must be at least 2");
  if (dim == 0 || heads == 0 || dim % heads != 0) fail("heads", "must divide dim");
  if (ffn_dim == 0) fail("ffn_dim", "must be positive");
  if (max_len < 1) fail("max_len", "must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2", "must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps", "must be positive");
  if (eval_ks.empty()) fail("eval_ks", "must not be empty");
  for (auto k : eval_ks)
    if (k == 0) fail("eval_ks", "entries must be positive");
}

ModelShape TrainConfig::shape(std::size_t item_count) const {
  return ModelShape{item_count, max_len, dim, blocks, heads, ffn_dim};
}

void TrainConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "metric") metric = Metric::parse(value);
  else if (key == "variant") variant = parse_loss_variant(value);
  else if (key == "lambda") lambda = parse_number<double>(key, value);
  else if (key == "alpha") alpha = parse_number<double>(key, value);
  else if (key == "tau") tau = parse_number<double>(key, value);
  else if (key == "dropout") dropout = parse_number<double>(key, value);
  else if (key == "lr") lr = parse_number<double>(key, value);
  else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
  else if (key == "epochs") epochs = parse_number<std::size_t>(key, value);
  else if (key == "dim") dim = parse_number<std::size_t>(key, value);
  else if (key == "blocks") blocks = parse_number<std::size_t>(key, value);
  else if (key == "heads") heads = parse_number<std::size_t>(key, value);
  else if (key == "ffn_dim") ffn_dim = parse_number<std::size_t>(key, value);
  else if (key == "max_len") max_len = parse_number<std::size_t>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "beta1") beta1 = parse_number<double>(key, value);
  else if (key == "beta2") beta2 = parse_number<double>(key, value);
  else if (key == "adam_eps") adam_eps = parse_number<double>(key, value);
  else if (key == "patience") patience = parse_number<std::size_t>(key, value);
  else if (key == "checkpoint_every") checkpoint_every = parse_number<std::size_t>(key, value);
  else if (key == "weighted_fallback") weighted_fallback = parse_bool(key, value);
  else if (key == "semantic_refresh") {
    if (value == "epoch") semantic_refresh = SemanticRefresh::epoch;
    else if (value == "batch") semantic_refresh = SemanticRefresh::batch;
    else throw std::invalid_argument("bad value for semantic_refresh: '" + value + "'");
  } else if (key == "workers") workers = parse_number<std::size_t>(key, value);
  else if (key == "eval_ks") {
    eval_ks.clear();
    std::istringstream ss(value);
    std::string tok;
    while (std::getline(ss, tok, ',')) eval_ks.push_back(parse_number<std::size_t>(key, trim(tok)));
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  std::map<std::string, std::string> m;
  m["metric"] = metric.tag();
  m["variant"] = to_string(variant);
  m["lambda"] = format_double(lambda);
  m["alpha"] = format_double(alpha);
  m["tau"] = format_double(tau);
  m["dropout"] = format_double(dropout);
  m["lr"] = format_double(lr);
  m["batch_size"] = std::to_string(batch_size);
  m["epochs"] = std::to_string(epochs);
  m["dim"] = std::to_string(dim);
  m["blocks"] = std::to_string(blocks);
  m["heads"] = std::to_string(heads);
  m["ffn_dim"] = std::to_string(ffn_dim);
  m["max_len"] = std::to_string(max_len);
  m["seed"] = std::to_string(seed);
  m["beta1"] = format_double(beta1);
  m["beta2"] = format_double(beta2);
  m["adam_eps"] = format_double(adam_eps);
  m["patience"] = std::to_string(patience);
  m["checkpoint_every"] = std::to_string(checkpoint_every);
  m["weighted_fallback"] = weighted_fallback ? "true" : "false";
  m["semantic_refresh"] = semantic_refresh == SemanticRefresh::epoch ? "epoch" : "batch";
  m["workers"] = std::to_string(workers);
  std::string ks;
  for (std::size_t i = 0; i < eval_ks.size(); ++i) ks += (i ? "," : "") + std::to_string(eval_ks[i]);
  m["eval_ks"] = ks;
  return m;
}

void TrainConfig::write(std::ostream& out) const {
  for (const auto& [k, v] : to_map()) out << k << '=' << v << '\n';
}

TrainConfig TrainConfig::read(std::istream& in) {
  TrainConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", lineno);
    c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return read(in);
}

void TrainConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write(out);
}

std::string TrainConfig::hash() const {
  auto m = to_map();
  m.erase("seed");
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const auto& [k, v] : m) {
    for (const char ch : k + '=' + v + '\n') {
      h ^= static_cast<unsigned char>(ch);
      h *= 0x100000001b3ULL;
    }
  }
  return fmt::format("{:016x}", h);
}

}  // namespace rcl
