#include "rcl/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "rcl/config.hpp"
#include "rcl/corpus.hpp"
#include "rcl/eval.hpp"
#include "rcl/synth.hpp"
#include "rcl/topk_index.hpp"
#include "rcl/trainer.hpp"

namespace rcl::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flags shared by the training verbs; each one overrides the config file.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> metric;
  std::optional<double> alpha;
  std::optional<double> lambda;
  std::optional<double> tau;
  std::optional<std::string> variant;
  std::optional<std::size_t> workers;
  std::vector<std::string> sets;

  void add_to(CLI::App& app) {
    app.add_option("--config", config, "key=value config file");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--metric", metric, "jaccard, ngram<N>, tfidf, levenshtein or semantic");
    app.add_option("--alpha", alpha, "top-alpha pool ratio");
    app.add_option("--lambda", lambda, "contrastive weight");
    app.add_option("--tau", tau, "temperature");
    app.add_option("--variant", variant, "base, strong, weak, unweight, wrcl or three_pairs");
    app.add_option("--workers", workers, "worker threads");
    app.add_option("--set", sets, "extra key=value override")->take_all();
  }

  TrainConfig resolve() const {
    TrainConfig c = config.empty() ? TrainConfig{} : TrainConfig::load(config);
    if (seed) c.seed = *seed;
    if (metric) c.metric = Metric::parse(*metric);
    if (alpha) c.alpha = *alpha;
    if (lambda) c.lambda = *lambda;
    if (tau) c.tau = *tau;
    if (variant) c.variant = parse_loss_variant(*variant);
    if (workers) c.workers = *workers;
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    c.validate();
    return c;
  }
};

std::string default_data_dir() {
  const char* env = std::getenv("RCL_DATA_DIR");
  return env ? std::string(env) : std::string();
}

fs::path require_dir(const std::string& dir, const char* what) {
  if (dir.empty()) throw UsageError(std::string("missing ") + what + " (pass --data or set RCL_DATA_DIR)");
  return dir;
}

template <typename F>
void write_file(const fs::path& path, F&& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  body(out);
  out.flush();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

fs::path run_dir(const fs::path& root, const TrainConfig& c) {
  return root / fmt::format("{}-{}", c.hash(), c.seed);
}

struct RunOutputs {
  EvalReport test;
  fs::path dir;
};

// Trains one configuration and writes config, log, checkpoint and test metrics.
RunOutputs train_run(const TrainConfig& c, const SequenceSet& data, const fs::path& root, std::ostream& out) {
  const fs::path dir = run_dir(root, c);
  fs::create_directories(dir / "checkpoints");
  c.save(dir / "config.cfg");
  std::ofstream log(dir / "train.jsonl");
  if (!log) throw std::runtime_error("cannot write " + (dir / "train.jsonl").string());
  TrainOptions opts;
  opts.log = &log;
  opts.checkpoint_dir = dir / "checkpoints";
  opts.keep_step_logs = false;
  const auto result = train(c, data, opts);
  save_checkpoint(dir / "model.ckpt", result.params);

  auto report = evaluate(result.params, data.test, c.eval_ks, c.workers);
  report.variant = to_string(c.variant);
  const std::vector<EvalReport> reports{report};
  write_file(dir / "eval.csv", [&](std::ostream& o) { write_eval_csv(o, reports); });
  out << fmt::format("{}: best epoch {}, strong-empty fraction {:.3f}\n", dir.string(), result.best_epoch,
                     result.empty_strong_fraction);
  write_eval_table(out, reports);
  return {std::move(report), dir};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Relative contrastive learning for sequential recommendation"};
  app.require_subcommand(1, 1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  // synth
  SynthConfig synth;
  std::string synth_config, synth_out;
  std::vector<std::string> synth_sets;
  auto* synth_cmd = app.add_subcommand("synth", "generate the planted-cluster corpus");
  synth_cmd->add_option("--config", synth_config, "key=value generator file");
  synth_cmd->add_option("--seed", synth.seed, "generator seed");
  synth_cmd->add_option("--set", synth_sets, "generator key=value override")->take_all();
  synth_cmd->add_option("--out", synth_out, "output interactions TSV")->required();

  // preprocess
  std::string pre_input, pre_format = "tsv", pre_out;
  int pre_kcore = 5;
  std::size_t pre_max_len = 50;
  auto* pre_cmd = app.add_subcommand("preprocess", "k-core filter and leave-one-out split");
  pre_cmd->add_option("--input", pre_input, "interaction file")->required();
  pre_cmd->add_option("--format", pre_format, "tsv, csv or dat");
  pre_cmd->add_option("--kcore", pre_kcore, "minimum interactions per user and item");
  pre_cmd->add_option("--max-len", pre_max_len, "history window");
  pre_cmd->add_option("--out", pre_out, "output directory")->required();

  // index
  std::string idx_data = default_data_dir(), idx_out, idx_metric = "jaccard";
  double idx_alpha = 0.05;
  std::size_t idx_workers = 1;
  bool idx_csv = false;
  auto* idx_cmd = app.add_subcommand("index", "build the top-alpha similarity index");
  idx_cmd->add_option("--data", idx_data, "sequence set directory");
  idx_cmd->add_option("--metric", idx_metric, "similarity metric");
  idx_cmd->add_option("--alpha", idx_alpha, "pool ratio");
  idx_cmd->add_option("--workers", idx_workers, "worker threads");
  idx_cmd->add_flag("--csv", idx_csv, "write CSV instead of the binary format");
  idx_cmd->add_option("--out", idx_out, "output file")->required();

  // histogram
  std::string hist_data = default_data_dir(), hist_out, hist_metric = "jaccard";
  std::size_t hist_bins = 10;
  double hist_threshold = 0.7;
  auto* hist_cmd = app.add_subcommand("histogram", "similarity of different-target training pairs");
  hist_cmd->add_option("--data", hist_data, "sequence set directory");
  hist_cmd->add_option("--metric", hist_metric, "similarity metric");
  hist_cmd->add_option("--bins", hist_bins, "histogram bins");
  hist_cmd->add_option("--threshold", hist_threshold, "high-similarity threshold");
  hist_cmd->add_option("--out", hist_out, "output CSV")->required();

  // train
  Overrides train_over;
  std::string train_data = default_data_dir(), train_out;
  auto* train_cmd = app.add_subcommand("train", "train one configuration");
  train_over.add_to(*train_cmd);
  train_cmd->add_option("--data", train_data, "sequence set directory");
  train_cmd->add_option("--out", train_out, "run root; the run directory is <config hash>-<seed>")->required();

  // eval
  std::string eval_data = default_data_dir(), eval_ckpt, eval_split = "test", eval_out, eval_ks = "5,10,20",
              eval_variant = "model";
  std::size_t eval_workers = 1;
  auto* eval_cmd = app.add_subcommand("eval", "full-ranking HR@K and NDCG@K");
  eval_cmd->add_option("--data", eval_data, "sequence set directory");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--split", eval_split, "valid or test");
  eval_cmd->add_option("--ks", eval_ks, "comma-separated cutoffs");
  eval_cmd->add_option("--variant", eval_variant, "label for the CSV");
  eval_cmd->add_option("--workers", eval_workers, "worker threads");
  eval_cmd->add_option("--out", eval_out, "output CSV")->required();

  // ablate
  Overrides ablate_over;
  std::string ablate_data = default_data_dir(), ablate_out, ablate_variants = "weak,strong,unweight,wrcl,three_pairs",
              ablate_metrics = "jaccard";
  auto* ablate_cmd = app.add_subcommand("ablate", "variant x metric grid with a comparison table");
  ablate_over.add_to(*ablate_cmd);
  ablate_cmd->add_option("--data", ablate_data, "sequence set directory");
  ablate_cmd->add_option("--variants", ablate_variants, "comma-separated loss variants");
  ablate_cmd->add_option("--metrics", ablate_metrics, "comma-separated metrics");
  ablate_cmd->add_option("--out", ablate_out, "output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 2;
  }

  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*synth_cmd) {
      if (!synth_config.empty()) {
        std::ifstream in(synth_config);
        if (!in) throw std::runtime_error("cannot open " + synth_config);
        const auto seed = synth.seed;
        std::string line;
        while (std::getline(in, line)) {
          if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
          const auto eq = line.find('=');
          if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
          if (eq == std::string::npos) throw std::runtime_error("bad line in " + synth_config + ": " + line);
          auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t\r"));
            s.erase(s.find_last_not_of(" \t\r") + 1);
            return s;
          };
          synth.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
        if (synth_cmd->count("--seed")) synth.seed = seed;
      }
      for (const auto& kv : synth_sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
        synth.set(kv.substr(0, eq), kv.substr(eq + 1));
      }
      const auto corpus = generate_synthetic(synth);
      write_file(synth_out, [&](std::ostream& o) { write_interactions_tsv(o, corpus); });
      out << fmt::format("wrote {} interactions of {} users to {}\n", corpus.events.size(), corpus.user_count(),
                         synth_out);
      return 0;
    }

    if (*pre_cmd) {
      const auto corpus = k_core_filter(load_interactions(pre_input, parse_interaction_format(pre_format)), pre_kcore);
      const auto set = build_sequences(corpus, pre_max_len);
      save_sequence_set(pre_out, set);
      const auto stats = corpus_stats(set);
      write_file(fs::path(pre_out) / "stats.txt", [&](std::ostream& o) { write_stats(o, stats); });
      write_stats(out, stats);
      return 0;
    }

    if (*idx_cmd) {
      const auto set = load_sequence_set(require_dir(idx_data, "data directory"));
      const auto index = build_topk_index(set, Metric::parse(idx_metric), idx_alpha, idx_workers);
      if (idx_csv) {
        write_file(idx_out, [&](std::ostream& o) { write_index_csv(o, index); });
      } else {
        if (fs::path(idx_out).has_parent_path()) fs::create_directories(fs::path(idx_out).parent_path());
        std::ofstream o(idx_out, std::ios::binary);
        if (!o) throw std::runtime_error("cannot write " + idx_out);
        write_index(o, index);
        if (!o) throw std::runtime_error("failed writing " + idx_out);
      }
      out << fmt::format("indexed {} sequences, K={}\n", index.size(), index.k);
      return 0;
    }

    if (*hist_cmd) {
      const auto set = load_sequence_set(require_dir(hist_data, "data directory"));
      const auto hist = similarity_histogram(set, Metric::parse(hist_metric), hist_bins, hist_threshold);
      write_file(hist_out, [&](std::ostream& o) { write_histogram_csv(o, hist); });
      out << fmt::format("{} different-target pairs, {:.4f} above {}\n", hist.pairs, hist.share_above(),
                         hist_threshold);
      return 0;
    }

    if (*train_cmd) {
      const TrainConfig c = train_over.resolve();
      const auto set = load_sequence_set(require_dir(train_data, "data directory"));
      train_run(c, set, train_out, out);
      return 0;
    }

    if (*eval_cmd) {
      const auto set = load_sequence_set(require_dir(eval_data, "data directory"));
      const auto* split = eval_split == "test" ? &set.test : eval_split == "valid" ? &set.valid : nullptr;
      if (!split) throw UsageError("--split must be valid or test");
      std::vector<std::size_t> ks;
      for (const auto& k : split_list(eval_ks)) ks.push_back(std::stoul(k));
      auto report = evaluate(load_checkpoint(eval_ckpt), *split, ks, eval_workers);
      report.variant = eval_variant;
      const std::vector<EvalReport> reports{report};
      write_file(eval_out, [&](std::ostream& o) { write_eval_csv(o, reports); });
      write_eval_table(out, reports);
      return 0;
    }

    if (*ablate_cmd) {
      const TrainConfig base = ablate_over.resolve();
      const auto set = load_sequence_set(require_dir(ablate_data, "data directory"));
      const fs::path root(ablate_out);
      std::vector<EvalReport> rows;
      std::vector<std::string> metrics;
      for (const auto& m : split_list(ablate_metrics)) {
        for (const auto& v : split_list(ablate_variants)) {
          TrainConfig c = base;
          c.metric = Metric::parse(m);
          c.variant = parse_loss_variant(v);
          auto r = train_run(c, set, root / "runs", out).test;
          r.variant = to_string(c.variant) + "/" + c.metric.tag();
          rows.push_back(std::move(r));
          metrics.push_back(c.metric.tag());
        }
      }
      write_file(root / "ablation.csv", [&](std::ostream& o) {
        o << "variant,metric";
        for (const auto k : base.eval_ks) o << ",HR@" << k << ",NDCG@" << k;
        o << '\n';
        for (std::size_t i = 0; i < rows.size(); ++i) {
          o << rows[i].variant.substr(0, rows[i].variant.find('/')) << ',' << metrics[i];
          for (const auto k : base.eval_ks) o << fmt::format(",{:.6f},{:.6f}", rows[i].hr_at(k), rows[i].ndcg_at(k));
          o << '\n';
        }
      });
      out << "\n";
      write_eval_table(out, rows);
      return 0;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace rcl::cli
