#include "rcl/trainer.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>

#include "rcl/eval.hpp"
#include "rcl/topk_index.hpp"

namespace rcl {

namespace {

enum SlotRole : std::uint32_t { kCenter = 0, kStrong = 1, kWeak = 2, kView = 3 };

struct Slot {
  std::size_t sequence;
  SlotRole role;
  std::size_t index;
};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Dropout stream of one encoded slot. Seeding from a single mixed word keeps
// the per-step cost low; std::seed_seq dominated small-model steps.
Rng slot_rng(std::uint64_t seed, std::uint64_t step, SlotRole role, std::size_t index) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ step);
  h = splitmix64(h ^ (static_cast<std::uint64_t>(role) << 32 | static_cast<std::uint32_t>(index)));
  return Rng(h);
}

Rng stream_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return Rng(seq);
}

std::span<const ItemId> model_window(const SequenceRecord& rec, std::size_t max_len) {
  std::span<const ItemId> items(rec.items);
  return items.size() > max_len ? items.last(max_len) : items;
}

bool uses_weak(LossVariant v) {
  return v == LossVariant::weak || v == LossVariant::unweight || v == LossVariant::wrcl ||
         v == LossVariant::three_pairs;
}

bool uses_strong(LossVariant v) {
  return v == LossVariant::strong || v == LossVariant::unweight || v == LossVariant::wrcl ||
         v == LossVariant::three_pairs;
}

std::vector<Matrix*> tensors_of(ModelParams& p, std::vector<std::string>* names = nullptr) {
  std::vector<Matrix*> out;
  p.for_each_tensor([&](const std::string& name, Matrix& m) {
    out.push_back(&m);
    if (names) names->push_back(name);
  });
  return out;
}

std::vector<const Matrix*> tensors_of(const ModelParams& p) {
  std::vector<const Matrix*> out;
  p.for_each_tensor([&](const std::string&, const Matrix& m) { out.push_back(&m); });
  return out;
}

}  // namespace

AdamState AdamState::for_params(const ModelParams& params) {
  return AdamState{ModelParams::zeros(params.shape), ModelParams::zeros(params.shape), 0};
}

void adam_step(ModelParams& params, AdamState& state, const ModelParams& grads, const AdamOptions& o) {
  grads.for_each_tensor([](const std::string& name, const Matrix& g) {
    if (!g.allFinite()) throw NonFiniteGradientError(name);
  });
  if (state.m.blocks.size() != params.blocks.size() || state.m.item_emb.rows() != params.item_emb.rows()) {
    state = AdamState::for_params(params);
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));

  auto p = tensors_of(params);
  auto m = tensors_of(state.m);
  auto v = tensors_of(state.v);
  const auto g = tensors_of(grads);
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i]->array() = o.beta1 * m[i]->array() + (1.0 - o.beta1) * g[i]->array();
    v[i]->array() = o.beta2 * v[i]->array() + (1.0 - o.beta2) * g[i]->array().square();
    p[i]->array() -= o.lr * (m[i]->array() / c1) / ((v[i]->array() / c2).sqrt() + o.eps);
  }
  params.item_emb.row(0).setZero();
}

StepResult compute_step(const TrainConfig& config, const ModelParams& params,
                        const std::vector<SequenceRecord>& sequences, const TrainingBatch& batch,
                        std::uint64_t step) {
  const std::size_t b = batch.centers.size();
  const LossVariant variant = config.variant;

  std::vector<Slot> slots;
  slots.reserve(3 * b);
  for (std::size_t i = 0; i < b; ++i) slots.push_back({batch.centers[i], kCenter, i});

  std::vector<ContrastiveCenter> centers(b);
  for (std::size_t i = 0; i < b; ++i) centers[i].slot = i;
  if (uses_strong(variant)) {
    for (std::size_t i = 0; i < b; ++i) {
      if (batch.strong[i]) {
        centers[i].strong = slots.size();
        slots.push_back({*batch.strong[i], kStrong, i});
      } else if (variant == LossVariant::strong) {
        centers[i].strong = slots.size();
        slots.push_back({batch.centers[i], kView, i});
      }
    }
  }
  if (uses_weak(variant)) {
    for (std::size_t i = 0; i < b; ++i) {
      centers[i].weak = slots.size();
      centers[i].weak_score = std::max(batch.weak_score[i], kWeightFloor);
      slots.push_back({batch.weak[i], kWeak, i});
      centers[i].peer_scores.resize(b);
      for (std::size_t j = 0; j < b; ++j)
        centers[i].peer_scores[j] = batch.batch_scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }

  const EncodeOptions opts{config.dropout, true};
  const auto d = static_cast<Eigen::Index>(params.shape.dim);
  Matrix reps(static_cast<Eigen::Index>(slots.size()), d);
  std::vector<EncoderTrace> traces(slots.size());
  for (std::size_t s = 0; s < slots.size(); ++s) {
    Rng rng = slot_rng(config.seed, step, slots[s].role, slots[s].index);
    reps.row(static_cast<Eigen::Index>(s)) =
        encode_sequence(model_window(sequences[slots[s].sequence], params.shape.max_len), params, opts, &rng,
                        &traces[s])
            .transpose();
  }

  std::vector<ItemId> targets;
  targets.reserve(b);
  for (const auto c : batch.centers) targets.push_back(sequences[c].target);
  const Matrix center_reps = reps.topRows(static_cast<Eigen::Index>(b));
  const auto rec = rec_loss_with_grad(center_reps, targets, params.item_emb);

  Matrix grad_reps = Matrix::Zero(reps.rows(), d);
  grad_reps.topRows(static_cast<Eigen::Index>(b)) = rec.grad_reps;

  StepResult out;
  if (variant != LossVariant::base) {
    ContrastiveBatch cb{std::move(reps), std::move(centers)};
    auto cr = contrastive_loss(variant, cb, {config.tau, config.weighted_fallback});
    grad_reps += config.lambda * cr.grad;
    out.breakdown = std::move(cr.breakdown);
  } else {
    out.breakdown.clamped.assign(b, 0);
  }
  out.breakdown.rec = rec.loss;
  out.breakdown.total = total_loss(rec.loss, out.breakdown.contrastive, config.lambda);

  out.grads = ModelParams::zeros(params.shape);
  out.grads.item_emb += rec.grad_item_emb;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    const Vector g = grad_reps.row(static_cast<Eigen::Index>(s)).transpose();
    if (g.isZero(0.0)) continue;
    backward(traces[s], g, params, out.grads);
  }
  out.grads.item_emb.row(0).setZero();
  return out;
}

TrainResult train(const TrainConfig& config, const SequenceSet& data, const TrainOptions& options) {
  config.validate();
  if (data.train.empty()) throw EmptyCorpusError("no training sequences");
  const auto& seqs = data.train;

  TrainResult result;
  ModelParams params = ModelParams::initialize(config.shape(data.item_count), config.seed);
  result.params = params;
  if (config.epochs == 0) return result;

  const StrongIndex strong_index = build_strong_index(seqs);
  result.empty_strong_fraction = strong_index.empty_fraction();
  const bool need_weak = uses_weak(config.variant);
  if (need_weak && seqs.size() < 2) throw std::invalid_argument("weak positives need at least two sequences");
  const bool need_strong = uses_strong(config.variant);
  const bool semantic = config.metric.kind == MetricKind::semantic;

  std::optional<PairScorer> scorer;
  SimilarityIndex sim_index;
  auto rebuild_semantic = [&] {
    std::vector<std::vector<double>> vectors(seqs.size());
    for (std::size_t u = 0; u < seqs.size(); ++u) {
      const Vector h = encode_sequence(model_window(seqs[u], params.shape.max_len), params, {}, nullptr);
      vectors[u].assign(h.data(), h.data() + h.size());
    }
    scorer = PairScorer::for_vectors(std::move(vectors));
    sim_index = build_topk_index(*scorer, config.alpha, config.workers);
  };
  if (need_weak && !semantic) {
    scorer = PairScorer::for_sequences(seqs, config.metric);
    sim_index = build_topk_index(*scorer, config.alpha, config.workers);
  }

  Rng shuffle_rng = stream_rng(config.seed, 1);
  Rng sample_rng = stream_rng(config.seed, 2);
  AdamState adam = AdamState::for_params(params);
  const AdamOptions adam_opts{config.lr, config.beta1, config.beta2, config.adam_eps};
  EpochSampler sampler(seqs.size(), config.batch_size);

  auto write_json = [&](const nlohmann::json& j) {
    if (options.log) *options.log << j.dump() << '\n';
  };
  auto diverge = [&](std::uint64_t step, const std::string& why) {
    if (!options.checkpoint_dir.empty()) save_checkpoint(options.checkpoint_dir / "last_good.ckpt", params);
    throw DivergenceError("training diverged at step " + std::to_string(step) + ": " + why);
  };

  double best_ndcg = -1.0;
  ModelParams best_params = params;
  std::size_t since_best = 0;
  std::uint64_t step = 0;
  const std::vector<std::size_t> stop_k{10};

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (need_weak && semantic && config.semantic_refresh == SemanticRefresh::epoch) rebuild_semantic();
    sampler.shuffle(shuffle_rng);

    EpochLog elog;
    elog.epoch = epoch;
    for (std::size_t bi = 0; bi < sampler.batch_count(); ++bi) {
      if (need_weak && semantic && config.semantic_refresh == SemanticRefresh::batch) rebuild_semantic();
      const auto centers = sampler.batch(bi);
      TrainingBatch batch;
      if (need_weak) {
        batch = make_batch(centers, strong_index, sim_index, BatchScorer(&*scorer, &sim_index), sample_rng);
      } else {
        batch.centers.assign(centers.begin(), centers.end());
        for (const auto u : centers)
          batch.strong.push_back(need_strong ? sample_strong(u, strong_index, sample_rng) : std::nullopt);
      }

      ++step;
      StepResult sr;
      try {
        sr = compute_step(config, params, seqs, batch, step);
        if (!std::isfinite(sr.breakdown.total)) diverge(step, "non-finite loss");
        adam_step(params, adam, sr.grads, adam_opts);
      } catch (const NonFiniteGradientError& e) {
        diverge(step, e.what());
      }
      if (!params.all_finite()) diverge(step, "non-finite parameters");

      StepLog slog{epoch, step, sr.breakdown.rec, sr.breakdown.strong_term, sr.breakdown.weak_term,
                   sr.breakdown.relative_term, sr.breakdown.clamp_rate(), sr.breakdown.total};
      elog.mean_total += slog.total;
      elog.mean_rec += slog.rec;
      write_json({{"kind", "step"}, {"epoch", epoch}, {"step", step}, {"rec", slog.rec},
                  {"strong", slog.strong}, {"weak", slog.weak}, {"relative", slog.relative},
                  {"clamp_rate", slog.clamp_rate}, {"total", slog.total}});
      if (options.keep_step_logs) result.steps.push_back(slog);
    }
    elog.mean_total /= static_cast<double>(sampler.batch_count());
    elog.mean_rec /= static_cast<double>(sampler.batch_count());

    bool stop = false;
    if (!data.valid.empty()) {
      const auto report = evaluate(params, data.valid, stop_k, config.workers);
      elog.valid_ndcg10 = report.ndcg[0];
      elog.valid_hr10 = report.hr[0];
      if (report.ndcg[0] > best_ndcg) {
        best_ndcg = report.ndcg[0];
        best_params = params;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (config.patience > 0 && ++since_best >= config.patience) {
        stop = true;
      }
    } else {
      result.best_epoch = epoch;
    }
    elog.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::json j{{"kind", "epoch"}, {"epoch", epoch}, {"mean_total", elog.mean_total},
                     {"mean_rec", elog.mean_rec}, {"seconds", elog.seconds}};
    if (elog.valid_ndcg10) {
      j["valid_ndcg10"] = *elog.valid_ndcg10;
      j["valid_hr10"] = *elog.valid_hr10;
    }
    write_json(j);
    spdlog::debug("epoch {} loss {:.5f} valid ndcg@10 {:.5f} ({:.2f}s)", epoch, elog.mean_total,
                  elog.valid_ndcg10.value_or(0.0), elog.seconds);
    result.epochs.push_back(elog);

    if (config.checkpoint_every > 0 && !options.checkpoint_dir.empty() && epoch % config.checkpoint_every == 0) {
      save_checkpoint(options.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"), params);
    }
    if (stop) {
      spdlog::info("early stop after epoch {} (best epoch {})", epoch, result.best_epoch);
      break;
    }
  }
  result.params = data.valid.empty() ? std::move(params) : std::move(best_params);
  return result;
}

GradCheckResult grad_check(const ModelParams& params, const ModelParams& analytic,
                           const std::function<double(const ModelParams&)>& loss, std::size_t probes, double h,
                           Rng& rng, double floor) {
  ModelParams work = params;
  std::vector<std::string> names;
  auto w = tensors_of(work, &names);
  const auto a = tensors_of(analytic);

  std::vector<std::size_t> offsets{0};
  for (const auto* m : w) offsets.push_back(offsets.back() + static_cast<std::size_t>(m->size()));
  const std::size_t total = offsets.back();

  GradCheckResult res;
  auto probe = [&](std::size_t flat) {
    const auto t = static_cast<std::size_t>(std::upper_bound(offsets.begin(), offsets.end(), flat) - offsets.begin()) - 1;
    const auto i = static_cast<Eigen::Index>(flat - offsets[t]);
    double& x = w[t]->data()[i];
    const double saved = x;
    x = saved + h;
    const double up = loss(work);
    x = saved - h;
    const double down = loss(work);
    x = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double an = a[t]->data()[i];
    const double err = std::abs(an - numeric) / std::max({std::abs(an), std::abs(numeric), floor});
    if (err > res.max_rel_error || res.probes == 0) {
      res.max_rel_error = err;
      res.worst_parameter = names[t];
    }
    ++res.probes;
  };
  if (probes == 0) {
    for (std::size_t f = 0; f < total; ++f) probe(f);
  } else {
    for (std::size_t p = 0; p < probes; ++p) probe(uniform_index(rng, total));
  }
  return res;
}

}  // namespace rcl
