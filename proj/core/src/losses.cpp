#include "rcl/losses.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace rcl {

namespace {

// d(loss)/d(z_j) for each member of one InfoNCE term, z_j = h_c . h_j / tau.
struct Term {
  double loss = 0.0;
  std::vector<double> dz;
};

// loss = logsumexp_j(z_j + log w_j) - (z_pos + log_num).
Term info_nce(const Matrix& reps, std::size_t center, std::span<const std::size_t> members, std::size_t pos,
              std::span<const double> log_w, double log_num, double tau) {
  Term t;
  const std::size_t m = members.size();
  std::vector<double> a(m);
  const auto hc = reps.row(static_cast<Eigen::Index>(center));
  double z_pos = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double z = hc.dot(reps.row(static_cast<Eigen::Index>(members[j]))) / tau;
    if (j == pos) z_pos = z;
    a[j] = z + (log_w.empty() ? 0.0 : log_w[j]);
  }
  const double mx = *std::max_element(a.begin(), a.end());
  double sum = 0.0;
  for (double x : a) sum += std::exp(x - mx);
  const double lse = mx + std::log(sum);
  t.loss = lse - (z_pos + log_num);
  t.dz.resize(m);
  for (std::size_t j = 0; j < m; ++j) t.dz[j] = std::exp(a[j] - lse);
  t.dz[pos] -= 1.0;
  return t;
}

void accumulate(const Matrix& reps, Matrix& grad, std::size_t center, std::span<const std::size_t> members,
                const Term& term, double coef, double tau) {
  if (coef == 0.0) return;
  const auto c = static_cast<Eigen::Index>(center);
  for (std::size_t j = 0; j < members.size(); ++j) {
    const double g = coef * term.dz[j] / tau;
    const auto r = static_cast<Eigen::Index>(members[j]);
    grad.row(c) += g * reps.row(r);
    grad.row(r) += g * reps.row(c);
  }
}

class BatchLoss {
 public:
  BatchLoss(const ContrastiveBatch& batch, double tau) : batch_(batch), tau_(tau) {
    grad_ = Matrix::Zero(batch.reps.rows(), batch.reps.cols());
    scale_ = batch.centers.empty() ? 0.0 : 1.0 / static_cast<double>(batch.centers.size());
  }

  // Other centers followed by the positive; the positive is the last member.
  std::vector<std::size_t> members(std::size_t u, std::size_t positive) const {
    std::vector<std::size_t> out;
    out.reserve(batch_.centers.size());
    for (std::size_t c = 0; c < batch_.centers.size(); ++c)
      if (c != u) out.push_back(batch_.centers[c].slot);
    out.push_back(positive);
    return out;
  }

  Term pair(std::size_t u, std::size_t positive, std::vector<std::size_t>& mem) const {
    mem = members(u, positive);
    return info_nce(batch_.reps, batch_.centers[u].slot, mem, mem.size() - 1, {}, 0.0, tau_);
  }

  Term weighted_pair(std::size_t u, std::size_t positive, double positive_score,
                     std::vector<std::size_t>& mem) const {
    const auto& cu = batch_.centers[u];
    if (!(positive_score > 0.0)) throw DegenerateWeightError("weighted pair with a zero positive score");
    if (cu.peer_scores.size() != batch_.centers.size()) {
      throw std::invalid_argument("peer_scores must have one entry per center");
    }
    mem = members(u, positive);
    std::vector<double> log_w;
    log_w.reserve(mem.size());
    for (std::size_t c = 0; c < batch_.centers.size(); ++c)
      if (c != u) log_w.push_back(std::log(std::max(cu.peer_scores[c], kWeightFloor)));
    log_w.push_back(std::log(std::max(positive_score, kWeightFloor)));
    return info_nce(batch_.reps, cu.slot, mem, mem.size() - 1, log_w, std::log(positive_score), tau_);
  }

  void add(std::size_t u, const std::vector<std::size_t>& mem, const Term& t, double coef = 1.0) {
    accumulate(batch_.reps, grad_, batch_.centers[u].slot, mem, t, coef * scale_, tau_);
  }

  ContrastiveResult finish(LossBreakdown b) {
    b.strong_term *= scale_;
    b.weak_term *= scale_;
    b.relative_term *= scale_;
    b.contrastive = b.strong_term + b.weak_term + b.relative_term;
    b.total = b.contrastive;
    return {std::move(b), std::move(grad_)};
  }

 private:
  const ContrastiveBatch& batch_;
  double tau_;
  double scale_ = 0.0;
  Matrix grad_;
};

ContrastiveResult relative_loss(const ContrastiveBatch& batch, double tau, bool weighted, bool weighted_fallback) {
  BatchLoss L(batch, tau);
  LossBreakdown b;
  b.clamped.assign(batch.centers.size(), 0);
  std::vector<std::size_t> strong_mem;
  std::vector<std::size_t> weak_mem;
  for (std::size_t u = 0; u < batch.centers.size(); ++u) {
    const auto& cu = batch.centers[u];
    if (!cu.strong) {
      const Term weak = weighted && weighted_fallback ? L.weighted_pair(u, cu.weak, cu.weak_score, weak_mem)
                                                      : L.pair(u, cu.weak, weak_mem);
      b.weak_term += weak.loss;
      L.add(u, weak_mem, weak);
      continue;
    }
    const Term strong = L.pair(u, *cu.strong, strong_mem);
    const Term weak = weighted ? L.weighted_pair(u, cu.weak, cu.weak_score, weak_mem) : L.pair(u, cu.weak, weak_mem);
    b.strong_term += strong.loss;
    L.add(u, strong_mem, strong);
    // One strong pair is sampled per center, so it is also the boundary.
    const double boundary = strong.loss;
    if (weak.loss < boundary) {
      b.clamped[u] = 1;
      b.weak_term += boundary;
      L.add(u, strong_mem, strong);
    } else {
      b.weak_term += weak.loss;
      L.add(u, weak_mem, weak);
    }
  }
  return L.finish(std::move(b));
}

ContrastiveResult strong_only_loss(const ContrastiveBatch& batch, double tau) {
  BatchLoss L(batch, tau);
  LossBreakdown b;
  b.clamped.assign(batch.centers.size(), 0);
  std::vector<std::size_t> mem;
  for (std::size_t u = 0; u < batch.centers.size(); ++u) {
    const auto& cu = batch.centers[u];
    if (!cu.strong) continue;
    const Term t = L.pair(u, *cu.strong, mem);
    b.strong_term += t.loss;
    L.add(u, mem, t);
  }
  return L.finish(std::move(b));
}

ContrastiveResult weak_only_loss(const ContrastiveBatch& batch, double tau) {
  BatchLoss L(batch, tau);
  LossBreakdown b;
  b.clamped.assign(batch.centers.size(), 0);
  std::vector<std::size_t> mem;
  for (std::size_t u = 0; u < batch.centers.size(); ++u) {
    const Term t = L.pair(u, batch.centers[u].weak, mem);
    b.weak_term += t.loss;
    L.add(u, mem, t);
  }
  return L.finish(std::move(b));
}

Matrix stack(const Vector& center, const Vector& positive, std::span<const Vector> others) {
  Matrix reps(static_cast<Eigen::Index>(others.size() + 2), center.size());
  reps.row(0) = center.transpose();
  reps.row(1) = positive.transpose();
  for (std::size_t i = 0; i < others.size(); ++i) {
    if (others[i].size() != center.size()) throw std::invalid_argument("representation dimensions differ");
    reps.row(static_cast<Eigen::Index>(i + 2)) = others[i].transpose();
  }
  return reps;
}

}  // namespace

LossVariant parse_loss_variant(std::string_view name) {
  if (name == "base") return LossVariant::base;
  if (name == "strong") return LossVariant::strong;
  if (name == "weak") return LossVariant::weak;
  if (name == "unweight" || name == "rcl") return LossVariant::unweight;
  if (name == "wrcl") return LossVariant::wrcl;
  if (name == "three_pairs" || name == "3pairs") return LossVariant::three_pairs;
  throw std::invalid_argument("unknown loss variant: " + std::string(name));
}

std::string to_string(LossVariant variant) {
  switch (variant) {
    case LossVariant::base: return "base";
    case LossVariant::strong: return "strong";
    case LossVariant::weak: return "weak";
    case LossVariant::unweight: return "unweight";
    case LossVariant::wrcl: return "wrcl";
    case LossVariant::three_pairs: return "three_pairs";
  }
  return "unknown";
}

double rec_loss(const Matrix& probabilities, std::span<const ItemId> targets) {
  if (static_cast<std::size_t>(probabilities.rows()) != targets.size()) {
    throw std::invalid_argument("one target per prediction row expected");
  }
  if (targets.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    double p = probabilities(static_cast<Eigen::Index>(i), targets[i] - 1);
    if (p < kProbabilityFloor) {
      spdlog::warn("target probability {} clipped to {}", p, kProbabilityFloor);
      p = kProbabilityFloor;
    }
    sum -= std::log(p);
  }
  return sum / static_cast<double>(targets.size());
}

RecLossResult rec_loss_with_grad(const Matrix& reps, std::span<const ItemId> targets, const Matrix& item_emb) {
  const auto batch = reps.rows();
  if (static_cast<std::size_t>(batch) != targets.size()) throw std::invalid_argument("one target per row expected");
  const auto items = item_emb.rows() - 1;
  const auto emb = item_emb.bottomRows(items);

  Matrix probs = reps * emb.transpose();
  RecLossResult r;
  for (Eigen::Index i = 0; i < batch; ++i) {
    const double mx = probs.row(i).maxCoeff();
    probs.row(i) = (probs.row(i).array() - mx).exp();
    probs.row(i) /= probs.row(i).sum();
  }
  r.loss = rec_loss(probs, targets);

  const double inv = batch > 0 ? 1.0 / static_cast<double>(batch) : 0.0;
  Matrix dlogits = probs;
  for (Eigen::Index i = 0; i < batch; ++i) dlogits(i, targets[static_cast<std::size_t>(i)] - 1) -= 1.0;
  dlogits *= inv;
  r.grad_reps = dlogits * emb;
  r.grad_item_emb = Matrix::Zero(item_emb.rows(), item_emb.cols());
  r.grad_item_emb.bottomRows(items) = dlogits.transpose() * reps;
  return r;
}

double pair_loss(const Vector& center, const Vector& positive, std::span<const Vector> others, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  const Matrix reps = stack(center, positive, others);
  std::vector<std::size_t> members{1};
  for (std::size_t i = 0; i < others.size(); ++i) members.push_back(i + 2);
  return info_nce(reps, 0, members, 0, {}, 0.0, tau).loss;
}

double weighted_pair_loss(const Vector& center, const Vector& positive, double positive_score,
                          std::span<const Vector> others, std::span<const double> other_scores, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (!(positive_score > 0.0)) throw DegenerateWeightError("weighted pair with a zero positive score");
  if (other_scores.size() != others.size()) throw std::invalid_argument("one score per denominator member expected");
  const Matrix reps = stack(center, positive, others);
  std::vector<std::size_t> members{1};
  std::vector<double> log_w{std::log(std::max(positive_score, kWeightFloor))};
  for (std::size_t i = 0; i < others.size(); ++i) {
    if (other_scores[i] < 0.0) throw std::invalid_argument("similarity weights must be non-negative");
    members.push_back(i + 2);
    log_w.push_back(std::log(std::max(other_scores[i], kWeightFloor)));
  }
  return info_nce(reps, 0, members, 0, log_w, std::log(positive_score), tau).loss;
}

double strong_boundary(std::span<const double> strong_pair_losses) {
  if (strong_pair_losses.empty()) throw std::invalid_argument("boundary needs at least one strong pair");
  return *std::max_element(strong_pair_losses.begin(), strong_pair_losses.end());
}

double total_loss(double rec, double contrastive, double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
  return rec + lambda * contrastive;
}

double LossBreakdown::clamp_rate() const noexcept {
  if (clamped.empty()) return 0.0;
  std::size_t n = 0;
  for (char c : clamped) n += c ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(clamped.size());
}

ContrastiveResult rcl_loss(const ContrastiveBatch& batch, double tau) { return relative_loss(batch, tau, false, false); }

ContrastiveResult wrcl_loss(const ContrastiveBatch& batch, double tau, bool weighted_fallback) {
  return relative_loss(batch, tau, true, weighted_fallback);
}

ContrastiveResult three_pairs_loss(const ContrastiveBatch& batch, double tau) {
  BatchLoss L(batch, tau);
  LossBreakdown b;
  b.clamped.assign(batch.centers.size(), 0);

  std::vector<std::size_t> weak_slots;
  for (const auto& c : batch.centers) weak_slots.push_back(c.weak);

  std::size_t skipped = 0;
  std::vector<std::size_t> mem;
  for (std::size_t u = 0; u < batch.centers.size(); ++u) {
    const auto& cu = batch.centers[u];
    if (!cu.strong) {
      ++skipped;
      continue;
    }
    // Strong positive first, then every weak positive of the batch as a negative.
    std::vector<std::size_t> sw{*cu.strong};
    sw.insert(sw.end(), weak_slots.begin(), weak_slots.end());
    const Term rel = info_nce(batch.reps, cu.slot, sw, 0, {}, 0.0, tau);
    b.relative_term += rel.loss;
    L.add(u, sw, rel);

    const Term strong = L.pair(u, *cu.strong, mem);
    b.strong_term += strong.loss;
    L.add(u, mem, strong);

    const Term weak = L.pair(u, cu.weak, mem);
    b.weak_term += weak.loss;
    L.add(u, mem, weak);
  }
  if (skipped > 0) spdlog::debug("three-pairs loss skipped {} centers without a strong positive", skipped);
  return L.finish(std::move(b));
}

ContrastiveResult contrastive_loss(LossVariant variant, const ContrastiveBatch& batch,
                                   const ContrastiveOptions& options) {
  if (!(options.tau > 0.0)) throw std::invalid_argument("temperature must be positive");
  switch (variant) {
    case LossVariant::base: {
      ContrastiveResult r;
      r.breakdown.clamped.assign(batch.centers.size(), 0);
      r.grad = Matrix::Zero(batch.reps.rows(), batch.reps.cols());
      return r;
    }
    case LossVariant::strong: return strong_only_loss(batch, options.tau);
    case LossVariant::weak: return weak_only_loss(batch, options.tau);
    case LossVariant::unweight: return rcl_loss(batch, options.tau);
    case LossVariant::wrcl: return wrcl_loss(batch, options.tau, options.weighted_fallback);
    case LossVariant::three_pairs: return three_pairs_loss(batch, options.tau);
  }
  throw std::logic_error("unhandled loss variant");
}

}  // namespace rcl
