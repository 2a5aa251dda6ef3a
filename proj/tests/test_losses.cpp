#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rcl/losses.hpp"

using namespace rcl;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// -log(w_pos e^{z_pos} / sum_j w_j e^{z_j}) written out directly.
double direct_nce(const Vector& c, const Vector& pos, double w_pos, const std::vector<Vector>& others,
                  const std::vector<double>& w_others, double tau) {
  double den = w_pos * std::exp(c.dot(pos) / tau);
  for (std::size_t i = 0; i < others.size(); ++i) den += w_others[i] * std::exp(c.dot(others[i]) / tau);
  return -std::log(w_pos * std::exp(c.dot(pos) / tau) / den);
}

Matrix random_reps(Eigen::Index rows, Eigen::Index d, std::uint64_t seed, double scale = 0.6) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, d);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(g);
  return m;
}

// Centers 0..b-1; strong slot b+i (when has_strong), weak slot 2b+i.
ContrastiveBatch make_batch(Matrix reps, std::size_t b, std::vector<bool> has_strong, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  ContrastiveBatch batch{std::move(reps), {}};
  for (std::size_t i = 0; i < b; ++i) {
    ContrastiveCenter c;
    c.slot = i;
    if (has_strong[i]) c.strong = b + i;
    c.weak = 2 * b + i;
    c.weak_score = u(g);
    c.peer_scores.resize(b);
    for (auto& s : c.peer_scores) s = u(g);
    batch.centers.push_back(c);
  }
  return batch;
}

Vector row(const Matrix& m, std::size_t r) { return m.row(static_cast<Eigen::Index>(r)).transpose(); }

double fd_max_error(LossVariant variant, ContrastiveBatch batch, double tau, bool weighted_fallback = true) {
  const ContrastiveOptions opts{tau, weighted_fallback};
  const auto analytic = contrastive_loss(variant, batch, opts).grad;
  double worst = 0.0;
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < batch.reps.size(); ++i) {
    const double keep = batch.reps.data()[i];
    batch.reps.data()[i] = keep + h;
    const double up = contrastive_loss(variant, batch, opts).breakdown.contrastive;
    batch.reps.data()[i] = keep - h;
    const double down = contrastive_loss(variant, batch, opts).breakdown.contrastive;
    batch.reps.data()[i] = keep;
    const double num = (up - down) / (2 * h);
    const double an = analytic.data()[i];
    worst = std::max(worst, std::abs(an - num) / std::max({std::abs(an), std::abs(num), 1e-6}));
  }
  return worst;
}

}  // namespace

TEST(RecLoss, HandValues) {
  Matrix p(2, 4);
  p << 1, 0, 0, 0, 0.25, 0.25, 0.25, 0.25;
  const std::vector<ItemId> t1{1, 3};
  EXPECT_NEAR(rec_loss(p, t1), 0.5 * std::log(4.0), 1e-15);
  EXPECT_NEAR(rec_loss(p.bottomRows(1), std::vector<ItemId>{2}), 1.3863, 1e-4);
  EXPECT_EQ(rec_loss(p.topRows(1), std::vector<ItemId>{1}), 0.0);
}

TEST(RecLoss, ZeroProbabilityIsClipped) {
  Matrix p(1, 2);
  p << 1, 0;
  EXPECT_NEAR(rec_loss(p, std::vector<ItemId>{2}), -std::log(kProbabilityFloor), 1e-9);
}

TEST(RecLoss, GradientMatchesFiniteDifferences) {
  const Matrix reps = random_reps(3, 4, 1);
  const Matrix emb = random_reps(6, 4, 2);
  const std::vector<ItemId> targets{1, 5, 2};
  const auto r = rec_loss_with_grad(reps, targets, emb);
  EXPECT_TRUE(r.grad_item_emb.row(0).isZero(0.0));
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < reps.size(); ++i) {
    Matrix a = reps, b = reps;
    a.data()[i] += h;
    b.data()[i] -= h;
    const double num = (rec_loss_with_grad(a, targets, emb).loss - rec_loss_with_grad(b, targets, emb).loss) / (2 * h);
    EXPECT_NEAR(r.grad_reps.data()[i], num, 1e-8);
  }
  for (Eigen::Index i = 4; i < emb.size(); ++i) {
    Matrix a = emb, b = emb;
    a.data()[i] += h;
    b.data()[i] -= h;
    const double num = (rec_loss_with_grad(reps, targets, a).loss - rec_loss_with_grad(reps, targets, b).loss) / (2 * h);
    EXPECT_NEAR(r.grad_item_emb.data()[i], num, 1e-8);
  }
}

TEST(PairLoss, HandValues) {
  const Vector c = vec({1, 0});
  EXPECT_NEAR(pair_loss(c, vec({1, 0}), std::vector<Vector>{vec({1, 5})}, 1.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(pair_loss(c, vec({2, 0}), std::vector<Vector>{vec({0, 3})}, 1.0), std::log1p(std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(pair_loss(c, vec({2, 0}), std::vector<Vector>{vec({0, 3})}, 1.0), 0.1269, 1e-4);
}

TEST(PairLoss, LargeTemperatureTendsToUniform) {
  const Vector c = vec({1, 2});
  const std::vector<Vector> others{vec({0, 1}), vec({3, -1}), vec({-2, 2})};
  EXPECT_NEAR(pair_loss(c, vec({2, 2}), others, 1e9), std::log(4.0), 1e-7);
}

TEST(PairLoss, StableForLargeLogits) {
  const Vector c = vec({30, 0});
  const double l = pair_loss(c, vec({40, 0}), std::vector<Vector>{vec({-35, 0})}, 1.0);
  EXPECT_TRUE(std::isfinite(l));
  const double l2 = pair_loss(c, vec({-40, 0}), std::vector<Vector>{vec({35, 0})}, 1.0);
  EXPECT_NEAR(l2, 30 * 75, 1e-9);
}

TEST(PairLoss, TemperatureMonotonicity) {
  const Vector c = vec({1, 0});
  const std::vector<Vector> others{vec({0.2, 0})};
  double prev = pair_loss(c, vec({0.8, 0}), others, 5.0);
  for (double tau : {1.0, 0.5, 0.1, 0.05, 0.01}) {
    const double l = pair_loss(c, vec({0.8, 0}), others, tau);
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(WeightedPairLoss, HandValueAndCancellation) {
  const Vector c = vec({1, 0});
  const std::vector<Vector> others{vec({1, 7})};
  EXPECT_NEAR(weighted_pair_loss(c, vec({1, 0}), 0.8, others, std::vector<double>{0.2}, 1.0), -std::log(0.8), 1e-15);
  EXPECT_NEAR(weighted_pair_loss(c, vec({1, 0}), 0.8, others, std::vector<double>{0.2}, 1.0), 0.2231, 1e-4);

  const std::vector<Vector> many{vec({0.3, 1}), vec({-1, 2}), vec({2, 0.5})};
  const double plain = pair_loss(c, vec({0.5, 0.5}), many, 0.7);
  EXPECT_NEAR(weighted_pair_loss(c, vec({0.5, 0.5}), 0.4, many, std::vector<double>{0.4, 0.4, 0.4}, 0.7), plain, 1e-12);
}

TEST(WeightedPairLoss, FlooredWeightsAndZeroPositive) {
  const Vector c = vec({1, 0});
  const std::vector<Vector> others{vec({1, 0}), vec({1, 1})};
  const double l = weighted_pair_loss(c, vec({1, 0}), 1.0, others, std::vector<double>{0.0, 0.0}, 1.0);
  EXPECT_NEAR(l, 0.0, 1e-5);
  EXPECT_GT(l, 0.0);
  EXPECT_THROW(weighted_pair_loss(c, vec({1, 0}), 0.0, others, std::vector<double>{0.5, 0.5}, 1.0),
               DegenerateWeightError);
}

TEST(WeightedPairLoss, MatchesDirectEvaluation) {
  const Vector c = vec({0.3, -0.2, 0.9});
  const std::vector<Vector> others{vec({0.1, 0.4, -0.3}), vec({1, 1, 1}), vec({-0.5, 0, 0.2})};
  const std::vector<double> w{0.3, 0.9, 0.05};
  EXPECT_NEAR(weighted_pair_loss(c, vec({0.2, 0.2, 0.5}), 0.6, others, w, 0.5),
              direct_nce(c, vec({0.2, 0.2, 0.5}), 0.6, others, w, 0.5), 1e-13);
}

TEST(Boundary, MaxOfStrongPairs) {
  EXPECT_EQ(strong_boundary(std::vector<double>{0.9}), 0.9);
  EXPECT_EQ(strong_boundary(std::vector<double>{0.4, 0.9}), 0.9);
  EXPECT_THROW(strong_boundary(std::vector<double>{}), std::invalid_argument);
}

TEST(TotalLoss, Arithmetic) {
  EXPECT_EQ(total_loss(0.7, 3.0, 0.0), 0.7);
  EXPECT_NEAR(total_loss(1.0, 0.5, 0.2), 1.1, 1e-15);
  for (double l : {0.1, 0.2, 0.3, 0.4, 0.5}) EXPECT_NO_THROW(total_loss(1.0, 1.0, l));
  EXPECT_THROW(total_loss(1.0, 1.0, -0.1), std::invalid_argument);
}

TEST(Variants, ParseAndName) {
  for (auto v : {LossVariant::base, LossVariant::strong, LossVariant::weak, LossVariant::unweight, LossVariant::wrcl,
                 LossVariant::three_pairs})
    EXPECT_EQ(parse_loss_variant(to_string(v)), v);
  EXPECT_THROW(parse_loss_variant("dual"), std::invalid_argument);
}

TEST(Rcl, SingleCenterHandValue) {
  // One center: the denominator holds only the pair's own positive.
  ContrastiveBatch b{Matrix(3, 2), {}};
  b.reps << 1, 0, 0.5, 0.5, 0.2, 0.1;
  ContrastiveCenter c;
  c.slot = 0;
  c.strong = 1;
  c.weak = 2;
  c.weak_score = 0.5;
  c.peer_scores = {0.0};
  b.centers.push_back(c);
  const auto r = rcl_loss(b, 1.0);
  EXPECT_NEAR(r.breakdown.strong_term, 0.0, 1e-15);
  EXPECT_NEAR(r.breakdown.weak_term, 0.0, 1e-15);
}

TEST(Rcl, ClampPicksBoundary) {
  // center (1,0); others: center 2 at (0,1). strong = (0.2,0), weak = (3,0) -> weak loss < strong loss
  ContrastiveBatch b{Matrix(6, 2), {}};
  b.reps << 1, 0, 0, 1, 0.2, 0, 0, 0.3, 3, 0, 0, 2;
  for (std::size_t i = 0; i < 2; ++i) {
    ContrastiveCenter c;
    c.slot = i;
    c.strong = 2 + i;
    c.weak = 4 + i;
    c.peer_scores = {1.0, 1.0};
    b.centers.push_back(c);
  }
  const auto r = rcl_loss(b, 1.0);
  const double strong0 = pair_loss(row(b.reps, 0), row(b.reps, 2), std::vector<Vector>{row(b.reps, 1)}, 1.0);
  const double weak0 = pair_loss(row(b.reps, 0), row(b.reps, 4), std::vector<Vector>{row(b.reps, 1)}, 1.0);
  const double strong1 = pair_loss(row(b.reps, 1), row(b.reps, 3), std::vector<Vector>{row(b.reps, 0)}, 1.0);
  const double weak1 = pair_loss(row(b.reps, 1), row(b.reps, 5), std::vector<Vector>{row(b.reps, 0)}, 1.0);
  ASSERT_LT(weak0, strong0);
  ASSERT_LT(weak1, strong1);
  EXPECT_EQ(r.breakdown.clamped, (std::vector<char>{1, 1}));
  EXPECT_NEAR(r.breakdown.strong_term, (strong0 + strong1) / 2, 1e-14);
  EXPECT_NEAR(r.breakdown.weak_term, (strong0 + strong1) / 2, 1e-14);
  EXPECT_TRUE(r.grad.row(4).isZero(0.0));
  EXPECT_TRUE(r.grad.row(5).isZero(0.0));
  EXPECT_GT(r.grad.row(2).norm(), 0.0);
  EXPECT_GT(r.grad.row(3).norm(), 0.0);
}

TEST(Rcl, UnclampedWeakTermIsItself) {
  ContrastiveBatch b{Matrix(6, 2), {}};
  b.reps << 1, 0, 0, 1, 2.5, 0, 0, 0.3, -1, 0, 0, -2;
  for (std::size_t i = 0; i < 2; ++i) {
    ContrastiveCenter c;
    c.slot = i;
    c.strong = 2 + i;
    c.weak = 4 + i;
    c.peer_scores = {1.0, 1.0};
    b.centers.push_back(c);
  }
  const auto r = rcl_loss(b, 1.0);
  const double weak0 = pair_loss(row(b.reps, 0), row(b.reps, 4), std::vector<Vector>{row(b.reps, 1)}, 1.0);
  const double weak1 = pair_loss(row(b.reps, 1), row(b.reps, 5), std::vector<Vector>{row(b.reps, 0)}, 1.0);
  EXPECT_EQ(r.breakdown.clamped, (std::vector<char>{0, 0}));
  EXPECT_NEAR(r.breakdown.weak_term, (weak0 + weak1) / 2, 1e-14);
  EXPECT_GT(r.grad.row(4).norm(), 0.0);
}

TEST(Rcl, FallbackWithoutStrongUsesWeakOnly) {
  const auto batch = make_batch(random_reps(12, 3, 5), 4, {false, true, false, true}, 5);
  const auto r = rcl_loss(batch, 0.5);
  double expected_weak = 0.0;
  for (std::size_t i : {0u, 2u}) {
    std::vector<Vector> others;
    for (std::size_t j = 0; j < 4; ++j)
      if (j != i) others.push_back(row(batch.reps, j));
    expected_weak += pair_loss(row(batch.reps, i), row(batch.reps, 8 + i), others, 0.5);
  }
  double clamped_part = 0.0;
  for (std::size_t i : {1u, 3u}) {
    std::vector<Vector> others;
    for (std::size_t j = 0; j < 4; ++j)
      if (j != i) others.push_back(row(batch.reps, j));
    const double s = pair_loss(row(batch.reps, i), row(batch.reps, 4 + i), others, 0.5);
    const double w = pair_loss(row(batch.reps, i), row(batch.reps, 8 + i), others, 0.5);
    clamped_part += std::max(s, w);
  }
  EXPECT_NEAR(r.breakdown.weak_term, (expected_weak + clamped_part) / 4, 1e-13);
  EXPECT_EQ(r.breakdown.clamped[0], 0);
  EXPECT_EQ(r.breakdown.clamped[2], 0);
}

TEST(Rcl, ClampPropertyOnRandomBatches) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto batch = make_batch(random_reps(24, 4, seed, 1.0), 8, std::vector<bool>(8, true), seed);
    for (auto variant : {LossVariant::unweight, LossVariant::wrcl}) {
      const auto r = contrastive_loss(variant, batch, {0.5, true});
      // with every center strong, weak_term >= strong_term (boundary = the strong pair)
      EXPECT_GE(r.breakdown.weak_term, r.breakdown.strong_term - 1e-12);
    }
  }
}

TEST(Wrcl, EqualScoresReduceToRcl) {
  auto batch = make_batch(random_reps(15, 4, 9), 5, {true, false, true, true, false}, 9);
  for (auto& c : batch.centers) {
    c.weak_score = 0.37;
    std::fill(c.peer_scores.begin(), c.peer_scores.end(), 0.37);
  }
  const auto a = wrcl_loss(batch, 0.8);
  const auto b = rcl_loss(batch, 0.8);
  EXPECT_NEAR(a.breakdown.contrastive, b.breakdown.contrastive, 1e-12);
  EXPECT_TRUE(a.grad.isApprox(b.grad, 1e-10));
}

TEST(Wrcl, SingleCenterTwoDimensionalHandValue) {
  // Two centers so the weighted denominator has one peer: center (1,0), peer (0,1).
  ContrastiveBatch b{Matrix(4, 2), {}};
  b.reps << 1, 0, 0, 1, 0.5, 0, 0, 0;
  ContrastiveCenter c0;
  c0.slot = 0;
  c0.weak = 2;
  c0.weak_score = 0.6;
  c0.peer_scores = {0.0, 0.3};
  ContrastiveCenter c1;
  c1.slot = 1;
  c1.weak = 3;
  c1.weak_score = 0.5;
  c1.peer_scores = {0.3, 0.0};
  b.centers = {c0, c1};
  // center 0: -log(0.6 e^{0.5} / (0.6 e^{0.5} + 0.3 e^{0})); center 1: -log(0.5 / (0.5 + 0.3))
  const double l0 = -std::log(0.6 * std::exp(0.5) / (0.6 * std::exp(0.5) + 0.3));
  const double l1 = -std::log(0.5 / 0.8);
  const auto r = wrcl_loss(b, 1.0);
  EXPECT_NEAR(r.breakdown.weak_term, (l0 + l1) / 2, 1e-15);
  EXPECT_NEAR(r.breakdown.contrastive, (l0 + l1) / 2, 1e-15);
  const auto unweighted_fallback = wrcl_loss(b, 1.0, false);
  EXPECT_NEAR(unweighted_fallback.breakdown.weak_term,
              (std::log1p(std::exp(-0.5)) + std::log(2.0)) / 2, 1e-15);
}

TEST(ThreePairs, MatchesDirectEvaluation) {
  const auto batch = make_batch(random_reps(12, 3, 14), 4, std::vector<bool>(4, true), 14);
  const auto r = three_pairs_loss(batch, 0.7);
  double rel = 0.0, strong = 0.0, weak = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const Vector c = row(batch.reps, i);
    std::vector<Vector> weaks, others;
    for (std::size_t j = 0; j < 4; ++j) {
      weaks.push_back(row(batch.reps, 8 + j));
      if (j != i) others.push_back(row(batch.reps, j));
    }
    rel += direct_nce(c, row(batch.reps, 4 + i), 1.0, weaks, std::vector<double>(4, 1.0), 0.7);
    strong += direct_nce(c, row(batch.reps, 4 + i), 1.0, others, std::vector<double>(3, 1.0), 0.7);
    weak += direct_nce(c, row(batch.reps, 8 + i), 1.0, others, std::vector<double>(3, 1.0), 0.7);
  }
  EXPECT_NEAR(r.breakdown.relative_term, rel / 4, 1e-13);
  EXPECT_NEAR(r.breakdown.strong_term, strong / 4, 1e-13);
  EXPECT_NEAR(r.breakdown.weak_term, weak / 4, 1e-13);
  EXPECT_NEAR(r.breakdown.contrastive, (rel + strong + weak) / 4, 1e-13);
}

TEST(ThreePairs, IdenticalStrongAndWeakGiveUniformRelativeTerm) {
  Matrix reps = random_reps(9, 3, 2);
  for (Eigen::Index i = 0; i < 3; ++i) {
    reps.row(3 + i) = reps.row(6 + i) = Eigen::RowVector3d(0.4, -0.1, 0.2);
  }
  const auto batch = make_batch(reps, 3, std::vector<bool>(3, true), 2);
  const auto r = three_pairs_loss(batch, 1.0);
  EXPECT_NEAR(r.breakdown.relative_term, std::log(4.0), 1e-13);
}

TEST(ThreePairs, SkipsCentersWithoutStrongButKeepsDivisor) {
  const auto batch = make_batch(random_reps(12, 3, 3), 4, {true, false, false, false}, 3);
  const auto r = three_pairs_loss(batch, 1.0);
  const Vector c = row(batch.reps, 0);
  std::vector<Vector> weaks, others;
  for (std::size_t j = 0; j < 4; ++j) {
    weaks.push_back(row(batch.reps, 8 + j));
    if (j != 0) others.push_back(row(batch.reps, j));
  }
  const double one = direct_nce(c, row(batch.reps, 4), 1.0, weaks, std::vector<double>(4, 1.0), 1.0) +
                     direct_nce(c, row(batch.reps, 4), 1.0, others, std::vector<double>(3, 1.0), 1.0) +
                     direct_nce(c, row(batch.reps, 8), 1.0, others, std::vector<double>(3, 1.0), 1.0);
  EXPECT_NEAR(r.breakdown.contrastive, one / 4, 1e-13);
  // strong slots of skipped centers are never touched
  for (Eigen::Index i : {5, 6, 7}) EXPECT_TRUE(r.grad.row(i).isZero(0.0));
}

TEST(ContrastiveGradients, MatchFiniteDifferences) {
  const std::vector<bool> mix{true, false, true, true, false, true};
  for (auto variant : {LossVariant::strong, LossVariant::weak, LossVariant::unweight, LossVariant::wrcl,
                       LossVariant::three_pairs}) {
    const auto batch = make_batch(random_reps(18, 4, 31), 6, mix, 31);
    EXPECT_LT(fd_max_error(variant, batch, 0.5), 1e-4) << to_string(variant);
  }
  const auto batch = make_batch(random_reps(18, 4, 32), 6, mix, 32);
  EXPECT_LT(fd_max_error(LossVariant::wrcl, batch, 0.5, false), 1e-4);
}

TEST(ContrastiveGradients, BaseVariantIsZero) {
  const auto batch = make_batch(random_reps(6, 2, 1), 2, {true, true}, 1);
  const auto r = contrastive_loss(LossVariant::base, batch, {});
  EXPECT_EQ(r.breakdown.contrastive, 0.0);
  EXPECT_TRUE(r.grad.isZero(0.0));
}
