#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rcl/model.hpp"

namespace rcl {

/// Lower bound applied to every similarity weight in a weighted denominator.
inline constexpr double kWeightFloor = 1e-6;
/// Predicted target probabilities are clipped here before the log.
inline constexpr double kProbabilityFloor = 1e-12;

class DegenerateWeightError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LossVariant { base, strong, weak, unweight, wrcl, three_pairs };

LossVariant parse_loss_variant(std::string_view name);
std::string to_string(LossVariant variant);

/// Mean of -log p[target] over the batch. Row i of `probabilities` is a
/// distribution over items 1..|V| (column j belongs to item j + 1).
double rec_loss(const Matrix& probabilities, std::span<const ItemId> targets);

struct RecLossResult {
  double loss = 0.0;
  Matrix grad_reps;      // d loss / d h, one row per center
  Matrix grad_item_emb;  // d loss / d item_emb, row 0 untouched
};

/// Next-item softmax over the full item set with gradients.
RecLossResult rec_loss_with_grad(const Matrix& reps, std::span<const ItemId> targets, const Matrix& item_emb);

/// -log( exp(h_u.h_pos/tau) / sum over {h_pos} + others of exp(h_u.h_c/tau) ).
double pair_loss(const Vector& center, const Vector& positive, std::span<const Vector> others, double tau);

/// Similarity-weighted InfoNCE: both numerator and denominator terms are
/// scaled by the center's similarity to each member. Denominator weights are
/// floored at kWeightFloor; a zero positive score throws DegenerateWeightError.
double weighted_pair_loss(const Vector& center, const Vector& positive, double positive_score,
                          std::span<const Vector> others, std::span<const double> other_scores, double tau);

/// Largest loss among the strong pairs available for a center.
double strong_boundary(std::span<const double> strong_pair_losses);

/// L^rec + lambda * L^contrastive.
double total_loss(double rec, double contrastive, double lambda);

/// One center of a contrastive batch. Indices refer to rows of
/// ContrastiveBatch::reps. The denominator of every pair term for this center
/// is the set of other centers plus the pair's own positive.
struct ContrastiveCenter {
  std::size_t slot = 0;
  std::optional<std::size_t> strong;  // same-target positive (or its stand-in)
  std::size_t weak = 0;               // similarity-sampled positive
  double weak_score = 1.0;            // s_{u,b}
  std::vector<double> peer_scores;    // s_{u,c} per center position; own entry unused
};

struct ContrastiveBatch {
  Matrix reps;
  std::vector<ContrastiveCenter> centers;
};

struct LossBreakdown {
  double rec = 0.0;
  double strong_term = 0.0;
  double weak_term = 0.0;
  double relative_term = 0.0;  // L^{S-W} of the three-pairs ablation
  double contrastive = 0.0;
  double total = 0.0;
  std::vector<char> clamped;  // per center: the weak term took the boundary

  double clamp_rate() const noexcept;
};

struct ContrastiveResult {
  LossBreakdown breakdown;
  Matrix grad;  // d contrastive / d reps
};

struct ContrastiveOptions {
  double tau = 1.0;
  /// Use the weighted weak pair when a center has no strong positive (wrcl).
  bool weighted_fallback = true;
};

/// Dispatches on the variant. All terms are summed over centers and divided
/// by the number of centers.
ContrastiveResult contrastive_loss(LossVariant variant, const ContrastiveBatch& batch,
                                   const ContrastiveOptions& options);

/// Strong pair plus max(weak pair, boundary); weak pair alone without a
/// strong positive.
ContrastiveResult rcl_loss(const ContrastiveBatch& batch, double tau);
/// As rcl_loss with the weak pair replaced by its similarity-weighted form.
ContrastiveResult wrcl_loss(const ContrastiveBatch& batch, double tau, bool weighted_fallback = true);
/// L^{S-W} + strong pair + weak pair. L^{S-W} contrasts the strong positive
/// against every weak positive of the batch. Centers without a strong
/// positive are skipped.
ContrastiveResult three_pairs_loss(const ContrastiveBatch& batch, double tau);

}  // namespace rcl
