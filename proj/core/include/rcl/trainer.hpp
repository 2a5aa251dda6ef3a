#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcl/config.hpp"
#include "rcl/losses.hpp"
#include "rcl/model.hpp"
#include "rcl/selection.hpp"

namespace rcl {

class NonFiniteGradientError : public std::runtime_error {
 public:
  explicit NonFiniteGradientError(const std::string& parameter)
      : std::runtime_error("non-finite gradient in " + parameter), parameter_(parameter) {}
  const std::string& parameter() const noexcept { return parameter_; }

 private:
  std::string parameter_;
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t t = 0;

  static AdamState for_params(const ModelParams& params);
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update. The padding embedding row is zero afterwards.
/// Checks every gradient first and throws NonFiniteGradientError before
/// touching any parameter.
void adam_step(ModelParams& params, AdamState& state, const ModelParams& grads, const AdamOptions& options);

/// Loss and parameter gradients of one optimization step.
struct StepResult {
  LossBreakdown breakdown;
  ModelParams grads;
};

/// Forward and backward pass of the full objective on one batch. Dropout masks
/// are derived from (config.seed, step, slot), so the same inputs always give
/// the same result. `batch.strong` entries are used as given; for the strong
/// variant a center without one is contrasted with a second dropout view of
/// itself.
StepResult compute_step(const TrainConfig& config, const ModelParams& params,
                        const std::vector<SequenceRecord>& sequences, const TrainingBatch& batch, std::uint64_t step);

struct StepLog {
  std::size_t epoch = 0;
  std::uint64_t step = 0;
  double rec = 0.0;
  double strong = 0.0;
  double weak = 0.0;
  double relative = 0.0;
  double clamp_rate = 0.0;
  double total = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mean_total = 0.0;
  double mean_rec = 0.0;
  std::optional<double> valid_ndcg10;
  std::optional<double> valid_hr10;
  double seconds = 0.0;
};

struct TrainOptions {
  std::ostream* log = nullptr;             // JSON lines, one per step and per epoch
  std::filesystem::path checkpoint_dir;    // empty: no checkpoints
  bool keep_step_logs = true;
};

struct TrainResult {
  ModelParams params;  // best validation epoch, or last epoch without validation
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double empty_strong_fraction = 0.0;
};

/// Seeded joint training. epochs = 0 returns the initialized parameters.
/// Throws DivergenceError when the loss turns non-finite, after saving the
/// last good parameters to checkpoint_dir/last_good.ckpt when a directory is set.
TrainResult train(const TrainConfig& config, const SequenceSet& data, const TrainOptions& options = {});

/// Denominator floor of the relative error, so that coordinates whose true
/// gradient is near zero are compared on an absolute scale.
inline constexpr double kGradCheckFloor = 1e-8;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t probes = 0;
};

/// Largest |a - n| / max(|a|, |n|, floor) between analytic gradients and
/// central differences with step h over `probes` random coordinates
/// (every coordinate when probes = 0).
GradCheckResult grad_check(const ModelParams& params, const ModelParams& analytic,
                           const std::function<double(const ModelParams&)>& loss, std::size_t probes, double h,
                           Rng& rng, double floor = kGradCheckFloor);

}  // namespace rcl
