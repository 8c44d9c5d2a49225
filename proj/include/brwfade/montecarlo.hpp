#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "brwfade/brw_engine.hpp"
#include "json.hpp"

namespace brwfade {

enum class EstimatorKind { Crude, BigJump, Auto };

std::string_view estimator_name(EstimatorKind k) noexcept;
EstimatorKind estimator_from_name(std::string_view s);

/// Replications are split into fixed batches of `batch_size`; replication i
/// uses seed derive_seed(master, {i}). Batches are merged in index order, so
/// the result does not depend on `workers`.
struct McOptions {
  int workers = 1;
  std::int64_t batch_size = 512;
  /// Auto mode: crude when expected hits n_runs * p reach this many.
  double auto_min_hits = 100.0;
  /// Prior guess of the probability for Auto mode (a pilot run is used otherwise).
  std::optional<double> expected_probability;
  /// Big-jump calibration: replications and target hit count of the crude run.
  std::int64_t calibration_runs = 4000;
  bool calibrate = true;
};

struct EstimateResult {
  double estimate = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::int64_t n_runs = 0;
  EstimatorKind kind = EstimatorKind::Crude;
  std::uint64_t master_seed = 0;
  std::int64_t hits = 0;          // crude mode
  double residual = 0.0;          // mean residual mass included in the estimate
  std::int64_t truncated = 0;     // replications undecided within the caps
  bool wilson = false;            // interval from the Wilson score (few hits)
  std::optional<double> calibration_x;

  nlohmann::json to_json() const;
};

/// Sums over replications, merged deterministically.
struct SampleMoments {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::int64_t n = 0;
  std::int64_t hits = 0;
  double residual = 0.0;
  std::int64_t truncated = 0;

  void merge(const SampleMoments& o);
};

struct Sample {
  double value = 0.0;
  bool hit = false;
  double residual = 0.0;
  bool truncated = false;
};

/// Runs `sample(seed_i)` for i < n_runs over the batch layout in McOptions.
SampleMoments replicate(std::int64_t n_runs, std::uint64_t master_seed, const McOptions& options,
                        const std::function<Sample(std::uint64_t)>& sample);

/// 95% Wilson score interval for k hits out of n.
std::pair<double, double> wilson_interval(std::int64_t k, std::int64_t n);

EstimateResult estimate_crossing(const WalkEngine& engine, double x, std::int64_t n_runs, EstimatorKind mode,
                                 std::uint64_t master_seed, const McOptions& options = {});

struct RatioRow {
  double x = 0.0;
  EstimateResult est;
  double analytic = 0.0;
  double ratio = 0.0;
  double ratio_se = 0.0;
};

/// Per x: estimate with the mode chosen from the analytic value (crude when
/// n_runs * analytic >= auto_min_hits, big-jump otherwise when applicable).
std::vector<RatioRow> ratio_study(const WalkEngine& engine, const std::vector<double>& x_grid, std::int64_t n_runs,
                                  std::uint64_t master_seed, const std::function<double(double)>& analytic,
                                  const McOptions& options = {}, EstimatorKind mode = EstimatorKind::Auto);

}  // namespace brwfade
