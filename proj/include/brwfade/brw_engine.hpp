#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "brwfade/boundaries_stopping.hpp"
#include "brwfade/branching_env.hpp"
#include "brwfade/heavy_tails.hpp"
#include "brwfade/rational.hpp"

namespace brwfade {

struct GenerationFront {
  std::int64_t n = 0;
  std::int64_t population = 1;  // Z_n
  double rightmost = 0.0;       // r_n^g
  double leftmost = 0.0;        // l_n^g
  double running_max = 0.0;     // R_n^g
  std::int64_t eta = 0;         // sum_{1 <= k <= n} Z_k
};

struct TreeGeneration {
  std::vector<double> value;          // S^g per node
  std::vector<std::int64_t> parent;   // index into the previous generation
};

struct WalkRealization {
  std::vector<GenerationFront> fronts;  // n = 0, 1, ..., last simulated generation
  std::vector<TreeGeneration> tree;     // filled when requested
  std::int64_t mu = 0;                  // realized stopping time (kInfiniteTime if infinite)
  std::int64_t nu = 1;
  std::int64_t final_population = 1;
  bool horizon_hit = false;             // mu not determined within the horizon cap
  bool population_cap_hit = false;

  /// R_mu^g (running max through min(mu, last generation)).
  double rightmost_over_stop() const;
  /// tau^g(x) = inf{n >= 1 : r_n^g > x} within the simulated fronts.
  std::optional<std::int64_t> crossing_time(double x) const;
  /// eta_mu = sum_{n=1}^{mu} Z_n.
  std::int64_t eta() const;
};

struct RunOptions {
  std::int64_t horizon_cap = 10000;
  std::int64_t population_cap = std::int64_t{1} << 24;
  bool keep_tree = false;
  /// Increments of generations > resample_after come from a stream keyed by
  /// resample_salt (used to probe independence from the future).
  std::int64_t resample_after = -1;
  std::uint64_t resample_salt = 0;
};

/// Stream layout for one replication seed.
struct RunStreams {
  static std::uint64_t skeleton(std::uint64_t seed) { return derive_seed(seed, {1}); }
  static std::uint64_t stop(std::uint64_t seed) { return derive_seed(seed, {2}); }
  static std::uint64_t generation(std::uint64_t seed, std::int64_t n) {
    return derive_seed(seed, {3, static_cast<std::uint64_t>(n)});
  }
  static std::uint64_t resampled(std::uint64_t seed, std::uint64_t salt, std::int64_t n) {
    return derive_seed(seed, {4, salt, static_cast<std::uint64_t>(n)});
  }
  static std::uint64_t lineage(std::uint64_t seed, std::int64_t i) {
    return derive_seed(seed, {5, static_cast<std::uint64_t>(i)});
  }
};

/// Outcome of a run that only decides {R_mu^g > x}.
struct CrossingOutcome {
  bool crossed = false;
  double residual = 0.0;   // approximate mass of crossings after lineages were dropped
  bool truncated = false;  // neither crossed nor decided within the caps
  std::int64_t mu = 0;
  std::int64_t nu = 1;
  std::int64_t final_population = 1;
};

/// Relative depth at which a lineage is dropped in infinite-horizon runs:
/// F-bar_I(x - v) <= kDropFraction * F-bar_I(x).
inline constexpr double kDropFraction = 0.05;

class WalkEngine {
 public:
  WalkEngine(Environment env, IncrementLaw law, Boundary boundary, StoppingRule stop, RunOptions options = {});

  const Environment& environment() const noexcept { return env_; }
  const IncrementLaw& law() const noexcept { return law_; }
  const Boundary& boundary() const noexcept { return boundary_; }
  const StoppingRule& stop() const noexcept { return stop_; }
  const RunOptions& options() const noexcept { return options_; }

  /// Full realization up to min(mu, horizon cap), generation by generation.
  WalkRealization run(std::uint64_t seed) const;

  /// Decides {R_mu^g > x}, stopping as soon as it is known. Single lineages
  /// after the fading time are followed one at a time; with an infinite
  /// stopping time a lineage is dropped once deep below x and its
  /// asymptotic crossing mass is added to `residual`.
  CrossingOutcome run_crossing(std::uint64_t seed, double x) const;

  /// One sample of the conditional Monte Carlo estimator of P(R_mu^g > x):
  /// sum over edges e of P(xi_e > max(other increments, threshold_e)).
  /// Needs a continuous law and a rule fixed before the increments are drawn.
  double big_jump_sample(std::uint64_t seed, double x) const;

 private:
  struct Tree;
  Tree build_tree(std::uint64_t seed, std::int64_t mu) const;

  Environment env_;
  IncrementLaw law_;
  Boundary boundary_;
  StoppingRule stop_;
  RunOptions options_;
};

/// Writes generation,node_id,parent_id,value rows (node ids are global).
void write_node_csv(std::ostream& os, const WalkRealization& r);

/// Exact P(R_mu^g > x) for a lattice law, a fixed stopping time and an
/// environment with finite offspring support, by enumeration of every
/// offspring and increment assignment. Exponential in the tree size.
double exact_crossing_probability(const Environment& env, const IncrementLaw& law, const Boundary& g,
                                  std::int64_t mu, double x);

/// Exact law of the crossing time on a fixed skeleton, enumerating every
/// increment assignment. Key -1 stands for no crossing within mu.
std::vector<std::pair<std::int64_t, Rational>> exact_crossing_time_law(const Skeleton& skeleton,
                                                                       const IncrementLaw& law, const Boundary& g,
                                                                       std::int64_t mu, double x);

}  // namespace brwfade
