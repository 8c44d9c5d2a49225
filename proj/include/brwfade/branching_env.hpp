#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "brwfade/rng.hpp"
#include "json.hpp"

namespace brwfade {

/// Offspring distribution on {1, ..., K}.
class OffspringLaw {
 public:
  OffspringLaw() : masses_{1.0} {}
  /// masses[k - 1] = P(zeta = k). Must sum to 1 (within 1e-12); renormalized.
  static OffspringLaw from_masses(std::vector<double> masses);
  /// P(zeta = 1) = 1 - q, P(zeta = k) = q * split[k - 2] for k >= 2.
  static OffspringLaw branching(double q, std::span<const double> split);
  static OffspringLaw degenerate() { return {}; }

  const std::vector<double>& masses() const noexcept { return masses_; }
  int max_offspring() const noexcept { return static_cast<int>(masses_.size()); }
  double mean() const noexcept;
  /// q = P(zeta != 1).
  double q() const noexcept { return 1.0 - masses_[0]; }
  double moment(double s) const;
  /// Offspring count conditioned on zeta != 1, from a uniform in [0, 1).
  int sample_non_unit(double u) const;

  nlohmann::json to_json() const;

 private:
  std::vector<double> masses_;
};

enum class TailRuleKind { Degenerate, Geometric, PowerLog, Constant };

std::string_view tail_rule_name(TailRuleKind k) noexcept;

/// Law of generations n >= n0 (n0 = prefix length):
///   Degenerate  q_n = 0
///   Geometric   q_n = a r^n
///   PowerLog    q_n = a n^-p (ln n)^-b
///   Constant    q_n = a
/// with the excess mass P(zeta = k | zeta != 1) = split[k - 2].
struct TailRule {
  TailRuleKind kind = TailRuleKind::Degenerate;
  double a = 0.0;
  double r = 0.5;
  double p = 2.0;
  double b = 0.0;
  std::vector<double> split{1.0};

  static TailRule degenerate() { return {}; }
  static TailRule geometric(double a, double r, std::vector<double> split = {1.0});
  static TailRule power_log(double a, double p, double b, std::vector<double> split = {1.0});
  static TailRule constant(double q, std::vector<double> split = {1.0});
};

enum class Convergence { Converges, Diverges };

/// Non-decreasing weight f for the criterion sum f(n + 1) q_n.
struct MomentFunction {
  enum class Kind { Power, Exponential, Tabulated } kind = Kind::Power;
  double s = 1.0;       // f(n) = n^s
  double lambda = 0.0;  // f(n) = e^{lambda n}
  std::vector<double> table;  // f(1), f(2), ...

  static MomentFunction power(double s) { return {Kind::Power, s, 0.0, {}}; }
  static MomentFunction exponential(double lambda) { return {Kind::Exponential, 1.0, lambda, {}}; }
  static MomentFunction tabulated(std::vector<double> t) { return {Kind::Tabulated, 1.0, 0.0, std::move(t)}; }
};

struct Branching {
  std::int64_t index = 0;  // position of the parent within its generation, 0-based
  int offspring = 1;
};

struct BranchEvent {
  std::int64_t generation = 0;
  std::vector<Branching> branchings;  // sorted by index
};

/// Generations at which at least one individual has zeta != 1. Every other
/// individual has exactly one child.
struct Skeleton {
  std::vector<BranchEvent> events;
  std::int64_t nu = 1;
  std::int64_t final_population = 1;

  /// Z_n.
  std::int64_t population(std::int64_t n) const;
};

struct BranchingTrajectory {
  /// (n, Z_n) at n = 0 and at every generation where Z changes.
  std::vector<std::pair<std::int64_t, std::int64_t>> change_points{{0, 1}};
  std::int64_t nu = 1;
  std::int64_t final_population = 1;

  std::int64_t population(std::int64_t n) const;
  /// Z_0, ..., Z_nu.
  std::vector<std::int64_t> sizes() const;
};

class Environment {
 public:
  Environment();
  Environment(std::vector<OffspringLaw> prefix, TailRule tail);

  static Environment constant_one() { return Environment(); }

  std::int64_t prefix_length() const noexcept { return static_cast<std::int64_t>(prefix_.size()); }
  const std::vector<OffspringLaw>& prefix() const noexcept { return prefix_; }
  const TailRule& tail_rule() const noexcept { return tail_; }

  OffspringLaw law(std::int64_t n) const;
  double q(std::int64_t n) const;
  double mean(std::int64_t n) const;

  /// Whether sum q_n < infinity (equivalently L < infinity).
  bool fading() const noexcept;
  /// Whether q_n = 0 for all large n.
  bool eventually_degenerate() const noexcept;
  /// Largest n with q_n > 0 (-1 if none); only for eventually degenerate environments.
  std::int64_t last_branching_generation() const noexcept;

  /// L = prod_n m_n, +inf for non-fading environments.
  double fading_product() const;
  /// prod_{k <= n} m_k.
  double partial_product(std::int64_t n) const;
  /// E Z_n = prod_{k < n} m_k.
  double expected_population(std::int64_t n) const;

  /// d_n = -sum_{k >= n} ln(1 - q_k); +inf if some q_k = 1 with k >= n.
  double dn(std::int64_t n) const;
  /// (e^{-L d_n}, e^{-d_n}).
  std::pair<double, double> nu_tail_bounds(std::int64_t n) const;

  Convergence moment_criterion(const MomentFunction& f) const;
  /// prod_n E zeta_n^s, +inf when the product diverges.
  double z_moment_bound(double s) const;

  Skeleton simulate_skeleton(RandomStream& rng) const;
  BranchingTrajectory simulate_trajectory(RandomStream& rng) const;

  nlohmann::json to_json() const;
  static Environment from_json(const nlohmann::json& j);

 private:
  double tail_q(std::int64_t n) const;
  // sum_{k >= n} ln(1 + c q_k) for n >= n0; +-inf on divergence.
  double tail_log_sum(double c, std::int64_t n) const;
  double split_coefficient(double s) const;  // sum_k split_k k^s - 1
  // Smallest m >= n with d_{m+1} < target, for target in (0, d_n].
  std::int64_t first_generation_below(std::int64_t n, double target) const;
  int sample_tail_offspring(double u) const;

  std::vector<OffspringLaw> prefix_;
  TailRule tail_;
  std::vector<double> split_cumulative_;
  std::vector<double> d_table_;  // d_{n0 + i}
};

struct NuMoments {
  double mean_nu = 0.0, se_nu = 0.0;
  double mean_z = 0.0, se_z = 0.0;
  double mean_nu_z = 0.0, se_nu_z = 0.0;
  std::int64_t n_runs = 0;
};

NuMoments empirical_moments(const Environment& env, std::int64_t n_runs, RandomStream& rng);

}  // namespace brwfade
