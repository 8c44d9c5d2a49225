#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string_view>
#include <vector>

#include "brwfade/rng.hpp"
#include "json.hpp"

namespace brwfade {

/// g(0) = 0 and, for n >= 1, g(n) = offset + slope * n + T(n) where T is a
/// table extended linearly by `tail_slope` past its last entry.
class Boundary {
 public:
  Boundary() = default;
  static Boundary linear(double c);
  static Boundary table(std::vector<double> values, double tail_slope = 0.0);
  static Boundary affine_table(double c, double offset, std::vector<double> values);

  double operator()(std::int64_t n) const;
  double eval(std::int64_t n) const { return (*this)(n); }

  /// Eventual growth per generation.
  double asymptotic_slope() const noexcept;
  /// The same boundary raised by a for every n >= 1.
  Boundary shifted(double a) const;

  nlohmann::json to_json() const;
  static Boundary from_json(const nlohmann::json& j);

 private:
  double slope_ = 0.0;
  double offset_ = 0.0;
  std::vector<double> table_;
  double tail_slope_ = 0.0;
  enum class Kind { Linear, Table, AffineTable } kind_ = Kind::Linear;
};

struct ClassCheck {
  bool pass = true;
  std::int64_t first_violation = 0;  // 0 when pass
};

/// g(1) >= c, g(n + 1) >= g(n) + c and g(n) >= 0 for 1 <= n <= n_max.
ClassCheck validate_class(const Boundary& g, double c, std::int64_t n_max);

inline constexpr std::int64_t kInfiniteTime = std::numeric_limits<std::int64_t>::max();

/// Law of a stopping time drawn independently of everything else.
class IndependentLaw {
 public:
  enum class Kind { Geometric, Power, Table };

  /// P(mu >= n) = (1 - p)^{n - 1}, n >= 1.
  static IndependentLaw geometric(double p);
  /// P(mu >= n) = min(1, k2 n^-alpha), n >= 1.
  static IndependentLaw power(double k2, double alpha);
  /// P(mu = n) = pmf[n].
  static IndependentLaw table(std::vector<double> pmf);

  Kind kind() const noexcept { return kind_; }
  double survival(std::int64_t n) const;  // P(mu >= n)
  /// Non-increasing extension of survival to real t (step for tables).
  double survival_at(double t) const;
  /// Upper bound on sum_{n > N} P(mu >= n) (+inf when divergent).
  double survival_tail_sum(std::int64_t n) const;
  double mean() const;                    // +inf when infinite
  std::optional<std::int64_t> bound() const;
  std::int64_t sample(RandomStream& rng) const;

  nlohmann::json to_json() const;
  static IndependentLaw from_json(const nlohmann::json& j);

 private:
  Kind kind_ = Kind::Geometric;
  double p_ = 0.5;
  double k2_ = 1.0;
  double alpha_ = 0.5;
  std::vector<double> pmf_;
};

enum class StopKind { Fixed, Independent, FadingTime, FirstPassageBelow, Infinite };
enum class StopClass { HM, MO, Both };

std::string_view stop_kind_name(StopKind k) noexcept;
std::string_view stop_class_name(StopClass c) noexcept;

struct StoppingRule {
  StopKind kind = StopKind::Fixed;
  std::int64_t n = 1;           // Fixed
  IndependentLaw law = IndependentLaw::geometric(0.5);
  double level = 0.0;           // FirstPassageBelow: mu = inf{n >= 1 : r_n^g < -level}
  std::int64_t cap = -1;        // mu ^ cap when >= 0
  std::optional<StopClass> declared;

  static StoppingRule fixed(std::int64_t n);
  static StoppingRule independent(IndependentLaw law);
  static StoppingRule fading_time();
  static StoppingRule first_passage_below(double level, std::int64_t cap = -1);
  static StoppingRule infinite();

  StoppingRule capped(std::int64_t n) const;

  /// Class the kind belongs to.
  StopClass inherent_class() const noexcept;
  bool satisfies_hm() const noexcept;
  bool satisfies_mo() const noexcept { return true; }
  /// Throws ConfigError if the declared tag does not match the kind.
  void check_declared() const;
  /// Whether mu is known before any increment is drawn.
  bool determined_in_advance() const noexcept { return kind != StopKind::FirstPassageBelow; }
  std::optional<std::int64_t> bound() const;

  nlohmann::json to_json() const;
  static StoppingRule from_json(const nlohmann::json& j);
};

/// mu for rules known before the walk: `nu` is the fading time of the
/// tree, `rng` the stopping-time stream. Returns nullopt for
/// FirstPassageBelow and kInfiniteTime for Infinite.
std::optional<std::int64_t> realize_stop(const StoppingRule& rule, std::int64_t nu, RandomStream& rng);

/// First-passage stop from a front sequence r_1, r_2, ...: first n with
/// r_n < -level, or nullopt if none.
std::optional<std::int64_t> first_passage(const StoppingRule& rule, const std::vector<double>& rightmost_by_generation);

}  // namespace brwfade
