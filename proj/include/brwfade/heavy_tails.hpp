#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "brwfade/rational.hpp"
#include "brwfade/rng.hpp"
#include "json.hpp"

namespace brwfade {

enum class Family { ShiftedPareto, ShiftedLognormal, ShiftedWeibull, DiscreteLattice, ExponentialControl };

std::string_view family_name(Family f) noexcept;

struct LatticeAtom {
  Rational value;
  Rational mass;
};

/// h(x) = coefficient * max(x, 1)^exponent.
struct InsensitivityScale {
  double coefficient = 1.0;
  double exponent = 0.5;
};

/// Distribution of a single BRW increment, realized as (raw law - shift).
///
/// The continuous families are parameterized by a non-negative raw variable Y:
///   Pareto (Lomax):  P(Y > y) = (1 + y/scale)^-beta
///   lognormal:       log Y ~ N(mu, sigma^2)
///   Weibull:         P(Y > y) = exp(-(y/scale)^shape)
///   exponential:     P(Y > y) = exp(-rate * y)
/// and the shift is E Y, so the increment has mean zero. A Pareto law with
/// beta <= 1 has no finite mean; it is kept with shift 0 and `centered()`
/// false so that the positive-mean diagnostics can report it, but the walk
/// engine refuses it.
///
/// Lattice laws keep exact rational atoms; their shift is the exact mean.
class IncrementLaw {
 public:
  static IncrementLaw pareto(double beta, double scale = 1.0);
  static IncrementLaw lognormal(double mu, double sigma);
  static IncrementLaw weibull(double shape, double scale = 1.0);
  static IncrementLaw lattice(std::vector<LatticeAtom> raw_atoms);
  static IncrementLaw exponential(double rate = 1.0);

  Family family() const noexcept { return family_; }
  double shift() const noexcept { return shift_; }
  bool centered() const noexcept { return centered_; }
  bool continuous() const noexcept { return family_ != Family::DiscreteLattice; }
  bool long_tailed() const noexcept;

  double param_a() const noexcept { return a_; }
  double param_b() const noexcept { return b_; }
  /// Atoms after the mean-zero shift, sorted by value.
  const std::vector<LatticeAtom>& atoms() const noexcept { return atoms_; }
  /// Lower end of the support of the increment.
  double support_min() const noexcept;
  std::string support_description() const;

  /// F-bar(x) = P(xi > x).
  double tail(double x) const;
  /// log F-bar(x), finite where F-bar(x) underflows.
  double log_tail(double x) const;
  /// min{1, integral_x^inf F-bar(y) dy}.
  double integrated_tail(double x) const;
  /// integral_x^inf F-bar(y) dy without the clamp at 1.
  double integrated_tail_unclamped(double x) const;
  /// m_{F+} = integral_0^inf F-bar(y) dy = E max(xi, 0).
  double positive_mean() const;

  /// Inverse tail, p in (0, 1]: the solution of F-bar(x) = p for continuous
  /// laws, the atom v with F-bar(v) < p <= F-bar(v-) for lattice laws.
  double tail_quantile(double p) const;

  double sample(RandomStream& rng) const { return tail_quantile(rng.uniform_open01()); }
  /// Draw conditioned on xi <= t (requires F(t) > 0).
  double sample_at_most(double t, RandomStream& rng) const;
  /// Draw conditioned on xi > t (requires F-bar(t) > 0).
  double sample_above(double t, RandomStream& rng) const;

  /// Scale h(x) with F-bar(x +- h(x)) ~ F-bar(x). Throws NotLongTailed for
  /// the exponential control, light Weibull and lattice laws (unless an
  /// override is installed).
  double insensitivity_scale(double x) const;
  void set_insensitivity_override(InsensitivityScale h) { h_override_ = h; }
  std::optional<InsensitivityScale> insensitivity_override() const noexcept { return h_override_; }

  nlohmann::json to_json() const;
  static IncrementLaw from_json(const nlohmann::json& j);

 private:
  IncrementLaw() = default;

  Family family_ = Family::ExponentialControl;
  double a_ = 1.0;  // beta / mu / shape / rate
  double b_ = 1.0;  // scale / sigma / scale / unused
  double shift_ = 0.0;
  bool centered_ = true;
  std::vector<LatticeAtom> atoms_;
  std::vector<double> atom_values_;     // doubles of atoms_
  std::vector<double> atom_survival_;   // P(xi > value_k)
  std::optional<InsensitivityScale> h_override_;
};

enum class TailClass { Long, Subexponential, StrongSubexponential };
enum class Verdict { Consistent, Inconsistent, Inconclusive };

std::string_view tail_class_name(TailClass c) noexcept;
std::string_view verdict_name(Verdict v) noexcept;

struct ClassRow {
  double x = 0.0;
  double ratio = 0.0;  // diagnostic ratio at x
  double limit = 1.0;  // value the ratio tends to for class members
};

struct ClassReport {
  TailClass tested = TailClass::Long;
  std::vector<ClassRow> rows;
  Verdict verdict = Verdict::Inconclusive;
  double x_lo = 0.0;  // x-range supporting the verdict
  double x_hi = 0.0;
  std::string note;
};

/// Thresholds of the numeric class diagnostic.
inline constexpr double kClassRelativeBand = 0.10;
inline constexpr int kClassTrendPoints = 3;

/// P(xi_1 + xi_2 > x) for two independent increments.
double convolution_tail(const IncrementLaw& law, double x);
/// integral_0^x F-bar(x - y) F-bar(y) dy.
double strong_convolution_integral(const IncrementLaw& law, double x);

ClassReport check_class_membership(const IncrementLaw& law, TailClass tested,
                                   std::span<const double> x_grid);

/// Verdict rule applied to a finished table of rows.
Verdict class_verdict(std::span<const ClassRow> rows);

}  // namespace brwfade
