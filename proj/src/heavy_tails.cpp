#include "brwfade/heavy_tails.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "brwfade/errors.hpp"
#include "brwfade/quadrature.hpp"

namespace brwfade {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Standard normal upper tail.
double normal_tail(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

}  // namespace

std::string_view family_name(Family f) noexcept {
  switch (f) {
    case Family::ShiftedPareto: return "pareto";
    case Family::ShiftedLognormal: return "lognormal";
    case Family::ShiftedWeibull: return "weibull";
    case Family::DiscreteLattice: return "lattice";
    case Family::ExponentialControl: return "exponential";
  }
  return "?";
}

std::string_view tail_class_name(TailClass c) noexcept {
  switch (c) {
    case TailClass::Long: return "L";
    case TailClass::Subexponential: return "S";
    case TailClass::StrongSubexponential: return "S*";
  }
  return "?";
}

std::string_view verdict_name(Verdict v) noexcept {
  switch (v) {
    case Verdict::Consistent: return "consistent";
    case Verdict::Inconsistent: return "inconsistent";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

IncrementLaw IncrementLaw::pareto(double beta, double scale) {
  if (!(beta > 0.0) || !(scale > 0.0)) throw ParameterOutOfRange("pareto needs beta > 0, scale > 0");
  IncrementLaw law;
  law.family_ = Family::ShiftedPareto;
  law.a_ = beta;
  law.b_ = scale;
  law.centered_ = beta > 1.0;
  law.shift_ = law.centered_ ? scale / (beta - 1.0) : 0.0;
  return law;
}

IncrementLaw IncrementLaw::lognormal(double mu, double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(mu)) throw ParameterOutOfRange("lognormal needs sigma > 0");
  IncrementLaw law;
  law.family_ = Family::ShiftedLognormal;
  law.a_ = mu;
  law.b_ = sigma;
  law.shift_ = std::exp(mu + 0.5 * sigma * sigma);
  return law;
}

IncrementLaw IncrementLaw::weibull(double shape, double scale) {
  if (!(shape > 0.0) || !(scale > 0.0)) throw ParameterOutOfRange("weibull needs shape > 0, scale > 0");
  IncrementLaw law;
  law.family_ = Family::ShiftedWeibull;
  law.a_ = shape;
  law.b_ = scale;
  law.shift_ = scale * std::tgamma(1.0 + 1.0 / shape);
  return law;
}

IncrementLaw IncrementLaw::exponential(double rate) {
  if (!(rate > 0.0)) throw ParameterOutOfRange("exponential needs rate > 0");
  IncrementLaw law;
  law.family_ = Family::ExponentialControl;
  law.a_ = rate;
  law.b_ = 0.0;
  law.shift_ = 1.0 / rate;
  return law;
}

IncrementLaw IncrementLaw::lattice(std::vector<LatticeAtom> raw_atoms) {
  if (raw_atoms.empty()) throw ParameterOutOfRange("lattice law needs at least one atom");
  std::sort(raw_atoms.begin(), raw_atoms.end(),
            [](const LatticeAtom& l, const LatticeAtom& r) { return l.value < r.value; });
  Rational total;
  Rational mean;
  std::vector<LatticeAtom> merged;
  for (const auto& atom : raw_atoms) {
    if (atom.mass < Rational(0)) throw ParameterOutOfRange("lattice mass must be non-negative");
    if (atom.mass == Rational(0)) continue;
    total += atom.mass;
    mean += atom.mass * atom.value;
    if (!merged.empty() && merged.back().value == atom.value) {
      merged.back().mass += atom.mass;
    } else {
      merged.push_back(atom);
    }
  }
  if (!(total == Rational(1))) throw ParameterOutOfRange("lattice masses must sum to exactly 1, got " + total.to_string());

  IncrementLaw law;
  law.family_ = Family::DiscreteLattice;
  law.a_ = 0.0;
  law.b_ = 0.0;
  law.shift_ = mean.to_double();
  for (auto& atom : merged) atom.value = atom.value - mean;
  law.atoms_ = std::move(merged);

  Rational above(1);
  for (const auto& atom : law.atoms_) {
    above -= atom.mass;
    law.atom_values_.push_back(atom.value.to_double());
    law.atom_survival_.push_back(above.to_double());
  }
  return law;
}

bool IncrementLaw::long_tailed() const noexcept {
  switch (family_) {
    case Family::ShiftedPareto:
    case Family::ShiftedLognormal: return true;
    case Family::ShiftedWeibull: return a_ < 1.0;
    case Family::DiscreteLattice:
    case Family::ExponentialControl: return false;
  }
  return false;
}

double IncrementLaw::support_min() const noexcept {
  if (family_ == Family::DiscreteLattice) return atom_values_.front();
  return -shift_;
}

std::string IncrementLaw::support_description() const {
  if (family_ == Family::DiscreteLattice) {
    std::string out = "{";
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      if (i) out += ", ";
      out += atoms_[i].value.to_string();
    }
    return out + "}";
  }
  return "[" + std::to_string(-shift_) + ", inf)";
}

double IncrementLaw::tail(double x) const {
  if (family_ == Family::DiscreteLattice) {
    // survival just above the last atom <= x
    auto it = std::upper_bound(atom_values_.begin(), atom_values_.end(), x);
    if (it == atom_values_.begin()) return 1.0;
    return atom_survival_[static_cast<std::size_t>(it - atom_values_.begin()) - 1];
  }
  const double t = x + shift_;
  if (!(t > 0.0)) return 1.0;
  switch (family_) {
    case Family::ShiftedPareto: return std::pow(1.0 + t / b_, -a_);
    case Family::ShiftedLognormal: return normal_tail((std::log(t) - a_) / b_);
    case Family::ShiftedWeibull: return std::exp(-std::pow(t / b_, a_));
    case Family::ExponentialControl: return std::exp(-a_ * t);
    case Family::DiscreteLattice: break;
  }
  return 0.0;
}

double IncrementLaw::log_tail(double x) const {
  if (family_ == Family::DiscreteLattice) return std::log(tail(x));
  const double t = x + shift_;
  if (!(t > 0.0)) return 0.0;
  switch (family_) {
    case Family::ShiftedPareto: return -a_ * std::log1p(t / b_);
    case Family::ShiftedLognormal: {
      const double z = (std::log(t) - a_) / b_;
      if (z < 30.0) return std::log(normal_tail(z));
      const double z2 = z * z;
      return -0.5 * z2 - std::log(z * std::sqrt(2.0 * std::numbers::pi)) + std::log1p(-1.0 / z2 + 3.0 / (z2 * z2));
    }
    case Family::ShiftedWeibull: return -std::pow(t / b_, a_);
    case Family::ExponentialControl: return -a_ * t;
    case Family::DiscreteLattice: break;
  }
  return 0.0;
}

double IncrementLaw::integrated_tail_unclamped(double x) const {
  if (family_ == Family::DiscreteLattice) {
    double sum = 0.0;
    for (std::size_t k = 0; k < atoms_.size(); ++k) {
      const double excess = atom_values_[k] - x;
      if (excess > 0.0) sum += atoms_[k].mass.to_double() * excess;
    }
    return sum;
  }
  if (!centered_) throw UnboundedPositiveMean("pareto with beta <= 1 has an infinite positive mean");
  const double t = x + shift_;
  // Below the support the tail is 1 and the raw mean equals the shift.
  if (t <= 0.0) return -x;
  switch (family_) {
    case Family::ShiftedPareto: return b_ / (a_ - 1.0) * std::pow(1.0 + t / b_, 1.0 - a_);
    case Family::ShiftedLognormal: {
      const double z = (std::log(t) - a_) / b_;
      return shift_ * normal_tail(z - b_) - t * normal_tail(z);
    }
    case Family::ShiftedWeibull:
      return b_ / a_ * boost::math::tgamma(1.0 / a_, std::pow(t / b_, a_));
    case Family::ExponentialControl: return std::exp(-a_ * t) / a_;
    case Family::DiscreteLattice: break;
  }
  return 0.0;
}

double IncrementLaw::integrated_tail(double x) const {
  return std::min(1.0, integrated_tail_unclamped(x));
}

double IncrementLaw::positive_mean() const { return integrated_tail_unclamped(0.0); }

double IncrementLaw::tail_quantile(double p) const {
  if (!(p > 0.0) || p > 1.0) throw InvalidArgument("tail_quantile needs p in (0, 1]");
  if (family_ == Family::DiscreteLattice) {
    for (std::size_t k = 0; k < atom_survival_.size(); ++k) {
      if (atom_survival_[k] < p) return atom_values_[k];
    }
    return atom_values_.back();
  }
  if (p >= 1.0) return -shift_;
  double t = 0.0;
  switch (family_) {
    case Family::ShiftedPareto: t = b_ * std::expm1(-std::log(p) / a_); break;
    case Family::ShiftedLognormal:
      t = std::exp(a_ + b_ * std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p));
      break;
    case Family::ShiftedWeibull: t = b_ * std::pow(-std::log(p), 1.0 / a_); break;
    case Family::ExponentialControl: t = -std::log(p) / a_; break;
    case Family::DiscreteLattice: break;
  }
  return t - shift_;
}

double IncrementLaw::sample_at_most(double t, RandomStream& rng) const {
  const double above = tail(t);
  if (!(above < 1.0)) throw InvalidArgument("sample_at_most: P(xi <= t) = 0");
  return tail_quantile(above + (1.0 - above) * rng.uniform_open01());
}

double IncrementLaw::sample_above(double t, RandomStream& rng) const {
  const double above = tail(t);
  if (!(above > 0.0)) throw InvalidArgument("sample_above: P(xi > t) = 0");
  return tail_quantile(above * rng.uniform_open01());
}

double IncrementLaw::insensitivity_scale(double x) const {
  const double y = std::max(x, 1.0);
  if (h_override_) return h_override_->coefficient * std::pow(y, h_override_->exponent);
  switch (family_) {
    case Family::ShiftedPareto:
    case Family::ShiftedLognormal: return std::sqrt(y);
    case Family::ShiftedWeibull:
      if (a_ >= 1.0) throw NotLongTailed("weibull with shape >= 1 is not long-tailed");
      return std::pow(y, std::min((1.0 - a_) / 2.0, 0.2));
    case Family::DiscreteLattice: throw NotLongTailed("lattice laws have bounded support");
    case Family::ExponentialControl: throw NotLongTailed("exponential control is light-tailed");
  }
  return 0.0;
}

nlohmann::json IncrementLaw::to_json() const {
  nlohmann::json j;
  j["family"] = std::string(family_name(family_));
  switch (family_) {
    case Family::ShiftedPareto: j["beta"] = a_; j["scale"] = b_; break;
    case Family::ShiftedLognormal: j["mu"] = a_; j["sigma"] = b_; break;
    case Family::ShiftedWeibull: j["shape"] = a_; j["scale"] = b_; break;
    case Family::ExponentialControl: j["rate"] = a_; break;
    case Family::DiscreteLattice: {
      nlohmann::json atoms = nlohmann::json::array();
      for (const auto& atom : atoms_) atoms.push_back({atom.value.to_string(), atom.mass.to_string()});
      j["atoms"] = atoms;
      break;
    }
  }
  j["shift"] = shift_;
  j["centered"] = centered_;
  if (h_override_) j["h"] = {{"coefficient", h_override_->coefficient}, {"exponent", h_override_->exponent}};
  return j;
}

namespace {

Rational rational_from_json(const nlohmann::json& v) {
  if (v.is_string()) return Rational::parse(v.get<std::string>());
  if (v.is_number_integer()) return Rational(v.get<std::int64_t>());
  throw ConfigError("lattice values and masses must be integers or \"p/q\" strings");
}

}  // namespace

IncrementLaw IncrementLaw::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("family")) throw ConfigError("law block needs a \"family\"");
  const std::string family = j.at("family").get<std::string>();
  auto num = [&](const char* key, double fallback) {
    return j.contains(key) ? j.at(key).get<double>() : fallback;
  };
  IncrementLaw law = [&] {
    if (family == "pareto") return pareto(num("beta", 2.0), num("scale", 1.0));
    if (family == "lognormal") return lognormal(num("mu", 0.0), num("sigma", 1.0));
    if (family == "weibull") return weibull(num("shape", 0.5), num("scale", 1.0));
    if (family == "exponential") return exponential(num("rate", 1.0));
    if (family == "lattice") {
      std::vector<LatticeAtom> atoms;
      for (const auto& pair : j.at("atoms")) {
        if (!pair.is_array() || pair.size() != 2) throw ConfigError("lattice atom must be [value, mass]");
        atoms.push_back({rational_from_json(pair[0]), rational_from_json(pair[1])});
      }
      return lattice(std::move(atoms));
    }
    throw ConfigError("unknown law family '" + family + "'");
  }();
  if (j.contains("h")) {
    const auto& h = j.at("h");
    law.set_insensitivity_override({h.value("coefficient", 1.0), h.value("exponent", 0.5)});
  }
  return law;
}

// ---------------------------------------------------------------------------
// Class diagnostics

double convolution_tail(const IncrementLaw& law, double x) {
  if (!law.continuous()) {
    const auto& atoms = law.atoms();
    Rational pr;
    for (const auto& a : atoms) {
      for (const auto& b : atoms) {
        if ((a.value + b.value).to_double() > x) pr += a.mass * b.mass;
      }
    }
    return pr.to_double();
  }
  // {X+Y > x} splits into {Y <= x/2, X+Y > x}, its mirror, and {X, Y > x/2}.
  // The first piece is integrated in tail-probability space p = F-bar(y).
  const double half = law.tail(0.5 * x);
  if (!(half < 1.0)) return 1.0;
  if (!(half > 0.0)) return 0.0;
  const auto integrand = [&](double p) { return law.tail(x - law.tail_quantile(p)); };
  std::vector<double> breaks{half};
  for (double b = half * 4.0; b < 1.0; b *= 4.0) breaks.push_back(b);
  breaks.push_back(1.0);
  const double piece = quad::piecewise(integrand, breaks, 1e-10).value;
  return 2.0 * piece + half * half;
}

double strong_convolution_integral(const IncrementLaw& law, double x) {
  if (!(x > 0.0)) return 0.0;
  const auto integrand = [&](double y) { return law.tail(x - y) * law.tail(y); };
  std::vector<double> breaks = quad::geometric_breaks(0.0, 0.5 * x, std::min(1.0, 0.25 * x));
  if (!law.continuous()) {
    for (const auto& atom : law.atoms()) {
      for (double b : {atom.value.to_double(), x - atom.value.to_double()}) {
        if (b > 0.0 && b < 0.5 * x) breaks.push_back(b);
      }
    }
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  }
  return 2.0 * quad::piecewise(integrand, breaks, 1e-10).value;
}

Verdict class_verdict(std::span<const ClassRow> rows) {
  if (rows.size() < static_cast<std::size_t>(kClassTrendPoints)) return Verdict::Inconclusive;
  const auto deviation = [](const ClassRow& r) { return std::abs(r.ratio / r.limit - 1.0); };
  const std::size_t n = rows.size();
  if (deviation(rows[n - 1]) > kClassRelativeBand) return Verdict::Inconsistent;
  bool shrinking = true;
  for (std::size_t i = n - kClassTrendPoints + 1; i < n; ++i) {
    if (!(deviation(rows[i]) < deviation(rows[i - 1]))) shrinking = false;
  }
  if (shrinking || deviation(rows[n - 1]) <= 1e-9) return Verdict::Consistent;
  return Verdict::Inconclusive;
}

ClassReport check_class_membership(const IncrementLaw& law, TailClass tested,
                                   std::span<const double> x_grid) {
  for (std::size_t i = 0; i < x_grid.size(); ++i) {
    if (!(x_grid[i] > 0.0) || (i > 0 && !(x_grid[i] > x_grid[i - 1]))) {
      throw InvalidArgument("class check grid must be positive and increasing");
    }
  }
  ClassReport report;
  report.tested = tested;
  bool vanishes = false;
  const double mplus = tested == TailClass::StrongSubexponential ? law.positive_mean() : 0.0;
  for (double x : x_grid) {
    const double fx = law.tail(x);
    if (!(fx > 0.0)) {
      report.note = "tail vanishes on part of the grid (bounded support)";
      vanishes = true;
      continue;
    }
    ClassRow row;
    row.x = x;
    switch (tested) {
      case TailClass::Long:
        row.ratio = law.tail(x + 1.0) / fx;
        row.limit = 1.0;
        break;
      case TailClass::Subexponential:
        row.ratio = convolution_tail(law, x) / fx;
        row.limit = 2.0;
        break;
      case TailClass::StrongSubexponential:
        row.ratio = strong_convolution_integral(law, x) / (2.0 * mplus * fx);
        row.limit = 1.0;
        break;
    }
    if (!(row.ratio > 0.0) || !std::isfinite(row.ratio)) {
      report.note = "non-finite or zero ratio on part of the grid";
      continue;
    }
    report.rows.push_back(row);
  }
  report.verdict = class_verdict(report.rows);
  if (vanishes) {
    // A tail that vanishes rules out L, S and S* outright.
    report.verdict = Verdict::Inconsistent;
  }
  if (!report.rows.empty()) {
    const std::size_t n = report.rows.size();
    const std::size_t first = n >= static_cast<std::size_t>(kClassTrendPoints) ? n - kClassTrendPoints : 0;
    report.x_lo = report.rows[first].x;
    report.x_hi = report.rows.back().x;
  }
  return report;
}

}  // namespace brwfade
