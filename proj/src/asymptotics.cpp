#include "brwfade/asymptotics.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/beta.hpp>

#include "brwfade/errors.hpp"
#include "brwfade/quadrature.hpp"

namespace brwfade {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// g at real t, linear between integers.
double boundary_at(const Boundary& g, double t) {
  constexpr double kFar = 1e15;
  if (t > kFar) return g(static_cast<std::int64_t>(kFar)) + g.asymptotic_slope() * (t - kFar);
  const double fl = std::floor(t);
  const auto n = static_cast<std::int64_t>(fl);
  const double g0 = g(n);
  return g0 + (t - fl) * (g(n + 1) - g0);
}

}  // namespace

HSeriesValue h_series(const HSeriesSpec& spec, double x) {
  const auto& law = spec.law;
  const auto& g = spec.g;
  HSeriesValue out;
  const auto k = static_cast<std::int64_t>(spec.weights.size());
  for (std::int64_t n = 1; n <= k; ++n) {
    const double f = law.tail(x + g(n));
    const auto i = static_cast<std::size_t>(n - 1);
    out.value += spec.weights[i] * f;
    if (!spec.weight_se.empty()) out.statistical_error += spec.weight_se[i] * f;
  }
  out.terms = k;
  if (spec.bounded) return out;

  const auto bound_after = [&](std::int64_t n) {
    double best = kInf;
    if (spec.weight_tail_sum) best = std::min(best, law.tail(x + g(n + 1)) * spec.weight_tail_sum(n));
    if (spec.c > 0.0 && std::isfinite(spec.tail_weight_sup)) {
      best = std::min(best, spec.tail_weight_sup * law.integrated_tail_unclamped(x + g(n)) / spec.c);
    }
    return best;
  };

  if (!spec.weight_fn) {
    out.error_bound = bound_after(k);
    if (!std::isfinite(out.error_bound)) throw NonSummable("no bound on the weights past the table");
    return out;
  }

  const auto summand = [&](double t) { return spec.weight_fn(t) * law.tail(x + boundary_at(g, t)); };
  const double head = out.value;
  const auto close_with_integral = [&](std::int64_t n) {
    // sum_{m > n} a_m lies in [int_{n+1}^inf, int_n^inf]
    const auto far = quad::half_infinite(summand, static_cast<double>(n + 1));
    const auto near = quad::gauss_kronrod(summand, static_cast<double>(n), static_cast<double>(n + 1));
    if (!std::isfinite(far.value)) throw NonSummable("the weighted tail integral diverges");
    out.value += far.value + 0.5 * near.value;
    out.error_bound = 0.5 * near.value + far.error + near.error + spec.weight_fn_slack * (out.value - head);
    return out;
  };
  double last_bound = bound_after(k);
  std::int64_t check_at = std::max<std::int64_t>(k + 1, 16);
  for (std::int64_t n = k + 1; n <= spec.max_terms; ++n) {
    const double a = summand(static_cast<double>(n));
    out.value += a;
    out.terms = n;
    if (n < check_at && n != spec.max_terms) continue;
    check_at = n + std::max<std::int64_t>(16, n / 4);
    const double target = spec.tolerance * out.value;
    if (spec.weight_fn_nonincreasing && a <= target) return close_with_integral(n);
    last_bound = bound_after(n);
    if (last_bound <= target) {
      out.error_bound = last_bound + spec.weight_fn_slack * (out.value - head);
      return out;
    }
  }
  if (spec.weight_fn_nonincreasing) return close_with_integral(out.terms);
  if (!std::isfinite(last_bound)) throw NonSummable("the series has no usable remainder bound");
  out.error_bound = last_bound + spec.weight_fn_slack * (out.value - head);
  return out;
}

HSeriesSpec independent_weights(const Environment& env, const StoppingRule& rule, const Boundary& g, double c,
                                const IncrementLaw& law) {
  HSeriesSpec s;
  s.g = g;
  s.c = c;
  s.law = law;
  if (rule.kind == StopKind::FadingTime || rule.kind == StopKind::FirstPassageBelow) {
    throw InvalidArgument("weights for this rule depend on the tree or the walk");
  }
  std::function<double(double)> surv;
  std::function<double(std::int64_t)> surv_tail;
  if (rule.kind == StopKind::Fixed) {
    surv = [n = rule.n](double t) { return t <= static_cast<double>(n) ? 1.0 : 0.0; };
  } else if (rule.kind == StopKind::Infinite) {
    surv = [](double) { return 1.0; };
  } else {
    surv = [law = rule.law](double t) { return law.survival_at(t); };
    surv_tail = [law = rule.law](std::int64_t n) { return law.survival_tail_sum(n); };
  }

  const double l = env.fading_product();
  const auto bound = rule.bound();
  if (bound) {
    double ez = 1.0;
    for (std::int64_t n = 1; n <= *bound; ++n) {
      ez *= env.mean(n - 1);
      s.weights.push_back(ez * surv(static_cast<double>(n)));
    }
    s.bounded = true;
    return s;
  }
  if (!std::isfinite(l)) throw NonFadingEnvironment("unbounded stopping time in a non-fading environment");
  if (!(g.asymptotic_slope() > 0.0) && !(surv_tail && std::isfinite(surv_tail(1)))) {
    throw NonSummable("flat boundary with a stopping time of infinite mean");
  }

  // Tabulate E Z_n until it is within 1e-12 of L (exactly L once branching stops),
  // then use L for the rest and carry the gap as slack.
  const std::int64_t last = env.eventually_degenerate() ? env.last_branching_generation() + 1 : 4096;
  double ez = 1.0;
  for (std::int64_t n = 1; n <= std::max<std::int64_t>(last, 1); ++n) {
    ez *= env.mean(n - 1);
    s.weights.push_back(ez * surv(static_cast<double>(n)));
    if (!env.eventually_degenerate() && 1.0 - ez / l < 1e-12) break;
  }
  const auto k = static_cast<std::int64_t>(s.weights.size());
  s.weight_fn = [l, surv](double t) { return l * surv(t); };
  s.weight_fn_nonincreasing = true;
  s.weight_fn_slack = env.eventually_degenerate() ? 0.0 : std::max(0.0, 1.0 - ez / l);
  s.tail_weight_sup = l * surv(static_cast<double>(k + 1));
  if (surv_tail) s.weight_tail_sum = [l, surv_tail](std::int64_t n) { return l * surv_tail(n); };
  return s;
}

HSeriesSpec fading_time_weights(const Environment& env, const Boundary& g, double c, const IncrementLaw& law,
                                std::int64_t n_runs, RandomStream& rng) {
  if (!env.fading()) throw NonFadingEnvironment("the fading time is infinite");
  if (n_runs < 2) throw InvalidArgument("need at least two trajectories");
  std::vector<double> sum, sum2;
  for (std::int64_t r = 0; r < n_runs; ++r) {
    const auto tr = env.simulate_trajectory(rng);
    if (static_cast<std::int64_t>(sum.size()) < tr.nu) {
      sum.resize(static_cast<std::size_t>(tr.nu), 0.0);
      sum2.resize(static_cast<std::size_t>(tr.nu), 0.0);
    }
    for (std::int64_t n = 1; n <= tr.nu; ++n) {
      const auto z = static_cast<double>(tr.population(n));
      sum[static_cast<std::size_t>(n - 1)] += z;
      sum2[static_cast<std::size_t>(n - 1)] += z * z;
    }
  }
  HSeriesSpec s;
  s.g = g;
  s.c = c;
  s.law = law;
  const auto runs = static_cast<double>(n_runs);
  for (std::size_t i = 0; i < sum.size(); ++i) {
    const double m = sum[i] / runs;
    s.weights.push_back(m);
    s.weight_se.push_back(std::sqrt(std::max(0.0, sum2[i] / runs - m * m) / (runs - 1.0)));
  }
  // w_n <= L P(nu > K) for n > K, and P(nu > K) <= 1 - exp(-L d_K)
  const auto k = static_cast<std::int64_t>(sum.size());
  const double l = env.fading_product();
  s.tail_weight_sup = l * (1.0 - env.nu_tail_bounds(k).first);
  if (s.tail_weight_sup == 0.0) s.bounded = true;
  return s;
}

double expected_eta(const Environment& env, const StoppingRule& rule) {
  if (rule.kind == StopKind::FadingTime || rule.kind == StopKind::FirstPassageBelow) {
    throw InvalidArgument("E eta for this rule needs simulation");
  }
  const auto bound = rule.bound();
  const auto survival = [&](std::int64_t n) {
    if (rule.kind == StopKind::Independent) return rule.law.survival(n);
    return 1.0;
  };
  if (bound) {
    double s = 0.0;
    double ez = 1.0;
    for (std::int64_t n = 1; n <= *bound; ++n) {
      ez *= env.mean(n - 1);
      s += ez * survival(n);
    }
    return s;
  }
  if (rule.kind == StopKind::Infinite) return kInf;
  const double l = env.fading_product();
  if (!std::isfinite(l)) return kInf;
  const double tail_mass = rule.law.survival_tail_sum(1);
  if (!std::isfinite(tail_mass)) return kInf;
  double s = 0.0, ez = 1.0;
  std::int64_t n = 1;
  constexpr std::int64_t kTerms = 1000000;
  for (; n <= kTerms; ++n) {
    ez *= env.mean(n - 1);
    const double term = ez * survival(n);
    s += term;
    if (term < 1e-17 * s && rule.law.kind() == IndependentLaw::Kind::Geometric) break;
  }
  // E Z_n -> L; the rest of the survival series at the limiting mean
  return s + l * rule.law.survival_tail_sum(std::min(n, kTerms));
}

double veraverbeke_limit(double l, double c, const IncrementLaw& law, double x) {
  if (!law.centered()) throw UnboundedPositiveMean("the increment law has no finite mean");
  if (!(c > 0.0)) throw ParameterOutOfRange("c must be positive");
  if (!(l >= 1.0) || !std::isfinite(l)) throw ParameterOutOfRange("L must be finite and at least 1");
  return l / c * law.integrated_tail(x);
}

double theorem2_limit(double expected_eta, const IncrementLaw& law, double x) {
  return expected_eta * law.tail(x);
}

PowerConstant example2_constant(double alpha, double beta, double c, double k1, double k2) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ParameterOutOfRange("alpha must lie in (0, 1)");
  if (!(beta > 1.0)) throw ParameterOutOfRange("beta must exceed 1");
  if (!(c > 0.0) || !(k1 > 0.0) || !(k2 > 0.0)) throw ParameterOutOfRange("c, K1, K2 must be positive");
  return {k1 * k2 * std::pow(c, alpha - 1.0) * beta_function(1.0 - alpha, beta + alpha - 1.0), 1.0 - alpha - beta};
}

double beta_function(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw ParameterOutOfRange("beta function arguments must be positive");
  return boost::math::beta(a, b);
}

}  // namespace brwfade
