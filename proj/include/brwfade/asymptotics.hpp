#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "brwfade/boundaries_stopping.hpp"
#include "brwfade/branching_env.hpp"
#include "brwfade/heavy_tails.hpp"

namespace brwfade {

/// Ingredients of H(x) = sum_{n >= 1} w_n F-bar(x + g(n)) with
/// w_n = E[Z_n 1(mu >= n)].
///
/// Weights come from `weights` (w_1, w_2, ...) and, past the table, from
/// `weight_fn`. Past the last computed term the remainder is bounded by the
/// best of:
///   - an integral bracket, when `weight_fn` is declared non-increasing and
///     accepts real arguments;
///   - F-bar(x + g(N + 1)) * weight_tail_sum(N), when provided;
///   - tail_weight_sup * F-bar_I(x + g(N)) / c, when c > 0.
struct HSeriesSpec {
  std::vector<double> weights;
  std::vector<double> weight_se;  // empty or same size as weights
  std::function<double(double)> weight_fn;
  bool weight_fn_nonincreasing = false;
  double weight_fn_slack = 0.0;  // weight_fn may exceed w_n by this relative amount
  std::function<double(std::int64_t)> weight_tail_sum;  // upper bound on sum_{n > N} w_n
  double tail_weight_sup = std::numeric_limits<double>::infinity();  // sup_{n > table} w_n
  bool bounded = false;  // w_n = 0 past the table
  Boundary g;
  double c = 0.0;  // g belongs to G_c
  IncrementLaw law = IncrementLaw::pareto(2.0);
  double tolerance = 1e-4;  // relative
  std::int64_t max_terms = 10000000;
};

struct HSeriesValue {
  double value = 0.0;
  double error_bound = 0.0;        // truncation and quadrature
  double statistical_error = 0.0;  // from estimated weights
  std::int64_t terms = 0;
};

HSeriesValue h_series(const HSeriesSpec& spec, double x);

/// Weights E Z_n P(mu >= n) for a stopping time independent of the walk.
/// FirstPassageBelow and FadingTime are rejected; use estimated weights.
HSeriesSpec independent_weights(const Environment& env, const StoppingRule& rule, const Boundary& g, double c,
                                const IncrementLaw& law);

/// Weights E[Z_n 1(nu >= n)] for the fading time, estimated from trajectories.
HSeriesSpec fading_time_weights(const Environment& env, const Boundary& g, double c, const IncrementLaw& law,
                                std::int64_t n_runs, RandomStream& rng);

/// sum_n E Z_n P(mu >= n) for a stopping time independent of the walk (+inf if divergent).
double expected_eta(const Environment& env, const StoppingRule& rule);

/// (L / c) F-bar_I(x).
double veraverbeke_limit(double l, double c, const IncrementLaw& law, double x);

/// E eta_mu * F-bar(x).
double theorem2_limit(double expected_eta, const IncrementLaw& law, double x);

struct PowerConstant {
  double constant = 0.0;
  double exponent = 0.0;
};

/// sum_n K2 n^-alpha K1 (x + c n)^-beta ~ C x^{1 - alpha - beta} with
/// C = K1 K2 c^{alpha - 1} B(1 - alpha, beta + alpha - 1), for one path.
PowerConstant example2_constant(double alpha, double beta, double c, double k1, double k2);

double beta_function(double a, double b);

}  // namespace brwfade
