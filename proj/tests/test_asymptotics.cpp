#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "brwfade/asymptotics.hpp"
#include "brwfade/errors.hpp"
#include "doctest.h"

using namespace brwfade;

namespace {

Environment two_children_then_one() {
  return Environment({OffspringLaw::from_masses({0.0, 1.0})}, TailRule::degenerate());
}

double power_integral(double alpha, double beta, double c, double x) {
  boost::math::quadrature::tanh_sinh<double> ts;
  const auto f = [&](double t) { return std::pow(t, -alpha) * std::pow(x + c * t, -beta); };
  return ts.integrate(f, 0.0, std::numeric_limits<double>::infinity());
}

double slope_fit(const std::vector<double>& lx, const std::vector<double>& ly) {
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace

TEST_CASE("beta function") {
  CHECK(beta_function(1, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(beta_function(0.5, 0.5) == doctest::Approx(M_PI).epsilon(1e-14));
  CHECK(beta_function(2, 3) == doctest::Approx(1.0 / 12.0).epsilon(1e-14));
  CHECK(beta_function(0.5, 1.5) == doctest::Approx(M_PI / 2).epsilon(1e-14));
  CHECK(beta_function(1e-3, 1e-3) == doctest::Approx(2000.0).epsilon(1e-5));
  CHECK_THROWS_AS(beta_function(0.0, 1.0), ParameterOutOfRange);
  CHECK_THROWS_AS(beta_function(1.0, -2.0), ParameterOutOfRange);
}

TEST_CASE("power-law constant matches quadrature") {
  const auto pc = example2_constant(0.5, 2.0, 1.0, 1.0, 1.0);
  CHECK(pc.exponent == -1.5);
  const double x = 100.0;
  CHECK(pc.constant * std::pow(x, pc.exponent) == doctest::Approx(power_integral(0.5, 2.0, 1.0, x)).epsilon(1e-6));

  RandomStream rng(99);
  for (int i = 0; i < 20; ++i) {
    const double alpha = 0.1 + 0.8 * rng.uniform01();
    const double beta = 1.2 + 2.8 * rng.uniform01();
    const double c = 0.3 + 2.7 * rng.uniform01();
    const double y = std::pow(10.0, 1.0 + 3.0 * rng.uniform01());
    const auto p = example2_constant(alpha, beta, c, 1.0, 1.0);
    CHECK(p.exponent == doctest::Approx(1 - alpha - beta));
    CHECK(p.constant * std::pow(y, p.exponent) == doctest::Approx(power_integral(alpha, beta, c, y)).epsilon(1e-5));
  }
  CHECK(example2_constant(0.5, 2.0, 1.0, 3.0, 2.0).constant == doctest::Approx(6.0 * M_PI / 2));
  CHECK_THROWS_AS(example2_constant(1.0, 2.0, 1.0, 1.0, 1.0), ParameterOutOfRange);
  CHECK_THROWS_AS(example2_constant(0.5, 1.0, 1.0, 1.0, 1.0), ParameterOutOfRange);
  CHECK_THROWS_AS(example2_constant(0.5, 2.0, 0.0, 1.0, 1.0), ParameterOutOfRange);
}

TEST_CASE("series with constant weights and a flat boundary") {
  const auto law = IncrementLaw::pareto(2.0);
  const auto s = independent_weights(Environment::constant_one(), StoppingRule::fixed(7), Boundary::linear(0.0), 0.0, law);
  for (double x : {1.0, 10.0, 1000.0}) {
    const auto h = h_series(s, x);
    CHECK(h.value == doctest::Approx(7.0 * law.tail(x)).epsilon(1e-14));
    CHECK(h.error_bound == 0.0);
  }
  const Environment env({OffspringLaw::from_masses({0.5, 0.5}), OffspringLaw::from_masses({0.0, 1.0})},
                        TailRule::degenerate());
  const auto b = independent_weights(env, StoppingRule::fixed(3), Boundary::linear(0.0), 0.0, law);
  // E Z_1 + E Z_2 + E Z_3 = 1.5 + 3 + 3
  CHECK(h_series(b, 5.0).value == doctest::Approx(7.5 * law.tail(5.0)).epsilon(1e-14));
  CHECK(expected_eta(env, StoppingRule::fixed(3)) == doctest::Approx(7.5));
}

TEST_CASE("series for the intermediate regime") {
  const auto law = IncrementLaw::pareto(2.0);  // tail (2 + t)^-2, so K1 = 1
  const auto rule = StoppingRule::independent(IndependentLaw::power(1.0, 0.5));
  const auto s = independent_weights(two_children_then_one(), rule, Boundary::linear(1.0), 1.0, law);
  const auto pc = example2_constant(0.5, 2.0, 1.0, 1.0, 1.0);
  std::vector<double> lx, ly;
  double prev_dev = std::numeric_limits<double>::infinity();
  for (double x : {1e3, 1e4, 1e5, 1e6}) {
    const auto h = h_series(s, x);
    CHECK(h.error_bound <= 1e-4 * h.value);
    lx.push_back(std::log(x));
    ly.push_back(std::log(h.value));
    const double dev = std::abs(h.value / (2.0 * pc.constant * std::pow(x, pc.exponent)) - 1.0);
    CHECK(dev < prev_dev);
    prev_dev = dev;
  }
  CHECK(std::abs(slope_fit(lx, ly) - pc.exponent) < 0.05);

  // direct oracle: explicit sum, then the integral tail
  const double x = 1000.0;
  double direct = 0.0;
  constexpr int m = 200000;
  for (int n = 1; n <= m; ++n) direct += 2.0 * std::min(1.0, 1.0 / std::sqrt(n)) * law.tail(x + n);
  boost::math::quadrature::tanh_sinh<double> ts;
  const auto tail = [&](double t) { return 2.0 / std::sqrt(t) * std::pow(2.0 + x + t, -2.0); };
  const double lo = ts.integrate(tail, m + 1.0, std::numeric_limits<double>::infinity());
  const double hi = ts.integrate(tail, static_cast<double>(m), std::numeric_limits<double>::infinity());
  const auto h = h_series(s, x);
  CHECK(h.value == doctest::Approx(direct + 0.5 * (lo + hi)).epsilon(1e-6));
  CHECK(std::abs(h.value - direct - 0.5 * (lo + hi)) <= h.error_bound + 0.5 * (hi - lo));
}

TEST_CASE("series for an infinite horizon") {
  const auto law = IncrementLaw::pareto(2.0);
  const auto s = independent_weights(Environment::constant_one(), StoppingRule::infinite(), Boundary::linear(1.0), 1.0, law);
  for (double x : {0.0, 10.0, 1e4}) {
    // sum_{n >= 1} (3 + x + n - 1)^-2 = trigamma(3 + x)
    const auto h = h_series(s, x);
    CHECK(h.value == doctest::Approx(boost::math::trigamma(3.0 + x)).epsilon(1e-4));
    CHECK(h.error_bound <= 1e-4 * h.value);
  }
  CHECK_THROWS_AS(
      independent_weights(Environment::constant_one(), StoppingRule::infinite(), Boundary::linear(0.0), 0.0, law),
      NonSummable);
  CHECK_THROWS_AS(independent_weights(Environment::constant_one(),
                                      StoppingRule::independent(IndependentLaw::power(1.0, 0.5)),
                                      Boundary::linear(0.0), 0.0, law),
                  NonSummable);
  HSeriesSpec bare;
  bare.weights = {1.0, 1.0};
  bare.g = Boundary::linear(0.0);
  CHECK_THROWS_AS(h_series(bare, 1.0), NonSummable);
  bare.bounded = true;
  CHECK(h_series(bare, 1.0).value == doctest::Approx(2.0 * bare.law.tail(1.0)));
}

TEST_CASE("geometric stopping without drift") {
  const auto law = IncrementLaw::lognormal(0.0, 1.0);
  const Environment env({OffspringLaw::from_masses({0.5, 0.5})}, TailRule::geometric(0.5, 0.5));
  const auto rule = StoppingRule::independent(IndependentLaw::geometric(0.3));
  const auto s = independent_weights(env, rule, Boundary::linear(0.0), 0.0, law);
  const double eta = expected_eta(env, rule);
  for (double x : {1.0, 5.0, 20.0}) {
    const auto h = h_series(s, x);
    CHECK(h.value == doctest::Approx(eta * law.tail(x)).epsilon(1e-4));
    CHECK(h.error_bound <= 1e-4 * h.value);
  }
}

TEST_CASE("bracketing by the extreme terms") {
  const auto law = IncrementLaw::weibull(0.5);
  const Environment env({OffspringLaw::from_masses({0.3, 0.7})}, TailRule::geometric(0.6, 0.5));
  const auto g = Boundary::affine_table(0.5, 0.1, {0.0, 0.4, 0.4});
  const std::int64_t n = 6;
  const auto s = independent_weights(env, StoppingRule::fixed(n), g, 0.5, law);
  for (double x : {0.5, 3.0, 30.0}) {
    const double h = h_series(s, x).value;
    double wsum = 0.0, wmax = 0.0;
    for (double w : s.weights) {
      wsum += w;
      wmax = std::max(wmax, w);
    }
    CHECK(h >= wmax * law.tail(x + g(n)));
    CHECK(h <= wsum * law.tail(x + g(1)));
  }
}

TEST_CASE("series approaches the first-order limit for bounded stopping") {
  const auto law = IncrementLaw::pareto(1.5);
  const Environment env({OffspringLaw::from_masses({0.4, 0.6})}, TailRule::geometric(0.5, 0.5));
  const auto rule = StoppingRule::independent(IndependentLaw::table({0.0, 0.2, 0.3, 0.5}));
  const auto s = independent_weights(env, rule, Boundary::linear(1.0), 1.0, law);
  const double eta = expected_eta(env, rule);
  double prev = std::numeric_limits<double>::infinity();
  for (double x : {10.0, 100.0, 1e3, 1e4, 1e5}) {
    const double dev = std::abs(h_series(s, x).value / theorem2_limit(eta, law, x) - 1.0);
    CHECK(dev < prev);
    prev = dev;
  }
  CHECK(prev < 1e-3);
}

TEST_CASE("series is invariant under swapping equal generations") {
  const auto law = IncrementLaw::pareto(2.5);
  RandomStream rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> gv{0.5, 0.5, 0.5, 1.5, 1.5, 2.0};
    HSeriesSpec a;
    a.g = Boundary::table(gv);
    a.law = law;
    a.bounded = true;
    for (std::size_t i = 0; i < gv.size(); ++i) a.weights.push_back(rng.uniform01() * 3);
    HSeriesSpec b = a;
    std::swap(b.weights[0], b.weights[2]);
    std::swap(b.weights[3], b.weights[4]);
    const double x = 10.0 * rng.uniform01();
    CHECK(h_series(a, x).value == doctest::Approx(h_series(b, x).value).epsilon(1e-14));
  }
}

TEST_CASE("single-path and branching limits") {
  const auto law = IncrementLaw::pareto(2.0);
  for (double x : {0.0, 10.0, 1e3}) {
    CHECK(veraverbeke_limit(1.0, 1.0, law, x) == doctest::Approx(law.integrated_tail(x)));
    // integrated tail of (2 + y)^-2 is 1 / (2 + x)
    CHECK(veraverbeke_limit(2.0, 1.0, law, x) == doctest::Approx(2.0 / (2.0 + x)).epsilon(1e-9));
    CHECK(veraverbeke_limit(2.0, 0.5, law, x) == doctest::Approx(2.0 * veraverbeke_limit(2.0, 1.0, law, x)));
    CHECK(theorem2_limit(5.0, law, x) == doctest::Approx(5.0 * law.tail(x)));
  }
  CHECK_THROWS_AS(veraverbeke_limit(1.0, 1.0, IncrementLaw::pareto(0.9), 1.0), UnboundedPositiveMean);
  CHECK_THROWS_AS(veraverbeke_limit(1.0, 0.0, law, 1.0), ParameterOutOfRange);
  CHECK(expected_eta(Environment::constant_one(), StoppingRule::fixed(4)) == 4.0);
  CHECK(expected_eta(Environment::constant_one(), StoppingRule::independent(IndependentLaw::geometric(0.5))) ==
        doctest::Approx(2.0));
  CHECK(expected_eta(two_children_then_one(), StoppingRule::independent(IndependentLaw::geometric(0.25))) ==
        doctest::Approx(8.0));
  CHECK(std::isinf(expected_eta(two_children_then_one(), StoppingRule::independent(IndependentLaw::power(1, 0.5)))));
  CHECK(expected_eta(Environment::constant_one(), StoppingRule::independent(IndependentLaw::power(1, 2))) ==
        doctest::Approx(M_PI * M_PI / 6).epsilon(1e-9));
}

TEST_CASE("fading-time weights") {
  RandomStream rng(8);
  const auto law = IncrementLaw::pareto(2.0);
  const auto one = fading_time_weights(two_children_then_one(), Boundary::linear(1.0), 1.0, law, 1000, rng);
  REQUIRE(one.weights.size() == 1);
  CHECK(one.weights[0] == 2.0);
  CHECK(one.weight_se[0] == 0.0);
  CHECK(one.bounded);
  CHECK(h_series(one, 50.0).value == doctest::Approx(2.0 * law.tail(51.0)));

  const Environment env({OffspringLaw::from_masses({0.5, 0.5})}, TailRule::geometric(0.5, 0.5));
  const auto s = fading_time_weights(env, Boundary::linear(1.0), 1.0, law, 20000, rng);
  const auto h = h_series(s, 20.0);
  CHECK(h.statistical_error > 0.0);
  CHECK(h.error_bound < 0.05 * h.value);
  // sum of weights is E eta_nu; compare with direct simulation
  double w = 0.0;
  for (double v : s.weights) w += v;
  double e = 0.0, e2 = 0.0;
  constexpr int runs = 20000;
  for (int r = 0; r < runs; ++r) {
    const auto tr = env.simulate_trajectory(rng);
    double eta = 0.0;
    for (std::int64_t n = 1; n <= tr.nu; ++n) eta += static_cast<double>(tr.population(n));
    e += eta;
    e2 += eta * eta;
  }
  const double mean = e / runs;
  const double se = std::sqrt((e2 / runs - mean * mean) / runs);
  CHECK(std::abs(w - mean) < 4 * std::sqrt(2.0) * se);
  CHECK_THROWS_AS(fading_time_weights(Environment({}, TailRule::constant(0.2)), Boundary::linear(1.0), 1.0, law, 10, rng),
                  NonFadingEnvironment);
}

TEST_CASE("tree-independent weights match simulation") {
  const Environment env({OffspringLaw::from_masses({0.5, 0.3, 0.2})}, TailRule::geometric(0.4, 0.5));
  const auto law = IndependentLaw::geometric(0.2);
  const double want = expected_eta(env, StoppingRule::independent(law));
  RandomStream rng(17);
  double e = 0.0, e2 = 0.0;
  constexpr int runs = 40000;
  for (int r = 0; r < runs; ++r) {
    const auto tr = env.simulate_trajectory(rng);
    const auto mu = law.sample(rng);
    double eta = 0.0;
    for (std::int64_t n = 1; n <= mu; ++n) eta += static_cast<double>(tr.population(n));
    e += eta;
    e2 += eta * eta;
  }
  const double mean = e / runs;
  const double se = std::sqrt((e2 / runs - mean * mean) / runs);
  CHECK(std::abs(mean - want) < 3 * se);
}
