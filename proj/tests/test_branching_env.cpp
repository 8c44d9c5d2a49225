#include <cmath>
#include <map>
#include <numbers>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "brwfade/branching_env.hpp"
#include "brwfade/errors.hpp"
#include "doctest.h"

using namespace brwfade;

namespace {

// zeta_0 = 2 a.s., zeta_n = 1 afterwards.
Environment example_two() { return Environment({OffspringLaw::from_masses({0.0, 1.0})}, TailRule::degenerate()); }

// q_n = 2^{-n-1}, branching to 2.
Environment halving() { return Environment({}, TailRule::geometric(0.5, 0.5)); }

// q_n = (n ln^2 n)^{-1} for n >= 3.
Environment log_squared() {
  return Environment(std::vector<OffspringLaw>(3), TailRule::power_log(1.0, 1.0, 2.0));
}

// Naive generation-by-generation simulation up to a horizon.
std::pair<std::int64_t, std::int64_t> naive(const Environment& env, std::int64_t horizon, RandomStream& rng) {
  std::int64_t z = 1;
  std::int64_t last = -1;
  for (std::int64_t n = 0; n < horizon; ++n) {
    const auto law = env.law(n);
    const auto& m = law.masses();
    std::int64_t next = 0;
    for (std::int64_t i = 0; i < z; ++i) {
      double u = rng.uniform01();
      int k = 1;
      while (k < static_cast<int>(m.size()) && u >= m[static_cast<std::size_t>(k - 1)]) {
        u -= m[static_cast<std::size_t>(k - 1)];
        ++k;
      }
      next += k;
    }
    if (next != z) last = n;
    z = next;
  }
  return {std::max<std::int64_t>(1, last + 1), z};
}

}  // namespace

TEST_CASE("offspring laws") {
  const auto law = OffspringLaw::from_masses({0.5, 0.3, 0.2});
  CHECK(law.mean() == doctest::Approx(1.7));
  CHECK(law.q() == doctest::Approx(0.5));
  CHECK(law.moment(2.0) == doctest::Approx(0.5 + 1.2 + 1.8));
  CHECK(law.sample_non_unit(0.0) == 2);
  CHECK(law.sample_non_unit(0.7) == 3);
  CHECK(OffspringLaw::degenerate().q() == 0.0);
  CHECK_THROWS_AS(OffspringLaw::from_masses({0.5, 0.4}), ParameterOutOfRange);
  CHECK_THROWS_AS(OffspringLaw::from_masses({1.2, -0.2}), ParameterOutOfRange);
  const std::vector<double> split{0.25, 0.75};
  const auto b = OffspringLaw::branching(0.4, split);
  CHECK(b.masses()[2] == doctest::Approx(0.3));
}

TEST_CASE("fading product") {
  CHECK(Environment::constant_one().fading_product() == 1.0);
  CHECK(example_two().fading_product() == doctest::Approx(2.0).epsilon(1e-15));

  long double direct = 1.0L;
  for (int n = 0; n < 200; ++n) direct *= 1.0L + std::ldexp(1.0L, -n - 1);
  CHECK(halving().fading_product() == doctest::Approx(static_cast<double>(direct)).epsilon(1e-12));

  // prod_{k >= 1} (1 + a / k^2) = sinh(pi sqrt a) / (pi sqrt a).
  const double a = 0.3;
  const Environment inverse_square({OffspringLaw::degenerate()}, TailRule::power_log(a, 2.0, 0.0));
  const double ra = std::numbers::pi * std::sqrt(a);
  CHECK(inverse_square.fading_product() == doctest::Approx(std::sinh(ra) / ra).epsilon(1e-12));

  CHECK(std::isinf(Environment({}, TailRule::constant(0.1)).fading_product()));
  CHECK(std::isinf(Environment(std::vector<OffspringLaw>(2), TailRule::power_log(0.5, 1.0, 1.0)).fading_product()));
  CHECK(std::isfinite(log_squared().fading_product()));
  CHECK_FALSE(Environment({}, TailRule::constant(0.1)).fading());

  // L_n non-decreasing, tends to L; E Z_n = L_{n-1}.
  const auto env = halving();
  double prev = 0.0;
  for (std::int64_t n = 0; n < 60; ++n) {
    CHECK(env.partial_product(n) >= prev);
    prev = env.partial_product(n);
  }
  CHECK(prev == doctest::Approx(env.fading_product()).epsilon(1e-14));
  CHECK(env.expected_population(0) == 1.0);
  CHECK(env.expected_population(1) == doctest::Approx(1.5));
  CHECK(env.partial_product(200000) == doctest::Approx(env.fading_product()).epsilon(1e-13));
}

TEST_CASE("d_n") {
  CHECK(Environment::constant_one().dn(0) == 0.0);
  CHECK(Environment::constant_one().dn(17) == 0.0);

  long double direct = 0.0L;
  for (int k = 0; k < 200; ++k) direct -= std::log1p(-std::ldexp(1.0L, -k - 1));
  CHECK(std::abs(halving().dn(0) - static_cast<double>(direct)) < 1e-12);

  // prod_{k >= 1} (1 - a / k^2) = sin(pi sqrt a) / (pi sqrt a).
  const double a = 0.3;
  const Environment inverse_square({OffspringLaw::degenerate()}, TailRule::power_log(a, 2.0, 0.0));
  const double ra = std::numbers::pi * std::sqrt(a);
  CHECK(std::abs(inverse_square.dn(1) + std::log(std::sin(ra) / ra)) < 1e-12);
  CHECK(std::abs(inverse_square.dn(0) - inverse_square.dn(1)) < 1e-15);

  // d_n - d_{n+1} = -ln(1 - q_n), also across the cached range and far out.
  for (const auto& env : {halving(), inverse_square, log_squared()}) {
    for (std::int64_t n : {0, 1, 2, 5, 4000, 4098, 4099, 4100, 100000, 10000000}) {
      CHECK(std::abs(env.dn(n) - env.dn(n + 1) + std::log1p(-env.q(n))) < 1e-13);
    }
    double prev = env.dn(0);
    for (std::int64_t n = 1; n < 10000; n += 7) {
      CHECK(env.dn(n) <= prev);
      prev = env.dn(n);
    }
  }
  CHECK(std::isinf(example_two().dn(0)));
  CHECK(example_two().dn(1) == 0.0);
  CHECK_THROWS_AS(Environment({}, TailRule::constant(0.1)).dn(3), DivergentQSeries);
}

TEST_CASE("fading-time tail bounds") {
  const auto one = Environment::constant_one().nu_tail_bounds(4);
  CHECK(one.first == 1.0);
  CHECK(one.second == 1.0);
  CHECK(example_two().nu_tail_bounds(1) == std::pair<double, double>{1.0, 1.0});
  CHECK(example_two().nu_tail_bounds(0) == std::pair<double, double>{0.0, 0.0});
  const auto env = halving();
  const auto [lo, hi] = env.nu_tail_bounds(5);
  CHECK(lo == doctest::Approx(std::exp(-env.fading_product() * env.dn(5))));
  CHECK(hi == doctest::Approx(std::exp(-env.dn(5))));
  CHECK(lo <= hi);
  CHECK_THROWS_AS(Environment({}, TailRule::constant(0.2)).nu_tail_bounds(2), DivergentQSeries);
}

TEST_CASE("moment criterion") {
  for (double s : {0.01, 0.5, 1.0, 3.0}) {
    CHECK(log_squared().moment_criterion(MomentFunction::power(s)) == Convergence::Diverges);
  }
  CHECK(log_squared().moment_criterion(MomentFunction::power(0.0)) == Convergence::Converges);
  CHECK(halving().moment_criterion(MomentFunction::exponential(0.69)) == Convergence::Converges);
  CHECK(halving().moment_criterion(MomentFunction::exponential(std::log(2.0))) == Convergence::Diverges);
  CHECK(halving().moment_criterion(MomentFunction::exponential(0.7)) == Convergence::Diverges);
  CHECK(halving().moment_criterion(MomentFunction::power(50.0)) == Convergence::Converges);
  CHECK(example_two().moment_criterion(MomentFunction::exponential(100.0)) == Convergence::Converges);
  CHECK(example_two().moment_criterion(MomentFunction::tabulated({1, 2, 3})) == Convergence::Converges);
  CHECK_THROWS_AS(halving().moment_criterion(MomentFunction::tabulated({1, 2, 3})), Inconclusive);
  const Environment cubic({OffspringLaw::degenerate()}, TailRule::power_log(0.5, 3.0, 0.0));
  CHECK(cubic.moment_criterion(MomentFunction::power(1.9)) == Convergence::Converges);
  CHECK(cubic.moment_criterion(MomentFunction::power(2.0)) == Convergence::Diverges);
}

TEST_CASE("Z moment bound") {
  CHECK(Environment::constant_one().z_moment_bound(2.0) == 1.0);
  CHECK(example_two().z_moment_bound(2.0) == doctest::Approx(4.0));
  // bounded offspring K = 3: prod (1 + (3^s - 1) q_n)
  const Environment env({}, TailRule::geometric(0.5, 0.5, {0.0, 1.0}));
  for (double s : {1.5, 2.0, 4.0}) {
    long double direct = 1.0L;
    for (int n = 0; n < 400; ++n) direct *= 1.0L + (std::pow(3.0L, s) - 1.0L) * std::ldexp(1.0L, -n - 1);
    CHECK(env.z_moment_bound(s) == doctest::Approx(static_cast<double>(direct)).epsilon(1e-12));
  }
  CHECK(std::isinf(Environment({}, TailRule::constant(0.1)).z_moment_bound(2.0)));
}

TEST_CASE("trajectories") {
  RandomStream rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto t = example_two().simulate_trajectory(rng);
    CHECK(t.nu == 1);
    CHECK(t.final_population == 2);
    CHECK(t.sizes() == std::vector<std::int64_t>{1, 2});
    const auto c = Environment::constant_one().simulate_trajectory(rng);
    CHECK(c.nu == 1);
    CHECK(c.final_population == 1);
  }
  const auto env = halving();
  for (int i = 0; i < 2000; ++i) {
    const auto t = env.simulate_trajectory(rng);
    const auto z = t.sizes();
    CHECK(z.front() == 1);
    CHECK(z.back() == t.final_population);
    for (std::size_t n = 1; n < z.size(); ++n) CHECK(z[n] >= z[n - 1]);
    if (t.nu > 1) CHECK(z[static_cast<std::size_t>(t.nu - 1)] < z.back());
  }
  CHECK_THROWS_AS(Environment({}, TailRule::constant(0.2)).simulate_trajectory(rng), NonFadingEnvironment);
}

TEST_CASE("empirical fading-time distribution inside the tail bounds") {
  const auto env = halving();
  constexpr int runs = 100000;
  RandomStream rng(2);
  std::vector<std::int64_t> nus(runs);
  for (auto& v : nus) v = env.simulate_skeleton(rng).nu;
  for (std::int64_t n = 1; n <= 12; ++n) {
    const double p = static_cast<double>(std::count_if(nus.begin(), nus.end(), [&](auto v) { return v <= n; })) / runs;
    const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / runs);
    const auto [lo, hi] = env.nu_tail_bounds(n);
    CAPTURE(n);
    CHECK(p >= lo - 3 * se);
    CHECK(p <= hi + 3 * se);
  }
}

TEST_CASE("empirical moments") {
  RandomStream rng(3);
  const auto e2 = empirical_moments(example_two(), 1000, rng);
  CHECK(e2.mean_nu == 1.0);
  CHECK(e2.mean_z == 2.0);
  CHECK(e2.mean_nu_z == 2.0);
  CHECK(e2.se_z == 0.0);
  const auto one = empirical_moments(Environment::constant_one(), 100, rng);
  CHECK(one.mean_nu == 1.0);
  CHECK(one.mean_z == 1.0);
  CHECK(one.mean_nu_z == 1.0);
  const auto env = halving();
  const auto m = empirical_moments(env, 200000, rng);
  CHECK(std::abs(m.mean_z - env.fading_product()) < 3 * m.se_z);
}

TEST_CASE("normalized population is a martingale") {
  const Environment env({OffspringLaw::from_masses({0.5, 0.3, 0.2})}, TailRule::geometric(0.6, 0.7, {0.5, 0.5}));
  constexpr int runs = 100000;
  RandomStream rng(4);
  std::vector<double> sum(16, 0.0), sum2(16, 0.0);
  for (int i = 0; i < runs; ++i) {
    const auto t = env.simulate_trajectory(rng);
    for (std::int64_t n = 0; n < 16; ++n) {
      const double w = static_cast<double>(t.population(n)) / env.expected_population(n);
      sum[static_cast<std::size_t>(n)] += w;
      sum2[static_cast<std::size_t>(n)] += w * w;
    }
  }
  for (std::size_t n = 0; n < 16; ++n) {
    const double mean = sum[n] / runs;
    const double se = std::sqrt((sum2[n] / runs - mean * mean) / runs);
    CAPTURE(n);
    CHECK(std::abs(mean - 1.0) <= 3 * se + 1e-15);
  }
}

TEST_CASE("skip-ahead agrees with naive simulation") {
  const Environment env({OffspringLaw::from_masses({0.5, 0.3, 0.2})}, TailRule::geometric(0.6, 0.8, {0.5, 0.5}));
  constexpr int runs = 40000;
  constexpr std::int64_t horizon = 50;
  std::map<std::pair<std::int64_t, std::int64_t>, std::pair<double, double>> counts;
  RandomStream a(5), b(6);
  for (int i = 0; i < runs; ++i) {
    const auto t = env.simulate_trajectory(a);
    counts[{std::min(t.nu, horizon), t.population(horizon)}].first += 1;
    counts[naive(env, horizon, b)].second += 1;
  }
  // pool sparse cells into one
  double chi2 = 0.0;
  int cells = 0;
  double pool_a = 0.0, pool_b = 0.0;
  for (const auto& [key, c] : counts) {
    if (c.first + c.second < 20) {
      pool_a += c.first;
      pool_b += c.second;
      continue;
    }
    chi2 += (c.first - c.second) * (c.first - c.second) / (c.first + c.second);
    ++cells;
  }
  if (pool_a + pool_b > 0) {
    chi2 += (pool_a - pool_b) * (pool_a - pool_b) / (pool_a + pool_b);
    ++cells;
  }
  REQUIRE(cells > 10);
  const boost::math::chi_squared dist(cells - 1);
  CHECK(chi2 < boost::math::quantile(dist, 0.99));
}

TEST_CASE("moment trends follow the criterion") {
  // converges: f(n) = e^{0.3 n} under halving
  {
    const auto env = halving();
    REQUIRE(env.moment_criterion(MomentFunction::exponential(0.3)) == Convergence::Converges);
    RandomStream rng(7);
    std::vector<double> means;
    double sum = 0.0;
    std::int64_t done = 0;
    for (std::int64_t target : {1000, 10000, 100000}) {
      for (; done < target; ++done) sum += std::exp(0.3 * static_cast<double>(env.simulate_skeleton(rng).nu));
      means.push_back(sum / static_cast<double>(done));
    }
    CHECK(std::abs(means[2] / means[1] - 1.0) < 0.05);
    CHECK(std::abs(means[1] / means[0] - 1.0) < 0.1);
  }
  // diverges: q_n = 0.5 n^-2, f(n) = n^1.5
  {
    const Environment env({OffspringLaw::degenerate()}, TailRule::power_log(0.5, 2.0, 0.0));
    REQUIRE(env.moment_criterion(MomentFunction::power(1.5)) == Convergence::Diverges);
    RandomStream rng(8);
    std::vector<double> means;
    double sum = 0.0;
    std::int64_t done = 0;
    for (std::int64_t target : {100, 1000, 10000, 100000}) {
      for (; done < target; ++done) sum += std::pow(static_cast<double>(env.simulate_skeleton(rng).nu), 1.5);
      means.push_back(sum / static_cast<double>(done));
    }
    for (std::size_t i = 1; i < means.size(); ++i) CHECK(means[i] > means[i - 1]);
  }
}

TEST_CASE("environment serialization") {
  const Environment env({OffspringLaw::from_masses({0.5, 0.3, 0.2})}, TailRule::geometric(0.6, 0.7, {0.5, 0.5}));
  const auto back = Environment::from_json(env.to_json());
  CHECK(back.to_json() == env.to_json());
  CHECK(back.fading_product() == env.fading_product());
  const auto j = nlohmann::json::parse(R"({"prefix": [{"q": 1.0}], "tail": {"rule": "degenerate"}})");
  CHECK(Environment::from_json(j).fading_product() == doctest::Approx(2.0));
  CHECK_THROWS_AS(Environment::from_json(nlohmann::json::parse(R"({"tail": {"rule": "zeta"}})")), ConfigError);
  CHECK_THROWS_AS(Environment({}, TailRule::geometric(1.5, 0.5)), ParameterOutOfRange);
}
