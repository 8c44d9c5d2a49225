#include <cmath>
#include <vector>

#include "brwfade/boundaries_stopping.hpp"
#include "brwfade/brw_engine.hpp"
#include "brwfade/errors.hpp"
#include "doctest.h"

using namespace brwfade;

TEST_CASE("boundary evaluation") {
  CHECK(Boundary::linear(1.0)(7) == 7.0);
  for (std::int64_t n = 0; n < 20; ++n) CHECK(Boundary::linear(0.0)(n) == 0.0);
  CHECK(Boundary::linear(2.5)(0) == 0.0);
  const auto t = Boundary::table({1, 3, 6}, 4.0);
  CHECK(t(0) == 0.0);
  CHECK(t(2) == 3.0);
  CHECK(t(3) == 6.0);
  CHECK(t(5) == 14.0);
  CHECK(t.asymptotic_slope() == 4.0);
  const auto a = Boundary::affine_table(0.5, 1.0, {0.0, 2.0});
  CHECK(a(1) == 1.5);
  CHECK(a(2) == 4.0);
  CHECK(a(4) == 5.0);
  const auto s = Boundary::linear(1.0).shifted(3.0);
  CHECK(s(0) == 0.0);
  CHECK(s(4) == 7.0);
}

TEST_CASE("boundary class membership") {
  CHECK(validate_class(Boundary::linear(1.0), 1.0, 1000).pass);
  const auto fail = validate_class(Boundary::linear(1.0), 1.1, 1000);
  CHECK_FALSE(fail.pass);
  CHECK(fail.first_violation == 1);
  CHECK(validate_class(Boundary::table({1, 3, 6}), 1.0, 3).pass);
  std::vector<double> ramp;
  for (int i = 0; i < 50; ++i) ramp.push_back(i);
  CHECK(validate_class(Boundary::table(ramp, 1.0), 0.0, 200).pass);
  const auto dip = validate_class(Boundary::table({1, 3, 2}), 0.0, 3);
  CHECK_FALSE(dip.pass);
  CHECK(dip.first_violation == 3);
  CHECK_FALSE(validate_class(Boundary::linear(-1.0), -2.0, 5).pass);  // negative values
}

TEST_CASE("boundary serialization") {
  for (const auto& b : {Boundary::linear(1.5), Boundary::table({1, 2, 4}, 2.0), Boundary::affine_table(1, 2, {0, 1})}) {
    const auto back = Boundary::from_json(b.to_json());
    for (std::int64_t n = 0; n < 10; ++n) CHECK(back(n) == b(n));
  }
  CHECK_THROWS_AS(Boundary::from_json(nlohmann::json{{"kind", "spline"}}), ConfigError);
}

TEST_CASE("stopping times known in advance") {
  RandomStream rng(1);
  for (int i = 0; i < 100; ++i) CHECK(realize_stop(StoppingRule::fixed(5), 1, rng) == 5);

  const double p = 0.3;
  const auto geo = StoppingRule::independent(IndependentLaw::geometric(p));
  constexpr int n = 200000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = static_cast<double>(*realize_stop(geo, 1, rng));
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  CHECK(std::abs(mean - 1.0 / p) < 3 * se);
  CHECK(IndependentLaw::geometric(p).mean() == doctest::Approx(1.0 / p));

  const auto power = IndependentLaw::power(2.0, 0.5);
  std::vector<int> at_least(9, 0);
  for (int i = 0; i < n; ++i) {
    const auto m = power.sample(rng);
    for (std::int64_t k = 1; k <= 8; ++k) at_least[static_cast<std::size_t>(k)] += m >= k;
  }
  for (std::int64_t k = 1; k <= 8; ++k) {
    const double pk = power.survival(k);
    CHECK(pk == doctest::Approx(std::min(1.0, 2.0 / std::sqrt(static_cast<double>(k)))));
    const double emp = at_least[static_cast<std::size_t>(k)] / static_cast<double>(n);
    CHECK(std::abs(emp - pk) <= 4 * std::sqrt(pk * (1 - pk) / n) + 1e-12);
  }
  CHECK(std::isinf(power.mean()));
  // sum_{n >= 1} n^-2 = pi^2 / 6
  CHECK(IndependentLaw::power(1.0, 2.0).mean() == doctest::Approx(M_PI * M_PI / 6.0).epsilon(1e-10));

  const auto table = IndependentLaw::table({0.25, 0.25, 0.5});
  CHECK(table.survival(1) == 0.75);
  CHECK(table.survival(3) == 0.0);
  CHECK(table.mean() == doctest::Approx(1.25));
  CHECK(table.bound() == 2);

  CHECK(realize_stop(StoppingRule::fading_time(), 7, rng) == 7);
  CHECK(realize_stop(StoppingRule::infinite(), 7, rng) == kInfiniteTime);
  CHECK_FALSE(realize_stop(StoppingRule::first_passage_below(1.0), 7, rng).has_value());
  CHECK(realize_stop(StoppingRule::fixed(9).capped(4), 1, rng) == 4);
  CHECK(StoppingRule::fixed(9).capped(4).bound() == 4);
}

TEST_CASE("fading time on the two-child environment") {
  const Environment env({OffspringLaw::from_masses({0.0, 1.0})}, TailRule::degenerate());
  const WalkEngine engine(env, IncrementLaw::pareto(2.0), Boundary::linear(1.0), StoppingRule::fading_time());
  for (std::uint64_t s = 0; s < 200; ++s) CHECK(engine.run(s).mu == 1);
}

TEST_CASE("first passage from the front") {
  const auto rule = StoppingRule::first_passage_below(1.0);
  CHECK(first_passage(rule, {0.5, -0.5, -1.5, -3.0}) == 3);
  CHECK_FALSE(first_passage(rule, {0.5, -0.5}).has_value());
  CHECK(first_passage(StoppingRule::first_passage_below(1.0, 2), {0.5, -0.5, -2.0}) == 2);
}

TEST_CASE("declared classes") {
  auto r = StoppingRule::first_passage_below(0.5);
  r.declared = StopClass::HM;
  CHECK_THROWS_AS(r.check_declared(), ConfigError);
  r.declared = StopClass::MO;
  CHECK_NOTHROW(r.check_declared());
  auto f = StoppingRule::fading_time();
  f.declared = StopClass::MO;
  CHECK_THROWS_AS(f.check_declared(), ConfigError);
  f.declared = StopClass::HM;
  CHECK_NOTHROW(f.check_declared());
  auto fixed = StoppingRule::fixed(3);
  for (auto c : {StopClass::HM, StopClass::MO, StopClass::Both}) {
    fixed.declared = c;
    CHECK_NOTHROW(fixed.check_declared());
  }
  CHECK(StoppingRule::fixed(2).satisfies_hm());
  CHECK_FALSE(StoppingRule::first_passage_below(1).satisfies_hm());

  const auto j = nlohmann::json::parse(R"({"kind": "first_passage_below", "level": 2, "class": "HM"})");
  CHECK_THROWS_AS(StoppingRule::from_json(j), ConfigError);
  const auto ok = StoppingRule::from_json(nlohmann::json::parse(
      R"({"kind": "independent", "law": {"law": "power", "k2": 1.5, "alpha": 0.5}, "cap": 40, "class": "HM"})"));
  CHECK(ok.kind == StopKind::Independent);
  CHECK(ok.cap == 40);
  const auto back = StoppingRule::from_json(ok.to_json());
  CHECK(back.to_json() == ok.to_json());
}

TEST_CASE("independent rules are functions of the stopping stream alone") {
  const Environment env({OffspringLaw::from_masses({0.5, 0.5})}, TailRule::geometric(0.5, 0.5));
  for (const auto& rule : {StoppingRule::fixed(4), StoppingRule::independent(IndependentLaw::geometric(0.2)),
                           StoppingRule::fading_time()}) {
    const WalkEngine base(env, IncrementLaw::pareto(2.0), Boundary::linear(1.0), rule);
    for (std::uint64_t s = 0; s < 200; ++s) {
      const auto mu = base.run(s).mu;
      RunOptions o;
      o.resample_after = 0;
      o.resample_salt = s + 17;
      const WalkEngine other(env, IncrementLaw::pareto(2.0), Boundary::linear(1.0), rule, o);
      CHECK(other.run(s).mu == mu);
    }
  }
}

TEST_CASE("first passage does not look at the future") {
  const Environment env({OffspringLaw::from_masses({0.5, 0.5})}, TailRule::geometric(0.4, 0.6));
  const auto law = IncrementLaw::lognormal(0.0, 1.0);
  const auto rule = StoppingRule::first_passage_below(2.0);
  constexpr std::int64_t horizon = 40;
  const auto fronts_of = [&](const WalkRealization& w) {
    std::vector<double> r;
    for (const auto& f : w.fronts)
      if (f.n >= 1) r.push_back(f.rightmost);
    return r;
  };
  int stopped = 0;
  for (std::uint64_t s = 0; s < 500; ++s) {
    const WalkEngine base(env, law, Boundary::linear(0.5), StoppingRule::fixed(horizon));
    const auto r = fronts_of(base.run(s));
    const auto mu = first_passage(rule, r);
    if (!mu) continue;
    ++stopped;
    // the streamed rule agrees with the offline one
    CHECK(WalkEngine(env, law, Boundary::linear(0.5), rule).run(s).mu == *mu);
    for (std::uint64_t salt = 1; salt <= 3; ++salt) {
      RunOptions o;
      o.resample_after = *mu;
      o.resample_salt = salt;
      const auto alt = fronts_of(WalkEngine(env, law, Boundary::linear(0.5), StoppingRule::fixed(horizon), o).run(s));
      for (std::int64_t k = 0; k < *mu; ++k) CHECK(alt[static_cast<std::size_t>(k)] == r[static_cast<std::size_t>(k)]);
      if (*mu < horizon) CHECK(alt[static_cast<std::size_t>(*mu)] != r[static_cast<std::size_t>(*mu)]);
      CHECK(first_passage(rule, alt) == mu);
    }
  }
  CHECK(stopped > 400);
}

TEST_CASE("truncated stopping is monotone in the cap") {
  const Environment env({OffspringLaw::from_masses({0.4, 0.6})}, TailRule::geometric(0.5, 0.5));
  const auto law = IncrementLaw::pareto(2.5);
  const auto rule = StoppingRule::independent(IndependentLaw::geometric(0.25));
  constexpr int runs = 20000;
  const double x = 3.0;
  std::vector<int> hits(7, 0);
  for (std::uint64_t s = 0; s < runs; ++s) {
    double prev = -1.0;
    for (std::int64_t cap = 1; cap <= 6; ++cap) {
      const WalkEngine e(env, law, Boundary::linear(0.5), rule.capped(cap));
      const double r = e.run(s).rightmost_over_stop();
      CHECK(r >= prev);
      prev = r;
      hits[static_cast<std::size_t>(cap)] += r > x;
    }
  }
  for (std::size_t cap = 2; cap <= 6; ++cap) CHECK(hits[cap] >= hits[cap - 1]);
}
