#include "brwfade/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <string>
#include <thread>
#include <tuple>

#include "brwfade/errors.hpp"

namespace brwfade {

namespace {

constexpr double kZ = 1.96;
constexpr std::int64_t kWilsonBelow = 30;
constexpr double kCalibrationSe = 3.0;
constexpr std::int64_t kCalibrationHits = 100;
constexpr std::uint64_t kCalibrationStream = 0xCA11B;
constexpr std::uint64_t kPilotStream = 0x9110;

bool big_jump_applicable(const WalkEngine& e) {
  return e.law().continuous() && e.stop().determined_in_advance() && e.stop().kind != StopKind::Infinite;
}

void finish(EstimateResult& r, const SampleMoments& m) {
  const auto n = static_cast<double>(m.n);
  r.n_runs = m.n;
  r.hits = m.hits;
  r.residual = m.n > 0 ? m.residual / n : 0.0;
  r.truncated = m.truncated;
  r.estimate = m.n > 0 ? m.sum / n : 0.0;
  const double var = m.n > 1 ? std::max(0.0, (m.sum_sq - n * r.estimate * r.estimate) / (n - 1.0)) : 0.0;
  r.se = m.n > 0 ? std::sqrt(var / n) : 0.0;
  if (r.kind == EstimatorKind::Crude && m.residual == 0.0 && m.hits < kWilsonBelow) {
    std::tie(r.ci_lo, r.ci_hi) = wilson_interval(m.hits, m.n);
    r.wilson = true;
  } else {
    r.ci_lo = r.estimate - kZ * r.se;
    r.ci_hi = r.estimate + kZ * r.se;
  }
}

SampleMoments crude_moments(const WalkEngine& e, double x, std::int64_t n, std::uint64_t seed, const McOptions& o) {
  return replicate(n, seed, o, [&](std::uint64_t s) {
    const auto c = e.run_crossing(s, x);
    return Sample{(c.crossed ? 1.0 : 0.0) + c.residual, c.crossed, c.residual, c.truncated};
  });
}

SampleMoments big_jump_moments(const WalkEngine& e, double x, std::int64_t n, std::uint64_t seed,
                               const McOptions& o) {
  return replicate(n, seed, o, [&](std::uint64_t s) { return Sample{e.big_jump_sample(s, x), false, 0.0, false}; });
}

}  // namespace

std::string_view estimator_name(EstimatorKind k) noexcept {
  switch (k) {
    case EstimatorKind::Crude: return "crude";
    case EstimatorKind::BigJump: return "big-jump";
    case EstimatorKind::Auto: return "auto";
  }
  return "?";
}

EstimatorKind estimator_from_name(std::string_view s) {
  if (s == "crude") return EstimatorKind::Crude;
  if (s == "big-jump") return EstimatorKind::BigJump;
  if (s == "auto") return EstimatorKind::Auto;
  throw ConfigError("unknown estimator '" + std::string(s) + "'");
}

void SampleMoments::merge(const SampleMoments& o) {
  sum += o.sum;
  sum_sq += o.sum_sq;
  n += o.n;
  hits += o.hits;
  residual += o.residual;
  truncated += o.truncated;
}

SampleMoments replicate(std::int64_t n_runs, std::uint64_t master_seed, const McOptions& options,
                        const std::function<Sample(std::uint64_t)>& sample) {
  if (n_runs < 0) throw InvalidArgument("negative replication count");
  const std::int64_t bs = std::max<std::int64_t>(1, options.batch_size);
  const std::int64_t batches = (n_runs + bs - 1) / bs;
  std::vector<SampleMoments> part(static_cast<std::size_t>(batches));
  std::vector<std::exception_ptr> failure(static_cast<std::size_t>(batches));
  std::atomic<std::int64_t> next{0};
  const auto work = [&] {
    for (;;) {
      const std::int64_t b = next.fetch_add(1);
      if (b >= batches) return;
      auto& m = part[static_cast<std::size_t>(b)];
      try {
        for (std::int64_t i = b * bs; i < std::min(n_runs, (b + 1) * bs); ++i) {
          const Sample s = sample(derive_seed(master_seed, {static_cast<std::uint64_t>(i)}));
          m.sum += s.value;
          m.sum_sq += s.value * s.value;
          m.n += 1;
          m.hits += s.hit ? 1 : 0;
          m.residual += s.residual;
          m.truncated += s.truncated ? 1 : 0;
        }
      } catch (...) {
        failure[static_cast<std::size_t>(b)] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<int>(std::min<std::int64_t>(std::max(options.workers, 1), batches));
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  SampleMoments total;
  for (std::size_t b = 0; b < part.size(); ++b) {
    if (failure[b]) std::rethrow_exception(failure[b]);
    total.merge(part[b]);
  }
  return total;
}

std::pair<double, double> wilson_interval(std::int64_t k, std::int64_t n) {
  if (n <= 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = kZ * kZ;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = kZ * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

EstimateResult estimate_crossing(const WalkEngine& engine, double x, std::int64_t n_runs, EstimatorKind mode,
                                 std::uint64_t master_seed, const McOptions& options) {
  EstimateResult r;
  r.master_seed = master_seed;
  if (mode == EstimatorKind::Auto) {
    double p = 0.0;
    if (options.expected_probability) {
      p = *options.expected_probability;
    } else {
      const std::int64_t pilot = std::min<std::int64_t>(n_runs, 10000);
      const auto m = crude_moments(engine, x, pilot, derive_seed(master_seed, {kPilotStream}), options);
      p = pilot > 0 ? m.sum / static_cast<double>(pilot) : 0.0;
    }
    mode = (static_cast<double>(n_runs) * p >= options.auto_min_hits || !big_jump_applicable(engine))
               ? EstimatorKind::Crude
               : EstimatorKind::BigJump;
  }
  r.kind = mode;
  if (mode == EstimatorKind::Crude) {
    finish(r, crude_moments(engine, x, n_runs, master_seed, options));
    return r;
  }

  if (!big_jump_applicable(engine)) {
    throw InvalidArgument("the big-jump estimator needs a continuous law and a finite rule fixed in advance");
  }
  if (options.calibrate && x >= 0.0) {
    // Step down from x until the crude estimator sees enough hits.
    const std::uint64_t cal_seed = derive_seed(master_seed, {kCalibrationStream});
    const std::int64_t cal_runs = options.calibration_runs;
    double xc = x;
    SampleMoments crude;
    for (int step = 0; step < 64; ++step) {
      crude = crude_moments(engine, xc, cal_runs, cal_seed, options);
      if (crude.hits >= kCalibrationHits || xc == 0.0) break;
      xc = xc < 0.5 ? 0.0 : 0.5 * xc;
    }
    EstimateResult a, b;
    a.kind = EstimatorKind::Crude;
    b.kind = EstimatorKind::BigJump;
    finish(a, crude);
    finish(b, big_jump_moments(engine, xc, cal_runs, derive_seed(cal_seed, {1}), options));
    if (std::abs(a.estimate - b.estimate) > kCalibrationSe * std::hypot(a.se, b.se)) {
      throw CalibrationFailed("crude " + std::to_string(a.estimate) + " vs big-jump " + std::to_string(b.estimate) +
                              " at x = " + std::to_string(xc));
    }
    r.calibration_x = xc;
  }
  finish(r, big_jump_moments(engine, x, n_runs, master_seed, options));
  return r;
}

std::vector<RatioRow> ratio_study(const WalkEngine& engine, const std::vector<double>& x_grid, std::int64_t n_runs,
                                  std::uint64_t master_seed, const std::function<double(double)>& analytic,
                                  const McOptions& options, EstimatorKind mode) {
  for (std::size_t i = 1; i < x_grid.size(); ++i) {
    if (!(x_grid[i] > x_grid[i - 1])) throw InvalidArgument("x grid must be increasing");
  }
  std::vector<RatioRow> rows;
  for (double x : x_grid) {
    RatioRow row;
    row.x = x;
    row.analytic = analytic(x);
    McOptions o = options;
    o.expected_probability = row.analytic;
    row.est = estimate_crossing(engine, x, n_runs, mode, master_seed, o);
    row.ratio = row.est.estimate / row.analytic;
    row.ratio_se = row.est.se / row.analytic;
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json EstimateResult::to_json() const {
  nlohmann::json j{{"estimate", estimate}, {"se", se},         {"ci_lo", ci_lo},       {"ci_hi", ci_hi},
                   {"n_runs", n_runs},     {"mode", std::string(estimator_name(kind))}, {"seed", master_seed},
                   {"hits", hits},         {"residual", residual}, {"truncated", truncated}, {"wilson", wilson}};
  if (calibration_x) j["calibration_x"] = *calibration_x;
  return j;
}

}  // namespace brwfade
