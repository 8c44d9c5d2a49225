#include "brwfade/harness.hpp"

#include <algorithm>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "brwfade/asymptotics.hpp"
#include "brwfade/errors.hpp"
#include "brwfade/thresholds.hpp"

namespace brwfade {

namespace th = thresholds;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();

// Sub-stream tags under the master seed.
constexpr std::uint64_t kWeightStream = 0x3E16;
constexpr std::uint64_t kEtaStream = 0xE7A;
constexpr std::uint64_t kBatteryStream = 0x7E3;
constexpr std::uint64_t kTrajectoryStream = 0xB0;
constexpr std::uint64_t kMartingaleStream = 0xB1;
constexpr std::uint64_t kIdentityStream = 0xE2;
constexpr std::uint64_t kHorizonStream = 0x5C;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string cell_text(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
  std::string s = std::get<std::string>(c);
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

Cell parse_cell(const std::string& s) {
  if (!s.empty() && s.find_first_not_of("-0123456789") == std::string::npos && s != "-") {
    try {
      return static_cast<std::int64_t>(std::stoll(s));
    } catch (const std::out_of_range&) {
    }
  }
  char* end = nullptr;
  const double d = std::strtod(s.c_str(), &end);
  if (!s.empty() && end == s.c_str() + s.size()) return d;
  return s;
}

nlohmann::json cell_json(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return *i;
  if (const auto* d = std::get_if<double>(&c)) {
    if (std::isfinite(*d)) return *d;
    return format_double(*d);
  }
  return std::get<std::string>(c);
}

Report make_report(std::string command, const ExperimentConfig& cfg) {
  Report r;
  r.command = std::move(command);
  r.config = cfg.to_json();
  r.seed = cfg.seed;
  return r;
}

void finalize(Report& r) { r.verdict = final_verdict(r); }

void outside(Report& r, const std::string& why) {
  r.within_hypotheses = false;
  r.notes.push_back("outside hypotheses: " + why);
}

template <class T>
T extra_or(const ExperimentConfig& cfg, const char* key, T fallback) {
  if (cfg.extra.contains(key)) return cfg.extra.at(key).get<T>();
  return fallback;
}

nlohmann::json extra_block(const ExperimentConfig& cfg, const char* key) {
  if (cfg.extra.contains(key) && cfg.extra.at(key).is_object()) return cfg.extra.at(key);
  return nlohmann::json::object();
}

// Family rule for the heavy-tail classes: the shifted Pareto (finite mean),
// lognormal and Weibull with shape < 1 families belong to L, S and S*, and so
// do their integrated tails; lattice and exponential laws belong to none.
bool subexponential_family(const IncrementLaw& law) {
  switch (law.family()) {
    case Family::ShiftedPareto: return law.centered();
    case Family::ShiftedLognormal: return true;
    case Family::ShiftedWeibull: return law.param_a() < 1.0;
    default: return false;
  }
}

bool is_linear(const Boundary& g, double c) {
  for (std::int64_t n = 1; n <= 1000; ++n) {
    if (std::abs(g(n) - c * static_cast<double>(n)) > 1e-12 * std::max(1.0, std::abs(c) * n)) return false;
  }
  return true;
}

bool light_tailed_stop(const StoppingRule& s) {
  if (s.bound()) return true;
  return s.kind == StopKind::Independent && s.law.kind() == IndependentLaw::Kind::Geometric;
}

void require_centered(const IncrementLaw& law) {
  if (!law.centered()) throw HypothesisViolation("the increment law has no finite mean");
}

// Weights E[Z_n 1(mu >= n)] for n <= n_max by simulation of the walk.
HSeriesSpec simulated_weights(const WalkEngine& engine, double c, std::int64_t n_max, std::int64_t runs,
                              std::uint64_t seed) {
  std::vector<double> s(static_cast<std::size_t>(n_max), 0.0), s2(s.size(), 0.0);
  for (std::int64_t i = 0; i < runs; ++i) {
    const auto w = engine.run(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    for (std::int64_t n = 1; n <= n_max && n <= w.mu && n < static_cast<std::int64_t>(w.fronts.size()); ++n) {
      const double z = static_cast<double>(w.fronts[static_cast<std::size_t>(n)].population);
      s[static_cast<std::size_t>(n - 1)] += z;
      s2[static_cast<std::size_t>(n - 1)] += z * z;
    }
  }
  HSeriesSpec spec;
  const double m = static_cast<double>(runs);
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double mean = s[k] / m;
    spec.weights.push_back(mean);
    spec.weight_se.push_back(std::sqrt(std::max(0.0, s2[k] / m - mean * mean) / std::max(1.0, m - 1.0)));
  }
  spec.bounded = true;
  spec.tail_weight_sup = 0.0;
  spec.g = engine.boundary();
  spec.c = c;
  spec.law = engine.law();
  return spec;
}

// E eta_mu: closed form where available, else simulated.
std::pair<double, double> eta_mean(const WalkEngine& engine, std::int64_t runs, std::uint64_t seed,
                                   std::string& how) {
  try {
    how = "analytic";
    return {expected_eta(engine.environment(), engine.stop()), 0.0};
  } catch (const InvalidArgument&) {
  }
  how = "simulated";
  double s = 0.0, s2 = 0.0;
  for (std::int64_t i = 0; i < runs; ++i) {
    const auto w = engine.run(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    if (w.horizon_hit) throw NotRealizedWithinCap("stopping time beyond the horizon cap while estimating E eta");
    const double e = static_cast<double>(w.eta());
    s += e;
    s2 += e * e;
  }
  const double m = static_cast<double>(runs);
  const double mean = s / m;
  return {mean, std::sqrt(std::max(0.0, s2 / m - mean * mean) / std::max(1.0, m - 1.0))};
}

// Table columns shared by the ratio commands.
const std::vector<std::string> kRatioColumns{"x",     "estimate", "se",       "ci_lo", "ci_hi",   "analytic",
                                             "ratio", "ratio_se", "residual", "mode",  "n_runs", "hits",
                                             "truncated"};

void append_ratio_rows(Table& t, const std::vector<RatioRow>& rows) {
  for (const auto& r : rows) {
    t.rows.push_back({r.x, r.est.estimate, r.est.se, r.est.ci_lo, r.est.ci_hi, r.analytic, r.ratio, r.ratio_se,
                      r.est.residual, std::string(estimator_name(r.est.kind)), r.est.n_runs, r.est.hits,
                      r.est.truncated});
  }
}

// Deviation trend of |ratio - 1| over a sequence with standard errors.
bool shrinking(const std::vector<double>& dev, const std::vector<double>& se, std::size_t first) {
  for (std::size_t i = std::max<std::size_t>(first, 1); i < dev.size(); ++i) {
    if (dev[i] > dev[i - 1] + th::kTrendNoiseSe * std::hypot(se[i], se[i - 1])) return false;
  }
  return true;
}

std::string ratio_trend_verdict(const Table& t) {
  const std::size_t n = t.rows.size();
  if (n == 0) return "fail";
  std::vector<double> dev, se;
  for (std::size_t i = 0; i < n; ++i) {
    dev.push_back(std::abs(t.num(i, "ratio") - 1.0));
    se.push_back(t.num(i, "ratio_se"));
  }
  const double last = t.num(n - 1, "ratio");
  if (!(last >= th::kRatioLo && last <= th::kRatioHi)) return "fail";
  const std::size_t first = n > static_cast<std::size_t>(th::kTrendPoints) ? n - th::kTrendPoints : 0;
  return shrinking(dev, se, first + 1) ? "pass" : "fail";
}

double fitted_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::string battery_verdict(const Table& t) {
  std::vector<double> xs, dev, se;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double x = t.num(i, "x");
    const double d = std::abs(t.num(i, "ratio") - 1.0);
    if (!std::isfinite(d)) return "fail";
    auto it = std::find(xs.begin(), xs.end(), x);
    if (it == xs.end()) {
      xs.push_back(x);
      dev.push_back(d);
      se.push_back(t.num(i, "ratio_se"));
    } else {
      const auto k = static_cast<std::size_t>(it - xs.begin());
      if (d > dev[k]) {
        dev[k] = d;
        se[k] = t.num(i, "ratio_se");
      }
    }
  }
  if (xs.empty()) return "fail";
  if (!(dev.back() < th::kBatteryMaxDeviation)) return "fail";
  return shrinking(dev, se, 1) ? "pass" : "fail";
}

std::string example2_verdict(const Table& t) {
  std::vector<double> sx, sy, mx, my;
  double exponent = kNaN;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto kind = t.str(i, "kind");
    if (kind == "series" || kind == "simulated") {
      exponent = t.num(i, "exponent");
      auto& xv = kind == "series" ? sx : mx;
      auto& yv = kind == "series" ? sy : my;
      xv.push_back(std::log(t.num(i, "x")));
      yv.push_back(std::log(t.num(i, "value")));
    } else if (kind == "identity") {
      if (!(t.num(i, "rel_err") <= th::kIdentityRelTol)) return "fail";
    }
  }
  if (sx.size() >= 2 && !(std::abs(fitted_slope(sx, sy) - exponent) <= th::kSeriesSlopeTol)) return "fail";
  if (mx.size() >= 2 && !(std::abs(fitted_slope(mx, my) - exponent) <= th::kSimulatedSlopeTol)) return "fail";
  return "pass";
}

std::string moments_verdict(const Table& t) {
  bool checked = false;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto kind = t.str(i, "kind");
    const double v = t.num(i, "value"), se = t.num(i, "se");
    if (kind == "nu_band") {
      checked = true;
      if (!(v >= t.num(i, "lo") - th::kBandSe * se && v <= t.num(i, "hi") + th::kBandSe * se)) return "fail";
    } else if (kind == "martingale") {
      checked = true;
      if (!(std::abs(v - 1.0) <= th::kMartingaleSe * se)) return "fail";
    }
  }
  return checked ? "pass" : "complete";
}

std::string supercritical_verdict(const Table& t) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.str(i, "law") != "covered") continue;
    if (t.num(i, "T") == 0.0 && (t.num(i, "nonfading") != 0.0 || t.num(i, "fading") != 0.0)) return "fail";
    if (!best || t.num(i, "T") > t.num(*best, "T")) best = i;
  }
  if (!best) return "fail";
  return t.num(*best, "nonfading") >= th::kSupercriticalFactor * t.num(*best, "fading") ? "pass" : "fail";
}

double solve_decreasing(const std::function<double(double)>& f, double target, double lo, double hi) {
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Z_n by direct generation-wise sampling, for n <= n_max.
std::vector<std::int64_t> population_path(const Environment& env, std::int64_t n_max, RandomStream& rng) {
  constexpr std::int64_t kCap = 10000000;
  std::vector<std::int64_t> z{1};
  for (std::int64_t n = 0; n < n_max; ++n) {
    const auto law = env.law(n);
    const double q = law.q();
    std::int64_t next = 0;
    for (std::int64_t i = 0; i < z.back(); ++i) {
      next += q > 0.0 && rng.uniform01() < q ? law.sample_non_unit(rng.uniform01()) : 1;
    }
    if (next > kCap) throw NotRealizedWithinCap("population beyond the martingale-check cap");
    z.push_back(next);
  }
  return z;
}

}  // namespace

// ---------------------------------------------------------------------------

double largest_class_constant(const Boundary& g, std::int64_t n_max) {
  double c = g(1);
  for (std::int64_t n = 1; n < n_max; ++n) c = std::min(c, g(n + 1) - g(n));
  return c;
}

double ExperimentConfig::c() const { return class_constant ? *class_constant : largest_class_constant(boundary); }

WalkEngine ExperimentConfig::engine() const { return WalkEngine(env, law, boundary, stop, run); }

McOptions ExperimentConfig::mc() const {
  McOptions o;
  o.workers = workers;
  return o;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    c.extra = j;
    if (j.contains("law")) c.law = IncrementLaw::from_json(j.at("law"));
    if (j.contains("environment")) c.env = Environment::from_json(j.at("environment"));
    if (j.contains("boundary")) c.boundary = Boundary::from_json(j.at("boundary"));
    if (j.contains("stop")) c.stop = StoppingRule::from_json(j.at("stop"));
    if (j.contains("class_constant")) c.class_constant = j.at("class_constant").get<double>();
    if (j.contains("x_grid")) c.x_grid = j.at("x_grid").get<std::vector<double>>();
    c.runs = j.value("runs", c.runs);
    if (j.contains("mode")) c.mode = estimator_from_name(j.at("mode").get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.run.horizon_cap = j.value("horizon_cap", c.run.horizon_cap);
    c.run.population_cap = j.value("population_cap", c.run.population_cap);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(e.what());
  }
  if (c.runs < 1) throw ConfigError("runs must be positive");
  if (c.workers < 1) throw ConfigError("workers must be positive");
  return c;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j = extra;
  j["law"] = law.to_json();
  j["environment"] = env.to_json();
  j["boundary"] = boundary.to_json();
  j["stop"] = stop.to_json();
  if (class_constant) j["class_constant"] = *class_constant;
  j["x_grid"] = x_grid;
  j["runs"] = runs;
  j["mode"] = std::string(estimator_name(mode));
  j["seed"] = seed;
  j.erase("workers");  // execution setting; results do not depend on it
  j["horizon_cap"] = run.horizon_cap;
  j["population_cap"] = run.population_cap;
  return j;
}

std::size_t Table::index(std::string_view column) const {
  const auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) throw ConfigError("table has no column '" + std::string(column) + "'");
  return static_cast<std::size_t>(it - columns.begin());
}

double Table::num(std::size_t row, std::string_view column) const {
  const Cell& c = rows.at(row).at(index(column));
  if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&c)) return *d;
  return kNaN;
}

std::string Table::str(std::size_t row, std::string_view column) const {
  const Cell& c = rows.at(row).at(index(column));
  if (const auto* s = std::get_if<std::string>(&c)) return *s;
  return cell_text(c);
}

std::string table_verdict(std::string_view command, const Table& table) {
  if (command == "verify-theorem1") {
    const auto v = ratio_trend_verdict(table);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const double res = table.num(i, "residual"), est = table.num(i, "estimate");
      if (res > 0.0 && !(res < th::kResidualFraction * est)) return "fail";
    }
    return v;
  }
  if (command == "verify-theorem2") return ratio_trend_verdict(table);
  if (command == "verify-theorem3") return battery_verdict(table);
  if (command == "example2") return example2_verdict(table);
  if (command == "moments") return moments_verdict(table);
  if (command == "supercritical-demo") return supercritical_verdict(table);
  return "complete";
}

std::string final_verdict(const Report& r) {
  if (!r.within_hypotheses) return "outside hypotheses";
  return table_verdict(r.command, r.table);
}

int exit_code(const Report& r) {
  const auto v = r.verdict.empty() ? final_verdict(r) : r.verdict;
  if (v == "outside hypotheses") return 2;
  if (v == "fail") return 3;
  return 0;
}

void write_csv(std::ostream& os, const Report& r) {
  os << "# command: " << r.command << '\n';
  os << "# config: " << r.config.dump() << '\n';
  os << "# seed: " << r.seed << '\n';
  os << "# thresholds: " << th::as_json().dump() << '\n';
  os << "# hypotheses: " << (r.within_hypotheses ? "within" : "outside") << '\n';
  for (const auto& n : r.notes) os << "# note: " << n << '\n';
  os << "# verdict: " << (r.verdict.empty() ? final_verdict(r) : r.verdict) << '\n';
  for (std::size_t i = 0; i < r.table.columns.size(); ++i) os << (i ? "," : "") << r.table.columns[i];
  os << '\n';
  for (const auto& row : r.table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << cell_text(row[i]);
    os << '\n';
  }
}

void write_json(std::ostream& os, const Report& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.table.rows) {
    nlohmann::json o = nlohmann::json::object();
    for (std::size_t i = 0; i < row.size(); ++i) o[r.table.columns[i]] = cell_json(row[i]);
    rows.push_back(o);
  }
  nlohmann::json j{{"command", r.command},
                   {"config", r.config},
                   {"seed", r.seed},
                   {"thresholds", th::as_json()},
                   {"hypotheses", r.within_hypotheses ? "within" : "outside"},
                   {"notes", r.notes},
                   {"verdict", r.verdict.empty() ? final_verdict(r) : r.verdict},
                   {"columns", r.table.columns},
                   {"rows", rows}};
  os << j.dump(2) << '\n';
}

Report read_csv(std::istream& is) {
  Report r;
  std::string line;
  bool header = false;
  const auto field = [&](const std::string& prefix) -> std::optional<std::string> {
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
    return std::nullopt;
  };
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (auto v = field("# command: ")) r.command = *v;
      else if (auto v2 = field("# config: ")) r.config = nlohmann::json::parse(*v2);
      else if (auto v3 = field("# seed: ")) r.seed = std::stoull(*v3);
      else if (auto v4 = field("# hypotheses: ")) r.within_hypotheses = *v4 == "within";
      else if (auto v5 = field("# note: ")) r.notes.push_back(*v5);
      else if (auto v6 = field("# verdict: ")) r.verdict = *v6;
      continue;
    }
    std::vector<std::string> parts;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) parts.push_back(item);
    if (line.back() == ',') parts.emplace_back();
    if (!header) {
      r.table.columns = parts;
      header = true;
      continue;
    }
    if (parts.size() != r.table.columns.size()) throw ConfigError("malformed CSV row: " + line);
    std::vector<Cell> row;
    for (const auto& p : parts) row.push_back(parse_cell(p));
    r.table.rows.push_back(std::move(row));
  }
  if (r.command.empty()) throw ConfigError("CSV report without a command line");
  return r;
}

// ---------------------------------------------------------------------------

Report cmd_simulate(const ExperimentConfig& cfg) {
  Report r = make_report("simulate", cfg);
  require_centered(cfg.law);
  const auto engine = cfg.engine();
  std::optional<HSeriesSpec> h;
  try {
    if (cfg.c() > 0.0) h = independent_weights(cfg.env, cfg.stop, cfg.boundary, cfg.c(), cfg.law);
  } catch (const Error&) {
    r.notes.push_back("no closed-form H-series for this stopping rule");
  }
  r.table.columns = {"x", "estimate", "se", "ci_lo", "ci_hi", "mode", "n_runs", "hits", "residual", "truncated",
                     "h_series"};
  for (double x : cfg.x_grid) {
    McOptions o = cfg.mc();
    const double hv = h ? h_series(*h, x).value : kNaN;
    if (h) o.expected_probability = hv;
    const auto e = estimate_crossing(engine, x, cfg.runs, cfg.mode, cfg.seed, o);
    r.table.rows.push_back({x, e.estimate, e.se, e.ci_lo, e.ci_hi, std::string(estimator_name(e.kind)), e.n_runs,
                            e.hits, e.residual, e.truncated, hv});
  }
  if (cfg.extra.contains("tree_out")) {
    RunOptions ro = cfg.run;
    ro.keep_tree = true;
    const WalkEngine te(cfg.env, cfg.law, cfg.boundary, cfg.stop, ro);
    std::ofstream f(cfg.extra.at("tree_out").get<std::string>());
    if (!f) throw ConfigError("cannot open tree_out");
    write_node_csv(f, te.run(cfg.seed));
    r.notes.push_back("tree of replication 0 written to tree_out");
  }
  finalize(r);
  return r;
}

Report cmd_verify_theorem1(const ExperimentConfig& cfg) {
  Report r = make_report("verify-theorem1", cfg);
  const double c = cfg.c();
  if (!(c > 0.0)) throw HypothesisViolation("the boundary must grow at a positive linear rate (c > 0)");
  if (!cfg.env.fading()) throw HypothesisViolation("the environment is not fading");
  require_centered(cfg.law);
  if (!subexponential_family(cfg.law)) outside(r, "integrated tail not subexponential for this family");
  if (!is_linear(cfg.boundary, c)) outside(r, "the boundary is not linear c n");
  if (cfg.stop.kind != StopKind::Infinite) r.notes.push_back("stopping rule replaced by the infinite horizon");
  const WalkEngine engine(cfg.env, cfg.law, cfg.boundary, StoppingRule::infinite(), cfg.run);
  const double l = cfg.env.fading_product();
  r.notes.push_back("L = " + format_double(l) + ", c = " + format_double(c));
  const auto rows = ratio_study(
      engine, cfg.x_grid, cfg.runs, cfg.seed, [&](double x) { return veraverbeke_limit(l, c, cfg.law, x); },
      cfg.mc(), cfg.mode);
  r.table.columns = kRatioColumns;
  append_ratio_rows(r.table, rows);
  finalize(r);
  return r;
}

Report cmd_verify_theorem2(const ExperimentConfig& cfg) {
  Report r = make_report("verify-theorem2", cfg);
  require_centered(cfg.law);
  const double c = cfg.c();
  const auto& stop = cfg.stop;
  if (stop.kind == StopKind::Infinite) throw HypothesisViolation("the stopping time must be finite");
  if (stop.kind == StopKind::FadingTime && !cfg.env.fading()) {
    throw HypothesisViolation("the fading time needs a fading environment");
  }
  if (!(c > 0.0)) {
    if (!light_tailed_stop(stop) || stop.kind == StopKind::FirstPassageBelow) {
      throw HypothesisViolation("c <= 0 needs an independent stopping time with a geometric or bounded law");
    }
    r.notes.push_back("c <= 0: light-tailed stopping time path");
  }
  if (!subexponential_family(cfg.law)) outside(r, "increment law not strongly subexponential for this family");
  if (!stop.satisfies_hm()) outside(r, "the stopping rule is not independent of the increments");

  // Certificate for E(mu Z_mu) < infinity.
  bool certificate = false;
  std::string how;
  if (stop.bound()) {
    certificate = true;
    how = "bounded stopping time";
  } else if (stop.kind == StopKind::Independent) {
    certificate = cfg.env.fading() && std::isfinite(stop.law.mean());
    how = "independent stopping time with finite mean in a fading environment";
  } else if (stop.kind == StopKind::FadingTime) {
    certificate = cfg.env.moment_criterion(MomentFunction::power(2.0)) == Convergence::Converges &&
                  std::isfinite(cfg.env.z_moment_bound(2.0));
    how = "E nu^2 and E Z^2 finite";
  }
  if (!certificate) outside(r, "no certificate for a finite E(mu Z_mu)");
  else r.notes.push_back("E(mu Z_mu) finite: " + how);

  const auto engine = cfg.engine();
  const auto [eta, eta_se] = eta_mean(engine, cfg.runs, derive_seed(cfg.seed, {kEtaStream}), how);
  r.notes.push_back("E eta = " + format_double(eta) + " (" + how + ", se " + format_double(eta_se) + ")");
  const auto rows = ratio_study(
      engine, cfg.x_grid, cfg.runs, cfg.seed, [&](double x) { return theorem2_limit(eta, cfg.law, x); }, cfg.mc(),
      cfg.mode);
  r.table.columns = kRatioColumns;
  append_ratio_rows(r.table, rows);
  if (eta_se > 0.0) {
    // fold the uncertainty of E eta into the ratio standard error
    const auto se_col = r.table.index("ratio_se"), ratio_col = r.table.index("ratio");
    for (auto& row : r.table.rows) {
      const double ratio = std::get<double>(row[ratio_col]);
      row[se_col] = std::hypot(std::get<double>(row[se_col]), ratio * eta_se / eta);
    }
  }
  finalize(r);
  return r;
}

namespace {

struct BatteryPair {
  std::string name;
  StoppingRule stop;
  Boundary g;
  double c;
};

// Exact P(R_mu^g > x) for lattice laws with mu independent and bounded.
std::optional<double> exact_battery_probability(const Environment& env, const IncrementLaw& law,
                                                const BatteryPair& p, std::int64_t n_cap, double x) {
  if (law.continuous()) return std::nullopt;
  if (p.stop.kind != StopKind::Fixed && p.stop.kind != StopKind::Independent) return std::nullopt;
  double edges = 0.0, z = 1.0;
  for (std::int64_t n = 1; n <= n_cap; ++n) {
    z *= env.law(n - 1).max_offspring();
    edges += z;
  }
  if (edges * std::log(static_cast<double>(law.atoms().size())) > std::log(2e6)) return std::nullopt;
  if (p.stop.kind == StopKind::Fixed) return exact_crossing_probability(env, law, p.g, p.stop.n, x);
  double total = 0.0;
  for (std::int64_t m = 1; m <= n_cap; ++m) {
    const double pm = m < n_cap ? p.stop.law.survival(m) - p.stop.law.survival(m + 1) : p.stop.law.survival(m);
    if (pm > 0.0) total += pm * exact_crossing_probability(env, law, p.g, m, x);
  }
  return total;
}

}  // namespace

Report cmd_verify_theorem3(const ExperimentConfig& cfg) {
  Report r = make_report("verify-theorem3", cfg);
  const auto n_cap = extra_or<std::int64_t>(cfg, "N", 3);
  if (n_cap < 1) throw HypothesisViolation("the stopping times must be bounded by a finite N >= 1");
  require_centered(cfg.law);
  if (!subexponential_family(cfg.law)) outside(r, "increment law not subexponential for this family");
  const auto weight_runs = extra_or<std::int64_t>(cfg, "weight_runs", 20000);

  std::vector<double> ramp;
  for (std::int64_t n = 1; n <= n_cap; ++n) ramp.push_back(static_cast<double>(n) - (n % 2 ? 0.5 : 1.5));
  std::vector<double> uniform(static_cast<std::size_t>(n_cap + 1), 1.0 / static_cast<double>(n_cap));
  uniform[0] = 0.0;

  std::vector<BatteryPair> battery{
      {"fixed/zero", StoppingRule::fixed(n_cap), Boundary::linear(0.0), 0.0},
      {"geometric/linear", StoppingRule::independent(IndependentLaw::geometric(0.5)).capped(n_cap),
       Boundary::linear(1.0), 1.0},
      {"uniform/table", StoppingRule::independent(IndependentLaw::table(uniform)), Boundary::table(ramp), 0.0},
      {"first-passage/linear", StoppingRule::first_passage_below(1.0).capped(n_cap), Boundary::linear(0.5), 0.5},
  };
  if (validate_class(cfg.boundary, 0.0, 1000).pass) {
    const double c = std::max(0.0, cfg.c());
    battery.push_back({"fixed/config", StoppingRule::fixed(n_cap), cfg.boundary, c});
    if (cfg.stop.kind != StopKind::Infinite && (cfg.stop.kind != StopKind::FadingTime || cfg.env.fading())) {
      battery.push_back({"config/config", cfg.stop.capped(n_cap), cfg.boundary, c});
    }
  } else {
    r.notes.push_back("config boundary not in G_0; only the built-in pairs are run");
  }

  r.table.columns = {"x", "pair", "estimate", "se", "analytic", "analytic_err", "ratio", "ratio_se", "mode"};
  for (std::size_t k = 0; k < battery.size(); ++k) {
    const auto& p = battery[k];
    const WalkEngine engine(cfg.env, cfg.law, p.g, p.stop, cfg.run);
    HSeriesSpec spec;
    const bool independent = p.stop.kind == StopKind::Fixed || p.stop.kind == StopKind::Independent;
    if (independent) {
      spec = independent_weights(cfg.env, p.stop, p.g, p.c, cfg.law);
    } else {
      spec = simulated_weights(engine, p.c, n_cap, weight_runs, derive_seed(cfg.seed, {kWeightStream, k}));
    }
    const std::uint64_t seed = derive_seed(cfg.seed, {kBatteryStream, k});
    for (double x : cfg.x_grid) {
      const auto h = h_series(spec, x);
      double est = 0.0, se = 0.0;
      std::string mode;
      if (const auto exact = exact_battery_probability(cfg.env, cfg.law, p, n_cap, x)) {
        est = *exact;
        mode = "exact";
      } else {
        McOptions o = cfg.mc();
        o.expected_probability = h.value;
        const auto e = estimate_crossing(engine, x, cfg.runs, cfg.mode, seed, o);
        est = e.estimate;
        se = e.se;
        mode = estimator_name(e.kind);
      }
      const double ratio = est / h.value;
      const double ratio_se = std::hypot(se / h.value, ratio * h.statistical_error / h.value);
      r.table.rows.push_back({x, p.name, est, se, h.value, h.error_bound + h.statistical_error, ratio, ratio_se, mode});
    }
  }
  finalize(r);
  return r;
}

Report cmd_moments(const ExperimentConfig& cfg) {
  Report r = make_report("moments", cfg);
  if (!cfg.env.fading()) throw HypothesisViolation("moment diagnostics need a fading environment");
  const auto m = extra_block(cfg, "moments");
  const auto s_grid = m.value("s", std::vector<double>{1.0, 2.0});
  const auto lambdas = m.value("lambda", std::vector<double>{0.25 * std::log(2.0), 0.5 * std::log(2.0), std::log(2.0)});
  const auto z_grid = m.value("z_s", std::vector<double>{2.0, 3.0});
  const auto band_n = m.value("band_n", std::int64_t{10});
  const auto trajectories = m.value("trajectories", cfg.runs);
  const auto mart_n = m.value("martingale_n", std::vector<std::int64_t>{1, 2, 4, 8, 16});
  const auto& env = cfg.env;

  r.table.columns = {"kind", "label", "n", "value", "se", "lo", "hi", "verdict"};
  const auto criterion = [&](const std::string& label, const MomentFunction& f) {
    std::string v;
    try {
      v = env.moment_criterion(f) == Convergence::Converges ? "converges" : "diverges";
    } catch (const Inconclusive&) {
      v = "inconclusive";
    }
    r.table.rows.push_back({std::string("nu_moment"), label, std::int64_t{0}, kNaN, kNaN, kNaN, kNaN, v});
  };
  for (double s : s_grid) criterion("n^" + format_double(s), MomentFunction::power(s));
  for (double l : lambdas) criterion("exp(" + format_double(l) + " n)", MomentFunction::exponential(l));
  for (double s : z_grid) {
    const double b = env.z_moment_bound(s);
    r.table.rows.push_back({std::string("z_moment"), "Z^" + format_double(s), std::int64_t{0}, b, kNaN, kNaN, kNaN,
                            std::string(std::isfinite(b) ? "finite" : "infinite")});
  }

  // Fading time of independent trajectories; a skeleton whose next branching
  // lies beyond the reachable generations counts as censored (nu > any n here).
  std::vector<std::int64_t> nus;
  std::int64_t censored = 0;
  double s[3] = {0, 0, 0}, s2[3] = {0, 0, 0};
  std::vector<double> lam_sum(lambdas.size(), 0.0), lam_sq(lambdas.size(), 0.0);
  for (std::int64_t i = 0; i < trajectories; ++i) {
    RandomStream rng(derive_seed(cfg.seed, {kTrajectoryStream, static_cast<std::uint64_t>(i)}));
    try {
      const auto sk = env.simulate_skeleton(rng);
      nus.push_back(sk.nu);
      const double v[3] = {static_cast<double>(sk.nu), static_cast<double>(sk.final_population),
                           static_cast<double>(sk.nu) * static_cast<double>(sk.final_population)};
      for (int k = 0; k < 3; ++k) {
        s[k] += v[k];
        s2[k] += v[k] * v[k];
      }
      for (std::size_t k = 0; k < lambdas.size(); ++k) {
        const double e = std::exp(lambdas[k] * static_cast<double>(sk.nu));
        lam_sum[k] += e;
        lam_sq[k] += e * e;
      }
    } catch (const NotRealizedWithinCap&) {
      ++censored;
    }
  }
  const double total = static_cast<double>(trajectories);
  for (std::int64_t n = 1; n <= band_n; ++n) {
    const double p =
        static_cast<double>(std::count_if(nus.begin(), nus.end(), [&](std::int64_t v) { return v <= n; })) / total;
    const auto [lo, hi] = env.nu_tail_bounds(n);
    const double se = std::sqrt(p * (1.0 - p) / total);
    const bool inside = p >= lo - th::kBandSe * se && p <= hi + th::kBandSe * se;
    r.table.rows.push_back({std::string("nu_band"), std::string("P(nu <= n)"), n, p, se, lo, hi,
                            std::string(inside ? "inside" : "outside")});
  }
  if (censored > 0) {
    r.notes.push_back(std::to_string(censored) + " trajectories censored (fading time beyond 2^62)");
  }
  const auto mean_se = [&](double sum, double sq, double n) {
    const double mean = sum / n;
    return std::pair{mean, std::sqrt(std::max(0.0, sq / n - mean * mean) / std::max(1.0, n - 1.0))};
  };
  const double ok = static_cast<double>(nus.size());
  if (ok >= 2) {
    const char* labels[3] = {"E nu", "E Z", "E nu Z"};
    for (int k = 0; k < 3; ++k) {
      const auto [mean, se] = mean_se(s[k], s2[k], ok);
      r.table.rows.push_back({std::string("empirical"), std::string(labels[k]), std::int64_t{0}, mean, se, kNaN, kNaN,
                              std::string(censored > 0 ? "censored" : "uncensored")});
    }
    for (std::size_t k = 0; k < lambdas.size(); ++k) {
      const auto [mean, se] = mean_se(lam_sum[k], lam_sq[k], ok);
      r.table.rows.push_back({std::string("empirical"), "E exp(" + format_double(lambdas[k]) + " nu)",
                              std::int64_t{0}, mean, se, kNaN, kNaN,
                              std::string(censored > 0 ? "censored" : "uncensored")});
    }
  }

  // Z_n / E Z_n has mean one.
  if (!mart_n.empty()) {
    const std::int64_t n_max = *std::max_element(mart_n.begin(), mart_n.end());
    std::vector<double> ez{1.0};
    for (std::int64_t n = 0; n < n_max; ++n) ez.push_back(ez.back() * env.mean(n));
    std::vector<double> ms(mart_n.size(), 0.0), mq(mart_n.size(), 0.0);
    for (std::int64_t i = 0; i < trajectories; ++i) {
      RandomStream rng(derive_seed(cfg.seed, {kMartingaleStream, static_cast<std::uint64_t>(i)}));
      const auto z = population_path(env, n_max, rng);
      for (std::size_t k = 0; k < mart_n.size(); ++k) {
        const auto n = static_cast<std::size_t>(mart_n[k]);
        const double w = static_cast<double>(z[n]) / ez[n];
        ms[k] += w;
        mq[k] += w * w;
      }
    }
    for (std::size_t k = 0; k < mart_n.size(); ++k) {
      const auto [mean, se] = mean_se(ms[k], mq[k], total);
      const bool good = std::abs(mean - 1.0) <= th::kMartingaleSe * se;
      r.table.rows.push_back({std::string("martingale"), std::string("Z_n / E Z_n"), mart_n[k], mean, se, 1.0, 1.0,
                              std::string(good ? "consistent" : "inconsistent")});
    }
  }
  finalize(r);
  return r;
}

Report cmd_example2(const ExperimentConfig& cfg) {
  Report r = make_report("example2", cfg);
  const auto e = extra_block(cfg, "example2");
  if (cfg.law.family() != Family::ShiftedPareto || !cfg.law.centered()) {
    throw HypothesisViolation("the power-law example needs a shifted Pareto law with finite mean");
  }
  const double beta = cfg.law.param_a();
  const double k1 = std::pow(cfg.law.param_b(), beta);
  const double alpha = e.value("alpha", 0.5);
  const double c = e.value("c", 1.0);
  const double k2 = e.value("K2", 1.0);
  const auto points = e.value("points", 20);
  auto series_x = e.value("series_x", std::vector<double>{1e3, 3e3, 1e4, 3e4, 1e5, 3e5, 1e6});
  const auto sim_x = e.value("simulated_x", std::vector<double>{});
  if (e.contains("beta") && e.at("beta").get<double>() != beta) {
    throw ConfigError("example2.beta differs from the law's tail index");
  }

  const auto pc = example2_constant(alpha, beta, c, k1, k2);
  const double ez = cfg.env.fading_product();
  const auto rule = StoppingRule::independent(IndependentLaw::power(k2, alpha));
  const auto spec = independent_weights(cfg.env, rule, Boundary::linear(c), c, cfg.law);
  r.notes.push_back("P(mu >= n) = min(1, K2 n^-alpha); overall constant E Z * C = " + format_double(ez * pc.constant));

  r.table.columns = {"kind", "x", "alpha", "beta", "c", "value", "reference", "rel_err", "exponent"};
  for (double x : series_x) {
    const auto h = h_series(spec, x);
    r.table.rows.push_back({std::string("series"), x, alpha, beta, c, h.value,
                            ez * pc.constant * std::pow(x, pc.exponent), h.error_bound / h.value, pc.exponent});
  }

  // integral_0^inf t^-a (1 + c t)^-b dt against the Beta closed form
  RandomStream rng(derive_seed(cfg.seed, {kIdentityStream}));
  boost::math::quadrature::tanh_sinh<double> near;
  boost::math::quadrature::exp_sinh<double> far;
  for (int i = 0; i < points; ++i) {
    const double a = 0.1 + 0.8 * rng.uniform01();
    const double b = 1.2 + 2.8 * rng.uniform01();
    const double cc = 0.5 + 1.5 * rng.uniform01();
    const auto f = [&](double t) { return std::pow(t, -a) * std::pow(1.0 + cc * t, -b); };
    const double q = near.integrate(f, 0.0, 1.0) + far.integrate(f, 1.0, kInf);
    const double closed = example2_constant(a, b, cc, 1.0, 1.0).constant;
    r.table.rows.push_back({std::string("identity"), 1.0, a, b, cc, closed, q, std::abs(closed - q) / q,
                            1.0 - a - b});
  }

  if (!sim_x.empty()) {
    const WalkEngine engine(cfg.env, cfg.law, Boundary::linear(c), rule.capped(cfg.run.horizon_cap), cfg.run);
    for (double x : sim_x) {
      McOptions o = cfg.mc();
      o.expected_probability = h_series(spec, x).value;
      const auto est = estimate_crossing(engine, x, cfg.runs, cfg.mode, cfg.seed, o);
      r.table.rows.push_back({std::string("simulated"), x, alpha, beta, c, est.estimate, est.se,
                              est.se / est.estimate, pc.exponent});
    }
  }
  finalize(r);
  return r;
}

Report cmd_supercritical_demo(const ExperimentConfig& cfg) {
  Report r = make_report("supercritical-demo", cfg);
  require_centered(cfg.law);
  const auto& rule = cfg.env.tail_rule();
  if (cfg.env.fading() || rule.kind != TailRuleKind::Constant || !(rule.a > 0.0)) {
    outside(r, "the environment must have a constant branching probability q > 0");
  }
  if (!cfg.law.long_tailed()) outside(r, "the increment law is not heavy-tailed");
  const double c = cfg.c();
  if (!(c > 0.0)) throw HypothesisViolation("the boundary must grow at a positive linear rate");

  const Environment fading = cfg.extra.contains("fading_environment")
                                 ? Environment::from_json(cfg.extra.at("fading_environment"))
                                 : Environment({}, TailRule::geometric(rule.a, 0.5, rule.split));
  if (!fading.fading()) throw HypothesisViolation("the contrast environment is not fading");
  const auto horizons = extra_or<std::vector<std::int64_t>>(cfg, "horizons", {0, 25, 50, 100, 200});
  const IncrementLaw control = cfg.extra.contains("control_law") ? IncrementLaw::from_json(cfg.extra.at("control_law"))
                                                                 : IncrementLaw::exponential(1.0);
  const double plateau = extra_or(cfg, "plateau", 1e-2);
  const double lf = fading.fading_product();
  const double x = cfg.extra.contains("x")
                       ? cfg.extra.at("x").get<double>()
                       : solve_decreasing([&](double t) { return veraverbeke_limit(lf, c, cfg.law, t); }, plateau,
                                          0.0, 1e12);
  r.notes.push_back("x = " + format_double(x) + " where the fading asymptote equals " + format_double(plateau));

  r.table.columns = {"T", "law", "x", "nonfading", "nonfading_se", "fading", "fading_se", "truncated"};
  McOptions o = cfg.mc();
  std::int64_t t_max = 0;
  for (std::int64_t t : horizons) {
    t_max = std::max(t_max, t);
    const std::uint64_t seed = derive_seed(cfg.seed, {kHorizonStream, static_cast<std::uint64_t>(t)});
    const WalkEngine nf(cfg.env, cfg.law, cfg.boundary, StoppingRule::fixed(t), cfg.run);
    const WalkEngine fa(fading, cfg.law, cfg.boundary, StoppingRule::fixed(t), cfg.run);
    const auto a = estimate_crossing(nf, x, cfg.runs, EstimatorKind::Crude, seed, o);
    const auto b = estimate_crossing(fa, x, cfg.runs, EstimatorKind::Crude, seed, o);
    r.table.rows.push_back({t, std::string("covered"), x, a.estimate, a.se, b.estimate, b.se, a.truncated});
  }
  if (!horizons.empty()) {
    // The light-tailed row runs with a smaller population cap: its population
    // grows without crossing, and a capped run counts as not crossed.
    RunOptions ro = cfg.run;
    ro.population_cap = std::min<std::int64_t>(ro.population_cap, std::int64_t{1} << 16);
    const std::int64_t runs = std::min<std::int64_t>(cfg.runs, 1000);
    const std::uint64_t seed = derive_seed(cfg.seed, {kHorizonStream, 0xC0});
    const WalkEngine nf(cfg.env, control, cfg.boundary, StoppingRule::fixed(t_max), ro);
    const WalkEngine fa(fading, control, cfg.boundary, StoppingRule::fixed(t_max), ro);
    const auto a = estimate_crossing(nf, x, runs, EstimatorKind::Crude, seed, o);
    const auto b = estimate_crossing(fa, x, runs, EstimatorKind::Crude, seed, o);
    r.table.rows.push_back({t_max, std::string("not covered by proposition"), x, a.estimate, a.se, b.estimate, b.se,
                            a.truncated});
  }
  finalize(r);
  return r;
}

Report cmd_class_check(const ExperimentConfig& cfg) {
  Report r = make_report("class-check", cfg);
  r.table.columns = {"class", "x", "ratio", "limit", "verdict"};
  for (auto cls : {TailClass::Long, TailClass::Subexponential, TailClass::StrongSubexponential}) {
    try {
      const auto rep = check_class_membership(cfg.law, cls, cfg.x_grid);
      for (const auto& row : rep.rows) {
        r.table.rows.push_back({std::string(tail_class_name(cls)), row.x, row.ratio, row.limit,
                                std::string(verdict_name(rep.verdict))});
      }
      if (!rep.note.empty()) r.notes.push_back(std::string(tail_class_name(cls)) + ": " + rep.note);
    } catch (const Error& e) {
      r.table.rows.push_back({std::string(tail_class_name(cls)), kNaN, kNaN, kNaN, std::string("not applicable")});
      r.notes.push_back(std::string(tail_class_name(cls)) + ": " + e.what());
    }
  }
  finalize(r);
  return r;
}

Report run_command(std::string_view command, const ExperimentConfig& cfg) {
  if (command == "simulate") return cmd_simulate(cfg);
  if (command == "verify-theorem1") return cmd_verify_theorem1(cfg);
  if (command == "verify-theorem2") return cmd_verify_theorem2(cfg);
  if (command == "verify-theorem3") return cmd_verify_theorem3(cfg);
  if (command == "moments") return cmd_moments(cfg);
  if (command == "example2") return cmd_example2(cfg);
  if (command == "supercritical-demo") return cmd_supercritical_demo(cfg);
  if (command == "class-check") return cmd_class_check(cfg);
  throw ConfigError("unknown command '" + std::string(command) + "'");
}

}  // namespace brwfade
