#include "brwfade/branching_env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "brwfade/errors.hpp"
#include "brwfade/quadrature.hpp"

namespace brwfade {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::int64_t kMaxGeneration = std::int64_t{1} << 62;
constexpr std::int64_t kMaxPopulation = std::int64_t{1} << 62;
constexpr std::int64_t kDirectTerms = 1024;
constexpr std::size_t kDTable = 4096;

std::vector<double> normalized(std::vector<double> w, const char* what) {
  if (w.empty()) throw ParameterOutOfRange(std::string(what) + " is empty");
  double total = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterOutOfRange(std::string(what) + " has a negative mass");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ParameterOutOfRange(std::string(what) + " does not sum to 1");
  for (double& v : w) v /= total;
  return w;
}

bool power_log_divergent(double p, double b) { return p < 1.0 || (p == 1.0 && b <= 1.0); }

// Geometric gap >= 1 between successive individuals with zeta != 1.
double geometric_gap(double q, RandomStream& rng) {
  if (q >= 1.0) return 1.0;
  return 1.0 + std::floor(std::log(rng.uniform_open01()) / std::log1p(-q));
}

// Index in {0, ..., z - 1} of the first individual with zeta != 1, given at least one.
std::int64_t first_branching_index(double q, std::int64_t z, RandomStream& rng) {
  if (q >= 1.0) return 0;
  const double l = std::log1p(-q);
  const double any = -std::expm1(static_cast<double>(z) * l);
  const double j = std::floor(std::log1p(-rng.uniform01() * any) / l);
  return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::min(j, 9e18)), 0, z - 1);
}

}  // namespace

OffspringLaw OffspringLaw::from_masses(std::vector<double> masses) {
  OffspringLaw law;
  law.masses_ = normalized(std::move(masses), "offspring masses");
  while (law.masses_.size() > 1 && law.masses_.back() == 0.0) law.masses_.pop_back();
  return law;
}

OffspringLaw OffspringLaw::branching(double q, std::span<const double> split) {
  if (!(q >= 0.0 && q <= 1.0)) throw ParameterOutOfRange("q must lie in [0, 1]");
  const auto w = normalized({split.begin(), split.end()}, "split");
  std::vector<double> m(w.size() + 1);
  m[0] = 1.0 - q;
  for (std::size_t i = 0; i < w.size(); ++i) m[i + 1] = q * w[i];
  return from_masses(std::move(m));
}

double OffspringLaw::mean() const noexcept {
  double s = 0.0;
  for (std::size_t k = 0; k < masses_.size(); ++k) s += static_cast<double>(k + 1) * masses_[k];
  return s;
}

double OffspringLaw::moment(double s) const {
  double total = 0.0;
  for (std::size_t k = 0; k < masses_.size(); ++k) total += std::pow(static_cast<double>(k + 1), s) * masses_[k];
  return total;
}

int OffspringLaw::sample_non_unit(double u) const {
  const double qq = q();
  if (!(qq > 0.0)) return 1;
  double acc = 0.0;
  const double target = u * qq;
  for (std::size_t k = 1; k < masses_.size(); ++k) {
    acc += masses_[k];
    if (target < acc) return static_cast<int>(k + 1);
  }
  return max_offspring();
}

nlohmann::json OffspringLaw::to_json() const { return masses_; }

std::string_view tail_rule_name(TailRuleKind k) noexcept {
  switch (k) {
    case TailRuleKind::Degenerate: return "degenerate";
    case TailRuleKind::Geometric: return "geometric";
    case TailRuleKind::PowerLog: return "power_log";
    case TailRuleKind::Constant: return "constant";
  }
  return "?";
}

TailRule TailRule::geometric(double a, double r, std::vector<double> split) {
  return {TailRuleKind::Geometric, a, r, 2.0, 0.0, std::move(split)};
}

TailRule TailRule::power_log(double a, double p, double b, std::vector<double> split) {
  return {TailRuleKind::PowerLog, a, 0.5, p, b, std::move(split)};
}

TailRule TailRule::constant(double q, std::vector<double> split) {
  return {TailRuleKind::Constant, q, 0.5, 2.0, 0.0, std::move(split)};
}

std::int64_t Skeleton::population(std::int64_t n) const {
  std::int64_t z = 1;
  for (const auto& e : events) {
    if (e.generation >= n) break;
    for (const auto& b : e.branchings) z += b.offspring - 1;
  }
  return z;
}

std::int64_t BranchingTrajectory::population(std::int64_t n) const {
  auto it = std::upper_bound(change_points.begin(), change_points.end(), n,
                             [](std::int64_t v, const auto& cp) { return v < cp.first; });
  return it == change_points.begin() ? 1 : std::prev(it)->second;
}

std::vector<std::int64_t> BranchingTrajectory::sizes() const {
  if (nu > (std::int64_t{1} << 26)) throw InvalidArgument("fading time too large to materialize");
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(nu + 1));
  std::size_t c = 0;
  std::int64_t z = 1;
  for (std::int64_t n = 0; n <= nu; ++n) {
    while (c < change_points.size() && change_points[c].first <= n) z = change_points[c++].second;
    out.push_back(z);
  }
  return out;
}

Environment::Environment() : Environment({}, TailRule::degenerate()) {}

Environment::Environment(std::vector<OffspringLaw> prefix, TailRule tail)
    : prefix_(std::move(prefix)), tail_(std::move(tail)) {
  tail_.split = normalized(tail_.split, "split");
  double acc = 0.0;
  for (double w : tail_.split) split_cumulative_.push_back(acc += w);
  const double n0 = static_cast<double>(prefix_.size());
  switch (tail_.kind) {
    case TailRuleKind::Degenerate: break;
    case TailRuleKind::Geometric:
      if (!(tail_.a >= 0.0) || !(tail_.r > 0.0 && tail_.r < 1.0)) {
        throw ParameterOutOfRange("geometric rule needs a >= 0 and 0 < r < 1");
      }
      if (!(tail_.a * std::pow(tail_.r, n0) < 1.0)) throw ParameterOutOfRange("geometric rule gives q >= 1");
      break;
    case TailRuleKind::PowerLog:
      if (!(tail_.a >= 0.0) || !(tail_.p >= 0.0) || !(tail_.b >= 0.0)) {
        throw ParameterOutOfRange("power-log rule needs a, p, b >= 0");
      }
      if (prefix_.size() < (tail_.b > 0.0 ? 2u : 1u)) {
        throw ParameterOutOfRange("power-log rule needs a prefix covering n < 2 (n < 1 when b = 0)");
      }
      if (!(tail_q(prefix_length()) < 1.0)) throw ParameterOutOfRange("power-log rule gives q >= 1");
      break;
    case TailRuleKind::Constant:
      if (!(tail_.a >= 0.0 && tail_.a < 1.0)) throw ParameterOutOfRange("constant rule needs 0 <= q < 1");
      break;
  }
  if (fading() && !eventually_degenerate()) {
    // d_{n0 + i} for i < kDTable, summed backwards from the analytic tail.
    d_table_.resize(kDTable);
    const std::int64_t n0i = prefix_length();
    double d = -tail_log_sum(-1.0, n0i + static_cast<std::int64_t>(kDTable));
    for (std::size_t i = kDTable; i-- > 0;) {
      d -= std::log1p(-tail_q(n0i + static_cast<std::int64_t>(i)));
      d_table_[i] = d;
    }
  }
}

double Environment::tail_q(std::int64_t n) const {
  switch (tail_.kind) {
    case TailRuleKind::Degenerate: return 0.0;
    case TailRuleKind::Geometric: return tail_.a * std::pow(tail_.r, static_cast<double>(n));
    case TailRuleKind::PowerLog: {
      const double x = static_cast<double>(n);
      double v = tail_.a * std::pow(x, -tail_.p);
      if (tail_.b != 0.0) v *= std::pow(std::log(x), -tail_.b);
      return v;
    }
    case TailRuleKind::Constant: return tail_.a;
  }
  return 0.0;
}

OffspringLaw Environment::law(std::int64_t n) const {
  if (n < 0) throw InvalidArgument("negative generation");
  if (n < prefix_length()) return prefix_[static_cast<std::size_t>(n)];
  return OffspringLaw::branching(tail_q(n), tail_.split);
}

double Environment::q(std::int64_t n) const {
  if (n < 0) throw InvalidArgument("negative generation");
  if (n < prefix_length()) return prefix_[static_cast<std::size_t>(n)].q();
  return tail_q(n);
}

double Environment::mean(std::int64_t n) const {
  if (n < 0) throw InvalidArgument("negative generation");
  if (n < prefix_length()) return prefix_[static_cast<std::size_t>(n)].mean();
  return 1.0 + tail_q(n) * split_coefficient(1.0);
}

bool Environment::eventually_degenerate() const noexcept {
  return tail_.kind == TailRuleKind::Degenerate || tail_.a == 0.0;
}

bool Environment::fading() const noexcept {
  if (eventually_degenerate()) return true;
  switch (tail_.kind) {
    case TailRuleKind::Geometric: return true;
    case TailRuleKind::PowerLog: return !power_log_divergent(tail_.p, tail_.b);
    default: return false;
  }
}

std::int64_t Environment::last_branching_generation() const noexcept {
  for (std::int64_t n = prefix_length(); n-- > 0;) {
    if (prefix_[static_cast<std::size_t>(n)].q() > 0.0) return n;
  }
  return -1;
}

double Environment::split_coefficient(double s) const {
  double total = 0.0;
  for (std::size_t i = 0; i < tail_.split.size(); ++i) total += tail_.split[i] * std::pow(static_cast<double>(i + 2), s);
  return total - 1.0;
}

double Environment::tail_log_sum(double c, std::int64_t n) const {
  if (c == 0.0 || eventually_degenerate()) return 0.0;
  const double sign = c > 0.0 ? kInf : -kInf;
  switch (tail_.kind) {
    case TailRuleKind::Degenerate: return 0.0;
    case TailRuleKind::Constant: return sign;
    case TailRuleKind::Geometric: {
      double sum = 0.0;
      std::int64_t k = n;
      double u = c * tail_q(k);
      while (std::abs(u) >= 0.25) {
        sum += std::log1p(u);
        u = c * tail_q(++k);
      }
      // sum_{i >= 0} ln(1 + u r^i) = sum_j (-1)^{j+1} u^j / (j (1 - r^j))
      double uj = 1.0;
      double rj = 1.0;
      for (int j = 1; j < 200; ++j) {
        uj *= u;
        rj *= tail_.r;
        const double term = (j % 2 ? 1.0 : -1.0) * uj / (j * (1.0 - rj));
        sum += term;
        if (std::abs(term) < 1e-18 * std::max(1.0, std::abs(sum))) break;
      }
      return sum;
    }
    case TailRuleKind::PowerLog: {
      if (power_log_divergent(tail_.p, tail_.b)) return sign;
      double sum = 0.0;
      const std::int64_t end = n + kDirectTerms;
      for (std::int64_t k = n; k < end; ++k) sum += std::log1p(c * tail_q(k));
      // Euler-Maclaurin from `end`: integral + f/2 - f'/12.
      const double x = static_cast<double>(end);
      const double qx = tail_q(end);
      const double fx = std::log1p(c * qx);
      const double dq = qx * (-tail_.p / x - tail_.b / (x * std::log(x)));
      const double dfx = c * dq / (1.0 + c * qx);
      const double a = tail_.a;
      const double p = tail_.p;
      const double b = tail_.b;
      const auto g = [&](double u) {
        // e^u ln(1 + c q(e^u)) with q(e^u) = a e^{-pu} u^{-b}
        const double v = c * a * std::exp(-p * u) * std::pow(u, -b);
        const double ratio = v == 0.0 ? 1.0 : std::log1p(v) / v;
        return ratio * c * a * std::pow(u, -b) * std::exp((1.0 - p) * u);
      };
      const double integral = quad::half_infinite(g, std::log(x), 1e-13).value;
      return sum + integral + 0.5 * fx - dfx / 12.0;
    }
  }
  return 0.0;
}

double Environment::z_moment_bound(double s) const {
  double total = 0.0;
  for (const auto& law : prefix_) total += std::log(law.moment(s));
  total += tail_log_sum(split_coefficient(s), prefix_length());
  return std::exp(total);
}

double Environment::fading_product() const { return z_moment_bound(1.0); }

double Environment::partial_product(std::int64_t n) const {
  if (n < 0) return 1.0;
  double total = 0.0;
  const std::int64_t n0 = prefix_length();
  for (std::int64_t k = 0; k < std::min(n + 1, n0); ++k) total += std::log(prefix_[static_cast<std::size_t>(k)].mean());
  if (n >= n0 && !eventually_degenerate()) {
    const double c = split_coefficient(1.0);
    if (n - n0 < 100000 || !fading()) {
      if (tail_.kind == TailRuleKind::Constant) {
        total += static_cast<double>(n + 1 - n0) * std::log1p(c * tail_.a);
      } else {
        for (std::int64_t k = n0; k <= n; ++k) total += std::log1p(c * tail_q(k));
      }
    } else {
      total += tail_log_sum(c, n0) - tail_log_sum(c, n + 1);
    }
  }
  return std::exp(total);
}

double Environment::expected_population(std::int64_t n) const { return partial_product(n - 1); }

double Environment::dn(std::int64_t n) const {
  if (n < 0) throw InvalidArgument("negative generation");
  if (!fading()) throw DivergentQSeries("sum of q_n diverges");
  const std::int64_t n0 = prefix_length();
  double d = 0.0;
  for (std::int64_t k = n; k < n0; ++k) {
    const double qk = prefix_[static_cast<std::size_t>(k)].q();
    if (qk >= 1.0) return kInf;
    d -= std::log1p(-qk);
  }
  const std::int64_t from = std::max(n, n0);
  if (eventually_degenerate()) return d;
  const auto i = static_cast<std::size_t>(from - n0);
  return d + (i < d_table_.size() ? d_table_[i] : -tail_log_sum(-1.0, from));
}

std::pair<double, double> Environment::nu_tail_bounds(std::int64_t n) const {
  const double d = dn(n);
  if (std::isinf(d)) return {0.0, 0.0};
  const double l = fading_product();
  return {std::exp(-l * d), std::exp(-d)};
}

Convergence Environment::moment_criterion(const MomentFunction& f) const {
  if (eventually_degenerate()) return Convergence::Converges;
  if (f.kind == MomentFunction::Kind::Tabulated) {
    throw Inconclusive("tabulated weight has no tail rule to compare against");
  }
  const bool power = f.kind == MomentFunction::Kind::Power;
  switch (tail_.kind) {
    case TailRuleKind::Constant:
      if (power) return f.s < -1.0 ? Convergence::Converges : Convergence::Diverges;
      return f.lambda < 0.0 ? Convergence::Converges : Convergence::Diverges;
    case TailRuleKind::Geometric:
      if (power) return Convergence::Converges;
      return f.lambda + std::log(tail_.r) < 0.0 ? Convergence::Converges : Convergence::Diverges;
    case TailRuleKind::PowerLog: {
      if (!power && f.lambda != 0.0) return f.lambda < 0.0 ? Convergence::Converges : Convergence::Diverges;
      const double e = (power ? f.s : 0.0) - tail_.p;
      if (e < -1.0 || (e == -1.0 && tail_.b > 1.0)) return Convergence::Converges;
      return Convergence::Diverges;
    }
    case TailRuleKind::Degenerate: break;
  }
  return Convergence::Converges;
}

std::int64_t Environment::first_generation_below(std::int64_t n, double target) const {
  std::int64_t lo = n;  // invariant: d_lo >= target
  std::int64_t step = 1;
  std::int64_t hi = n;
  while (dn(hi + 1) >= target) {
    lo = hi + 1;
    if (lo >= kMaxGeneration) throw NotRealizedWithinCap("next branching generation beyond 2^62");
    hi = std::min(n + step, kMaxGeneration);
    step *= 2;
  }
  // smallest m in [lo, hi] with d_{m+1} < target
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (dn(mid + 1) < target) hi = mid;
    else lo = mid + 1;
  }
  return lo;
}

int Environment::sample_tail_offspring(double u) const {
  for (std::size_t i = 0; i < split_cumulative_.size(); ++i) {
    if (u < split_cumulative_[i]) return static_cast<int>(i + 2);
  }
  return static_cast<int>(split_cumulative_.size() + 1);
}

Skeleton Environment::simulate_skeleton(RandomStream& rng) const {
  if (!fading()) throw NonFadingEnvironment("sum of q_n diverges; the fading time may be infinite");
  Skeleton sk;
  std::int64_t z = 1;
  const auto add = [&](BranchEvent&& e) {
    for (const auto& b : e.branchings) {
      z += b.offspring - 1;
      if (z > kMaxPopulation) throw NotRealizedWithinCap("population beyond 2^62");
    }
    sk.events.push_back(std::move(e));
  };
  const std::int64_t n0 = prefix_length();
  for (std::int64_t n = 0; n < n0; ++n) {
    const auto& law = prefix_[static_cast<std::size_t>(n)];
    const double qn = law.q();
    if (!(qn > 0.0)) continue;
    BranchEvent e{n, {}};
    for (double at = geometric_gap(qn, rng) - 1.0; at < static_cast<double>(z); at += geometric_gap(qn, rng)) {
      e.branchings.push_back({static_cast<std::int64_t>(at), law.sample_non_unit(rng.uniform01())});
    }
    if (!e.branchings.empty()) add(std::move(e));
  }
  if (!eventually_degenerate()) {
    std::int64_t n = n0;
    for (;;) {
      const double d = dn(n);
      const double budget = -std::log(rng.uniform_open01()) / static_cast<double>(z);
      if (!(d > budget)) break;
      const std::int64_t m = first_generation_below(n, d - budget);
      const double qm = tail_q(m);
      BranchEvent e{m, {}};
      double at = static_cast<double>(first_branching_index(qm, z, rng));
      for (; at < static_cast<double>(z); at += geometric_gap(qm, rng)) {
        e.branchings.push_back({static_cast<std::int64_t>(at), sample_tail_offspring(rng.uniform01())});
      }
      add(std::move(e));
      n = m + 1;
    }
  }
  sk.final_population = z;
  sk.nu = sk.events.empty() ? 1 : std::max<std::int64_t>(1, sk.events.back().generation + 1);
  return sk;
}

BranchingTrajectory Environment::simulate_trajectory(RandomStream& rng) const {
  const Skeleton sk = simulate_skeleton(rng);
  BranchingTrajectory t;
  std::int64_t z = 1;
  for (const auto& e : sk.events) {
    for (const auto& b : e.branchings) z += b.offspring - 1;
    t.change_points.emplace_back(e.generation + 1, z);
  }
  t.nu = sk.nu;
  t.final_population = sk.final_population;
  return t;
}

nlohmann::json Environment::to_json() const {
  nlohmann::json prefix = nlohmann::json::array();
  for (const auto& law : prefix_) prefix.push_back(law.to_json());
  nlohmann::json tail{{"rule", tail_rule_name(tail_.kind)}, {"split", tail_.split}};
  switch (tail_.kind) {
    case TailRuleKind::Degenerate: break;
    case TailRuleKind::Geometric: tail["a"] = tail_.a; tail["r"] = tail_.r; break;
    case TailRuleKind::PowerLog: tail["a"] = tail_.a; tail["p"] = tail_.p; tail["b"] = tail_.b; break;
    case TailRuleKind::Constant: tail["q"] = tail_.a; break;
  }
  return {{"prefix", prefix}, {"tail", tail}};
}

Environment Environment::from_json(const nlohmann::json& j) {
  try {
    std::vector<OffspringLaw> prefix;
    if (j.contains("prefix")) {
      for (const auto& item : j.at("prefix")) {
        if (item.is_array()) {
          prefix.push_back(OffspringLaw::from_masses(item.get<std::vector<double>>()));
        } else {
          const auto split = item.value("split", std::vector<double>{1.0});
          prefix.push_back(OffspringLaw::branching(item.at("q").get<double>(), split));
        }
      }
    }
    TailRule tail;
    if (j.contains("tail")) {
      const auto& t = j.at("tail");
      const auto rule = t.value("rule", std::string("degenerate"));
      const auto split = t.value("split", std::vector<double>{1.0});
      if (rule == "degenerate") tail = TailRule::degenerate();
      else if (rule == "geometric") tail = TailRule::geometric(t.at("a").get<double>(), t.at("r").get<double>(), split);
      else if (rule == "power_log") {
        tail = TailRule::power_log(t.at("a").get<double>(), t.at("p").get<double>(), t.value("b", 0.0), split);
      } else if (rule == "constant") tail = TailRule::constant(t.at("q").get<double>(), split);
      else throw ConfigError("unknown tail rule '" + rule + "'");
    }
    return Environment(std::move(prefix), std::move(tail));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("environment: ") + e.what());
  }
}

NuMoments empirical_moments(const Environment& env, std::int64_t n_runs, RandomStream& rng) {
  if (n_runs < 2) throw InvalidArgument("need at least two runs");
  double s[3] = {0, 0, 0}, s2[3] = {0, 0, 0};
  for (std::int64_t i = 0; i < n_runs; ++i) {
    const auto sk = env.simulate_skeleton(rng);
    const double v[3] = {static_cast<double>(sk.nu), static_cast<double>(sk.final_population),
                         static_cast<double>(sk.nu) * static_cast<double>(sk.final_population)};
    for (int k = 0; k < 3; ++k) {
      s[k] += v[k];
      s2[k] += v[k] * v[k];
    }
  }
  const double n = static_cast<double>(n_runs);
  double mean[3], se[3];
  for (int k = 0; k < 3; ++k) {
    mean[k] = s[k] / n;
    const double var = std::max(0.0, (s2[k] - n * mean[k] * mean[k]) / (n - 1.0));
    se[k] = std::sqrt(var / n);
  }
  return {mean[0], se[0], mean[1], se[1], mean[2], se[2], n_runs};
}

}  // namespace brwfade
