#include "brwfade/boundaries_stopping.hpp"

#include <algorithm>
#include <cmath>

#include "brwfade/errors.hpp"

namespace brwfade {

Boundary Boundary::linear(double c) {
  if (!std::isfinite(c)) throw ParameterOutOfRange("boundary slope must be finite");
  Boundary b;
  b.slope_ = c;
  return b;
}

Boundary Boundary::table(std::vector<double> values, double tail_slope) {
  if (values.empty()) throw ParameterOutOfRange("boundary table is empty");
  Boundary b;
  b.kind_ = Kind::Table;
  b.table_ = std::move(values);
  b.tail_slope_ = tail_slope;
  return b;
}

Boundary Boundary::affine_table(double c, double offset, std::vector<double> values) {
  Boundary b;
  b.kind_ = Kind::AffineTable;
  b.slope_ = c;
  b.offset_ = offset;
  b.table_ = std::move(values);
  return b;
}

double Boundary::operator()(std::int64_t n) const {
  if (n <= 0) return 0.0;
  double v = offset_ + slope_ * static_cast<double>(n);
  if (!table_.empty()) {
    const auto k = static_cast<std::int64_t>(table_.size());
    v += n <= k ? table_[static_cast<std::size_t>(n - 1)]
                : table_.back() + tail_slope_ * static_cast<double>(n - k);
  }
  return v;
}

double Boundary::asymptotic_slope() const noexcept { return slope_ + (table_.empty() ? 0.0 : tail_slope_); }

Boundary Boundary::shifted(double a) const {
  Boundary b = *this;
  b.offset_ += a;
  if (b.kind_ == Kind::Table) b.kind_ = Kind::AffineTable;
  if (b.kind_ == Kind::Linear && a != 0.0) b.kind_ = Kind::AffineTable;
  return b;
}

nlohmann::json Boundary::to_json() const {
  switch (kind_) {
    case Kind::Linear: return {{"kind", "linear"}, {"c", slope_}};
    case Kind::Table: return {{"kind", "table"}, {"values", table_}, {"tail_slope", tail_slope_}};
    case Kind::AffineTable:
      return {{"kind", "affine_table"}, {"c", slope_}, {"offset", offset_}, {"values", table_},
              {"tail_slope", tail_slope_}};
  }
  return {};
}

Boundary Boundary::from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.value("kind", std::string("linear"));
    if (kind == "linear") return linear(j.value("c", 0.0));
    if (kind == "table") return table(j.at("values").get<std::vector<double>>(), j.value("tail_slope", 0.0));
    if (kind == "affine_table") {
      Boundary b = affine_table(j.value("c", 0.0), j.value("offset", 0.0),
                                j.value("values", std::vector<double>{}));
      b.tail_slope_ = j.value("tail_slope", 0.0);
      return b;
    }
    throw ConfigError("unknown boundary kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("boundary: ") + e.what());
  }
}

ClassCheck validate_class(const Boundary& g, double c, std::int64_t n_max) {
  for (std::int64_t n = 1; n <= n_max; ++n) {
    const double gn = g(n);
    const bool ok = gn >= 0.0 && (n == 1 ? gn >= c : gn >= g(n - 1) + c);
    if (!ok) return {false, n};
  }
  return {};
}

IndependentLaw IndependentLaw::geometric(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ParameterOutOfRange("geometric stop needs 0 < p <= 1");
  IndependentLaw l;
  l.kind_ = Kind::Geometric;
  l.p_ = p;
  return l;
}

IndependentLaw IndependentLaw::power(double k2, double alpha) {
  if (!(k2 > 0.0) || !(alpha > 0.0)) throw ParameterOutOfRange("power stop needs k2 > 0, alpha > 0");
  IndependentLaw l;
  l.kind_ = Kind::Power;
  l.k2_ = k2;
  l.alpha_ = alpha;
  return l;
}

IndependentLaw IndependentLaw::table(std::vector<double> pmf) {
  if (pmf.empty()) throw ParameterOutOfRange("stop pmf is empty");
  double total = 0.0;
  for (double v : pmf) {
    if (!(v >= 0.0)) throw ParameterOutOfRange("stop pmf has a negative mass");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ParameterOutOfRange("stop pmf does not sum to 1");
  IndependentLaw l;
  l.kind_ = Kind::Table;
  l.pmf_ = std::move(pmf);
  return l;
}

double IndependentLaw::survival(std::int64_t n) const {
  if (n <= 0) return 1.0;
  switch (kind_) {
    case Kind::Geometric: return std::pow(1.0 - p_, static_cast<double>(n - 1));
    case Kind::Power: return std::min(1.0, k2_ * std::pow(static_cast<double>(n), -alpha_));
    case Kind::Table: {
      double s = 0.0;
      for (std::size_t k = static_cast<std::size_t>(std::min<std::int64_t>(n, static_cast<std::int64_t>(pmf_.size())));
           k < pmf_.size(); ++k) {
        s += pmf_[k];
      }
      return s;
    }
  }
  return 0.0;
}

double IndependentLaw::survival_at(double t) const {
  if (t <= 1.0) return 1.0;
  switch (kind_) {
    case Kind::Geometric: return std::pow(1.0 - p_, t - 1.0);
    case Kind::Power: return std::min(1.0, k2_ * std::pow(t, -alpha_));
    case Kind::Table: return survival(static_cast<std::int64_t>(std::ceil(t)));
  }
  return 0.0;
}

double IndependentLaw::survival_tail_sum(std::int64_t n) const {
  const double nd = static_cast<double>(std::max<std::int64_t>(n, 1));
  switch (kind_) {
    case Kind::Geometric: return p_ >= 1.0 ? 0.0 : std::pow(1.0 - p_, nd) / p_;
    case Kind::Power:
      if (alpha_ <= 1.0) return std::numeric_limits<double>::infinity();
      return k2_ * std::pow(nd, 1.0 - alpha_) / (alpha_ - 1.0);
    case Kind::Table: {
      double s = 0.0;
      for (std::int64_t k = n + 1; k < static_cast<std::int64_t>(pmf_.size()); ++k) s += survival(k);
      return s;
    }
  }
  return 0.0;
}

double IndependentLaw::mean() const {
  switch (kind_) {
    case Kind::Geometric: return 1.0 / p_;
    case Kind::Power: {
      if (alpha_ <= 1.0) return std::numeric_limits<double>::infinity();
      // sum_{n >= 1} min(1, k2 n^-alpha)
      const double n1 = std::pow(k2_, 1.0 / alpha_);  // survival is 1 up to n1
      const auto head = static_cast<std::int64_t>(std::floor(n1));
      double s = static_cast<double>(std::max<std::int64_t>(head, 0));
      const std::int64_t start = std::max<std::int64_t>(head + 1, 1);
      const std::int64_t end = start + 100000;
      for (std::int64_t n = start; n < end; ++n) s += survival(n);
      // Euler-Maclaurin tail of k2 n^-alpha from `end`
      const double e = static_cast<double>(end);
      s += k2_ * std::pow(e, 1.0 - alpha_) / (alpha_ - 1.0) + 0.5 * k2_ * std::pow(e, -alpha_) +
           alpha_ * k2_ * std::pow(e, -alpha_ - 1.0) / 12.0;
      return s;
    }
    case Kind::Table: {
      double s = 0.0;
      for (std::size_t k = 0; k < pmf_.size(); ++k) s += static_cast<double>(k) * pmf_[k];
      return s;
    }
  }
  return 0.0;
}

std::optional<std::int64_t> IndependentLaw::bound() const {
  if (kind_ == Kind::Table) return static_cast<std::int64_t>(pmf_.size()) - 1;
  if (kind_ == Kind::Geometric && p_ == 1.0) return 1;
  return std::nullopt;
}

std::int64_t IndependentLaw::sample(RandomStream& rng) const {
  constexpr double kHuge = 4.0e18;
  switch (kind_) {
    case Kind::Geometric: {
      if (p_ >= 1.0) return 1;
      const double g = 1.0 + std::floor(std::log(rng.uniform_open01()) / std::log1p(-p_));
      return static_cast<std::int64_t>(std::min(g, kHuge));
    }
    case Kind::Power: {
      const double w = std::floor(std::pow(k2_ / rng.uniform_open01(), 1.0 / alpha_));
      return static_cast<std::int64_t>(std::min(w, kHuge));
    }
    case Kind::Table: {
      const double u = rng.uniform01();
      double acc = 0.0;
      for (std::size_t k = 0; k < pmf_.size(); ++k) {
        acc += pmf_[k];
        if (u < acc) return static_cast<std::int64_t>(k);
      }
      return static_cast<std::int64_t>(pmf_.size()) - 1;
    }
  }
  return 0;
}

nlohmann::json IndependentLaw::to_json() const {
  switch (kind_) {
    case Kind::Geometric: return {{"law", "geometric"}, {"p", p_}};
    case Kind::Power: return {{"law", "power"}, {"k2", k2_}, {"alpha", alpha_}};
    case Kind::Table: return {{"law", "table"}, {"pmf", pmf_}};
  }
  return {};
}

IndependentLaw IndependentLaw::from_json(const nlohmann::json& j) {
  const auto law = j.value("law", std::string("geometric"));
  if (law == "geometric") return geometric(j.at("p").get<double>());
  if (law == "power") return power(j.value("k2", 1.0), j.at("alpha").get<double>());
  if (law == "table") return table(j.at("pmf").get<std::vector<double>>());
  throw ConfigError("unknown stopping law '" + law + "'");
}

std::string_view stop_kind_name(StopKind k) noexcept {
  switch (k) {
    case StopKind::Fixed: return "fixed";
    case StopKind::Independent: return "independent";
    case StopKind::FadingTime: return "fading_time";
    case StopKind::FirstPassageBelow: return "first_passage_below";
    case StopKind::Infinite: return "infinite";
  }
  return "?";
}

std::string_view stop_class_name(StopClass c) noexcept {
  switch (c) {
    case StopClass::HM: return "HM";
    case StopClass::MO: return "MO";
    case StopClass::Both: return "both";
  }
  return "?";
}

StoppingRule StoppingRule::fixed(std::int64_t n) {
  if (n < 0) throw ParameterOutOfRange("fixed stop must be non-negative");
  StoppingRule r;
  r.kind = StopKind::Fixed;
  r.n = n;
  return r;
}

StoppingRule StoppingRule::independent(IndependentLaw law) {
  StoppingRule r;
  r.kind = StopKind::Independent;
  r.law = std::move(law);
  return r;
}

StoppingRule StoppingRule::fading_time() {
  StoppingRule r;
  r.kind = StopKind::FadingTime;
  return r;
}

StoppingRule StoppingRule::first_passage_below(double level, std::int64_t cap) {
  StoppingRule r;
  r.kind = StopKind::FirstPassageBelow;
  r.level = level;
  r.cap = cap;
  return r;
}

StoppingRule StoppingRule::infinite() {
  StoppingRule r;
  r.kind = StopKind::Infinite;
  return r;
}

StoppingRule StoppingRule::capped(std::int64_t c) const {
  StoppingRule r = *this;
  r.cap = r.cap < 0 ? c : std::min(r.cap, c);
  return r;
}

StopClass StoppingRule::inherent_class() const noexcept {
  switch (kind) {
    case StopKind::FadingTime: return StopClass::HM;
    case StopKind::FirstPassageBelow: return StopClass::MO;
    default: return StopClass::Both;
  }
}

bool StoppingRule::satisfies_hm() const noexcept { return kind != StopKind::FirstPassageBelow; }

void StoppingRule::check_declared() const {
  if (!declared) return;
  const StopClass have = inherent_class();
  if (*declared == have || have == StopClass::Both) return;
  throw ConfigError("stopping rule '" + std::string(stop_kind_name(kind)) + "' is " +
                    std::string(stop_class_name(have)) + ", declared " + std::string(stop_class_name(*declared)));
}

std::optional<std::int64_t> StoppingRule::bound() const {
  std::optional<std::int64_t> b;
  switch (kind) {
    case StopKind::Fixed: b = n; break;
    case StopKind::Independent: b = law.bound(); break;
    default: break;
  }
  if (cap >= 0) b = b ? std::min(*b, cap) : cap;
  return b;
}

nlohmann::json StoppingRule::to_json() const {
  nlohmann::json j{{"kind", stop_kind_name(kind)}};
  switch (kind) {
    case StopKind::Fixed: j["n"] = n; break;
    case StopKind::Independent: j["law"] = law.to_json(); break;
    case StopKind::FirstPassageBelow: j["level"] = level; break;
    default: break;
  }
  if (cap >= 0) j["cap"] = cap;
  j["class"] = stop_class_name(declared.value_or(inherent_class()));
  return j;
}

StoppingRule StoppingRule::from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    StoppingRule r;
    if (kind == "fixed") r = fixed(j.at("n").get<std::int64_t>());
    else if (kind == "independent") r = independent(IndependentLaw::from_json(j.at("law")));
    else if (kind == "fading_time") r = fading_time();
    else if (kind == "first_passage_below") r = first_passage_below(j.value("level", 0.0));
    else if (kind == "infinite") r = infinite();
    else throw ConfigError("unknown stopping kind '" + kind + "'");
    r.cap = j.value("cap", std::int64_t{-1});
    if (j.contains("class")) {
      const auto c = j.at("class").get<std::string>();
      if (c == "HM") r.declared = StopClass::HM;
      else if (c == "MO") r.declared = StopClass::MO;
      else if (c == "both") r.declared = StopClass::Both;
      else throw ConfigError("unknown stopping class '" + c + "'");
    }
    r.check_declared();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("stopping rule: ") + e.what());
  }
}

std::optional<std::int64_t> realize_stop(const StoppingRule& rule, std::int64_t nu, RandomStream& rng) {
  std::int64_t mu = 0;
  switch (rule.kind) {
    case StopKind::Fixed: mu = rule.n; break;
    case StopKind::Independent: mu = rule.law.sample(rng); break;
    case StopKind::FadingTime: mu = nu; break;
    case StopKind::Infinite: mu = kInfiniteTime; break;
    case StopKind::FirstPassageBelow: return std::nullopt;
  }
  if (rule.cap >= 0) mu = std::min(mu, rule.cap);
  return mu;
}

std::optional<std::int64_t> first_passage(const StoppingRule& rule, const std::vector<double>& rightmost) {
  for (std::size_t i = 0; i < rightmost.size(); ++i) {
    const auto n = static_cast<std::int64_t>(i + 1);
    if (rule.cap >= 0 && n > rule.cap) return rule.cap;
    if (rightmost[i] < -rule.level) return n;
  }
  if (rule.cap >= 0 && static_cast<std::int64_t>(rightmost.size()) >= rule.cap) return rule.cap;
  return std::nullopt;
}

}  // namespace brwfade
