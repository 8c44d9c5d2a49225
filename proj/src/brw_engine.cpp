#include "brwfade/brw_engine.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <cstdio>
#include <limits>
#include <ostream>

#include "brwfade/errors.hpp"

namespace brwfade {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Supplies the branching pattern generation after generation: read from a
// presampled skeleton for fading environments, drawn on the fly otherwise.
class Grower {
 public:
  Grower(const Environment& env, std::uint64_t seed) : env_(env), rng_(RunStreams::skeleton(seed)) {
    fading_ = env.fading();
    if (fading_) skeleton_ = env.simulate_skeleton(rng_);
  }

  bool fading() const noexcept { return fading_; }
  std::int64_t nu() const noexcept { return fading_ ? skeleton_.nu : kInfiniteTime; }
  const Skeleton& skeleton() const noexcept { return skeleton_; }

  // Parents in generation n, population z. Must be called for n = 0, 1, 2, ...
  const std::vector<Branching>& branchings(std::int64_t n, std::int64_t z) {
    buffer_.clear();
    if (fading_) {
      const auto& ev = skeleton_.events;
      if (next_ < ev.size() && ev[next_].generation == n) return ev[next_++].branchings;
      return buffer_;
    }
    const auto law = env_.law(n);
    const double q = law.q();
    if (!(q > 0.0)) return buffer_;
    const double lq = std::log1p(-q);
    const auto gap = [&] { return q >= 1.0 ? 1.0 : 1.0 + std::floor(std::log(rng_.uniform_open01()) / lq); };
    for (double at = gap() - 1.0; at < static_cast<double>(z); at += gap()) {
      buffer_.push_back({static_cast<std::int64_t>(at), law.sample_non_unit(rng_.uniform01())});
    }
    return buffer_;
  }

 private:
  const Environment& env_;
  RandomStream rng_;
  bool fading_ = false;
  Skeleton skeleton_;
  std::size_t next_ = 0;
  std::vector<Branching> buffer_;
};

std::int64_t child_count(std::int64_t z, const std::vector<Branching>& br) {
  std::int64_t total = z;
  for (const auto& b : br) total += b.offspring - 1;
  return total;
}

void grow(const std::vector<double>& parents, const std::vector<Branching>& br, const IncrementLaw& law,
          RandomStream& inc, double dg, std::vector<double>& out, std::vector<std::int64_t>* parent_of) {
  out.clear();
  if (parent_of) parent_of->clear();
  std::size_t j = 0;
  const auto z = static_cast<std::int64_t>(parents.size());
  for (std::int64_t i = 0; i < z; ++i) {
    int k = 1;
    if (j < br.size() && br[j].index == i) k = br[j++].offspring;
    for (int c = 0; c < k; ++c) {
      out.push_back(parents[static_cast<std::size_t>(i)] + law.sample(inc) - dg);
      if (parent_of) parent_of->push_back(i);
    }
  }
}

void realize_mu(const StoppingRule& stop, const Grower& grower, std::uint64_t seed, std::optional<std::int64_t>& mu) {
  if (!grower.fading() && (stop.kind == StopKind::FadingTime || stop.kind == StopKind::Infinite)) {
    throw NonFadingEnvironment("this stopping rule needs a fading environment");
  }
  RandomStream rng(RunStreams::stop(seed));
  mu = realize_stop(stop, grower.nu(), rng);
}

}  // namespace

double WalkRealization::rightmost_over_stop() const {
  double r = 0.0;
  for (const auto& f : fronts) {
    if (f.n > mu) break;
    r = f.running_max;
  }
  return r;
}

std::optional<std::int64_t> WalkRealization::crossing_time(double x) const {
  for (const auto& f : fronts) {
    if (f.n >= 1 && f.rightmost > x) return f.n;
  }
  return std::nullopt;
}

std::int64_t WalkRealization::eta() const {
  std::int64_t e = 0;
  for (const auto& f : fronts) {
    if (f.n > mu) break;
    e = f.eta;
  }
  return e;
}

WalkEngine::WalkEngine(Environment env, IncrementLaw law, Boundary boundary, StoppingRule stop, RunOptions options)
    : env_(std::move(env)), law_(std::move(law)), boundary_(std::move(boundary)), stop_(std::move(stop)),
      options_(options) {
  if (!law_.centered()) throw UnboundedPositiveMean("increment law has no finite mean");
  if (stop_.kind == StopKind::Infinite && !(boundary_.asymptotic_slope() > 0.0)) {
    throw HypothesisViolation("an infinite horizon needs a boundary with positive slope");
  }
}

WalkRealization WalkEngine::run(std::uint64_t seed) const {
  Grower grower(env_, seed);
  std::optional<std::int64_t> mu_pre;
  realize_mu(stop_, grower, seed, mu_pre);

  WalkRealization out;
  out.nu = grower.nu();
  out.final_population = grower.fading() ? grower.skeleton().final_population : -1;
  out.fronts.push_back({});
  if (options_.keep_tree) out.tree.push_back({{0.0}, {-1}});

  std::vector<double> cur{0.0}, next;
  std::vector<std::int64_t> parents;
  double running = 0.0;
  std::int64_t eta = 0;
  std::optional<std::int64_t> mu = mu_pre;
  std::int64_t n = 1;
  for (;; ++n) {
    if (mu && n > *mu) break;
    if (n > options_.horizon_cap) {
      out.horizon_hit = true;
      break;
    }
    const auto z = static_cast<std::int64_t>(cur.size());
    const auto& br = grower.branchings(n - 1, z);
    if (child_count(z, br) > options_.population_cap) {
      out.population_cap_hit = true;
      break;
    }
    const bool resample = options_.resample_after >= 0 && n > options_.resample_after;
    RandomStream inc(resample ? RunStreams::resampled(seed, options_.resample_salt, n) : RunStreams::generation(seed, n));
    grow(cur, br, law_, inc, boundary_(n) - boundary_(n - 1), next, options_.keep_tree ? &parents : nullptr);
    std::swap(cur, next);
    const auto [lo, hi] = std::minmax_element(cur.begin(), cur.end());
    running = std::max(running, *hi);
    eta += static_cast<std::int64_t>(cur.size());
    out.fronts.push_back({n, static_cast<std::int64_t>(cur.size()), *hi, *lo, running, eta});
    if (options_.keep_tree) out.tree.push_back({cur, parents});
    if (!mu) {
      if (*hi < -stop_.level) mu = n;
      else if (stop_.cap >= 0 && n >= stop_.cap) mu = stop_.cap;
    }
  }
  out.mu = mu.value_or(n - 1);
  if (!grower.fading()) out.final_population = out.fronts.back().population;
  return out;
}

CrossingOutcome WalkEngine::run_crossing(std::uint64_t seed, double x) const {
  Grower grower(env_, seed);
  std::optional<std::int64_t> mu_pre;
  realize_mu(stop_, grower, seed, mu_pre);
  CrossingOutcome out;
  out.nu = grower.nu();
  out.final_population = grower.fading() ? grower.skeleton().final_population : -1;
  out.mu = mu_pre.value_or(-1);
  if (x < 0.0) {
    out.crossed = true;  // the empty path sits at 0
    return out;
  }

  std::vector<double> cur{0.0}, next;
  std::optional<std::int64_t> mu = mu_pre;
  std::int64_t n = 1;
  for (;; ++n) {
    if (mu && n > *mu) return out;
    if (n > options_.horizon_cap) {
      out.truncated = true;
      return out;
    }
    if (mu && grower.fading() && n - 1 >= grower.nu()) break;  // lineages are frozen
    const auto z = static_cast<std::int64_t>(cur.size());
    const auto& br = grower.branchings(n - 1, z);
    if (child_count(z, br) > options_.population_cap) {
      out.truncated = true;
      return out;
    }
    RandomStream inc(RunStreams::generation(seed, n));
    grow(cur, br, law_, inc, boundary_(n) - boundary_(n - 1), next, nullptr);
    std::swap(cur, next);
    const double hi = *std::max_element(cur.begin(), cur.end());
    if (hi > x) {
      out.crossed = true;
      out.mu = mu.value_or(n);
      return out;
    }
    if (!mu) {
      if (hi < -stop_.level) mu = n;
      else if (stop_.cap >= 0 && n >= stop_.cap) mu = stop_.cap;
      if (mu) out.mu = *mu;
    }
  }

  // Frozen lineages from generation n - 1 on.
  const std::int64_t start = n - 1;
  const std::int64_t end = *mu;
  const bool drop = end == kInfiniteTime || end > options_.horizon_cap;
  const double c = boundary_.asymptotic_slope();
  double depth = kInf;
  if (drop) {
    if (!(c > 0.0)) {
      out.truncated = true;
      return out;
    }
    // smallest y > x with F-bar_I(y) <= kDropFraction F-bar_I(x)
    const double target = kDropFraction * law_.integrated_tail_unclamped(x);
    double lo = x, hi = x + 1.0;
    while (law_.integrated_tail_unclamped(hi) > target) {
      lo = hi;
      hi = x + 2.0 * (hi - x);
    }
    for (int i = 0; i < 100 && hi - lo > 1e-9 * std::max(1.0, hi); ++i) {
      const double mid = 0.5 * (lo + hi);
      (law_.integrated_tail_unclamped(mid) > target ? lo : hi) = mid;
    }
    depth = hi;
  }
  double residual = 0.0;
  for (std::size_t i = 0; i < cur.size(); ++i) {
    RandomStream rng(RunStreams::lineage(seed, static_cast<std::int64_t>(i)));
    double v = cur[i];
    double g_prev = boundary_(start);
    for (std::int64_t k = start + 1;; ++k) {
      if (k > end) break;
      if (k > options_.horizon_cap) {
        out.truncated = true;
        break;
      }
      const double gk = boundary_(k);
      v += law_.sample(rng) - (gk - g_prev);
      g_prev = gk;
      if (v > x) {
        out.crossed = true;
        out.residual = 0.0;
        out.truncated = false;
        return out;
      }
      if (drop && x - v >= depth) {
        residual += law_.integrated_tail(x - v) / c;
        break;
      }
    }
  }
  out.residual = residual;
  return out;
}

struct WalkEngine::Tree {
  // Generation-major node arrays; generation 0 is the root.
  std::vector<std::vector<std::int64_t>> parent;
  std::vector<std::vector<double>> xi;   // increment on the edge into the node
  std::vector<std::vector<double>> sum;  // S (without the boundary)
};

WalkEngine::Tree WalkEngine::build_tree(std::uint64_t seed, std::int64_t mu) const {
  Grower grower(env_, seed);
  Tree t;
  t.parent.push_back({-1});
  t.xi.push_back({0.0});
  t.sum.push_back({0.0});
  for (std::int64_t n = 1; n <= mu; ++n) {
    const auto& prev_sum = t.sum.back();
    const auto z = static_cast<std::int64_t>(prev_sum.size());
    const auto& br = grower.branchings(n - 1, z);
    if (child_count(z, br) > options_.population_cap) throw NotRealizedWithinCap("tree exceeds the population cap");
    RandomStream inc(RunStreams::generation(seed, n));
    std::vector<std::int64_t> par;
    std::vector<double> xi, sum;
    std::size_t j = 0;
    for (std::int64_t i = 0; i < z; ++i) {
      int k = 1;
      if (j < br.size() && br[j].index == i) k = br[j++].offspring;
      for (int c = 0; c < k; ++c) {
        const double v = law_.sample(inc);
        par.push_back(i);
        xi.push_back(v);
        sum.push_back(prev_sum[static_cast<std::size_t>(i)] + v);
      }
    }
    t.parent.push_back(std::move(par));
    t.xi.push_back(std::move(xi));
    t.sum.push_back(std::move(sum));
  }
  return t;
}

double WalkEngine::big_jump_sample(std::uint64_t seed, double x) const {
  if (!law_.continuous()) throw InvalidArgument("the conditional estimator needs a continuous law");
  if (!stop_.determined_in_advance() || stop_.kind == StopKind::Infinite) {
    throw InvalidArgument("the conditional estimator needs a finite stopping time fixed before the walk");
  }
  if (x < 0.0) return 1.0;
  std::int64_t mu = 0;
  {
    Grower grower(env_, seed);
    std::optional<std::int64_t> m;
    realize_mu(stop_, grower, seed, m);
    mu = std::min(*m, options_.horizon_cap);
  }
  if (mu == 0) return 0.0;
  const Tree t = build_tree(seed, mu);
  const auto gens = t.sum.size();

  // Largest and second largest increment over all edges.
  double m1 = -kInf, m2 = -kInf;
  std::size_t m1_gen = 0, m1_idx = 0;
  for (std::size_t n = 1; n < gens; ++n) {
    for (std::size_t i = 0; i < t.xi[n].size(); ++i) {
      const double v = t.xi[n][i];
      if (v > m1) {
        m2 = m1;
        m1 = v;
        m1_gen = n;
        m1_idx = i;
      } else if (v > m2) {
        m2 = v;
      }
    }
  }

  // B[u] = max over the subtree of u of S^g(w) - S(u).
  std::vector<std::vector<double>> b(gens);
  for (std::size_t n = 0; n < gens; ++n) b[n].assign(t.sum[n].size(), -boundary_(static_cast<std::int64_t>(n)));
  for (std::size_t n = gens - 1; n >= 1; --n) {
    for (std::size_t i = 0; i < t.xi[n].size(); ++i) {
      auto& bp = b[n - 1][static_cast<std::size_t>(t.parent[n][i])];
      bp = std::max(bp, t.xi[n][i] + b[n][i]);
    }
  }

  // out[u] = max of S^g over nodes outside the subtree of u.
  std::vector<double> out_prev{-kInf};
  double y = 0.0;
  for (std::size_t n = 1; n < gens; ++n) {
    const auto& sum_prev = t.sum[n - 1];
    const double g_prev = boundary_(static_cast<std::int64_t>(n - 1));
    // best two subtree maxima among the children of each parent
    std::vector<double> top1(sum_prev.size(), -kInf), top2(sum_prev.size(), -kInf);
    std::vector<std::size_t> arg1(sum_prev.size(), 0);
    for (std::size_t i = 0; i < t.xi[n].size(); ++i) {
      const auto p = static_cast<std::size_t>(t.parent[n][i]);
      const double sub = t.sum[n][i] + b[n][i];
      if (sub > top1[p]) {
        top2[p] = top1[p];
        top1[p] = sub;
        arg1[p] = i;
      } else if (sub > top2[p]) {
        top2[p] = sub;
      }
    }
    std::vector<double> out_cur(t.xi[n].size());
    for (std::size_t i = 0; i < t.xi[n].size(); ++i) {
      const auto p = static_cast<std::size_t>(t.parent[n][i]);
      const double sibling = arg1[p] == i ? top2[p] : top1[p];
      out_cur[i] = std::max({out_prev[p], sum_prev[p] - g_prev, sibling});
      const double other = (n == m1_gen && i == m1_idx) ? m2 : m1;
      const double threshold = out_cur[i] > x ? -kInf : x - sum_prev[p] - b[n][i];
      y += law_.tail(std::max(other, threshold));
    }
    out_prev = std::move(out_cur);
  }
  return y;
}

void write_node_csv(std::ostream& os, const WalkRealization& r) {
  os << "generation,node_id,parent_id,value\n";
  std::int64_t base = 0, prev_base = 0;
  char buf[64];
  for (std::size_t n = 0; n < r.tree.size(); ++n) {
    const auto& g = r.tree[n];
    for (std::size_t i = 0; i < g.value.size(); ++i) {
      const std::int64_t parent = g.parent[i] < 0 ? -1 : prev_base + g.parent[i];
      std::snprintf(buf, sizeof buf, "%.17g", g.value[i]);
      os << n << ',' << base + static_cast<std::int64_t>(i) << ',' << parent << ',' << buf << '\n';
    }
    prev_base = base;
    base += static_cast<std::int64_t>(g.value.size());
  }
}

double exact_crossing_probability(const Environment& env, const IncrementLaw& law, const Boundary& g,
                                  std::int64_t mu, double x) {
  if (law.continuous()) throw InvalidArgument("enumeration needs a lattice law");
  const auto& atoms = law.atoms();
  std::vector<double> av, am;
  for (const auto& a : atoms) {
    av.push_back(a.value.to_double());
    am.push_back(a.mass.to_double());
  }
  std::function<double(std::int64_t, const std::vector<double>&)> from;
  from = [&](std::int64_t n, const std::vector<double>& values) -> double {
    if (*std::max_element(values.begin(), values.end()) > x) return 1.0;
    if (n >= mu) return 0.0;
    const auto offspring = env.law(n).masses();
    const double dg = g(n + 1) - g(n);
    double total = 0.0;
    std::vector<double> parent_of;
    // enumerate offspring counts, then increments
    std::function<void(std::size_t, double)> pick_offspring = [&](std::size_t i, double p) {
      if (p == 0.0) return;
      if (i == values.size()) {
        std::vector<double> children(parent_of.size());
        std::function<void(std::size_t, double)> pick_inc = [&](std::size_t c, double q) {
          if (c == children.size()) {
            total += q * from(n + 1, children);
            return;
          }
          for (std::size_t a = 0; a < av.size(); ++a) {
            children[c] = parent_of[c] + av[a] - dg;
            pick_inc(c + 1, q * am[a]);
          }
        };
        pick_inc(0, p);
        return;
      }
      for (std::size_t k = 0; k < offspring.size(); ++k) {
        for (std::size_t c = 0; c <= k; ++c) parent_of.push_back(values[i]);
        pick_offspring(i + 1, p * offspring[k]);
        parent_of.resize(parent_of.size() - (k + 1));
      }
    };
    pick_offspring(0, 1.0);
    return total;
  };
  return from(0, {0.0});
}

std::vector<std::pair<std::int64_t, Rational>> exact_crossing_time_law(const Skeleton& skeleton,
                                                                       const IncrementLaw& law, const Boundary& g,
                                                                       std::int64_t mu, double x) {
  if (law.continuous()) throw InvalidArgument("enumeration needs a lattice law");
  // edge list in generation order: (generation, parent node id)
  std::vector<std::int64_t> edge_gen, edge_parent;
  std::vector<std::int64_t> node_gen{0};
  std::int64_t z = 1, first_prev = 0;
  std::size_t ev = 0;
  for (std::int64_t n = 1; n <= mu; ++n) {
    const std::int64_t first_cur = static_cast<std::int64_t>(node_gen.size());
    const std::vector<Branching>* br = nullptr;
    if (ev < skeleton.events.size() && skeleton.events[ev].generation == n - 1) br = &skeleton.events[ev++].branchings;
    std::size_t j = 0;
    for (std::int64_t i = 0; i < z; ++i) {
      int k = 1;
      if (br && j < br->size() && (*br)[j].index == i) k = (*br)[j++].offspring;
      for (int c = 0; c < k; ++c) {
        edge_gen.push_back(n);
        edge_parent.push_back(first_prev + i);
        node_gen.push_back(n);
      }
    }
    z = static_cast<std::int64_t>(node_gen.size()) - first_cur;
    first_prev = first_cur;
  }
  const auto& atoms = law.atoms();
  if (std::pow(static_cast<double>(atoms.size()), static_cast<double>(edge_gen.size())) > 1 << 22) {
    throw InvalidArgument("enumeration too large");
  }
  std::vector<double> value(node_gen.size(), 0.0);
  std::vector<std::pair<std::int64_t, Rational>> law_of_tau;
  const auto add = [&](std::int64_t tau, const Rational& p) {
    for (auto& [t, q] : law_of_tau) {
      if (t == tau) {
        q += p;
        return;
      }
    }
    law_of_tau.emplace_back(tau, p);
  };
  std::function<void(std::size_t, Rational)> rec = [&](std::size_t e, Rational p) {
    if (e == edge_gen.size()) {
      std::int64_t tau = -1;
      for (std::size_t v = 1; v < node_gen.size(); ++v) {
        if (value[v] > x && (tau < 0 || node_gen[v] < tau)) tau = node_gen[v];
      }
      add(tau, p);
      return;
    }
    const std::int64_t n = edge_gen[e];
    for (const auto& a : atoms) {
      value[e + 1] = value[static_cast<std::size_t>(edge_parent[e])] + a.value.to_double() - (g(n) - g(n - 1));
      rec(e + 1, p * a.mass);
    }
  };
  rec(0, Rational(1));
  std::sort(law_of_tau.begin(), law_of_tau.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  return law_of_tau;
}

}  // namespace brwfade
