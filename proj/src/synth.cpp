#include "onestep/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>

#include "onestep/errors.hpp"
#include "input_search.hpp"

namespace onestep {

// ---------------------------------------------------------------- SynthConfig

int SynthConfig::levels_for(int input_index) const {
  if (input_levels.size() == 1) return input_levels.front();
  return input_levels.at(input_index);
}

void SynthConfig::validate(const ControlSystem& sys) const {
  const int n = sys.state_dim();
  if (static_cast<int>(grid_axes.size()) != n)
    throw UsageError("SynthConfig: need one grid axis per state dimension");
  for (const auto& a : grid_axes) a.validate();
  if (input_levels.size() != 1 && static_cast<int>(input_levels.size()) != sys.input_dim())
    throw UsageError("SynthConfig: input_levels must have 1 or input_dim entries");
  for (int l : input_levels)
    if (l < 3) throw UsageError("SynthConfig: input levels must be >= 3");
  if (!(contraction_margin >= 0.0) || !std::isfinite(contraction_margin))
    throw UsageError("SynthConfig: contraction margin must be finite and >= 0");
  if (horizon < 1) throw UsageError("SynthConfig: horizon must be >= 1");
  if (!(stage_weight >= 0.0) || !std::isfinite(stage_weight))
    throw UsageError("SynthConfig: stage weight must be finite and >= 0");
  if (!(interior_gain >= 1.0)) throw UsageError("SynthConfig: interior gain must be >= 1");
  if (!(value_cap > 0.0)) throw UsageError("SynthConfig: value cap must be positive");
  if (refine_iterations < 0) throw UsageError("SynthConfig: refine iterations must be >= 0");
  if (terminal_max_iterations < 1 || !(terminal_tolerance > 0.0))
    throw UsageError("SynthConfig: invalid terminal fixed-point settings");

  // The grid box must cover {g <= 0}: g may not be negative on the box boundary.
  GridFunction probe(grid_axes, std::vector<double>([&] {
                       std::size_t c = 1;
                       for (const auto& a : grid_axes) c *= a.count;
                       return c;
                     }(), 0.0));
  std::vector<double> x(n);
  for (std::size_t k = 0; k < probe.node_count(); ++k) {
    probe.node_coords(k, x);
    bool boundary = false;
    for (int i = 0; i < n; ++i)
      boundary = boundary || x[i] == grid_axes[i].lower || x[i] == grid_axes[i].upper;
    if (boundary && sys.state_constraint().eval(x) < -1e-12)
      throw UsageError("SynthConfig: grid box does not contain the state constraint set");
  }
}

// ---------------------------------------------------------------- synthesis

namespace {

struct NodeBellman {
  double value;
  std::array<double, kMaxDim> u;
};

}  // namespace

StorageFunction synthesize_storage(const ControlSystem& sys, const SynthConfig& cfg) {
  cfg.validate(sys);
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  const int T = cfg.horizon;
  const double cap = cfg.value_cap;
  const double kappa = cfg.stage_weight;
  const auto& axes = cfg.grid_axes;

  std::vector<int> levels(m);
  for (int j = 0; j < m; ++j) levels[j] = cfg.levels_for(j);
  const detail::InputLattice lattice(sys.input_box(), levels);
  const std::size_t L = lattice.size();

  std::size_t N = 1;
  for (const auto& a : axes) N *= a.count;
  const GridFunction shape(axes, std::vector<double>(N, 0.0));

  std::vector<double> coords(N * n), gval(N), lval(N), rho(N);
  for (std::size_t i = 0; i < N; ++i) {
    std::span<double> xi(&coords[i * n], n);
    shape.node_coords(i, xi);
    gval[i] = sys.state_constraint().eval(xi);
    lval[i] = sys.terminal_constraint().eval(xi);
    double r = 0.0;
    for (double c : xi) r += c * c;
    rho[i] = r;
  }
  auto phi = [&](double g) { return g > 0.0 ? g : cfg.interior_gain * g; };
  auto mu = [&](int t) { return cfg.contraction_margin * (t + 1) / (T + 1); };

  std::vector<double> ucost(L);
  for (std::size_t l = 0; l < L; ++l) {
    double s = 0.0;
    for (double c : lattice.point(l)) s += c * c;
    ucost[l] = kappa * s;
  }

  // Successors of the discrete levels do not depend on the stage.
  std::vector<double> succ(N * L * n);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t l = 0; l < L; ++l)
      rk4_step(sys, std::span<const double>(&coords[i * n], n), lattice.point(l),
               std::span<double>(&succ[(i * L + l) * n], n));

  // Per-stage quadratic bases from the Riccati recursion of the linearization.
  std::vector<std::optional<Polynomial>> bases(T + 1);
  {
    std::vector<double> zero_x(n, 0.0), zero_u(m, 0.0), f0(n);
    sys.field().eval(zero_x, zero_u, f0);
    bool equilibrium = true;
    for (double v : f0) equilibrium = equilibrium && std::abs(v) <= 1e-12;
    const bool origin_inside = shape.contains(zero_x);
    if (cfg.quadratic_base && kappa > 0.0 && equilibrium && origin_inside) {
      std::vector<double> out(n);
      SmallMat as, bs;
      rk4_step(sys, zero_x, zero_u, out, as, bs);
      const Mat a = as, b = bs;
      const Mat r = kappa * Mat::Identity(m, m);
      auto riccati = [&](const Mat& s, double q) {
        const Mat sb = s * b;
        const Mat gain = (r + b.transpose() * sb).ldlt().solve(sb.transpose() * a);
        const Mat next = q * Mat::Identity(n, n) + a.transpose() * s * a - a.transpose() * sb * gain;
        return Mat(0.5 * (next + next.transpose()));
      };
      std::vector<Mat> ms(T + 1);
      // The terminal fixed point behaves like the stationary Riccati solution
      // near 0 unless the terminal constraint's own curvature dominates.
      const Mat lq = sys.terminal_constraint().quadratic_part();
      Mat s = lq;
      for (int it = 0; it < cfg.terminal_max_iterations; ++it) {
        const Mat next = riccati(s, kappa + mu(T));
        const double change = (next - s).cwiseAbs().maxCoeff();
        s = next;
        if (change <= 1e-12 * (1.0 + s.cwiseAbs().maxCoeff())) break;
      }
      const bool dominates = s.allFinite() && Eigen::SelfAdjointEigenSolver<Mat>(s - lq).eigenvalues().minCoeff() >= 0.0;
      ms[T] = dominates ? s : lq;
      for (int t = T - 1; t >= 0; --t) ms[t] = riccati(ms[t + 1], kappa + mu(t));
      for (int t = 0; t <= T; ++t) bases[t] = Polynomial::quadratic_form(ms[t]);
    }
  }

  auto make_stage = [&](int t, const std::vector<double>& vals) {
    return GridFunction(axes, vals, bases[t]);
  };

  std::vector<std::array<double, kMaxDim>> argmin(N);
  std::vector<bool> have_argmin(N, false);

  // min_u V(f(x_i,u)) + kappa |u|^2 over the cached levels, optionally refined.
  auto bellman = [&](const GridFunction& next, std::size_t i, bool refine) {
    auto next_value = [&](std::span<const double> y) {
      const auto e = next.evaluate(y);
      return e.extrapolated ? cap : e.value;
    };
    const std::span<const double> xi(&coords[i * n], n);
    std::size_t best_l = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < L; ++l) {
      const double v = next_value(std::span<const double>(&succ[(i * L + l) * n], n)) + ucost[l];
      if (detail::better(v, lattice.norm2(l), best, lattice.norm2(best_l))) {
        best = v;
        best_l = l;
      }
    }
    NodeBellman res{best, {}};
    const auto p = lattice.point(best_l);
    std::copy(p.begin(), p.end(), res.u.begin());
    if (!refine) return res;

    auto objective = [&](std::span<const double> u) {
      std::array<double, kMaxDim> y{};
      rk4_step(sys, xi, u, std::span<double>(y.data(), n));
      double s = 0.0;
      for (double c : u) s += c * c;
      return next_value(std::span<const double>(y.data(), n)) + kappa * s;
    };
    const std::span<double> us(res.u.data(), m);
    res.value = detail::golden_refine(objective, sys.input_box(), lattice.spacing(), us, res.value,
                                      cfg.refine_iterations);
    if (have_argmin[i]) {
      const std::span<const double> up(argmin[i].data(), m);
      const double v = objective(up);
      if (v < res.value) {
        res.value = v;
        std::copy(up.begin(), up.end(), res.u.begin());
      }
    }
    return res;
  };

  std::vector<std::vector<double>> values(T + 1);

  // Terminal stage: fixed point over the discrete levels.
  const double mu_T = mu(T);
  std::vector<double> vt0(N);
  for (std::size_t i = 0; i < N; ++i)
    vt0[i] = std::min(cap, std::max(phi(gval[i]) + mu_T * rho[i], lval[i]));
  // Discrete levels first. The refined phase is modified policy iteration:
  // every kImproveEvery-th sweep re-optimizes the input, the sweeps in between
  // evaluate the stored policy through its cached successor. Convergence is
  // only declared on an improvement sweep.
  constexpr int kImproveEvery = 8;
  std::vector<double> cur = vt0, nxt(N);
  std::vector<double> policy_succ(N * n), policy_cost(N);
  int iterations = 0;
  for (bool refine : {false, true}) {
    double diff = std::numeric_limits<double>::infinity();
    for (int sweep = 0; iterations < cfg.terminal_max_iterations; ++iterations, ++sweep) {
      const bool improve = !refine || sweep % kImproveEvery == 0;
      if (improve && diff < cfg.terminal_tolerance) break;
      const GridFunction gf = make_stage(T, cur);
      diff = 0.0;
      for (std::size_t i = 0; i < N; ++i) {
        double bv = 0.0;
        const std::span<double> ys(&policy_succ[i * n], n);
        if (improve) {
          const auto b = bellman(gf, i, refine);
          bv = b.value;
          argmin[i] = b.u;
          have_argmin[i] = true;
          if (refine) {
            const std::span<const double> ui(argmin[i].data(), m);
            rk4_step(sys, std::span<const double>(&coords[i * n], n), ui, ys);
            double s2 = 0.0;
            for (double c : ui) s2 += c * c;
            policy_cost[i] = kappa * s2;
          }
        } else {
          const auto e = gf.evaluate(ys);
          bv = (e.extrapolated ? cap : e.value) + policy_cost[i];
        }
        nxt[i] = std::min(cap, std::max(vt0[i], bv + (kappa + mu_T) * rho[i]));
        diff = std::max(diff, std::abs(nxt[i] - cur[i]));
      }
      std::swap(cur, nxt);
    }
  }
  values[T] = cur;

  for (int t = T - 1; t >= 0; --t) {
    const GridFunction next = make_stage(t + 1, values[t + 1]);
    const double mt = mu(t);
    std::vector<double> v(N);
    for (std::size_t i = 0; i < N; ++i) {
      const auto b = bellman(next, i, true);
      v[i] = std::min(cap, std::max(phi(gval[i]) + mt * rho[i], b.value + (kappa + mt) * rho[i]));
      argmin[i] = b.u;
    }
    values[t] = std::move(v);
  }

  bool any_nonempty = false;
  for (const auto& v : values)
    any_nonempty = any_nonempty || *std::min_element(v.begin(), v.end()) <= 0.0;
  if (!any_nonempty)
    throw SynthesisError(
        "synthesis produced empty sublevel sets at every stage; the grid is too coarse to "
        "resolve the terminal set (min terminal node value " +
        std::to_string(*std::min_element(values[T].begin(), values[T].end())) + ")");

  std::vector<ScalarFunction> stages;
  stages.reserve(T + 1);
  for (int t = 0; t <= T; ++t) stages.emplace_back(make_stage(t, values[t]));
  return StorageFunction(std::move(stages));
}

// ------------------------------------------------------------ input search

Vec minimizing_input(const ControlSystem& sys, const StorageFunction& v, int t, const Vec& x,
                     const InputSearchOptions& opts) {
  if (x.size() != sys.state_dim() || v.state_dim() != sys.state_dim())
    throw UsageError("minimizing_input: dimension mismatch");
  if (t < 0 || t >= v.horizon())
    throw UsageError("minimizing_input: stage must satisfy 0 <= t < T");
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  std::vector<int> levels(m);
  for (int j = 0; j < m; ++j) {
    levels[j] = opts.levels.size() == 1 ? opts.levels.front() : opts.levels.at(j);
    if (levels[j] < 2) throw UsageError("minimizing_input: need at least 2 levels per input");
  }
  const detail::InputLattice lattice(sys.input_box(), levels);
  const std::span<const double> xs(x.data(), n);

  auto objective = [&](std::span<const double> u) {
    std::array<double, kMaxDim> y{};
    rk4_step(sys, xs, u, std::span<double>(y.data(), n));
    return v.evaluate(t + 1, std::span<const double>(y.data(), n)).value;
  };

  std::size_t best_l = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < lattice.size(); ++l) {
    const double val = objective(lattice.point(l));
    if (detail::better(val, lattice.norm2(l), best, lattice.norm2(best_l))) {
      best = val;
      best_l = l;
    }
  }
  std::array<double, kMaxDim> u{};
  const auto p = lattice.point(best_l);
  std::copy(p.begin(), p.end(), u.begin());
  detail::golden_refine(objective, sys.input_box(), lattice.spacing(), std::span<double>(u.data(), m),
                        best, opts.refine_iterations);
  Vec out(m);
  for (int j = 0; j < m; ++j) out[j] = u[j];
  return out;
}

Vec select_viable_input(const ControlSystem& sys, const StorageFunction& v, int t, const Vec& x,
                        const InputSearchOptions& opts, double tol) {
  if (x.size() != v.state_dim()) throw UsageError("select_viable_input: dimension mismatch");
  const double vx = v(t, x);
  if (vx > tol)
    throw InfeasibleInputError("select_viable_input: V(" + std::to_string(t) + ", x) = " +
                                   std::to_string(vx) + " > 0, x is outside the stage sublevel set",
                               vx);
  return minimizing_input(sys, v, t, x, opts);
}

// ------------------------------------------------------------ verification

std::optional<std::vector<GridAxis>> sublevel_bounding_box(const StorageFunction& v, int t) {
  const auto* axes = v.grid_axes();
  if (!axes) throw UsageError("sublevel_bounding_box: V is not grid-based");
  const auto& g = std::get<GridFunction>(v.stage(t));
  const int n = g.num_vars();
  std::vector<double> lo(n, std::numeric_limits<double>::infinity());
  std::vector<double> hi(n, -std::numeric_limits<double>::infinity());
  std::vector<double> x(n);
  bool any = false;
  for (std::size_t k = 0; k < g.node_count(); ++k) {
    if (g.values()[k] > 0.0) continue;
    any = true;
    g.node_coords(k, x);
    for (int i = 0; i < n; ++i) {
      lo[i] = std::min(lo[i], x[i]);
      hi[i] = std::max(hi[i], x[i]);
    }
  }
  if (!any) return std::nullopt;
  std::vector<GridAxis> box(n);
  for (int i = 0; i < n; ++i) {
    const auto& a = (*axes)[i];
    box[i].lower = std::max(a.lower, lo[i] - 2.0 * a.spacing());
    box[i].upper = std::min(a.upper, hi[i] + 2.0 * a.spacing());
    box[i].count = 2;
  }
  return box;
}

namespace {

std::vector<GridAxis> sampling_box(const StorageFunction& v, int t, const VerifyOptions& opts,
                                   bool* empty_grid) {
  *empty_grid = false;
  if (opts.box) return *opts.box;
  if (!v.grid_axes()) throw UsageError("verify_storage: a sampling box is required for polynomial V");
  auto box = sublevel_bounding_box(v, t);
  if (!box) {
    *empty_grid = true;
    return *v.grid_axes();
  }
  return *box;
}

// Up to `count` uniform points of {V(t,.) <= 0} by rejection sampling.
std::vector<Vec> sample_sublevel(const StorageFunction& v, int t, const std::vector<GridAxis>& box,
                                 int count, int draws_per_sample, std::mt19937_64& rng) {
  const int n = v.state_dim();
  std::vector<std::uniform_real_distribution<double>> dist;
  for (const auto& a : box) dist.emplace_back(a.lower, a.upper);
  std::vector<Vec> out;
  const long long budget = static_cast<long long>(count) * draws_per_sample;
  Vec x(n);
  for (long long d = 0; d < budget && static_cast<int>(out.size()) < count; ++d) {
    for (int i = 0; i < n; ++i) x[i] = dist[i](rng);
    if (v(t, x) <= 0.0) out.push_back(x);
  }
  return out;
}

}  // namespace

VerifyReport verify_storage(const ControlSystem& sys, const StorageFunction& v, const VerifyOptions& opts) {
  if (v.state_dim() != sys.state_dim()) throw UsageError("verify_storage: dimension mismatch");
  if (opts.samples < 1 || !(opts.tol >= 0.0) || opts.draws_per_sample < 1)
    throw UsageError("verify_storage: invalid options");
  const int T = v.horizon();
  VerifyReport rep;
  rep.tol = opts.tol;
  rep.seed = opts.seed;
  rep.max_storage_gap = -std::numeric_limits<double>::infinity();
  rep.min_contraction_gap = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(opts.seed);

  std::vector<std::vector<Vec>> samples(T + 1);
  for (int t = 0; t <= T; ++t) {
    bool empty_grid = false;
    const auto box = sampling_box(v, t, opts, &empty_grid);
    StageReport sr;
    sr.stage = t;
    sr.worst_storage_gap = -std::numeric_limits<double>::infinity();
    if (!empty_grid) samples[t] = sample_sublevel(v, t, box, opts.samples, opts.draws_per_sample, rng);
    sr.samples = static_cast<int>(samples[t].size());
    sr.nonempty = sr.samples > 0;
    if (!sr.nonempty && !empty_grid && v.kind() == StorageFunction::Kind::Grid) {
      const auto& g = std::get<GridFunction>(v.stage(t));
      sr.nonempty = *std::min_element(g.values().begin(), g.values().end()) <= 0.0;
    }
    if (t < T) {
      for (const auto& x : samples[t]) {
        const Vec u = minimizing_input(sys, v, t, x, opts.input);
        const double gap = v(t + 1, rk4_step(sys, x, u)) - v(t, x);
        if (gap > sr.worst_storage_gap) {
          sr.worst_storage_gap = gap;
          sr.worst_point = x;
        }
      }
      if (sr.worst_storage_gap > rep.max_storage_gap) {
        rep.max_storage_gap = sr.worst_storage_gap;
        rep.storage_worst_stage = t;
        rep.storage_worst_point = sr.worst_point;
      }
    }
    rep.stages.push_back(std::move(sr));
  }

  rep.contraction_applicable = T >= 2;
  if (rep.contraction_applicable) {
    for (const auto& x : samples[2]) {
      if (x.norm() <= opts.origin_exclusion) continue;
      ++rep.contraction_samples;
      const double gap = v(2, x) - v(1, x);
      if (gap < rep.min_contraction_gap) {
        rep.min_contraction_gap = gap;
        rep.contraction_worst_point = x;
      }
    }
  }

  rep.storage_ok = rep.max_storage_gap <= opts.tol;
  rep.contraction_ok = !rep.contraction_applicable ||
                       (rep.contraction_samples > 0 && rep.min_contraction_gap > 0.0);
  rep.nonempty_ok = std::all_of(rep.stages.begin(), rep.stages.end(),
                                [](const StageReport& s) { return s.nonempty; });
  return rep;
}

VerifyReport verify_storage(const ControlSystem& sys, const StorageFunction& v, int samples, double tol) {
  VerifyOptions opts;
  opts.samples = samples;
  opts.tol = tol;
  return verify_storage(sys, v, opts);
}

namespace {

std::string fmt_point(const Vec& x) {
  if (x.size() == 0) return "-";
  std::ostringstream os;
  os << std::setprecision(6) << '(';
  for (int i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ')';
  return os.str();
}

}  // namespace

void VerifyReport::write_text(std::ostream& out) const {
  out << std::setprecision(6);
  out << "storage check:     " << (storage_ok ? "PASS" : "FAIL") << "  max gap " << max_storage_gap
      << " (tol " << tol << ") at stage " << storage_worst_stage << ' ' << fmt_point(storage_worst_point)
      << '\n';
  out << "contraction check: " << (contraction_ok ? "PASS" : "FAIL");
  if (contraction_applicable)
    out << "  min V(2)-V(1) " << min_contraction_gap << " over " << contraction_samples << " samples "
        << fmt_point(contraction_worst_point);
  else
    out << "  (horizon < 2, not applicable)";
  out << '\n';
  int empty = 0;
  for (const auto& s : stages) empty += s.nonempty ? 0 : 1;
  out << "nonempty check:    " << (nonempty_ok ? "PASS" : "FAIL") << "  " << empty << " of " << stages.size()
      << " stages empty\n";
  out << "seed " << seed << '\n';
  out << "overall: " << (passed() ? "PASS" : "FAIL") << '\n';
}

void VerifyReport::write_csv(std::ostream& out) const {
  out << std::setprecision(17);
  out << "stage,samples,worst_storage_gap,nonempty\n";
  for (const auto& s : stages)
    out << s.stage << ',' << s.samples << ',' << s.worst_storage_gap << ',' << (s.nonempty ? 1 : 0) << '\n';
}

}  // namespace onestep
