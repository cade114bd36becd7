#include "onestep/nlpsolve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

#include "onestep/errors.hpp"

namespace onestep {

void SolverConfig::validate() const {
  if (max_outer_iters < 1 || max_inner_iters < 1) throw UsageError("SolverConfig: iteration limits must be >= 1");
  if (!(constraint_tol > 0.0) || !(stationarity_tol > 0.0)) throw UsageError("SolverConfig: tolerances must be > 0");
  if (!(penalty_init > 0.0)) throw UsageError("SolverConfig: penalty_init must be > 0");
  if (!(penalty_growth > 1.0)) throw UsageError("SolverConfig: penalty_growth must be > 1");
  if (multistart_points < 1) throw UsageError("SolverConfig: multistart_points must be >= 1");
  if (!(fd_step > 0.0)) throw UsageError("SolverConfig: fd_step must be > 0");
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::MaxIters: return "max-iters";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

SolveStatus parse_status(const std::string& s) {
  if (s == "converged") return SolveStatus::Converged;
  if (s == "max-iters") return SolveStatus::MaxIters;
  if (s == "infeasible") return SolveStatus::Infeasible;
  throw UsageError("unknown solve status '" + s + "'");
}

SmoothFunction SmoothFunction::constant(double c) {
  SmoothFunction f;
  f.value = [c](const Vec&) { return c; };
  f.value_and_gradient = [c](const Vec& z, Vec& g) {
    g = Vec::Zero(z.size());
    return c;
  };
  return f;
}

void Bounds::validate() const {
  if (lower.size() == 0 || lower.size() != upper.size()) throw UsageError("Bounds: size mismatch");
  for (int i = 0; i < lower.size(); ++i)
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(lower[i] <= upper[i]))
      throw UsageError("Bounds: need finite lower <= upper");
}

std::vector<Vec> lattice_starts(const Bounds& box, int count) {
  box.validate();
  const int d = box.dim();
  std::vector<Vec> out;
  if (count < 1) return out;
  if (count == 1) {
    out.push_back(0.5 * (box.lower + box.upper));
    return out;
  }
  int k = static_cast<int>(std::floor(std::pow(static_cast<double>(count), 1.0 / d) + 1e-9));
  if (k >= 2) {
    long long total = 1;
    for (int i = 0; i < d; ++i) total *= k;
    for (long long idx = 0; idx < total; ++idx) {
      Vec z(d);
      long long rem = idx;
      for (int i = d - 1; i >= 0; --i) {
        const int j = static_cast<int>(rem % k);
        rem /= k;
        z[i] = box.lower[i] + (box.upper[i] - box.lower[i]) * j / (k - 1);
      }
      out.push_back(z);
    }
    return out;
  }
  for (int j = 0; j < count; ++j) {
    const double s = static_cast<double>(j) / (count - 1);
    out.push_back(box.lower + s * (box.upper - box.lower));
  }
  return out;
}

namespace {

std::string describe(const Vec& z) {
  std::ostringstream os;
  os << '(';
  const int shown = std::min<int>(static_cast<int>(z.size()), 6);
  for (int i = 0; i < shown; ++i) os << (i ? ", " : "") << z[i];
  if (z.size() > shown) os << ", ...";
  os << ')';
  return os.str();
}

double checked(double v, const char* what, const Vec& z) {
  if (!std::isfinite(v))
    throw NumericError(std::string("minimize: non-finite ") + what + " at z = " + describe(z));
  return v;
}

// Evaluation layer: values, gradients (analytic or central differences).
class Evaluator {
 public:
  Evaluator(const SmoothFunction& f, const SmoothFunction& c, const Bounds& box, const SolverConfig& cfg)
      : f_(f), c_(c), box_(box), cfg_(cfg) {
    analytic_ = cfg.gradient_mode == GradientMode::AnalyticIfAvailable;
  }

  double f(const Vec& z) const { return checked(f_.value(z), "objective", z); }
  double c(const Vec& z) const { return checked(c_.value(z), "constraint", z); }

  double f_grad(const Vec& z, Vec& g) const { return grad(f_, z, g, "objective"); }
  double c_grad(const Vec& z, Vec& g) const { return grad(c_, z, g, "constraint"); }

  double step(const Vec& z, int i) const { return cfg_.fd_step * (1.0 + std::abs(z[i])); }

 private:
  double grad(const SmoothFunction& fn, const Vec& z, Vec& g, const char* what) const {
    if (analytic_ && fn.value_and_gradient) {
      const double v = checked(fn.value_and_gradient(z, g), what, z);
      for (int i = 0; i < g.size(); ++i) checked(g[i], what, z);
      return v;
    }
    const double v = checked(fn.value(z), what, z);
    g.resize(z.size());
    Vec zp = z;
    for (int i = 0; i < z.size(); ++i) {
      const double h = step(z, i);
      const double up = std::min(z[i] + h, box_.upper[i]);
      const double lo = std::max(z[i] - h, box_.lower[i]);
      double fp = v, fm = v;
      if (up > z[i]) {
        zp[i] = up;
        fp = checked(fn.value(zp), what, zp);
      }
      if (lo < z[i]) {
        zp[i] = lo;
        fm = checked(fn.value(zp), what, zp);
      }
      zp[i] = z[i];
      g[i] = up > lo ? (fp - fm) / (up - lo) : 0.0;
    }
    return v;
  }

  const SmoothFunction& f_;
  const SmoothFunction& c_;
  const Bounds& box_;
  const SolverConfig& cfg_;
  bool analytic_ = false;
};

struct StartOutcome {
  Vec z;
  double f = 0.0;
  double c = 0.0;
  double stationarity = std::numeric_limits<double>::infinity();
  bool converged = false;
  int outer = 0;
  int inner = 0;
  std::vector<double> history;
};

double proj_grad_norm(const Vec& z, const Vec& g, const Bounds& box) {
  return (z - box.project(z - g)).lpNorm<Eigen::Infinity>();
}

// Augmented Lagrangian value and gradient for the multiplier estimate lambda.
struct AugLag {
  const Evaluator& ev;
  double lambda;
  double rho;

  double value(const Vec& z) const {
    const double s = std::max(0.0, ev.c(z) + lambda / rho);
    return ev.f(z) + 0.5 * rho * s * s - 0.5 * lambda * lambda / rho;
  }
  double value_grad(const Vec& z, Vec& g, Vec& scratch) const {
    const double fz = ev.f_grad(z, g);
    const double cz = ev.c_grad(z, scratch);
    const double s = std::max(0.0, cz + lambda / rho);
    if (s > 0.0) g += rho * s * scratch;
    return fz + 0.5 * rho * s * s - 0.5 * lambda * lambda / rho;
  }
};

// One-sided difference measure of the steepest coordinate descent slope of
// the Lagrangian; zero at kink minimizers.
double difference_stationarity(const Evaluator& ev, const Bounds& box, const Vec& z, double lambda) {
  auto lag = [&](const Vec& y) { return ev.f(y) + lambda * ev.c(y); };
  const double l0 = lag(z);
  double worst = 0.0;
  Vec y = z;
  for (int i = 0; i < z.size(); ++i) {
    const double h = ev.step(z, i);
    if (z[i] + h <= box.upper[i]) {
      y[i] = z[i] + h;
      worst = std::max(worst, -(lag(y) - l0) / h);
    }
    if (z[i] - h >= box.lower[i]) {
      y[i] = z[i] - h;
      worst = std::max(worst, -(lag(y) - l0) / h);
    }
    y[i] = z[i];
  }
  return worst;
}

double stationarity(const Evaluator& ev, const Bounds& box, const Vec& z, double lambda,
                    double tol) {
  Vec gf, gc;
  ev.f_grad(z, gf);
  ev.c_grad(z, gc);
  const double pg = proj_grad_norm(z, gf + lambda * gc, box);
  if (pg <= tol) return pg;
  return std::min(pg, difference_stationarity(ev, box, z, lambda));
}

StartOutcome run_start(const Evaluator& ev, const Bounds& box, const SolverConfig& cfg, Vec z) {
  StartOutcome out;
  double lambda = 0.0;
  double rho = cfg.penalty_init;
  double prev_viol = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(z.size());
  Vec g(n), gn(n), scratch(n), zn(n);

  for (int outer = 1; outer <= cfg.max_outer_iters; ++outer) {
    out.outer = outer;
    const AugLag al{ev, lambda, rho};
    double lz = al.value_grad(z, g, scratch);
    double alpha = 1.0;
    // Nonmonotone (max of the last kMemory values) Armijo test on the projected BB step.
    constexpr int kMemory = 10;
    std::deque<double> recent{lz};
    for (int it = 0; it < cfg.max_inner_iters; ++it) {
      if (proj_grad_norm(z, g, box) <= 0.1 * cfg.stationarity_tol) break;
      ++out.inner;
      const Vec d = box.project(z - alpha * g) - z;
      const double slope = g.dot(d);
      if (!(slope < 0.0)) break;
      const double ref = *std::max_element(recent.begin(), recent.end());
      bool accepted = false;
      double t = 1.0;
      for (int bt = 0; bt < 60; ++bt) {
        zn = z + t * d;
        if (al.value(zn) <= ref + 1e-4 * t * slope) {
          accepted = true;
          break;
        }
        t *= 0.5;
      }
      if (!accepted) break;
      const double lnv = al.value_grad(zn, gn, scratch);
      const Vec s = zn - z;
      const Vec y = gn - g;
      const double sy = s.dot(y);
      alpha = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-12, 1e12) : std::min(2.0 * alpha, 1e12);
      z = zn;
      g = gn;
      lz = lnv;
      recent.push_back(lz);
      if (static_cast<int>(recent.size()) > kMemory) recent.pop_front();
    }

    const double cz = ev.c(z);
    const double viol = std::max(0.0, cz);
    out.history.push_back(viol);
    lambda = std::max(0.0, lambda + rho * cz);
    const double stat = stationarity(ev, box, z, lambda, cfg.stationarity_tol);
    out.z = z;
    out.c = cz;
    out.f = ev.f(z);
    out.stationarity = stat;
    if (viol <= cfg.constraint_tol && stat <= cfg.stationarity_tol) {
      out.converged = true;
      break;
    }
    if (viol > 0.25 * prev_viol) rho *= cfg.penalty_growth;
    prev_viol = viol;
  }
  return out;
}

bool lex_less(const Vec& a, const Vec& b) {
  for (int i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

bool better_objective(const StartOutcome& a, const StartOutcome& b) {
  const double tie = 1e-12 * (1.0 + std::abs(b.f));
  if (a.f < b.f - tie) return true;
  if (a.f > b.f + tie) return false;
  return lex_less(a.z, b.z);
}

}  // namespace

SolveResult minimize(const SmoothFunction& objective, const SmoothFunction& inequality, const Bounds& box,
                     const SolverConfig& cfg, const std::vector<Vec>& starts) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.validate();
  box.validate();
  if (!objective.value || !inequality.value) throw UsageError("minimize: objective and inequality required");

  std::vector<Vec> init = starts.empty() ? lattice_starts(box, cfg.multistart_points) : starts;
  for (auto& z : init) {
    if (z.size() != box.dim()) throw UsageError("minimize: start dimension mismatch");
    const Vec p = box.project(z);
    if ((p - z).lpNorm<Eigen::Infinity>() > 1e-12) throw UsageError("minimize: start outside the box");
    z = p;
  }

  const Evaluator ev(objective, inequality, box, cfg);
  std::vector<StartOutcome> outcomes;
  outcomes.reserve(init.size());
  for (const auto& z : init) outcomes.push_back(run_start(ev, box, cfg, z));

  const StartOutcome* best = nullptr;
  SolveStatus status = SolveStatus::Infeasible;
  for (const auto& o : outcomes)
    if (o.converged && (!best || better_objective(o, *best))) best = &o;
  if (best) {
    status = SolveStatus::Converged;
  } else {
    for (const auto& o : outcomes)
      if (o.c <= cfg.constraint_tol && (!best || better_objective(o, *best))) best = &o;
    if (best) {
      status = SolveStatus::MaxIters;
    } else {
      for (const auto& o : outcomes)
        if (!best || o.c < best->c || (o.c == best->c && lex_less(o.z, best->z))) best = &o;
    }
  }

  SolveResult r;
  r.minimizer = best->z;
  r.objective = best->f;
  r.constraint_value = best->c;
  r.status = status;
  r.stationarity = best->stationarity;
  r.violation_history = best->history;
  for (const auto& o : outcomes) {
    r.outer_iterations += o.outer;
    r.inner_iterations += o.inner;
  }
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace onestep
