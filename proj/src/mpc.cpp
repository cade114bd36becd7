#include "onestep/mpc.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "onestep/errors.hpp"
#include "onestep/synth.hpp"

namespace onestep {

namespace {

std::span<const double> cspan(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

Bounds input_bounds(const ControlSystem& sys, int repeat) {
  const int m = sys.input_dim();
  Bounds b{Vec(m * repeat), Vec(m * repeat)};
  for (int k = 0; k < repeat; ++k) {
    b.lower.segment(k * m, m) = sys.input_box().lower;
    b.upper.segment(k * m, m) = sys.input_box().upper;
  }
  return b;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// ------------------------------------------------------------ OneStepProblem

OneStepProblem::OneStepProblem(const ControlSystem& sys, const StorageFunction& v, CostWeights weights,
                               double alpha, Vec x0)
    : sys_(&sys), v_(&v), weights_(std::move(weights)), alpha_(alpha), x0_(std::move(x0)) {
  if (!(alpha_ > 0.0) || !std::isfinite(alpha_)) throw UsageError("OneStepProblem: alpha must be > 0");
  if (v.horizon() < 2) throw UsageError("OneStepProblem: storage horizon must be >= 2");
  if (v.state_dim() != sys.state_dim() || x0_.size() != sys.state_dim())
    throw UsageError("OneStepProblem: dimension mismatch");
  if (weights_.Q().rows() != sys.state_dim() || weights_.R().rows() != sys.input_dim())
    throw UsageError("OneStepProblem: weight dimensions do not match the system");
}

double OneStepProblem::storage_term(const Vec& xp, Vec* grad_x, bool as_constraint) const {
  const auto e = v_->evaluate(1, cspan(xp));
  if (!as_constraint || !e.extrapolated) {
    if (grad_x) *grad_x = v_->gradient(1, xp);
    return e.value;
  }
  const auto& axes = *v_->grid_axes();
  Vec clamped = xp;
  for (int i = 0; i < xp.size(); ++i) clamped[i] = std::clamp(xp[i], axes[i].lower, axes[i].upper);
  const Vec d = xp - clamped;
  const double dist = d.norm();
  if (grad_x) {
    *grad_x = e.value > 0.0 ? v_->gradient(1, xp) : Vec::Zero(xp.size());
    if (dist > 0.0) *grad_x += d / dist;
  }
  return std::max(e.value, 0.0) + dist;
}

double OneStepProblem::objective(const Vec& u) const {
  const Vec xp = rk4_step(*sys_, x0_, u);
  return alpha_ * storage_term(xp, nullptr, false) + stage_cost(weights_, x0_, u);
}

double OneStepProblem::objective(const Vec& u, Vec& grad) const {
  Vec xp(sys_->state_dim());
  SmallMat a, b;
  rk4_step(*sys_, cspan(x0_), cspan(u), std::span<double>(xp.data(), xp.size()), a, b);
  Vec gx;
  const double v = storage_term(xp, &gx, false);
  grad = alpha_ * (b.transpose() * gx) + 2.0 * (weights_.R() * u);
  return alpha_ * v + stage_cost(weights_, x0_, u);
}

double OneStepProblem::constraint(const Vec& u) const {
  return storage_term(rk4_step(*sys_, x0_, u), nullptr, true);
}

double OneStepProblem::constraint(const Vec& u, Vec& grad) const {
  Vec xp(sys_->state_dim());
  SmallMat a, b;
  rk4_step(*sys_, cspan(x0_), cspan(u), std::span<double>(xp.data(), xp.size()), a, b);
  Vec gx;
  const double v = storage_term(xp, &gx, true);
  grad = b.transpose() * gx;
  return v;
}

SmoothFunction OneStepProblem::objective_function() const {
  return {[this](const Vec& u) { return objective(u); },
          [this](const Vec& u, Vec& g) { return objective(u, g); }};
}

SmoothFunction OneStepProblem::constraint_function() const {
  return {[this](const Vec& u) { return constraint(u); },
          [this](const Vec& u, Vec& g) { return constraint(u, g); }};
}

Bounds OneStepProblem::bounds() const { return input_bounds(*sys_, 1); }

OneStepSolution solve_one_step(const OneStepProblem& p, const SolverConfig& cfg, const std::optional<Vec>& warm_start) {
  const Bounds box = p.bounds();
  std::vector<Vec> starts = lattice_starts(box, cfg.multistart_points);
  if (warm_start) {
    if (warm_start->size() != box.dim()) throw UsageError("solve_one_step: warm start dimension mismatch");
    starts.push_back(box.project(*warm_start));
  }
  starts.push_back(minimizing_input(p.sys(), p.storage(), 0, p.x0()));
  OneStepSolution sol;
  sol.result = minimize(p.objective_function(), p.constraint_function(), box, cfg, starts);
  sol.u = sol.result.minimizer;
  sol.x_next = rk4_step(p.sys(), p.x0(), sol.u);
  return sol;
}

// -------------------------------------------------------- FullHorizonProblem

struct FullHorizonProblem::Cache {
  Vec z;
  bool valid = false;
  bool has_gradient = false;
  std::vector<Vec> states;
  double objective = 0.0;
  double constraint = 0.0;
  double max_violation = 0.0;
  Vec objective_grad;
  Vec constraint_grad;
  // Scratch reused across evaluations.
  std::vector<SmallMat> as, bs;
  std::vector<double> terms, w;
};

FullHorizonProblem::FullHorizonProblem(const ControlSystem& sys, CostWeights weights, int horizon, Vec x0,
                                       double sharpness)
    : sys_(&sys),
      weights_(std::move(weights)),
      horizon_(horizon),
      x0_(std::move(x0)),
      beta_(sharpness),
      cache_(std::make_shared<Cache>()) {
  if (horizon_ < 2) throw UsageError("FullHorizonProblem: horizon must be >= 2");
  if (x0_.size() != sys.state_dim()) throw UsageError("FullHorizonProblem: x0 dimension mismatch");
  if (!(beta_ > 0.0)) throw UsageError("FullHorizonProblem: sharpness must be > 0");
  if (weights_.Q().rows() != sys.state_dim() || weights_.R().rows() != sys.input_dim() ||
      weights_.P().rows() != sys.state_dim())
    throw UsageError("FullHorizonProblem: weight dimensions do not match the system");
}

Vec FullHorizonProblem::stack(const std::vector<Vec>& inputs) const {
  const int m = sys_->input_dim();
  if (static_cast<int>(inputs.size()) != horizon_) throw UsageError("FullHorizonProblem: need T inputs");
  Vec z(decision_dim());
  for (int t = 0; t < horizon_; ++t) {
    if (inputs[t].size() != m) throw UsageError("FullHorizonProblem: input dimension mismatch");
    z.segment(t * m, m) = inputs[t];
  }
  return z;
}

std::vector<Vec> FullHorizonProblem::unstack(const Vec& z) const {
  const int m = sys_->input_dim();
  if (z.size() != decision_dim()) throw UsageError("FullHorizonProblem: decision dimension mismatch");
  std::vector<Vec> out(horizon_);
  for (int t = 0; t < horizon_; ++t) out[t] = z.segment(t * m, m);
  return out;
}

const FullHorizonProblem::Cache& FullHorizonProblem::evaluate(const Vec& z, bool with_gradient) const {
  Cache& c = *cache_;
  if (c.valid && (c.has_gradient || !with_gradient) && c.z.size() == z.size() && c.z == z) return c;
  if (z.size() != decision_dim()) throw UsageError("FullHorizonProblem: decision dimension mismatch");

  const int n = sys_->state_dim();
  const int m = sys_->input_dim();
  const int T = horizon_;
  const SmallMat Q = weights_.Q();
  const SmallMat R = weights_.R();
  const SmallMat P = weights_.P();

  c.states.resize(T + 1);
  c.states[0] = x0_;
  if (with_gradient) {
    c.as.resize(T);
    c.bs.resize(T);
  }
  double cost = 0.0;
  SmallVec xt(n), u(m);
  for (int t = 0; t < T; ++t) {
    u = z.segment(t * m, m);
    xt = c.states[t];
    c.states[t + 1].resize(n);
    const std::span<double> out(c.states[t + 1].data(), n);
    const std::span<const double> us(u.data(), m);
    if (with_gradient)
      rk4_step(*sys_, cspan(c.states[t]), us, out, c.as[t], c.bs[t]);
    else
      rk4_step(*sys_, cspan(c.states[t]), us, out);
    cost += xt.dot(Q * xt) + u.dot(R * u);
  }
  xt = c.states[T];
  cost += xt.dot(P * xt);

  // Constraint terms: g(x_1..x_T), then l(x_T).
  const auto& gpoly = sys_->state_constraint();
  const auto& lpoly = sys_->terminal_constraint();
  auto& terms = c.terms;
  terms.resize(T + 1);
  for (int t = 1; t <= T; ++t) terms[t - 1] = gpoly.eval(cspan(c.states[t]));
  terms[T] = lpoly.eval(cspan(c.states[T]));
  double mx = -std::numeric_limits<double>::infinity();
  for (double s : terms) mx = std::max(mx, s);
  double sum = 0.0;
  for (double s : terms) sum += std::exp(beta_ * (s - mx));
  c.objective = cost;
  c.max_violation = mx;
  c.constraint = mx + std::log(sum) / beta_;

  if (with_gradient) {
    c.objective_grad.resize(z.size());
    c.constraint_grad.resize(z.size());
    auto& w = c.w;
    w.resize(T + 1);
    for (int k = 0; k <= T; ++k) w[k] = std::exp(beta_ * (terms[k] - mx)) / sum;

    SmallVec lam = 2.0 * (P * xt);
    SmallVec dg(n), dl(n), tmp(n);
    gpoly.gradient(cspan(c.states[T]), std::span<double>(dg.data(), n));
    lpoly.gradient(cspan(c.states[T]), std::span<double>(dl.data(), n));
    SmallVec mu = w[T - 1] * dg + w[T] * dl;
    for (int t = T - 1; t >= 0; --t) {
      u = z.segment(t * m, m);
      const SmallMat& a = c.as[t];
      const SmallMat& b = c.bs[t];
      c.objective_grad.segment(t * m, m) = 2.0 * (R * u) + b.transpose() * lam;
      c.constraint_grad.segment(t * m, m) = b.transpose() * mu;
      if (t > 0) {
        xt = c.states[t];
        tmp.noalias() = a.transpose() * lam;
        lam = 2.0 * (Q * xt) + tmp;
        gpoly.gradient(cspan(c.states[t]), std::span<double>(dg.data(), n));
        tmp.noalias() = a.transpose() * mu;
        mu = w[t - 1] * dg + tmp;
      }
    }
  }
  c.z = z;
  c.valid = true;
  c.has_gradient = with_gradient;
  return c;
}

std::vector<Vec> FullHorizonProblem::rollout(const Vec& z) const { return evaluate(z, false).states; }
double FullHorizonProblem::objective(const Vec& z) const { return evaluate(z, false).objective; }
double FullHorizonProblem::constraint(const Vec& z) const { return evaluate(z, false).constraint; }
double FullHorizonProblem::max_violation(const Vec& z) const { return evaluate(z, false).max_violation; }

double FullHorizonProblem::objective(const Vec& z, Vec& grad) const {
  const auto& c = evaluate(z, true);
  grad = c.objective_grad;
  return c.objective;
}

double FullHorizonProblem::constraint(const Vec& z, Vec& grad) const {
  const auto& c = evaluate(z, true);
  grad = c.constraint_grad;
  return c.constraint;
}

SmoothFunction FullHorizonProblem::objective_function() const {
  return {[this](const Vec& z) { return objective(z); },
          [this](const Vec& z, Vec& g) { return objective(z, g); }};
}

SmoothFunction FullHorizonProblem::constraint_function() const {
  return {[this](const Vec& z) { return constraint(z); },
          [this](const Vec& z, Vec& g) { return constraint(z, g); }};
}

Bounds FullHorizonProblem::bounds() const { return input_bounds(*sys_, horizon_); }

FullHorizonSolution solve_full_horizon(const FullHorizonProblem& p, const SolverConfig& cfg,
                                       const std::optional<std::vector<Vec>>& warm_start) {
  const Bounds box = p.bounds();
  std::vector<Vec> starts;
  if (warm_start)
    starts.push_back(box.project(p.stack(*warm_start)));
  else
    starts = lattice_starts(box, cfg.multistart_points);
  FullHorizonSolution sol;
  sol.result = minimize(p.objective_function(), p.constraint_function(), box, cfg, starts);
  sol.inputs = p.unstack(sol.result.minimizer);
  sol.states = p.rollout(sol.result.minimizer);
  sol.max_violation = p.max_violation(sol.result.minimizer);
  return sol;
}

// --------------------------------------------------------------- closed loop

TrajectoryLog run_closed_loop(const Controller& controller, const ControlSystem& model, const ControlSystem& plant,
                              const Vec& x0, int steps, const SolverConfig& cfg) {
  if (steps < 0) throw UsageError("run_closed_loop: steps must be >= 0");
  if (model.state_dim() != plant.state_dim() || model.input_dim() != plant.input_dim())
    throw UsageError("run_closed_loop: model and plant dimensions differ");
  if (x0.size() != model.state_dim()) throw UsageError("run_closed_loop: x0 dimension mismatch");
  cfg.validate();

  const StorageFunction* storage = std::visit([](const auto& c) { return c.storage; }, controller);
  const auto* one = std::get_if<OneStepController>(&controller);
  const auto* full = std::get_if<FullHorizonController>(&controller);
  if (one) {
    if (!storage) throw UsageError("run_closed_loop: one-step controller needs a storage function");
    const double v0 = (*storage)(0, x0);
    if (v0 > 0.0)
      throw PreconditionError("initial state outside {V(0,.) <= 0}: V(0, x0) = " + std::to_string(v0));
  }
  const CostWeights& weights = one ? one->weights : full->weights;

  TrajectoryLog log;
  log.states.push_back(x0);
  std::optional<Vec> warm_u;
  std::optional<std::vector<Vec>> warm_seq;
  Vec x = x0;
  for (int k = 0; k < steps; ++k) {
    Vec u;
    SolveStatus status;
    double elapsed;
    if (one) {
      const OneStepProblem prob(model, *storage, weights, one->alpha, x);
      const auto t0 = std::chrono::steady_clock::now();
      auto sol = solve_one_step(prob, cfg, warm_u);
      elapsed = seconds_since(t0);
      u = sol.u;
      status = sol.result.status;
      warm_u = u;
    } else {
      const FullHorizonProblem prob(model, weights, full->horizon, x);
      const auto t0 = std::chrono::steady_clock::now();
      auto sol = solve_full_horizon(prob, cfg, warm_seq);
      elapsed = seconds_since(t0);
      u = sol.inputs.front();
      status = sol.result.status;
      std::vector<Vec> shifted(sol.inputs.begin() + 1, sol.inputs.end());
      shifted.push_back(sol.inputs.back());
      warm_seq = std::move(shifted);
    }
    const Vec xn = rk4_step(plant, x, u);
    log.inputs.push_back(u);
    log.stage_costs.push_back(stage_cost(weights, x, u));
    log.storage_values.push_back(storage ? (*storage)(1, xn) : std::numeric_limits<double>::quiet_NaN());
    log.solve_times.push_back(elapsed);
    log.statuses.push_back(status);
    log.flagged.push_back(status != SolveStatus::Converged);
    log.states.push_back(xn);
    x = xn;
  }
  return log;
}

void TrajectoryLog::write_csv(std::ostream& out) const {
  const int n = states.empty() ? 0 : static_cast<int>(states.front().size());
  const int m = inputs.empty() ? 0 : static_cast<int>(inputs.front().size());
  out << "t";
  for (int i = 1; i <= n; ++i) out << ",x_" << i;
  for (int j = 1; j <= m; ++j) out << ",u_" << j;
  out << ",stage_cost,V1_next,eq11_residual,solve_time_s,status\n";
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(17);
  auto num = [&](double v) {
    if (std::isnan(v))
      out << "nan";
    else
      out << v;
  };
  for (std::size_t t = 0; t < states.size(); ++t) {
    out << t;
    for (int i = 0; i < n; ++i) {
      out << ',';
      num(states[t][i]);
    }
    if (t < inputs.size()) {
      for (int j = 0; j < m; ++j) {
        out << ',';
        num(inputs[t][j]);
      }
      out << ',';
      num(stage_costs[t]);
      out << ',';
      num(storage_values[t]);
      out << ',';
      if (t < eq11_residuals.size()) num(eq11_residuals[t]);
      out << ',';
      num(solve_times[t]);
      out << ',' << to_string(statuses[t]);
    } else {
      for (int j = 0; j < m + 5; ++j) out << ',';
    }
    out << '\n';
  }
  out.flags(flags);
  out.precision(prec);
}

}  // namespace onestep
