#include "onestep/dynamics.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "onestep/errors.hpp"

namespace onestep {

namespace {

using Buf = std::array<double, kMaxDim>;

std::span<const double> cspan(const Vec& v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

std::string describe(std::span<const double> v) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ')';
  return os.str();
}

Vec to_vec(std::span<const double> v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  return out;
}

}  // namespace

// ------------------------------------------------------------------ InputBox

bool InputBox::contains(const Vec& u) const {
  if (u.size() != lower.size()) return false;
  return (u.array() >= lower.array()).all() && (u.array() <= upper.array()).all();
}

Vec InputBox::clamp(const Vec& u) const { return u.cwiseMax(lower).cwiseMin(upper); }

void InputBox::validate() const {
  if (lower.size() == 0 || lower.size() != upper.size())
    throw UsageError("InputBox: lower/upper must be non-empty and of equal length");
  if (lower.size() > kMaxDim) throw UsageError("InputBox: input dimension exceeds kMaxDim");
  for (int i = 0; i < lower.size(); ++i)
    if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]) || !(lower[i] < upper[i]))
      throw UsageError("InputBox: need finite lower < upper in every component");
}

// --------------------------------------------------------------- VectorField

VectorField::VectorField(int state_dim, int input_dim, Fn f, JacobianFn jac)
    : n_(state_dim), m_(input_dim), f_(std::move(f)), jac_(std::move(jac)) {
  if (n_ < 1 || m_ < 1 || n_ > kMaxDim || m_ > kMaxDim)
    throw UsageError("VectorField: dimensions must lie in 1.." + std::to_string(kMaxDim));
  if (!f_) throw UsageError("VectorField: empty function");
}

VectorField VectorField::from_polynomials(int state_dim, int input_dim,
                                          std::vector<Polynomial> components) {
  if (static_cast<int>(components.size()) != state_dim)
    throw UsageError("VectorField: need one polynomial per state component");
  const int nv = state_dim + input_dim;
  std::vector<std::vector<Polynomial>> partials(state_dim);
  for (int i = 0; i < state_dim; ++i) {
    if (components[i].num_vars() != nv)
      throw UsageError("VectorField: component polynomials must have n + m variables");
    for (int j = 0; j < nv; ++j) partials[i].push_back(components[i].derivative(j));
  }
  auto f = [components, state_dim, input_dim](std::span<const double> x, std::span<const double> u,
                                              std::span<double> xdot) {
    Buf z{};
    for (int i = 0; i < state_dim; ++i) z[i] = x[i];
    for (int j = 0; j < input_dim; ++j) z[state_dim + j] = u[j];
    const std::span<const double> zs(z.data(), state_dim + input_dim);
    for (int i = 0; i < state_dim; ++i) xdot[i] = components[i].eval(zs);
  };
  auto jac = [partials, state_dim, input_dim](std::span<const double> x, std::span<const double> u,
                                              SmallMat& dfdx, SmallMat& dfdu) {
    std::array<double, 2 * kMaxDim> z{};
    for (int i = 0; i < state_dim; ++i) z[i] = x[i];
    for (int j = 0; j < input_dim; ++j) z[state_dim + j] = u[j];
    const std::span<const double> zs(z.data(), state_dim + input_dim);
    for (int i = 0; i < state_dim; ++i) {
      for (int j = 0; j < state_dim; ++j) dfdx(i, j) = partials[i][j].eval(zs);
      for (int j = 0; j < input_dim; ++j) dfdu(i, j) = partials[i][state_dim + j].eval(zs);
    }
  };
  if (state_dim + input_dim > 2 * kMaxDim) throw UsageError("VectorField: too many variables");
  return VectorField(state_dim, input_dim, std::move(f), std::move(jac));
}

void VectorField::eval(std::span<const double> x, std::span<const double> u, std::span<double> xdot) const {
  f_(x, u, xdot);
}

Vec VectorField::operator()(const Vec& x, const Vec& u) const {
  if (x.size() != n_ || u.size() != m_) throw UsageError("VectorField: dimension mismatch");
  Vec out(n_);
  f_(cspan(x), cspan(u), std::span<double>(out.data(), n_));
  return out;
}

void VectorField::jacobian(std::span<const double> x, std::span<const double> u, SmallMat& dfdx,
                           SmallMat& dfdu) const {
  dfdx.resize(n_, n_);
  dfdu.resize(n_, m_);
  if (jac_) {
    jac_(x, u, dfdx, dfdu);
    return;
  }
  Buf xp{}, up{}, fp{}, fm{};
  for (int i = 0; i < n_; ++i) xp[i] = x[i];
  for (int j = 0; j < m_; ++j) up[j] = u[j];
  const std::span<const double> xs(xp.data(), n_), us(up.data(), m_);
  const std::span<double> fps(fp.data(), n_), fms(fm.data(), n_);
  for (int j = 0; j < n_ + m_; ++j) {
    double& z = j < n_ ? xp[j] : up[j - n_];
    const double z0 = z;
    const double step = 1e-6 * (1.0 + std::abs(z0));
    z = z0 + step;
    f_(xs, us, fps);
    z = z0 - step;
    f_(xs, us, fms);
    z = z0;
    for (int i = 0; i < n_; ++i) {
      const double d = (fp[i] - fm[i]) / (2.0 * step);
      if (j < n_)
        dfdx(i, j) = d;
      else
        dfdu(i, j - n_) = d;
    }
  }
}

// ------------------------------------------------------------- ControlSystem

ControlSystem::ControlSystem(std::string name, VectorField field, InputBox inputs,
                             Polynomial state_constraint, Polynomial terminal_constraint,
                             double step_size)
    : name_(std::move(name)),
      field_(std::move(field)),
      inputs_(std::move(inputs)),
      g_(std::move(state_constraint)),
      l_(std::move(terminal_constraint)),
      h_(step_size) {
  if (field_.state_dim() < 1) throw UsageError("ControlSystem: empty vector field");
  inputs_.validate();
  if (inputs_.dim() != field_.input_dim()) throw UsageError("ControlSystem: input box dimension mismatch");
  if (g_.num_vars() != field_.state_dim() || l_.num_vars() != field_.state_dim())
    throw UsageError("ControlSystem: constraint polynomials must be functions of the state");
  if (!(std::isfinite(h_) && h_ > 0.0)) throw UsageError("ControlSystem: step size must be positive");
}

// --------------------------------------------------------------- CostWeights

bool is_symmetric_positive_definite(const Mat& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!m.allFinite()) return false;
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + m.cwiseAbs().maxCoeff())) return false;
  Eigen::LLT<Mat> llt(m);
  return llt.info() == Eigen::Success;
}

CostWeights::CostWeights(Mat q, Mat r, Mat p) : q_(std::move(q)), r_(std::move(r)), p_(std::move(p)) {
  if (!is_symmetric_positive_definite(q_)) throw UsageError("CostWeights: Q must be symmetric positive definite");
  if (!is_symmetric_positive_definite(r_)) throw UsageError("CostWeights: R must be symmetric positive definite");
  if (!is_symmetric_positive_definite(p_)) throw UsageError("CostWeights: P must be symmetric positive definite");
  if (p_.rows() != q_.rows()) throw UsageError("CostWeights: P and Q sizes differ");
}

CostWeights CostWeights::unchecked(Mat q, Mat r, Mat p) {
  CostWeights w;
  w.q_ = std::move(q);
  w.r_ = std::move(r);
  w.p_ = std::move(p);
  return w;
}

double stage_cost(const CostWeights& w, const Vec& x, const Vec& u) {
  if (x.size() != w.Q().rows() || u.size() != w.R().rows())
    throw UsageError("stage_cost: dimension mismatch");
  return x.dot(w.Q() * x) + u.dot(w.R() * u);
}

// ----------------------------------------------------------------------- RK4

namespace {

void check_dims(const ControlSystem& sys, std::size_t nx, std::size_t nu, std::size_t nout) {
  const auto n = static_cast<std::size_t>(sys.state_dim());
  if (nx != n || nout != n || nu != static_cast<std::size_t>(sys.input_dim()))
    throw UsageError("rk4_step: dimension mismatch");
}

void check_finite(std::span<const double> v, std::span<const double> x, std::span<const double> u) {
  for (double d : v)
    if (!std::isfinite(d))
      throw NumericError("rk4_step: non-finite state at x = " + describe(x) + ", u = " + describe(u),
                         to_vec(x), to_vec(u));
}

}  // namespace

void rk4_step(const ControlSystem& sys, std::span<const double> x, std::span<const double> u,
              std::span<double> out) {
  check_dims(sys, x.size(), u.size(), out.size());
  const int n = sys.state_dim();
  const double h = sys.step_size();
  const auto& f = sys.field();
  Buf k1{}, k2{}, k3{}, k4{}, tmp{};
  const std::span<double> s1(k1.data(), n), s2(k2.data(), n), s3(k3.data(), n), s4(k4.data(), n);
  const std::span<const double> st(tmp.data(), n);
  f.eval(x, u, s1);
  for (int i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
  f.eval(st, u, s2);
  for (int i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
  f.eval(st, u, s3);
  for (int i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
  f.eval(st, u, s4);
  for (int i = 0; i < n; ++i) tmp[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  check_finite(st, x, u);
  for (int i = 0; i < n; ++i) out[i] = tmp[i];
}

Vec rk4_step(const ControlSystem& sys, const Vec& x, const Vec& u) {
  Vec out(sys.state_dim());
  rk4_step(sys, cspan(x), cspan(u), std::span<double>(out.data(), out.size()));
  return out;
}

void rk4_step(const ControlSystem& sys, std::span<const double> x, std::span<const double> u,
              std::span<double> out, SmallMat& a, SmallMat& b) {
  check_dims(sys, x.size(), u.size(), out.size());
  const int n = sys.state_dim();
  const int m = sys.input_dim();
  const double h = sys.step_size();
  const auto& f = sys.field();

  // Stage slopes k_s and their sensitivities dk_s/dx, dk_s/du.
  Eigen::Map<const Eigen::VectorXd> x0(x.data(), n);
  SmallVec k[4];
  SmallMat kx[4], ku[4];
  SmallMat fx(n, n), fu(n, m);
  const SmallMat eye = SmallMat::Identity(n, n);
  const double c[4] = {0.0, 0.5, 0.5, 1.0};
  SmallVec xs(n);
  for (int s = 0; s < 4; ++s) {
    if (s == 0)
      xs = x0;
    else
      xs = x0 + c[s] * h * k[s - 1];
    k[s].resize(n);
    const std::span<const double> xss(xs.data(), n);
    f.eval(xss, u, std::span<double>(k[s].data(), n));
    f.jacobian(xss, u, fx, fu);
    if (s == 0) {
      kx[s] = fx;
      ku[s] = fu;
    } else {
      kx[s].noalias() = fx * (eye + c[s] * h * kx[s - 1]);
      ku[s].noalias() = fx * (c[s] * h * ku[s - 1]);
      ku[s] += fu;
    }
  }
  SmallVec next = x0 + h / 6.0 * (k[0] + 2.0 * k[1] + 2.0 * k[2] + k[3]);
  check_finite(std::span<const double>(next.data(), n), x, u);
  a = eye + h / 6.0 * (kx[0] + 2.0 * kx[1] + 2.0 * kx[2] + kx[3]);
  b = h / 6.0 * (ku[0] + 2.0 * ku[1] + 2.0 * ku[2] + ku[3]);
  for (int i = 0; i < n; ++i) out[i] = next[i];
}

// ------------------------------------------------------------------- catalog

Mat vdp_terminal_matrix() {
  Mat p(2, 2);
  p << 6.4314, 0.4580, 0.4580, 5.8227;
  return p;
}

ControlSystem make_vdp() {
  VectorField field(
      2, 1,
      [](std::span<const double> x, std::span<const double> u, std::span<double> dx) {
        dx[0] = x[1];
        dx[1] = (1.0 - x[0] * x[0]) * x[1] - x[0] + u[0];
      },
      [](std::span<const double> x, std::span<const double>, SmallMat& fx, SmallMat& fu) {
        fx(0, 0) = 0.0;
        fx(0, 1) = 1.0;
        fx(1, 0) = -2.0 * x[0] * x[1] - 1.0;
        fx(1, 1) = 1.0 - x[0] * x[0];
        fu(0, 0) = 0.0;
        fu(1, 0) = 1.0;
      });
  InputBox box{Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
  Mat gm(2, 2);
  gm << 1.0, 0.0, 0.0, 3.0;
  return ControlSystem("vdp", std::move(field), box, Polynomial::quadratic_form(gm, -1.0),
                       Polynomial::quadratic_form(vdp_terminal_matrix(), -1.0), 0.1);
}

ControlSystem make_scalar_integrator() {
  VectorField field(
      1, 1, [](std::span<const double>, std::span<const double> u, std::span<double> dx) { dx[0] = u[0]; },
      [](std::span<const double>, std::span<const double>, SmallMat& fx, SmallMat& fu) {
        fx(0, 0) = 0.0;
        fu(0, 0) = 1.0;
      });
  InputBox box{Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
  return ControlSystem("scalar_integrator", std::move(field), box,
                       Polynomial::quadratic_form(Mat::Identity(1, 1), -1.0),
                       Polynomial::quadratic_form(Mat::Identity(1, 1), -0.01), 0.1);
}

ControlSystem make_double_integrator() {
  VectorField field(
      2, 1,
      [](std::span<const double> x, std::span<const double> u, std::span<double> dx) {
        dx[0] = x[1];
        dx[1] = u[0];
      },
      [](std::span<const double>, std::span<const double>, SmallMat& fx, SmallMat& fu) {
        fx << 0.0, 1.0, 0.0, 0.0;
        fu << 0.0, 1.0;
      });
  InputBox box{Vec::Constant(1, -1.0), Vec::Constant(1, 1.0)};
  return ControlSystem("double_integrator", std::move(field), box,
                       Polynomial::quadratic_form(Mat::Identity(2, 2), -1.0),
                       Polynomial::quadratic_form(Mat::Identity(2, 2), -0.04), 0.1);
}

ControlSystem make_catalog(std::string_view name) {
  if (name == "vdp") return make_vdp();
  if (name == "scalar_integrator") return make_scalar_integrator();
  if (name == "double_integrator") return make_double_integrator();
  throw UsageError("unknown catalog system '" + std::string(name) + "'");
}

}  // namespace onestep
