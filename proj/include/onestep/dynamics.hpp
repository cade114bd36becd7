#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "onestep/funcspace.hpp"
#include "onestep/types.hpp"

namespace onestep {

struct InputBox {
  Vec lower;
  Vec upper;

  int dim() const { return static_cast<int>(lower.size()); }
  bool contains(const Vec& u) const;
  Vec clamp(const Vec& u) const;
  void validate() const;
};

// Continuous-time right-hand side F(x, u). Evaluation writes into a caller
// buffer so integration loops stay allocation-free.
class VectorField {
 public:
  using Fn = std::function<void(std::span<const double> x, std::span<const double> u,
                                std::span<double> xdot)>;
  // Fills dF/dx (n x n) and dF/du (n x m); both are pre-sized by the caller.
  using JacobianFn = std::function<void(std::span<const double> x, std::span<const double> u,
                                        SmallMat& dfdx, SmallMat& dfdu)>;

  VectorField() = default;
  VectorField(int state_dim, int input_dim, Fn f, JacobianFn jac = {});
  // One polynomial per state component in the variables (x_1..x_n, u_1..u_m).
  static VectorField from_polynomials(int state_dim, int input_dim, std::vector<Polynomial> components);

  int state_dim() const { return n_; }
  int input_dim() const { return m_; }
  bool has_analytic_jacobian() const { return static_cast<bool>(jac_); }

  void eval(std::span<const double> x, std::span<const double> u, std::span<double> xdot) const;
  Vec operator()(const Vec& x, const Vec& u) const;
  // Analytic when available, otherwise central differences.
  void jacobian(std::span<const double> x, std::span<const double> u, SmallMat& dfdx, SmallMat& dfdu) const;

 private:
  int n_ = 0;
  int m_ = 0;
  Fn f_;
  JacobianFn jac_;
};

// Immutable after construction. Constraint functions follow the convention
// value <= 0 means feasible.
class ControlSystem {
 public:
  ControlSystem(std::string name, VectorField field, InputBox inputs, Polynomial state_constraint,
                Polynomial terminal_constraint, double step_size);

  const std::string& name() const { return name_; }
  int state_dim() const { return field_.state_dim(); }
  int input_dim() const { return field_.input_dim(); }
  const VectorField& field() const { return field_; }
  const InputBox& input_box() const { return inputs_; }
  const Polynomial& state_constraint() const { return g_; }
  const Polynomial& terminal_constraint() const { return l_; }
  double step_size() const { return h_; }

  double g(const Vec& x) const { return g_(x); }
  double l(const Vec& x) const { return l_(x); }

 private:
  std::string name_;
  VectorField field_;
  InputBox inputs_;
  Polynomial g_;
  Polynomial l_;
  double h_;
};

class CostWeights {
 public:
  // Throws UsageError unless Q, R, P are symmetric positive definite.
  CostWeights(Mat q, Mat r, Mat p);
  // Skips the definiteness check. Only meant for degenerate-weight tests.
  static CostWeights unchecked(Mat q, Mat r, Mat p);

  const Mat& Q() const { return q_; }
  const Mat& R() const { return r_; }
  const Mat& P() const { return p_; }

 private:
  CostWeights() = default;
  Mat q_, r_, p_;
};

bool is_symmetric_positive_definite(const Mat& m);

// Classic fixed-step RK4 with u held constant over [0, h].
Vec rk4_step(const ControlSystem& sys, const Vec& x, const Vec& u);
void rk4_step(const ControlSystem& sys, std::span<const double> x, std::span<const double> u,
              std::span<double> out);
// Also returns the exact Jacobians of the RK4 map: a = dx+/dx, b = dx+/du.
void rk4_step(const ControlSystem& sys, std::span<const double> x, std::span<const double> u,
              std::span<double> out, SmallMat& a, SmallMat& b);

double stage_cost(const CostWeights& w, const Vec& x, const Vec& u);

// Forced Van-der-Pol oscillator with box input |u| <= 1, ellipsoidal state
// constraint x1^2 + 3 x2^2 <= 1 and terminal ellipse x'Px <= 1.
ControlSystem make_vdp();
Mat vdp_terminal_matrix();
// x' = u, |u| <= 1, |x| <= 1, terminal set |x| <= 0.1, h = 0.1.
ControlSystem make_scalar_integrator();
// x1' = x2, x2' = u, |u| <= 1, unit disk, terminal disk of radius 0.2.
ControlSystem make_double_integrator();
// "vdp", "scalar_integrator" or "double_integrator".
ControlSystem make_catalog(std::string_view name);

}  // namespace onestep
