#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "onestep/types.hpp"

namespace onestep {

using Exponents = std::vector<int>;

// All exponent tuples of total degree <= max_degree in graded lexicographic
// order: ascending total degree, and within one degree descending lexicographic
// order of the exponent tuple (x1^2, x1*x2, x2^2).
std::vector<Exponents> grlex_monomials(int num_vars, int max_degree);

// Number of monomials in num_vars variables of total degree <= max_degree.
std::size_t grlex_count(int num_vars, int max_degree);

// Sparse multivariate polynomial with real coefficients. Terms are kept in
// grlex order with duplicates merged and exact zeros dropped.
class Polynomial {
 public:
  struct Term {
    double coeff = 0.0;
    Exponents exps;
  };

  Polynomial() = default;
  explicit Polynomial(int num_vars);
  Polynomial(int num_vars, std::vector<Term> terms);

  static Polynomial constant(int num_vars, double c);
  static Polynomial variable(int num_vars, int index);
  // x' M x + offset; M need not be symmetric.
  static Polynomial quadratic_form(const Mat& m, double offset = 0.0);
  // Dense coefficient vector in grlex order. Its length must equal
  // grlex_count(num_vars, d) for some degree d.
  static Polynomial from_grlex(int num_vars, std::span<const double> coeffs);

  int num_vars() const { return num_vars_; }
  const std::vector<Term>& terms() const { return terms_; }
  // Total degree; -1 for the zero polynomial.
  int degree() const;
  bool is_zero() const { return terms_.empty(); }

  double eval(std::span<const double> x) const;
  double operator()(const Vec& x) const;
  Vec gradient(const Vec& x) const;
  void gradient(std::span<const double> x, std::span<double> out) const;
  Polynomial derivative(int var) const;

  // Dense grlex coefficients up to the given degree (default: own degree).
  std::vector<double> grlex_coefficients(int max_degree) const;
  std::vector<double> grlex_coefficients() const { return grlex_coefficients(std::max(degree(), 0)); }

  // Symmetric M with x' M x equal to the degree-2 homogeneous part.
  Mat quadratic_part() const;
  double constant_term() const;
  double coefficient(const Exponents& exps) const;

  Polynomial operator+(const Polynomial& other) const;
  Polynomial operator-(const Polynomial& other) const;
  Polynomial operator*(const Polynomial& other) const;
  Polynomial operator*(double s) const;
  Polynomial operator-() const { return *this * -1.0; }

  std::string to_string() const;

 private:
  void canonicalize();

  int num_vars_ = 0;
  std::vector<Term> terms_;
};

Polynomial operator*(double s, const Polynomial& p);

struct GridAxis {
  double lower = 0.0;
  double upper = 0.0;
  int count = 0;

  double spacing() const { return (upper - lower) / (count - 1); }
  double node(int k) const { return k == count - 1 ? upper : lower + k * spacing(); }
  void validate() const;
  bool operator==(const GridAxis&) const = default;
};

struct Evaluation {
  double value = 0.0;
  bool extrapolated = false;
};

// Multilinear interpolant on a tensor grid, optionally on top of a smooth
// base polynomial: value(x) = base(x) + interp(values - base(nodes))(x).
// The interpolant reproduces the node values exactly. Queries outside the
// box are clamped to the boundary and flagged as extrapolated.
// Node values are stored row-major: the last axis varies fastest.
class GridFunction {
 public:
  GridFunction(std::vector<GridAxis> axes, std::vector<double> values,
               std::optional<Polynomial> base = std::nullopt);

  int num_vars() const { return static_cast<int>(axes_.size()); }
  const std::vector<GridAxis>& axes() const { return axes_; }
  const std::vector<double>& values() const { return values_; }
  const std::optional<Polynomial>& base() const { return base_; }
  std::size_t node_count() const { return values_.size(); }

  std::size_t linear_index(std::span<const int> multi) const;
  void node_coords(std::size_t index, std::span<double> out) const;
  Vec node(std::size_t index) const;

  Evaluation evaluate(std::span<const double> x) const;
  double operator()(const Vec& x) const;
  // Gradient of the clamped interpolant; components along which x lies
  // outside the box are zero.
  void gradient(std::span<const double> x, std::span<double> out) const;
  Vec gradient(const Vec& x) const;

  bool contains(std::span<const double> x) const;

 private:
  std::vector<GridAxis> axes_;
  std::vector<double> values_;
  std::optional<Polynomial> base_;
  std::vector<double> residual_;
  std::vector<std::size_t> strides_;
};

using ScalarFunction = std::variant<Polynomial, GridFunction>;

Evaluation evaluate(const ScalarFunction& f, std::span<const double> x);
double eval(const ScalarFunction& f, const Vec& x);
Vec gradient(const ScalarFunction& f, const Vec& x);
int num_vars(const ScalarFunction& f);

// Stage-indexed family V(0), ..., V(T) on a common state space.
class StorageFunction {
 public:
  enum class Kind { Polynomial, Grid };

  explicit StorageFunction(std::vector<ScalarFunction> stages);

  int horizon() const { return static_cast<int>(stages_.size()) - 1; }
  int state_dim() const { return state_dim_; }
  Kind kind() const { return kind_; }
  const ScalarFunction& stage(int t) const;
  const std::vector<ScalarFunction>& stages() const { return stages_; }
  // Grid axes when kind() == Grid.
  const std::vector<GridAxis>* grid_axes() const;

  Evaluation evaluate(int t, std::span<const double> x) const;
  double operator()(int t, const Vec& x) const;
  Vec gradient(int t, const Vec& x) const;

 private:
  std::vector<ScalarFunction> stages_;
  int state_dim_ = 0;
  Kind kind_ = Kind::Polynomial;
};

double eval_storage(const StorageFunction& v, int t, const Vec& x);

// Plain-text storage format, see README for the layout.
void write_storage(std::ostream& out, const StorageFunction& v);
StorageFunction read_storage(std::istream& in);
void save_storage(const std::string& path, const StorageFunction& v);
StorageFunction load_storage(const std::string& path);

}  // namespace onestep
