#include "onestep/funcspace.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "onestep/errors.hpp"

namespace onestep {

namespace {

// Descending lexicographic tuples of a fixed total degree.
void enumerate_degree(int num_vars, int degree, int pos, Exponents& cur,
                      std::vector<Exponents>& out) {
  if (pos == num_vars - 1) {
    cur[pos] = degree;
    out.push_back(cur);
    return;
  }
  for (int e = degree; e >= 0; --e) {
    cur[pos] = e;
    enumerate_degree(num_vars, degree - e, pos + 1, cur, out);
  }
}

int total_degree(const Exponents& e) {
  int s = 0;
  for (int v : e) s += v;
  return s;
}

// Strict grlex order used for term storage.
bool grlex_less(const Exponents& a, const Exponents& b) {
  const int da = total_degree(a);
  const int db = total_degree(b);
  if (da != db) return da < db;
  return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
}

double ipow(double x, int e) {
  double r = 1.0;
  while (e > 0) {
    if (e & 1) r *= x;
    x *= x;
    e >>= 1;
  }
  return r;
}

}  // namespace

std::vector<Exponents> grlex_monomials(int num_vars, int max_degree) {
  if (num_vars < 1) throw UsageError("grlex_monomials: num_vars must be >= 1");
  std::vector<Exponents> out;
  Exponents cur(num_vars, 0);
  for (int d = 0; d <= max_degree; ++d) enumerate_degree(num_vars, d, 0, cur, out);
  return out;
}

std::size_t grlex_count(int num_vars, int max_degree) {
  // C(num_vars + max_degree, max_degree)
  std::size_t c = 1;
  for (int k = 1; k <= max_degree; ++k) c = c * (num_vars + k) / k;
  return c;
}

// ---------------------------------------------------------------- Polynomial

Polynomial::Polynomial(int num_vars) : num_vars_(num_vars) {
  if (num_vars < 1) throw UsageError("Polynomial: num_vars must be >= 1");
}

Polynomial::Polynomial(int num_vars, std::vector<Term> terms)
    : num_vars_(num_vars), terms_(std::move(terms)) {
  if (num_vars < 1) throw UsageError("Polynomial: num_vars must be >= 1");
  for (const auto& t : terms_) {
    if (static_cast<int>(t.exps.size()) != num_vars)
      throw UsageError("Polynomial: exponent tuple length does not match num_vars");
    for (int e : t.exps)
      if (e < 0) throw UsageError("Polynomial: negative exponent");
    if (!std::isfinite(t.coeff)) throw UsageError("Polynomial: non-finite coefficient");
  }
  canonicalize();
}

void Polynomial::canonicalize() {
  std::sort(terms_.begin(), terms_.end(),
            [](const Term& a, const Term& b) { return grlex_less(a.exps, b.exps); });
  std::vector<Term> merged;
  for (auto& t : terms_) {
    if (!merged.empty() && merged.back().exps == t.exps)
      merged.back().coeff += t.coeff;
    else
      merged.push_back(std::move(t));
  }
  std::erase_if(merged, [](const Term& t) { return t.coeff == 0.0; });
  terms_ = std::move(merged);
}

Polynomial Polynomial::constant(int num_vars, double c) {
  return Polynomial(num_vars, {{c, Exponents(num_vars, 0)}});
}

Polynomial Polynomial::variable(int num_vars, int index) {
  if (index < 0 || index >= num_vars) throw UsageError("Polynomial::variable: index out of range");
  Exponents e(num_vars, 0);
  e[index] = 1;
  return Polynomial(num_vars, {{1.0, e}});
}

Polynomial Polynomial::quadratic_form(const Mat& m, double offset) {
  if (m.rows() != m.cols() || m.rows() < 1)
    throw UsageError("Polynomial::quadratic_form: matrix must be square and non-empty");
  const int n = static_cast<int>(m.rows());
  std::vector<Term> terms;
  terms.push_back({offset, Exponents(n, 0)});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      Exponents e(n, 0);
      e[i] += 1;
      e[j] += 1;
      terms.push_back({m(i, j), e});
    }
  }
  return Polynomial(n, std::move(terms));
}

Polynomial Polynomial::from_grlex(int num_vars, std::span<const double> coeffs) {
  int degree = 0;
  while (grlex_count(num_vars, degree) < coeffs.size()) ++degree;
  if (grlex_count(num_vars, degree) != coeffs.size())
    throw UsageError("Polynomial::from_grlex: coefficient count " + std::to_string(coeffs.size()) +
                     " is not a complete grlex basis in " + std::to_string(num_vars) + " variables");
  const auto monos = grlex_monomials(num_vars, degree);
  std::vector<Term> terms;
  for (std::size_t k = 0; k < monos.size(); ++k) terms.push_back({coeffs[k], monos[k]});
  return Polynomial(num_vars, std::move(terms));
}

int Polynomial::degree() const {
  return terms_.empty() ? -1 : total_degree(terms_.back().exps);
}

double Polynomial::eval(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != num_vars_)
    throw UsageError("Polynomial::eval: dimension mismatch");
  double s = 0.0;
  for (const auto& t : terms_) {
    double m = t.coeff;
    for (int i = 0; i < num_vars_; ++i)
      if (t.exps[i] != 0) m *= ipow(x[i], t.exps[i]);
    s += m;
  }
  return s;
}

double Polynomial::operator()(const Vec& x) const {
  return eval(std::span<const double>(x.data(), x.size()));
}

void Polynomial::gradient(std::span<const double> x, std::span<double> out) const {
  if (static_cast<int>(x.size()) != num_vars_ || out.size() != x.size())
    throw UsageError("Polynomial::gradient: dimension mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  for (const auto& t : terms_) {
    for (int k = 0; k < num_vars_; ++k) {
      if (t.exps[k] == 0) continue;
      double m = t.coeff * t.exps[k];
      for (int i = 0; i < num_vars_; ++i) {
        const int e = (i == k) ? t.exps[i] - 1 : t.exps[i];
        if (e != 0) m *= ipow(x[i], e);
      }
      out[k] += m;
    }
  }
}

Vec Polynomial::gradient(const Vec& x) const {
  Vec g(num_vars_);
  gradient(std::span<const double>(x.data(), x.size()), std::span<double>(g.data(), g.size()));
  return g;
}

Polynomial Polynomial::derivative(int var) const {
  if (var < 0 || var >= num_vars_) throw UsageError("Polynomial::derivative: index out of range");
  std::vector<Term> terms;
  for (const auto& t : terms_) {
    if (t.exps[var] == 0) continue;
    Term d = t;
    d.coeff *= t.exps[var];
    d.exps[var] -= 1;
    terms.push_back(std::move(d));
  }
  return Polynomial(num_vars_, std::move(terms));
}

std::vector<double> Polynomial::grlex_coefficients(int max_degree) const {
  if (max_degree < degree())
    throw UsageError("Polynomial::grlex_coefficients: degree exceeds requested maximum");
  const auto monos = grlex_monomials(num_vars_, max_degree);
  std::vector<double> c(monos.size(), 0.0);
  std::size_t k = 0;
  for (const auto& t : terms_) {
    while (monos[k] != t.exps) ++k;
    c[k] = t.coeff;
  }
  return c;
}

Mat Polynomial::quadratic_part() const {
  Mat m = Mat::Zero(num_vars_, num_vars_);
  for (const auto& t : terms_) {
    if (total_degree(t.exps) != 2) continue;
    int i = -1, j = -1;
    for (int k = 0; k < num_vars_; ++k) {
      if (t.exps[k] == 2) i = j = k;
      if (t.exps[k] == 1) (i < 0 ? i : j) = k;
    }
    if (i == j) {
      m(i, i) += t.coeff;
    } else {
      m(i, j) += 0.5 * t.coeff;
      m(j, i) += 0.5 * t.coeff;
    }
  }
  return m;
}

double Polynomial::constant_term() const {
  return coefficient(Exponents(num_vars_, 0));
}

double Polynomial::coefficient(const Exponents& exps) const {
  for (const auto& t : terms_)
    if (t.exps == exps) return t.coeff;
  return 0.0;
}

Polynomial Polynomial::operator+(const Polynomial& other) const {
  if (other.num_vars_ != num_vars_) throw UsageError("Polynomial: dimension mismatch");
  auto terms = terms_;
  terms.insert(terms.end(), other.terms_.begin(), other.terms_.end());
  return Polynomial(num_vars_, std::move(terms));
}

Polynomial Polynomial::operator-(const Polynomial& other) const { return *this + (-other); }

Polynomial Polynomial::operator*(const Polynomial& other) const {
  if (other.num_vars_ != num_vars_) throw UsageError("Polynomial: dimension mismatch");
  std::vector<Term> terms;
  for (const auto& a : terms_) {
    for (const auto& b : other.terms_) {
      Exponents e(num_vars_);
      for (int i = 0; i < num_vars_; ++i) e[i] = a.exps[i] + b.exps[i];
      terms.push_back({a.coeff * b.coeff, std::move(e)});
    }
  }
  return Polynomial(num_vars_, std::move(terms));
}

Polynomial Polynomial::operator*(double s) const {
  auto terms = terms_;
  for (auto& t : terms) t.coeff *= s;
  return Polynomial(num_vars_, std::move(terms));
}

Polynomial operator*(double s, const Polynomial& p) { return p * s; }

std::string Polynomial::to_string() const {
  if (terms_.empty()) return "0";
  std::ostringstream os;
  os << std::setprecision(6);
  bool first = true;
  for (const auto& t : terms_) {
    os << (first ? "" : " + ") << t.coeff;
    first = false;
    for (int i = 0; i < num_vars_; ++i) {
      if (t.exps[i] == 0) continue;
      os << "*x" << (i + 1);
      if (t.exps[i] > 1) os << "^" << t.exps[i];
    }
  }
  return os.str();
}

// -------------------------------------------------------------- GridFunction

void GridAxis::validate() const {
  if (count < 2) throw UsageError("GridAxis: count must be >= 2");
  if (!std::isfinite(lower) || !std::isfinite(upper) || !(lower < upper))
    throw UsageError("GridAxis: need finite lower < upper");
}

GridFunction::GridFunction(std::vector<GridAxis> axes, std::vector<double> values,
                           std::optional<Polynomial> base)
    : axes_(std::move(axes)), values_(std::move(values)), base_(std::move(base)) {
  if (axes_.empty()) throw UsageError("GridFunction: at least one axis required");
  for (const auto& a : axes_) a.validate();
  strides_.assign(axes_.size(), 1);
  std::size_t n = 1;
  for (std::size_t i = axes_.size(); i-- > 0;) {
    strides_[i] = n;
    n *= static_cast<std::size_t>(axes_[i].count);
  }
  if (values_.size() != n)
    throw UsageError("GridFunction: expected " + std::to_string(n) + " node values, got " +
                     std::to_string(values_.size()));
  for (double v : values_)
    if (!std::isfinite(v)) throw UsageError("GridFunction: non-finite node value");
  if (base_ && base_->num_vars() != num_vars())
    throw UsageError("GridFunction: base polynomial dimension mismatch");
  if (base_ && base_->is_zero()) base_.reset();

  residual_ = values_;
  if (base_) {
    std::vector<double> x(axes_.size());
    for (std::size_t k = 0; k < n; ++k) {
      node_coords(k, x);
      residual_[k] -= base_->eval(x);
    }
  }
}

std::size_t GridFunction::linear_index(std::span<const int> multi) const {
  std::size_t idx = 0;
  for (std::size_t i = 0; i < axes_.size(); ++i) idx += strides_[i] * multi[i];
  return idx;
}

void GridFunction::node_coords(std::size_t index, std::span<double> out) const {
  for (std::size_t i = 0; i < axes_.size(); ++i) {
    const int k = static_cast<int>((index / strides_[i]) % axes_[i].count);
    out[i] = axes_[i].node(k);
  }
}

Vec GridFunction::node(std::size_t index) const {
  Vec x(num_vars());
  node_coords(index, std::span<double>(x.data(), x.size()));
  return x;
}

bool GridFunction::contains(std::span<const double> x) const {
  for (std::size_t i = 0; i < axes_.size(); ++i)
    if (!(x[i] >= axes_[i].lower && x[i] <= axes_[i].upper)) return false;
  return true;
}

namespace {

struct CellLocation {
  std::array<int, kMaxDim> cell{};
  std::array<double, kMaxDim> frac{};
  std::array<double, kMaxDim> clamped{};
  std::array<bool, kMaxDim> outside{};
  bool extrapolated = false;
};

CellLocation locate(const std::vector<GridAxis>& axes, std::span<const double> x) {
  CellLocation loc;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const auto& a = axes[i];
    double xi = x[i];
    if (std::isnan(xi)) throw NumericError("GridFunction: NaN query coordinate");
    if (xi < a.lower || xi > a.upper) {
      loc.outside[i] = true;
      loc.extrapolated = true;
      xi = std::clamp(xi, a.lower, a.upper);
    }
    loc.clamped[i] = xi;
    const double s = (xi - a.lower) / a.spacing();
    int k = static_cast<int>(std::floor(s));
    k = std::clamp(k, 0, a.count - 2);
    loc.cell[i] = k;
    loc.frac[i] = std::clamp(s - k, 0.0, 1.0);
  }
  return loc;
}

}  // namespace

Evaluation GridFunction::evaluate(std::span<const double> x) const {
  if (x.size() != axes_.size()) throw UsageError("GridFunction::evaluate: dimension mismatch");
  if (axes_.size() > static_cast<std::size_t>(kMaxDim))
    throw UsageError("GridFunction: dimension exceeds kMaxDim");
  const auto loc = locate(axes_, x);
  const std::size_t n = axes_.size();
  std::size_t base_idx = 0;
  for (std::size_t i = 0; i < n; ++i) base_idx += strides_[i] * loc.cell[i];
  double v = 0.0;
  for (unsigned corner = 0; corner < (1u << n); ++corner) {
    double w = 1.0;
    std::size_t idx = base_idx;
    for (std::size_t i = 0; i < n; ++i) {
      if (corner & (1u << i)) {
        w *= loc.frac[i];
        idx += strides_[i];
      } else {
        w *= 1.0 - loc.frac[i];
      }
    }
    if (w != 0.0) v += w * residual_[idx];
  }
  if (base_) v += base_->eval(std::span<const double>(loc.clamped.data(), n));
  return {v, loc.extrapolated};
}

double GridFunction::operator()(const Vec& x) const {
  return evaluate(std::span<const double>(x.data(), x.size())).value;
}

void GridFunction::gradient(std::span<const double> x, std::span<double> out) const {
  if (x.size() != axes_.size() || out.size() != x.size())
    throw UsageError("GridFunction::gradient: dimension mismatch");
  const auto loc = locate(axes_, x);
  const std::size_t n = axes_.size();
  std::size_t base_idx = 0;
  for (std::size_t i = 0; i < n; ++i) base_idx += strides_[i] * loc.cell[i];
  std::fill(out.begin(), out.end(), 0.0);
  for (unsigned corner = 0; corner < (1u << n); ++corner) {
    std::size_t idx = base_idx;
    for (std::size_t i = 0; i < n; ++i)
      if (corner & (1u << i)) idx += strides_[i];
    const double r = residual_[idx];
    for (std::size_t d = 0; d < n; ++d) {
      double w = ((corner >> d) & 1u) ? 1.0 : -1.0;
      w /= axes_[d].spacing();
      for (std::size_t i = 0; i < n; ++i) {
        if (i == d) continue;
        w *= ((corner >> i) & 1u) ? loc.frac[i] : 1.0 - loc.frac[i];
      }
      out[d] += w * r;
    }
  }
  if (base_) {
    std::array<double, kMaxDim> g{};
    base_->gradient(std::span<const double>(loc.clamped.data(), n), std::span<double>(g.data(), n));
    for (std::size_t d = 0; d < n; ++d) out[d] += g[d];
  }
  for (std::size_t d = 0; d < n; ++d)
    if (loc.outside[d]) out[d] = 0.0;
}

Vec GridFunction::gradient(const Vec& x) const {
  Vec g(x.size());
  gradient(std::span<const double>(x.data(), x.size()), std::span<double>(g.data(), g.size()));
  return g;
}

// ------------------------------------------------------------ ScalarFunction

Evaluation evaluate(const ScalarFunction& f, std::span<const double> x) {
  if (const auto* p = std::get_if<Polynomial>(&f)) return {p->eval(x), false};
  return std::get<GridFunction>(f).evaluate(x);
}

double eval(const ScalarFunction& f, const Vec& x) {
  return evaluate(f, std::span<const double>(x.data(), x.size())).value;
}

Vec gradient(const ScalarFunction& f, const Vec& x) {
  return std::visit([&](const auto& g) { return g.gradient(x); }, f);
}

int num_vars(const ScalarFunction& f) {
  return std::visit([](const auto& g) { return g.num_vars(); }, f);
}

// ----------------------------------------------------------- StorageFunction

StorageFunction::StorageFunction(std::vector<ScalarFunction> stages) : stages_(std::move(stages)) {
  if (stages_.size() < 2) throw UsageError("StorageFunction: need stages 0..T with T >= 1");
  state_dim_ = num_vars(stages_.front());
  kind_ = std::holds_alternative<GridFunction>(stages_.front()) ? Kind::Grid : Kind::Polynomial;
  for (const auto& s : stages_) {
    if (num_vars(s) != state_dim_) throw UsageError("StorageFunction: stage dimension mismatch");
    const bool grid = std::holds_alternative<GridFunction>(s);
    if (grid != (kind_ == Kind::Grid)) throw UsageError("StorageFunction: mixed stage kinds");
    if (grid && std::get<GridFunction>(s).axes() != std::get<GridFunction>(stages_.front()).axes())
      throw UsageError("StorageFunction: stages must share one grid");
  }
}

const ScalarFunction& StorageFunction::stage(int t) const {
  if (t < 0 || t > horizon())
    throw UsageError("StorageFunction: stage " + std::to_string(t) + " outside 0.." +
                     std::to_string(horizon()));
  return stages_[t];
}

const std::vector<GridAxis>* StorageFunction::grid_axes() const {
  if (kind_ != Kind::Grid) return nullptr;
  return &std::get<GridFunction>(stages_.front()).axes();
}

Evaluation StorageFunction::evaluate(int t, std::span<const double> x) const {
  if (static_cast<int>(x.size()) != state_dim_) throw UsageError("StorageFunction: dimension mismatch");
  return onestep::evaluate(stage(t), x);
}

double StorageFunction::operator()(int t, const Vec& x) const {
  return evaluate(t, std::span<const double>(x.data(), x.size())).value;
}

Vec StorageFunction::gradient(int t, const Vec& x) const { return onestep::gradient(stage(t), x); }

double eval_storage(const StorageFunction& v, int t, const Vec& x) { return v(t, x); }

// ------------------------------------------------------------- serialization

namespace {

constexpr const char* kMagic = "onestep-storage";
constexpr int kFormatVersion = 1;

void write_numbers(std::ostream& out, const std::vector<double>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
  out << '\n';
}

void write_poly_line(std::ostream& out, int t, const std::optional<Polynomial>& p) {
  const int d = p ? std::max(p->degree(), 0) : -1;
  out << "stage " << t << " degree " << d << '\n';
  if (p) write_numbers(out, p->grlex_coefficients(d));
}

// Token reader that skips '#' comments.
class Tokens {
 public:
  explicit Tokens(std::istream& in) {
    std::string line;
    while (std::getline(in, line)) {
      if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) toks_.push_back(tok);
    }
  }
  std::string word() {
    if (pos_ >= toks_.size()) throw ParseError("storage file: unexpected end of input");
    return toks_[pos_++];
  }
  void expect(const std::string& w) {
    const auto got = word();
    if (got != w) throw ParseError("storage file: expected '" + w + "', got '" + got + "'");
  }
  double number() {
    const auto w = word();
    try {
      std::size_t used = 0;
      const double v = std::stod(w, &used);
      if (used != w.size()) throw std::invalid_argument(w);
      return v;
    } catch (const std::exception&) {
      throw ParseError("storage file: bad number '" + w + "'");
    }
  }
  int integer() {
    const double v = number();
    if (v != std::floor(v)) throw ParseError("storage file: expected an integer");
    return static_cast<int>(v);
  }
  bool done() const { return pos_ >= toks_.size(); }

 private:
  std::vector<std::string> toks_;
  std::size_t pos_ = 0;
};

std::optional<Polynomial> read_poly(Tokens& tk, int n, int t) {
  tk.expect("stage");
  if (tk.integer() != t) throw ParseError("storage file: stages out of order");
  tk.expect("degree");
  const int d = tk.integer();
  if (d < 0) return std::nullopt;
  std::vector<double> c(grlex_count(n, d));
  for (auto& v : c) v = tk.number();
  return Polynomial::from_grlex(n, c);
}

}  // namespace

void write_storage(std::ostream& out, const StorageFunction& v) {
  const auto flags = out.flags();
  const auto prec = out.precision();
  out << std::setprecision(17);
  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "state_dim " << v.state_dim() << '\n';
  out << "horizon " << v.horizon() << '\n';
  const bool grid = v.kind() == StorageFunction::Kind::Grid;
  out << "kind " << (grid ? "grid" : "polynomial") << '\n';
  if (grid) {
    for (const auto& a : *v.grid_axes()) out << "axis " << a.lower << ' ' << a.upper << ' ' << a.count << '\n';
  }
  for (int t = 0; t <= v.horizon(); ++t) {
    if (grid) {
      const auto& g = std::get<GridFunction>(v.stage(t));
      write_poly_line(out, t, g.base());
      out << "values " << g.values().size() << '\n';
      write_numbers(out, g.values());
    } else {
      write_poly_line(out, t, std::get<Polynomial>(v.stage(t)));
    }
  }
  out.flags(flags);
  out.precision(prec);
}

StorageFunction read_storage(std::istream& in) {
  Tokens tk(in);
  tk.expect(kMagic);
  if (tk.integer() != kFormatVersion) throw ParseError("storage file: unsupported version");
  tk.expect("state_dim");
  const int n = tk.integer();
  if (n < 1 || n > kMaxDim) throw ParseError("storage file: bad state_dim");
  tk.expect("horizon");
  const int T = tk.integer();
  if (T < 1) throw ParseError("storage file: horizon must be >= 1");
  tk.expect("kind");
  const auto kind = tk.word();
  if (kind != "grid" && kind != "polynomial") throw ParseError("storage file: unknown kind '" + kind + "'");
  std::vector<GridAxis> axes;
  if (kind == "grid") {
    for (int i = 0; i < n; ++i) {
      tk.expect("axis");
      GridAxis a;
      a.lower = tk.number();
      a.upper = tk.number();
      a.count = tk.integer();
      axes.push_back(a);
    }
  }
  std::vector<ScalarFunction> stages;
  try {
    for (int t = 0; t <= T; ++t) {
      auto p = read_poly(tk, n, t);
      if (kind == "grid") {
        tk.expect("values");
        const int count = tk.integer();
        if (count < 0) throw ParseError("storage file: negative value count");
        std::vector<double> vals(count);
        for (auto& v : vals) v = tk.number();
        stages.emplace_back(GridFunction(axes, std::move(vals), std::move(p)));
      } else {
        stages.emplace_back(p ? *p : Polynomial(n));
      }
    }
  } catch (const UsageError& e) {
    throw ParseError(std::string("storage file: ") + e.what());
  }
  if (!tk.done()) throw ParseError("storage file: trailing content");
  return StorageFunction(std::move(stages));
}

void save_storage(const std::string& path, const StorageFunction& v) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_storage(f, v);
  if (!f) throw std::runtime_error("failed writing '" + path + "'");
}

StorageFunction load_storage(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open storage file '" + path + "'");
  return read_storage(f);
}

}  // namespace onestep
