#include "onestep/config.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "onestep/errors.hpp"

namespace onestep {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

class Reader {
 public:
  explicit Reader(std::map<std::string, std::pair<std::string, int>> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  const std::string* raw(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return nullptr;
    used_.insert(key);
    return &it->second.first;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    const auto it = kv_.find(key);
    const int line = it == kv_.end() ? 0 : it->second.second;
    throw ConfigError("config line " + std::to_string(line) + ": '" + key + "': " + why);
  }

  double number(const std::string& key, const std::string& text) const {
    const std::string t = trim(text);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
      fail(key, "expected a number, got '" + t + "'");
    if (!std::isfinite(v)) fail(key, "value must be finite");
    return v;
  }

  std::vector<double> list(const std::string& key, const std::string& text) const {
    std::string t = text;
    for (auto& c : t)
      if (c == ',') c = ' ';
    std::istringstream is(t);
    std::vector<double> out;
    std::string tok;
    while (is >> tok) out.push_back(number(key, tok));
    return out;
  }

  std::vector<std::vector<double>> rows(const std::string& key, const std::string& text) const {
    std::vector<std::vector<double>> out;
    std::size_t start = 0;
    while (true) {
      const auto pos = text.find(';', start);
      const std::string part = text.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
      auto row = list(key, part);
      if (row.empty()) fail(key, "empty row");
      out.push_back(std::move(row));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    return out;
  }

  template <class T>
  void get(const std::string& key, T& dst) {
    const std::string* r = raw(key);
    if (!r) return;
    if constexpr (std::is_same_v<T, bool>) {
      const std::string v = lower(trim(*r));
      if (v == "true" || v == "1" || v == "yes")
        dst = true;
      else if (v == "false" || v == "0" || v == "no")
        dst = false;
      else
        fail(key, "expected true or false");
    } else if constexpr (std::is_integral_v<T>) {
      const double v = number(key, *r);
      if (v != std::floor(v)) fail(key, "expected an integer");
      if (std::is_unsigned_v<T> && v < 0) fail(key, "expected a nonnegative integer");
      dst = static_cast<T>(v);
    } else if constexpr (std::is_same_v<T, double>) {
      dst = number(key, *r);
    } else {
      dst = trim(*r);
    }
  }

  Mat matrix(const std::string& key) {
    const std::string* r = raw(key);
    const auto rs = rows(key, *r);
    Mat m(rs.size(), rs.front().size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
      if (rs[i].size() != rs.front().size()) fail(key, "rows have different lengths");
      for (std::size_t j = 0; j < rs[i].size(); ++j) m(i, j) = rs[i][j];
    }
    return m;
  }

  void reject_unused() const {
    for (const auto& [key, val] : kv_)
      if (!used_.count(key)) fail(key, "unknown key");
  }

 private:
  std::map<std::string, std::pair<std::string, int>> kv_;
  std::set<std::string> used_;
};

ControllerKind parse_controller(Reader& r, const std::string& key, ControllerKind dflt) {
  const std::string* v = r.raw(key);
  if (!v) return dflt;
  const std::string s = lower(trim(*v));
  if (s == "one-step") return ControllerKind::OneStep;
  if (s == "full-horizon") return ControllerKind::FullHorizon;
  r.fail(key, "expected one-step or full-horizon");
}

Polynomial grlex_polynomial(Reader& r, const std::string& key, const std::vector<double>& coeffs, int nvars) {
  // Accept the shortest degree whose monomial count matches.
  for (int d = 0; d <= 16; ++d) {
    const auto count = grlex_count(nvars, d);
    if (count == coeffs.size()) return Polynomial::from_grlex(nvars, coeffs);
    if (count > coeffs.size()) break;
  }
  r.fail(key, "coefficient count " + std::to_string(coeffs.size()) +
                  " is not a full graded-lexicographic block in " + std::to_string(nvars) + " variables");
}

std::optional<ControlSystem> parse_system(Reader& r) {
  const bool named = r.has("system.name");
  const bool poly = r.has("system.polynomial");
  if (named && poly) r.fail("system.polynomial", "give either system.name or system.polynomial, not both");
  if (!named && !poly) {
    for (const char* k : {"system.input_box", "system.step_size", "system.state_constraint",
                          "system.terminal_constraint"})
      if (r.has(k)) r.fail(k, "needs system.name or system.polynomial");
    return std::nullopt;
  }

  std::optional<InputBox> box;
  if (const std::string* v = r.raw("system.input_box")) {
    const auto rs = r.rows("system.input_box", *v);
    InputBox b{Vec(rs.size()), Vec(rs.size())};
    for (std::size_t i = 0; i < rs.size(); ++i) {
      if (rs[i].size() != 2) r.fail("system.input_box", "each row is 'lower upper'");
      b.lower[i] = rs[i][0];
      b.upper[i] = rs[i][1];
    }
    try {
      b.validate();
    } catch (const UsageError& e) {
      r.fail("system.input_box", e.what());
    }
    box = b;
  }
  std::optional<double> h;
  if (r.has("system.step_size")) {
    double v = 0.0;
    r.get("system.step_size", v);
    if (!(v > 0.0)) r.fail("system.step_size", "must be positive");
    h = v;
  }

  if (named) {
    std::string name;
    r.get("system.name", name);
    for (const char* k : {"system.state_constraint", "system.terminal_constraint"})
      if (r.has(k)) r.fail(k, "only used with system.polynomial");
    try {
      ControlSystem base = make_catalog(name);
      if (box && box->dim() != base.input_dim()) r.fail("system.input_box", "dimension differs from the catalog system");
      return ControlSystem(base.name(), base.field(), box.value_or(base.input_box()), base.state_constraint(),
                           base.terminal_constraint(), h.value_or(base.step_size()));
    } catch (const UsageError& e) {
      r.fail("system.name", e.what());
    }
  }

  if (!box) r.fail("system.polynomial", "needs system.input_box");
  if (!h) r.fail("system.polynomial", "needs system.step_size");
  for (const char* k : {"system.state_constraint", "system.terminal_constraint"})
    if (!r.has(k)) r.fail("system.polynomial", std::string("needs ") + k);
  const auto comp = r.rows("system.polynomial", *r.raw("system.polynomial"));
  const int n = static_cast<int>(comp.size());
  const int m = box->dim();
  if (n > kMaxDim) r.fail("system.polynomial", "too many state components");
  std::vector<Polynomial> f;
  for (const auto& c : comp) f.push_back(grlex_polynomial(r, "system.polynomial", c, n + m));
  const Polynomial g =
      grlex_polynomial(r, "system.state_constraint",
                       r.list("system.state_constraint", *r.raw("system.state_constraint")), n);
  const Polynomial l =
      grlex_polynomial(r, "system.terminal_constraint",
                       r.list("system.terminal_constraint", *r.raw("system.terminal_constraint")), n);
  return ControlSystem("polynomial", VectorField::from_polynomials(n, m, std::move(f)), *box, g, l, *h);
}

void parse_synth(Reader& r, ExperimentConfig& c) {
  if (const std::string* v = r.raw("synth.grid")) {
    const auto rs = r.rows("synth.grid", *v);
    c.synth.grid_axes.clear();
    for (const auto& row : rs) {
      if (row.size() != 3 || row[2] != std::floor(row[2]))
        r.fail("synth.grid", "each row is 'lower upper count'");
      GridAxis a{row[0], row[1], static_cast<int>(row[2])};
      try {
        a.validate();
      } catch (const UsageError& e) {
        r.fail("synth.grid", e.what());
      }
      c.synth.grid_axes.push_back(a);
    }
    c.grid_given = true;
  }
  if (const std::string* v = r.raw("synth.input_levels")) {
    c.synth.input_levels.clear();
    for (double d : r.list("synth.input_levels", *v)) {
      if (d != std::floor(d) || d < 3) r.fail("synth.input_levels", "levels must be integers >= 3");
      c.synth.input_levels.push_back(static_cast<int>(d));
    }
    if (c.synth.input_levels.empty()) r.fail("synth.input_levels", "empty list");
  }
  r.get("synth.contraction_margin", c.synth.contraction_margin);
  r.get("synth.horizon", c.synth.horizon);
  r.get("synth.stage_weight", c.synth.stage_weight);
  r.get("synth.interior_gain", c.synth.interior_gain);
  r.get("synth.value_cap", c.synth.value_cap);
  r.get("synth.quadratic_base", c.synth.quadratic_base);
  r.get("synth.refine_iterations", c.synth.refine_iterations);
  std::string file;
  r.get("synth.storage_file", file);
  if (!file.empty()) c.storage_file = file;
  r.get("synth.reverse_stages", c.reverse_stages);
  r.get("synth.verify_samples", c.verify_samples);
  r.get("synth.verify_tol", c.verify_tol);
  if (c.synth.horizon < 2) r.fail("synth.horizon", "must be >= 2");
  if (c.synth.contraction_margin < 0.0) r.fail("synth.contraction_margin", "must be >= 0");
  if (c.verify_samples < 1) r.fail("synth.verify_samples", "must be >= 1");
  if (!(c.verify_tol > 0.0)) r.fail("synth.verify_tol", "must be > 0");
}

void parse_solver(Reader& r, SolverConfig& s) {
  r.get("solver.max_outer_iters", s.max_outer_iters);
  r.get("solver.max_inner_iters", s.max_inner_iters);
  r.get("solver.constraint_tol", s.constraint_tol);
  r.get("solver.stationarity_tol", s.stationarity_tol);
  r.get("solver.penalty_init", s.penalty_init);
  r.get("solver.penalty_growth", s.penalty_growth);
  r.get("solver.multistart_points", s.multistart_points);
  r.get("solver.fd_step", s.fd_step);
  if (const std::string* v = r.raw("solver.gradient_mode")) {
    const std::string m = lower(trim(*v));
    if (m == "analytic")
      s.gradient_mode = GradientMode::AnalyticIfAvailable;
    else if (m == "central-difference")
      s.gradient_mode = GradientMode::CentralDifference;
    else
      r.fail("solver.gradient_mode", "expected analytic or central-difference");
  }
  try {
    s.validate();
  } catch (const UsageError& e) {
    throw ConfigError(std::string("config: solver: ") + e.what());
  }
}

void parse_weights(Reader& r, ExperimentConfig& c) {
  const int n = c.system ? c.system->state_dim() : 0;
  const int m = c.system ? c.system->input_dim() : 0;
  auto one = [&](const char* key, Mat& dst, int dim) {
    if (r.has(key)) {
      dst = r.matrix(key);
      if (c.system && (dst.rows() != dim || dst.cols() != dim))
        r.fail(key, "must be " + std::to_string(dim) + " x " + std::to_string(dim));
      if (!is_symmetric_positive_definite(dst)) r.fail(key, "must be symmetric positive definite");
    } else if (c.system) {
      dst = Mat::Identity(dim, dim);
    }
  };
  one("weights.Q", c.Q, n);
  one("weights.R", c.R, m);
  one("weights.P", c.P, n);
}

void parse_mpc(Reader& r, ExperimentConfig& c) {
  if (const std::string* v = r.raw("mpc.alpha")) {
    if (lower(trim(*v)) != "certificate") {
      c.alpha = r.number("mpc.alpha", *v);
      if (!(*c.alpha > 0.0)) r.fail("mpc.alpha", "must be > 0");
    }
  }
  r.get("mpc.horizon", c.horizon);
  r.get("mpc.steps", c.steps);
  r.get("mpc.sharpness", c.sharpness);
  if (const std::string* v = r.raw("mpc.x0")) {
    const auto xs = r.list("mpc.x0", *v);
    c.x0 = Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
    if (c.system && c.x0.size() != c.system->state_dim()) r.fail("mpc.x0", "dimension differs from the system");
  }
  c.controller = parse_controller(r, "mpc.controller", c.controller);
  if (c.horizon < 2) r.fail("mpc.horizon", "must be >= 2");
  if (c.steps < 0) r.fail("mpc.steps", "must be >= 0");
  if (!(c.sharpness > 0.0)) r.fail("mpc.sharpness", "must be > 0");

  r.get("alpha.samples", c.alpha_samples);
  r.get("alpha.origin_exclusion", c.alpha_origin_exclusion);
  r.get("alpha.safety_factor", c.alpha_safety_factor);
  r.get("alpha.tol", c.alpha_tol);
  if (c.alpha_samples < 1) r.fail("alpha.samples", "must be >= 1");
  if (c.alpha_origin_exclusion < 0.0) r.fail("alpha.origin_exclusion", "must be >= 0");
  if (c.alpha_safety_factor < 1.0) r.fail("alpha.safety_factor", "must be >= 1");
  if (!(c.alpha_tol > 0.0)) r.fail("alpha.tol", "must be > 0");

  c.compare_baseline = parse_controller(r, "compare.baseline", c.compare_baseline);
  if (r.has("compare.steps")) {
    int n = 0;
    r.get("compare.steps", n);
    if (n < 0) r.fail("compare.steps", "must be >= 0");
    c.compare_steps = n;
  }
}

}  // namespace

std::string to_string(ControllerKind k) { return k == ControllerKind::OneStep ? "one-step" : "full-horizon"; }

CostWeights ExperimentConfig::weights() const {
  if (Q.size() == 0 || R.size() == 0 || P.size() == 0) throw ConfigError("config: weights need a system");
  return CostWeights(Q, R, P);
}

std::filesystem::path ExperimentConfig::storage_path() const {
  return storage_file.is_absolute() ? storage_file : output_dir / storage_file;
}

std::filesystem::path ExperimentConfig::certificate_path() const {
  auto p = storage_path();
  p += ".alpha";
  return p;
}

std::map<std::string, std::pair<std::string, int>> parse_key_values(std::istream& in) {
  std::map<std::string, std::pair<std::string, int>> kv;
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(no) + ": empty key");
    if (value.empty()) throw ConfigError("config line " + std::to_string(no) + ": empty value for '" + key + "'");
    if (!kv.emplace(key, std::make_pair(value, no)).second)
      throw ConfigError("config line " + std::to_string(no) + ": repeated key '" + key + "'");
  }
  return kv;
}

ExperimentConfig parse_config(std::istream& in) {
  Reader r(parse_key_values(in));
  ExperimentConfig c;
  c.system = parse_system(r);
  parse_synth(r, c);
  parse_solver(r, c.solver);
  parse_weights(r, c);
  parse_mpc(r, c);
  r.get("seed", c.seed);
  std::string out;
  r.get("output_dir", out);
  if (!out.empty()) c.output_dir = out;
  r.reject_unused();
  if (c.system && c.grid_given) {
    try {
      c.synth.validate(*c.system);
    } catch (const UsageError& e) {
      throw ConfigError(std::string("config: synth: ") + e.what());
    }
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_config(in);
}

}  // namespace onestep
