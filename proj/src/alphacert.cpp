#include "onestep/alphacert.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "onestep/errors.hpp"

namespace onestep {

namespace {

struct AlphaSample {
  Vec x;
  double w;
  double dv;
};

std::vector<AlphaSample> draw_samples(const ControlSystem& sys, const StorageFunction& v, const CostWeights& weights,
                                      int samples, double origin_exclusion, const AlphaOptions& opts,
                                      std::uint64_t seed) {
  if (samples < 0) throw UsageError("alpha sampling: samples must be >= 0");
  if (!(origin_exclusion >= 0.0)) throw UsageError("alpha sampling: origin exclusion must be >= 0");
  if (v.horizon() < 2) throw UsageError("alpha sampling: storage horizon must be >= 2");
  std::vector<GridAxis> box;
  if (opts.box) {
    box = *opts.box;
  } else {
    if (!v.grid_axes()) throw UsageError("alpha sampling: a sampling box is required for polynomial V");
    auto b = sublevel_bounding_box(v, 1);
    if (!b) return {};
    box = *b;
  }
  if (static_cast<int>(box.size()) != v.state_dim()) throw UsageError("alpha sampling: box dimension mismatch");

  std::mt19937_64 rng(seed);
  std::vector<std::uniform_real_distribution<double>> dist;
  for (const auto& a : box) dist.emplace_back(a.lower, a.upper);
  std::vector<AlphaSample> out;
  Vec x(v.state_dim());
  for (int k = 0; k < samples; ++k) {
    for (int i = 0; i < x.size(); ++i) x[i] = dist[i](rng);
    const double v1 = v(1, x);
    if (v1 > 0.0 || x.norm() < origin_exclusion) continue;
    const Vec u = select_viable_input(sys, v, 1, x, opts.input, 0.0);
    const Vec xn = rk4_step(sys, x, u);
    out.push_back({x, stage_cost(weights, x, u), v1 - v(1, xn)});
  }
  return out;
}

std::string join(const Vec& x) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (int i = 0; i < x.size(); ++i) os << (i ? " " : "") << x[i];
  return os.str();
}

}  // namespace

AlphaCertificate estimate_alpha(const ControlSystem& sys, const StorageFunction& v, const CostWeights& weights,
                                int samples, double origin_exclusion, const AlphaOptions& opts) {
  if (!(opts.safety_factor >= 1.0)) throw UsageError("estimate_alpha: safety factor must be >= 1");
  AlphaCertificate cert;
  cert.safety_factor = opts.safety_factor;
  cert.samples_drawn = samples;
  cert.origin_exclusion = origin_exclusion;
  cert.seed = opts.seed;
  cert.tol = opts.tol;

  const auto kept = draw_samples(sys, v, weights, samples, origin_exclusion, opts, opts.seed);
  cert.sample_count = static_cast<int>(kept.size());
  double worst = 0.0;
  for (const auto& s : kept) {
    if (s.dv <= 0.0) {
      if (!cert.offending_point) cert.offending_point = s.x;
      continue;
    }
    const double r = s.w / s.dv;
    if (r > worst || cert.worst_ratio_point.size() == 0) {
      worst = std::max(worst, r);
      cert.worst_ratio_point = s.x;
    }
  }
  cert.raw_max_ratio = worst;
  cert.alpha_est = opts.safety_factor * worst;
  cert.min_margin = std::numeric_limits<double>::infinity();
  for (const auto& s : kept) cert.min_margin = std::min(cert.min_margin, cert.alpha_est * s.dv - s.w);
  if (kept.empty()) cert.min_margin = 0.0;
  cert.valid = !kept.empty() && !cert.offending_point && cert.alpha_est > 0.0 && cert.min_margin >= -opts.tol;
  return cert;
}

MarginCheck check_alpha_margin(const ControlSystem& sys, const StorageFunction& v, const CostWeights& weights,
                               double alpha, int samples, double origin_exclusion, const AlphaOptions& opts) {
  MarginCheck mc;
  mc.min_margin = std::numeric_limits<double>::infinity();
  const auto kept = draw_samples(sys, v, weights, samples, origin_exclusion, opts, opts.seed);
  mc.sample_count = static_cast<int>(kept.size());
  for (const auto& s : kept) {
    if (s.dv <= 0.0) ++mc.nonpositive_decrease;
    const double m = alpha * s.dv - s.w;
    if (m < mc.min_margin) {
      mc.min_margin = m;
      mc.worst_point = s.x;
    }
  }
  return mc;
}

std::vector<double> verify_eq11_along(TrajectoryLog& log, const StorageFunction& v, const CostWeights& weights,
                                      double alpha) {
  if (log.states.size() != log.inputs.size() + 1 && !(log.states.empty() && log.inputs.empty()))
    throw UsageError("verify_eq11_along: need |inputs| = |states| - 1");
  std::vector<double> res;
  res.reserve(log.inputs.size());
  for (std::size_t t = 0; t < log.inputs.size(); ++t) {
    const double dv = v(1, log.states[t]) - v(1, log.states[t + 1]);
    res.push_back(alpha * dv - stage_cost(weights, log.states[t], log.inputs[t]));
  }
  log.eq11_residuals = res;
  return res;
}

// --------------------------------------------------------------- file format

void AlphaCertificate::write(std::ostream& out) const {
  const auto prec = out.precision();
  out << std::setprecision(17);
  out << "onestep-alpha-certificate 1\n";
  out << "alpha_est " << alpha_est << '\n';
  out << "raw_max_ratio " << raw_max_ratio << '\n';
  out << "safety_factor " << safety_factor << '\n';
  out << "samples_drawn " << samples_drawn << '\n';
  out << "sample_count " << sample_count << '\n';
  out << "origin_exclusion " << origin_exclusion << '\n';
  out << "seed " << seed << '\n';
  out << "worst_ratio_point " << worst_ratio_point.size() << (worst_ratio_point.size() ? " " : "")
      << join(worst_ratio_point) << '\n';
  out << "min_margin " << min_margin << '\n';
  out << "tol " << tol << '\n';
  out << "valid " << (valid ? 1 : 0) << '\n';
  if (offending_point)
    out << "offending_point " << offending_point->size() << ' ' << join(*offending_point) << '\n';
  else
    out << "offending_point 0\n";
  out.precision(prec);
}

AlphaCertificate AlphaCertificate::read(std::istream& in) {
  AlphaCertificate c;
  std::string word;
  auto expect = [&](const char* key) {
    if (!(in >> word) || word != key) throw ParseError(std::string("certificate: expected '") + key + "'");
  };
  auto vec = [&]() {
    int n = 0;
    if (!(in >> n) || n < 0) throw ParseError("certificate: bad vector length");
    Vec x(n);
    for (int i = 0; i < n; ++i)
      if (!(in >> x[i])) throw ParseError("certificate: bad vector entry");
    return x;
  };
  auto num = [&](auto& dst) {
    if (!(in >> dst)) throw ParseError("certificate: bad value after '" + word + "'");
  };
  int version = 0;
  expect("onestep-alpha-certificate");
  num(version);
  if (version != 1) throw ParseError("certificate: unsupported version");
  expect("alpha_est");
  num(c.alpha_est);
  expect("raw_max_ratio");
  num(c.raw_max_ratio);
  expect("safety_factor");
  num(c.safety_factor);
  expect("samples_drawn");
  num(c.samples_drawn);
  expect("sample_count");
  num(c.sample_count);
  expect("origin_exclusion");
  num(c.origin_exclusion);
  expect("seed");
  num(c.seed);
  expect("worst_ratio_point");
  c.worst_ratio_point = vec();
  expect("min_margin");
  num(c.min_margin);
  expect("tol");
  num(c.tol);
  expect("valid");
  int valid = 0;
  num(valid);
  c.valid = valid != 0;
  expect("offending_point");
  Vec off = vec();
  if (off.size() > 0) c.offending_point = off;
  return c;
}

}  // namespace onestep
