#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "onestep/alphacert.hpp"
#include "onestep/errors.hpp"

using namespace onestep;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

const StorageFunction& scalar_storage() {
  static const StorageFunction v = [] {
    SynthConfig cfg;
    cfg.grid_axes = {GridAxis{-1.0, 1.0, 201}};
    cfg.horizon = 5;
    return synthesize_storage(make_scalar_integrator(), cfg);
  }();
  return v;
}

CostWeights scalar_weights(double s = 1.0) {
  return CostWeights(Mat::Constant(1, 1, s), Mat::Constant(1, 1, s), Mat::Identity(1, 1));
}

TrajectoryLog vdp_loop(double alpha, int steps) {
  const auto sys = make_vdp();
  SolverConfig cfg;
  cfg.gradient_mode = GradientMode::AnalyticIfAvailable;
  return run_closed_loop(OneStepController{alpha, &fixture::vdp_storage(), fixture::vdp_weights()}, sys, sys,
                         vec2(-0.4, 0.2), steps, cfg);
}

}  // namespace

TEST(EstimateAlpha, ScalarIntegratorFiniteAndReverified) {
  const auto sys = make_scalar_integrator();
  const auto cert = estimate_alpha(sys, scalar_storage(), scalar_weights(), 500, 1e-3);
  ASSERT_TRUE(cert.valid);
  EXPECT_TRUE(std::isfinite(cert.alpha_est));
  EXPECT_GT(cert.alpha_est, 0.0);
  EXPECT_GT(cert.sample_count, 0);
  AlphaOptions fresh;
  fresh.seed = 99;
  const auto check = check_alpha_margin(sys, scalar_storage(), scalar_weights(), cert.alpha_est, 5000, 1e-3, fresh);
  EXPECT_GE(check.min_margin, -1e-6) << check.worst_point.transpose();
  EXPECT_EQ(check.nonpositive_decrease, 0);
}

TEST(EstimateAlpha, ZeroWeightsGiveZero) {
  const auto w = CostWeights::unchecked(Mat::Zero(1, 1), Mat::Zero(1, 1), Mat::Identity(1, 1));
  const auto cert = estimate_alpha(make_scalar_integrator(), scalar_storage(), w, 500, 1e-3);
  EXPECT_EQ(cert.raw_max_ratio, 0.0);
  EXPECT_EQ(cert.alpha_est, 0.0);
}

TEST(EstimateAlpha, ScalesWithWeights) {
  const auto sys = make_scalar_integrator();
  const auto a = estimate_alpha(sys, scalar_storage(), scalar_weights(1.0), 500, 1e-3);
  const auto b = estimate_alpha(sys, scalar_storage(), scalar_weights(2.0), 500, 1e-3);
  EXPECT_NEAR(b.raw_max_ratio, 2.0 * a.raw_max_ratio, 1e-12 * a.raw_max_ratio);
  EXPECT_EQ(a.worst_ratio_point, b.worst_ratio_point);
}

TEST(EstimateAlpha, SafetyFactorAndDeterminism) {
  const auto sys = make_scalar_integrator();
  AlphaOptions opts;
  opts.safety_factor = 1.5;
  opts.seed = 7;
  const auto a = estimate_alpha(sys, scalar_storage(), scalar_weights(), 300, 1e-3, opts);
  const auto b = estimate_alpha(sys, scalar_storage(), scalar_weights(), 300, 1e-3, opts);
  EXPECT_DOUBLE_EQ(a.alpha_est, 1.5 * a.raw_max_ratio);
  EXPECT_EQ(a.alpha_est, b.alpha_est);
  EXPECT_EQ(a.seed, 7u);
  EXPECT_EQ(a.samples_drawn, 300);
}

TEST(EstimateAlpha, FlatStorageIsInvalidWithOffendingPoint) {
  // V(1,.) constant: no decrease anywhere.
  const StorageFunction flat(std::vector<ScalarFunction>(4, Polynomial::constant(1, -1.0)));
  AlphaOptions opts;
  opts.box = std::vector<GridAxis>{GridAxis{-1.0, 1.0, 2}};
  const auto cert = estimate_alpha(make_scalar_integrator(), flat, scalar_weights(), 100, 1e-3, opts);
  EXPECT_FALSE(cert.valid);
  ASSERT_TRUE(cert.offending_point.has_value());
  EXPECT_LE(std::abs((*cert.offending_point)[0]), 1.0);
}

TEST(EstimateAlpha, VdpInExpectedRange) {
  const auto& cert = fixture::vdp_certificate();
  EXPECT_TRUE(cert.valid);
  EXPECT_GE(cert.alpha_est, 1.0);
  EXPECT_LE(cert.alpha_est, 100.0);
  EXPECT_EQ(cert.samples_drawn, fixture::kAlphaSamples);
}

TEST(EstimateAlpha, VdpMarginHoldsOnFreshSamples) {
  const auto& cert = fixture::vdp_certificate();
  AlphaOptions fresh;
  fresh.seed = 12345;
  const auto check = check_alpha_margin(make_vdp(), fixture::vdp_storage(), fixture::vdp_weights(), cert.alpha_est,
                                        fixture::kAlphaSamples, fixture::kOriginExclusion, fresh);
  EXPECT_GE(check.min_margin, -1e-6) << check.worst_point.transpose();
}

TEST(Certificate, RoundTrip) {
  const auto& cert = fixture::vdp_certificate();
  std::stringstream ss;
  cert.write(ss);
  const auto back = AlphaCertificate::read(ss);
  EXPECT_EQ(back.alpha_est, cert.alpha_est);
  EXPECT_EQ(back.raw_max_ratio, cert.raw_max_ratio);
  EXPECT_EQ(back.sample_count, cert.sample_count);
  EXPECT_EQ(back.seed, cert.seed);
  EXPECT_EQ(back.valid, cert.valid);
  EXPECT_EQ(back.worst_ratio_point, cert.worst_ratio_point);
  std::istringstream bad("not a certificate\n");
  EXPECT_THROW(AlphaCertificate::read(bad), ParseError);
}

TEST(DecreaseResiduals, CertifiedAlphaHasNonnegativeResiduals) {
  const double alpha = 1.1 * fixture::vdp_certificate().alpha_est;
  auto log = vdp_loop(alpha, 600);
  const auto r = verify_eq11_along(log, fixture::vdp_storage(), fixture::vdp_weights(), alpha);
  ASSERT_EQ(r.size(), 600u);
  EXPECT_EQ(log.eq11_residuals, r);
  for (std::size_t t = 0; t < r.size(); ++t) EXPECT_GE(r[t], -1e-6) << t;
}

TEST(DecreaseResiduals, SmallAlphaViolatesCondition) {
  auto log = vdp_loop(8.0, 600);
  const auto r = verify_eq11_along(log, fixture::vdp_storage(), fixture::vdp_weights(), 8.0);
  EXPECT_LT(*std::min_element(r.begin(), r.end()), 0.0);
}

TEST(DecreaseResiduals, EmptyTrajectoryGivesNoResiduals) {
  TrajectoryLog log;
  EXPECT_TRUE(verify_eq11_along(log, fixture::vdp_storage(), fixture::vdp_weights(), 5.0).empty());
  log.states.push_back(vec2(-0.4, 0.2));
  EXPECT_TRUE(verify_eq11_along(log, fixture::vdp_storage(), fixture::vdp_weights(), 5.0).empty());
}

TEST(DecreaseResiduals, ResidualsIncreaseWithAlphaWhereStorageDecreases) {
  auto log = vdp_loop(20.0, 100);
  const auto& v = fixture::vdp_storage();
  const auto lo = verify_eq11_along(log, v, fixture::vdp_weights(), 10.0);
  const auto hi = verify_eq11_along(log, v, fixture::vdp_weights(), 30.0);
  for (std::size_t t = 0; t < lo.size(); ++t) {
    const double dv = v(1, log.states[t]) - v(1, log.states[t + 1]);
    if (dv >= 0.0) {
      EXPECT_GE(hi[t], lo[t]) << t;
    }
    EXPECT_NEAR(hi[t] - lo[t], 20.0 * dv, 1e-9) << t;
  }
}
