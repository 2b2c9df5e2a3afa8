//
// Copyright 2026 The dpverify Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "dpverify/bounds.h"

#include <cmath>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "dpverify/distributions.h"
#include "dpverify/error.h"
#include "dpverify/rng.h"

namespace dpverify {
namespace {

using ::testing::Le;

PrivacyParams TestParams(double eps_r = 100.0) {
  return PrivacyParams::Make(100, eps_r, 0.01, 0.01, 0.1, 50, 3);
}

CovFactorization TestReference() {
  Matrix s(3, 3);
  s << 2.4, 0.4, 0.6,  //
      0.4, 2.2, 0.5,   //
      0.6, 0.5, 1.9;
  return EigFactorize(s, ComponentSelection::Count(3));
}

TEST(TauMaxTrackerTest, BasicUpdates) {
  TauMaxTracker tracker(3);
  EXPECT_THROW(tracker.current_max(), Error);
  tracker.Update(Eigen::Vector2d(1, 1));
  EXPECT_EQ(tracker.current_max(), Vector(Eigen::Vector2d(1, 1)));
  tracker.Update(Eigen::Vector2d(0.1, 0));
  EXPECT_EQ(tracker.current_max(), Vector(Eigen::Vector2d(1, 1)));
  // Tie: the most recent wins.
  tracker.Update(Eigen::Vector2d(-1, -1));
  EXPECT_EQ(tracker.current_max(), Vector(Eigen::Vector2d(-1, -1)));
  EXPECT_THROW(tracker.Update(Vector::Zero(3)), Error);
}

TEST(TauMaxTrackerTest, SlidingWindowMatchesBruteForce) {
  Rng rng(2);
  TauMaxTracker tracker(7);
  std::vector<Vector> all;
  for (int i = 0; i < 200; ++i) {
    all.push_back(rng.NormalVector(3));
    tracker.Update(all.back());
    double best = -1;
    Vector best_v;
    for (size_t j = all.size() > 7 ? all.size() - 7 : 0; j < all.size(); ++j) {
      if (all[j].squaredNorm() >= best) {
        best = all[j].squaredNorm();
        best_v = all[j];
      }
    }
    ASSERT_EQ(tracker.current_max(), best_v) << i;
    ASSERT_LE(tracker.size(), 7u);
  }
}

TEST(NullReferenceTest, FloorsAtAcceptanceBoundary) {
  Trackers trackers(5);
  EXPECT_THROW(MakeNullReference(trackers, 3, 0.05), Error);
  trackers.tau_cov.Update(Eigen::Vector3d(0.1, 0.1, 0.1));
  trackers.residual.Update(Eigen::Vector3d(1, 2, 2));
  NullReference ref = MakeNullReference(trackers, 3, 0.05);
  EXPECT_NEAR(ref.tau_norm2, Chi2Quantile(0.05, 3), 1e-12);
  EXPECT_DOUBLE_EQ(ref.r_max_norm2, 9.0);
  trackers.tau_cov.Update(Eigen::Vector3d(3, 0, 0));
  EXPECT_DOUBLE_EQ(MakeNullReference(trackers, 3, 0.05).tau_norm2, 9.0);
}

TEST(Lemma1BoundTest, TrivialCases) {
  const CovFactorization f = TestReference();
  EXPECT_EQ(Lemma1Bound(Vector::Zero(3), f, 0.5, 0.01).bound, 0.0);
  const Lemma1Result r = Lemma1Bound(Eigen::Vector3d(1, 2, 3), f, 0.0, 0.01);
  EXPECT_EQ(r.bound, 0.0);
  EXPECT_NEAR(r.res_energy, 14.0, 1e-12);  // all components: rotation invariant
  EXPECT_DOUBLE_EQ(r.confidence, 0.99);
}

TEST(Thm2IntervalTest, SymmetricCaseAndLimits) {
  const Thm2Interval zero = ComputeThm2Interval(Vector::Zero(3), 2.0, 6.0, 0.01);
  EXPECT_DOUBLE_EQ(zero.lower, zero.upper);
  EXPECT_DOUBLE_EQ(zero.lower, 36.0 / (4.0 * 3));
  const Thm2Interval almost_sure =
      ComputeThm2Interval(Eigen::Vector3d(1, 2, 3), 2.0, 6.0, 1.0 - 1e-12);
  EXPECT_LT(almost_sure.joint_prob, 1e-9);
  const Thm2Interval neg =
      ComputeThm2Interval(Eigen::Vector3d(-1, -2, -3), 2.0, 6.0, 0.01);
  EXPECT_TRUE(neg.reordered);
  EXPECT_LE(neg.lower, neg.upper);
}

TEST(OmegaTest, Structure) {
  const PrivacyParams params = TestParams();
  // res_energy = 0: the Gamma CDF is 0, so the first weight is 1.
  EXPECT_DOUBLE_EQ(ComputeOmega(0.0, 4.0, 3, params).w1, 1.0);
  // w2 = (1 - gamma_cov / d)^p since theta_l * rate = ln(d / gamma_cov).
  EXPECT_NEAR(ComputeOmega(1.0, 4.0, 3, params).w2,
              std::pow(1 - 0.01 / 3, 3), 1e-12);
  // w1 shrinks as the epoch's energy grows relative to r_max.
  EXPECT_GT(ComputeOmega(1.0, 4.0, 3, params).w1,
            ComputeOmega(3.0, 4.0, 3, params).w1);
}

TEST(Thm3E1MaxTest, MonotoneInAlphaHatAndBoundedByWeights) {
  const PrivacyParams params = TestParams();
  const NullReference ref{Chi2Quantile(0.05, 3), 20.0};
  const Vector tau = Eigen::Vector3d(1.0, -0.5, 0.7);
  const Omega omega = ComputeOmega(2.0, ref.r_max_norm2, 3, params);
  double prev = 0.0;
  for (double a : {1e-8, 1e-5, 1e-3, 0.01, 0.05, 0.3, 0.999999}) {
    const double e = Thm3E1Max(a, tau, 2.0, ref, 3, params);
    EXPECT_GE(e, prev);
    EXPECT_THAT(e, Le(omega.w1 + omega.w2 + 1e-12));
    prev = e;
  }
  EXPECT_GT(prev, 0.99 * std::min(1.0, omega.w1 + omega.w2));
}

TEST(InvertAlphaHatTest, HitsTargetAndIsMonotone) {
  const PrivacyParams params = TestParams();
  const NullReference ref{Chi2Quantile(0.05, 3), 25.0};
  const CovFactorization s = TestReference();
  double prev = 0.0;
  for (double alpha : {0.005, 0.01, 0.05, 0.1}) {
    const AlphaHatResult r = InvertAlphaHat(alpha, params, ref, s, 4000, 77);
    EXPECT_LE(r.alpha_hat, alpha);
    EXPECT_GE(r.alpha_hat, prev);
    if (!r.no_inversion_needed) {
      EXPECT_NEAR(r.e1max, alpha, 0.01 * alpha);
    }
    // Fresh draws agree within the Monte Carlo error.
    const AlphaHatResult check =
        EstimateE1Max(r.alpha_hat, params, ref, s, 4000, 78);
    EXPECT_NEAR(check.e1max, alpha,
                std::max(0.05 * alpha, 4 * check.mc_stderr));
    prev = r.alpha_hat;
  }
}

TEST(InvertAlphaHatTest, Deterministic) {
  const PrivacyParams params = TestParams();
  const NullReference ref{Chi2Quantile(0.05, 3), 25.0};
  const AlphaHatResult a =
      InvertAlphaHat(0.05, params, ref, TestReference(), 2000, 5);
  const AlphaHatResult b =
      InvertAlphaHat(0.05, params, ref, TestReference(), 2000, 5);
  EXPECT_EQ(a.alpha_hat, b.alpha_hat);
}

TEST(Thm4BoundsTest, FalsePositiveBoundBelowWeights) {
  const PrivacyParams params = TestParams();
  const NullReference ref{Chi2Quantile(0.05, 3), 25.0};
  const Vector tau = Eigen::Vector3d(0.4, 0.3, -0.2);
  const Omega omega = ComputeOmega(1.0, ref.r_max_norm2, 3, params);
  for (double t : {0.0, 2.0, 10.0, 50.0}) {
    const Thm4Bounds b =
        ComputeThm4Bounds(tau, t, 0.05, 0.03, 1.0, ref, 3, params);
    EXPECT_THAT(b.fp_bound, Le(omega.w1 + omega.w2 + 1e-12));
    EXPECT_GE(b.fn_bound, 0.0);
    EXPECT_LE(b.fn_bound, 1.0);
  }
  // Larger original statistic: the DP test is more likely to fire.
  EXPECT_GT(ComputeThm4Bounds(tau, 2.0, 0.05, 0.03, 1.0, ref, 3, params).fn_bound,
            ComputeThm4Bounds(tau, 50.0, 0.05, 0.03, 1.0, ref, 3, params).fn_bound);
}

TEST(Thm5LossTest, IdentityClosedFormAndMonotonicity) {
  const Thm5Loss l = ComputeThm5Loss(50, 2.0, Matrix::Identity(3, 3), 4.0, 3, 0.01);
  EXPECT_DOUBLE_EQ(l.q, 3.0);
  EXPECT_NEAR(l.loss, (50 / 4.0) * 9 * (16.0 / 3 + 1.0 / 6), 1e-9);
  EXPECT_NEAR(l.prob_bound, 1 - std::pow(0.99, 3), 1e-15);
  double prev = INFINITY;
  for (double sigma : {0.5, 1.0, 2.0, 4.0}) {
    const double loss =
        ComputeThm5Loss(50, sigma, Matrix::Identity(3, 3), 4.0, 3, 0.01).loss;
    EXPECT_LT(loss, prev);
    prev = loss;
  }
  Rng rng(4);
  for (int i = 0; i < 20; ++i) {
    Matrix a(3, 3);
    for (int j = 0; j < 9; ++j) a(j / 3, j % 3) = rng.Normal();
    const Matrix s = a * a.transpose() + 0.1 * Matrix::Identity(3, 3);
    EXPECT_LT(ComputeThm5Loss(50, 2.0, 2.0 * s, 4.0, 3, 0.01).loss,
              ComputeThm5Loss(50, 2.0, s, 4.0, 3, 0.01).loss);
  }
  EXPECT_THROW(ComputeThm5Loss(50, 2.0, -Matrix::Identity(3, 3), 4, 3, 0.01),
               Error);
}

TEST(Thm6PrivacyTest, ClosedFormAndLimits) {
  const Vector delta = Eigen::Vector3d(2.0, 0, 0);
  const Thm6Privacy t = ComputeThm6Privacy(1.0, 3.0, delta, Matrix::Identity(3, 3));
  EXPECT_DOUBLE_EQ(t.a, 4.0);
  EXPECT_DOUBLE_EQ(t.b, 2.0);
  EXPECT_DOUBLE_EQ(t.eps_prime, 1.0 + 4.0 / 18.0);
  EXPECT_NEAR(t.delta_prime, 0.0, 1e-15);
  const Thm6Privacy far =
      ComputeThm6Privacy(1.0, 1e6, UniformDeltaVector(50, 3), Matrix::Identity(3, 3));
  EXPECT_NEAR(far.eps_prime, 1.0, 1e-8);
  for (double eps : {1.5, 2.0, 5.0}) {
    const double d = Thm6DeltaAt(eps, 1.0, 3.0, delta, Matrix::Identity(3, 3));
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
  }
  EXPECT_THROW(ComputeThm6Privacy(1.0, 3.0, Vector::Zero(3), Matrix::Identity(3, 3)),
               Error);
}

TEST(BoundReportTest, FlatKeys) {
  BoundReport report;
  report.thm3_e1max = 0.25;
  const auto kv = report.ToKeyValues();
  EXPECT_EQ(kv.at("thm3_e1max"), "0.25");
  for (const char* key :
       {"lemma1_bound", "thm2_lower", "thm2_upper", "thm2_joint_prob",
        "alpha_hat", "thm4_fn_bound", "thm4_fp_bound", "thm5_loss",
        "thm5_prob_bound", "thm6_eps_prime", "thm6_delta_prime"}) {
    EXPECT_TRUE(kv.count(key)) << key;
  }
}

}  // namespace
}  // namespace dpverify
