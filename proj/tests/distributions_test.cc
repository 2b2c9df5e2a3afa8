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

#include "dpverify/distributions.h"

#include <cmath>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "dpverify/error.h"
#include "dpverify/rng.h"

namespace dpverify {
namespace {

using ::testing::DoubleNear;

TEST(RegularizedGammaTest, MatchesBoostOnGrid) {
  for (double a : {0.5, 1.0, 1.5, 3.0, 7.5, 20.0, 150.0}) {
    for (double x : {1e-3, 0.1, 0.9, 2.0, 5.0, 10.0, 30.0, 200.0}) {
      const TailPair g = RegularizedGamma(a, x);
      EXPECT_NEAR(g.cdf, boost::math::gamma_p(a, x), 1e-13) << a << " " << x;
      EXPECT_NEAR(g.sf, boost::math::gamma_q(a, x), 1e-13) << a << " " << x;
    }
  }
}

TEST(RegularizedGammaTest, EdgeValues) {
  EXPECT_EQ(RegularizedGammaP(2.0, 0.0), 0.0);
  EXPECT_EQ(RegularizedGammaQ(2.0, 0.0), 1.0);
  EXPECT_EQ(RegularizedGammaP(2.0, INFINITY), 1.0);
  EXPECT_THROW(RegularizedGammaP(0.0, 1.0), Error);
  EXPECT_THROW(RegularizedGammaP(1.0, NAN), Error);
}

TEST(ClosedFormTest, ExponentialGammaNormal) {
  EXPECT_NEAR(ExpCdf(2.0, 0.5), 1 - std::exp(-1.0), 1e-15);
  EXPECT_EQ(ExpCdf(-1.0, 2.0), 0.0);
  // Gamma(1, rate) is Exp(rate).
  EXPECT_NEAR(GammaCdf(0.7, 1.0, 3.0), ExpCdf(0.7, 3.0), 1e-14);
  EXPECT_NEAR(NormalCdf(0.0), 0.5, 1e-16);
  EXPECT_NEAR(NormalCdf(1.959963984540054), 0.975, 1e-12);
  EXPECT_NEAR(NormalCdf(2.0, 0.0, 4.0), NormalCdf(1.0), 1e-15);
  EXPECT_EQ(NormalCdf(-1e-9, 0.0, 0.0), 0.0);
}

TEST(Chi2Test, KnownQuantiles) {
  EXPECT_NEAR(Chi2Quantile(0.05, 1), 3.841458820694124, 1e-9);
  EXPECT_NEAR(Chi2Quantile(0.05, 3), 7.814727903251178, 1e-9);
  EXPECT_NEAR(Chi2Quantile(0.01, 3), 11.344866730144373, 1e-9);
}

struct NcCase {
  double k;
  double lambda;
};

class NcChi2OracleTest : public ::testing::TestWithParam<NcCase> {};

TEST_P(NcChi2OracleTest, CdfAgreesWithBoost) {
  const NcCase c = GetParam();
  boost::math::non_central_chi_squared dist(c.k, c.lambda);
  const double mean = c.k + c.lambda;
  const double sd = std::sqrt(2 * (c.k + 2 * c.lambda));
  for (double z = -3; z <= 8; z += 0.5) {
    const double x = mean + z * sd;
    if (x <= 0) continue;
    EXPECT_THAT(NcChi2Cdf(x, c.k, c.lambda),
                DoubleNear(boost::math::cdf(dist, x), 1e-9))
        << "x=" << x;
  }
}

TEST_P(NcChi2OracleTest, UpperTailKeepsRelativeAccuracy) {
  const NcCase c = GetParam();
  boost::math::non_central_chi_squared dist(c.k, c.lambda);
  for (double tail : {1e-3, 1e-6, 1e-10}) {
    const double x = boost::math::quantile(boost::math::complement(dist, tail));
    EXPECT_NEAR(NcChi2Sf(x, c.k, c.lambda) / tail, 1.0, 1e-6) << tail;
  }
}

TEST_P(NcChi2OracleTest, QuantileRoundTrip) {
  const NcCase c = GetParam();
  for (double tail : {0.5, 0.05, 0.01, 1e-4, 1e-8, 1e-12}) {
    const double x = NcChi2Quantile(tail, c.k, c.lambda);
    EXPECT_NEAR(NcChi2Sf(x, c.k, c.lambda), tail, 1e-9 * std::max(tail, 1e-3));
    EXPECT_NEAR(1.0 - NcChi2Cdf(x, c.k, c.lambda), tail, 1e-9);
  }
}

TEST_P(NcChi2OracleTest, DensityIsDerivativeOfCdf) {
  const NcCase c = GetParam();
  const double x = c.k + c.lambda;
  const double h = 1e-5 * x;
  const double numeric =
      (NcChi2Cdf(x + h, c.k, c.lambda) - NcChi2Cdf(x - h, c.k, c.lambda)) /
      (2 * h);
  EXPECT_NEAR(NcChi2Pdf(x, c.k, c.lambda), numeric, 1e-7);
}

INSTANTIATE_TEST_SUITE_P(
    Grid, NcChi2OracleTest,
    ::testing::Values(NcCase{1, 0}, NcCase{3, 0}, NcCase{1, 0.3},
                      NcCase{2, 1.7}, NcCase{3, 4.2}, NcCase{3, 25},
                      NcCase{5, 120}, NcCase{3, 2500}, NcCase{10, 0.01}));

TEST(NcChi2Test, ReducesToCentral) {
  boost::math::chi_squared dist(4);
  for (double x : {0.5, 3.0, 9.0, 20.0}) {
    EXPECT_NEAR(NcChi2Cdf(x, 4, 0), boost::math::cdf(dist, x), 1e-13);
  }
}

TEST(NcChi2Test, MonotoneInNoncentrality) {
  double prev = 0.0;
  for (double lambda = 0; lambda < 30; lambda += 1.5) {
    const double sf = NcChi2Sf(8.0, 3, lambda);
    EXPECT_GT(sf, prev);
    prev = sf;
  }
}

TEST(NcChi2Test, RejectsBadArguments) {
  EXPECT_THROW(NcChi2Cdf(1.0, 0, 1.0), Error);
  EXPECT_THROW(NcChi2Cdf(1.0, 3, -1.0), Error);
  EXPECT_THROW(NcChi2Cdf(NAN, 3, 1.0), Error);
  EXPECT_THROW(NcChi2Quantile(0.0, 3, 1.0), Error);
  EXPECT_THROW(NcChi2Quantile(1.0, 3, 1.0), Error);
}

TEST(NcChi2Test, HugeNoncentralityUsesNormalLimit) {
  const double lambda = 1e9;
  const boost::math::non_central_chi_squared ref(3, lambda);
  for (double z : {-3.0, -1.0, 0.0, 1.5, 3.0}) {
    const double x = 3 + lambda + z * std::sqrt(2 * (3 + 2 * lambda));
    EXPECT_NEAR(NcChi2Cdf(x, 3, lambda), boost::math::cdf(ref, x), 1e-4) << z;
  }
  const double q = NcChi2Quantile(0.05, 3, lambda);
  EXPECT_NEAR(NcChi2Sf(q, 3, lambda), 0.05, 1e-10);
  // Continuity across the switch.
  EXPECT_NEAR(NcChi2Cdf(2e7 + 3000, 3, 2e7 - 1), NcChi2Cdf(2e7 + 3000, 3, 2e7 + 1),
              1e-4);
}

TEST(LaplaceTest, MomentsMatchScale) {
  Rng rng(7);
  const double scale = 0.25;
  const int n = 200000;
  double abs_sum = 0.0;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = rng.Laplace(scale);
    sum += v;
    abs_sum += std::fabs(v);
  }
  // E|X| = scale, sd of |X| = scale.
  EXPECT_NEAR(abs_sum / n, scale, 4 * scale / std::sqrt(n));
  EXPECT_NEAR(sum / n, 0.0, 4 * std::sqrt(2.0) * scale / std::sqrt(n));
}

TEST(RngTest, DerivedSeedsSeparateStreams) {
  EXPECT_NE(DeriveSeed(1, "u1", 0), DeriveSeed(1, "u1", 1));
  EXPECT_NE(DeriveSeed(1, "u1", 0), DeriveSeed(1, "u2", 0));
  EXPECT_NE(DeriveSeed(1, "u1", 0), DeriveSeed(2, "u1", 0));
  EXPECT_EQ(DeriveSeed(9, "plant", 4), DeriveSeed(9, "plant", 4));
}

}  // namespace
}  // namespace dpverify
