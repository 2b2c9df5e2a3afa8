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

#include "dpverify/stats.h"

#include <cmath>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "dpverify/distributions.h"
#include "dpverify/error.h"
#include "dpverify/rng.h"

namespace dpverify {
namespace {

Matrix RandomPsd(int d, Rng& rng) {
  Matrix a(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) a(i, j) = rng.Normal();
  }
  return a * a.transpose() / d + 0.1 * Matrix::Identity(d, d);
}

TEST(EigFactorizeTest, DiagonalInputSortsDescending) {
  Matrix s = Eigen::Vector3d(3.0, 1.0, 2.0).asDiagonal();
  const CovFactorization f = EigFactorize(s, ComponentSelection::Count(2));
  EXPECT_EQ(f.p, 2);
  EXPECT_NEAR(f.eigenvalues[0], 3.0, 1e-14);
  EXPECT_NEAR(f.eigenvalues[1], 2.0, 1e-14);
  EXPECT_NEAR(f.eigenvalues[2], 1.0, 1e-14);
  EXPECT_NEAR(f.vectors(0, 0), 1.0, 1e-14);
  EXPECT_NEAR(f.vectors(2, 1), 1.0, 1e-14);
}

TEST(EigFactorizeTest, ReconstructsAndIsSignCanonical) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 2 + trial % 6;
    const Matrix s = RandomPsd(d, rng);
    const CovFactorization f = EigFactorize(s, ComponentSelection::All());
    const Matrix back =
        f.vectors * f.eigenvalues.asDiagonal() * f.vectors.transpose();
    EXPECT_LT((back - s).cwiseAbs().maxCoeff(), 1e-12);
    for (int i = 0; i < d; ++i) {
      Eigen::Index arg;
      f.vectors.col(i).cwiseAbs().maxCoeff(&arg);
      EXPECT_GT(f.vectors(arg, i), 0);
      if (i > 0) EXPECT_GE(f.eigenvalues[i - 1], f.eigenvalues[i]);
    }
    // Bit-identical on a repeated call.
    const CovFactorization again = EigFactorize(s, ComponentSelection::All());
    EXPECT_EQ(again.vectors, f.vectors);
    EXPECT_EQ(again.eigenvalues, f.eigenvalues);
  }
}

TEST(EigFactorizeTest, VarianceFractionPicksSmallestPrefix) {
  Matrix s = Eigen::Vector3d(5.0, 3.0, 2.0).asDiagonal();
  EXPECT_EQ(EigFactorize(s, ComponentSelection::VarianceFraction(0.5)).p, 1);
  EXPECT_EQ(EigFactorize(s, ComponentSelection::VarianceFraction(0.8)).p, 2);
  EXPECT_EQ(EigFactorize(s, ComponentSelection::VarianceFraction(0.81)).p, 3);
}

TEST(EigFactorizeTest, RejectsInvalidInput) {
  Matrix asym(2, 2);
  asym << 1, 0.5, 0.4, 1;
  EXPECT_THROW(EigFactorize(asym, ComponentSelection::All()), Error);
  Matrix indefinite(2, 2);
  indefinite << 1, 0, 0, -0.5;
  EXPECT_THROW(EigFactorize(indefinite, ComponentSelection::All()), Error);
  EXPECT_THROW(EigFactorize(Matrix::Identity(3, 3), ComponentSelection::Count(4)),
               Error);
  // Rounding-level negative eigenvalues are tolerated and zeroed.
  Matrix nearly(2, 2);
  nearly << 1, 0, 0, -1e-12;
  EXPECT_EQ(EigFactorize(nearly, ComponentSelection::All()).eigenvalues[1], 0.0);
}

TEST(WhitenTest, IdentityCovarianceIsIdentityMap) {
  const Vector r = Eigen::Vector3d(0.3, -1.2, 2.0);
  const CovFactorization f =
      EigFactorize(Matrix::Identity(3, 3), ComponentSelection::All());
  EXPECT_NEAR(Whiten(r, f).squaredNorm(), r.squaredNorm(), 1e-14);
}

TEST(WhitenTest, WhitenedNullResidualsAreChiSquare) {
  Rng rng(11);
  const Matrix s = RandomPsd(4, rng);
  const CovFactorization f = EigFactorize(s, ComponentSelection::All());
  const Eigen::LLT<Matrix> llt(s);
  const int n = 20000;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const Vector r = llt.matrixL() * rng.NormalVector(4);
    sum += Whiten(r, f).squaredNorm();
  }
  // Mean 4, variance 8.
  EXPECT_NEAR(sum / n, 4.0, 4 * std::sqrt(8.0 / n));
}

TEST(WhitenTest, ZeroRetainedEigenvalueThrows) {
  Matrix s = Eigen::Vector2d(1.0, 0.0).asDiagonal();
  const CovFactorization f = EigFactorize(s, ComponentSelection::All());
  EXPECT_THROW(Whiten(Vector::Ones(2), f), Error);
}

TEST(Chi2TestTest, StrictInequality) {
  const double thr = Chi2Quantile(0.05, 1);
  Vector tau(1);
  tau[0] = std::sqrt(thr);
  const TestOutcome at = Chi2Test(tau, 0.05);
  EXPECT_EQ(at.alarm, at.statistic > at.threshold);
  tau[0] = std::nextafter(std::sqrt(thr), 10.0) + 1e-9;
  EXPECT_TRUE(Chi2Test(tau, 0.05).alarm);
  EXPECT_FALSE(Chi2Test(Vector::Zero(3), 0.05).alarm);
  EXPECT_THROW(Chi2Test(Vector::Zero(3), 1.0), Error);
}

}  // namespace
}  // namespace dpverify
