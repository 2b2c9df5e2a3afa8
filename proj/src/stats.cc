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
#include <string>

#include "dpverify/distributions.h"
#include "dpverify/error.h"

namespace dpverify {

CovFactorization EigFactorize(const Matrix& s, ComponentSelection selection) {
  const int d = static_cast<int>(s.rows());
  Require(d > 0 && s.cols() == d, "covariance must be square and nonempty");
  if (!s.allFinite()) {
    Fail(ErrorCode::kInvalidArgument, "covariance has non-finite entries");
  }
  const double scale = std::max(s.cwiseAbs().maxCoeff(), 1e-300);
  if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    Fail(ErrorCode::kInvalidArgument, "covariance is not symmetric");
  }

  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (s + s.transpose()));
  if (solver.info() != Eigen::Success) {
    Fail(ErrorCode::kNumerical, "eigendecomposition failed");
  }
  const double trace = s.trace();
  const Vector& ascending = solver.eigenvalues();
  if (ascending[0] < -1e-8 * std::fabs(trace)) {
    Fail(ErrorCode::kInvalidArgument,
         "covariance is not positive semidefinite (eigenvalue " +
             std::to_string(ascending[0]) + ")");
  }

  CovFactorization f;
  f.vectors.resize(d, d);
  f.eigenvalues.resize(d);
  for (int i = 0; i < d; ++i) {
    const int src = d - 1 - i;
    f.eigenvalues[i] = std::max(ascending[src], 0.0);
    Vector v = solver.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0) v = -v;
    f.vectors.col(i) = v;
  }

  if (selection.count < 0) {
    f.p = d;
  } else if (selection.count > 0) {
    Require(selection.count <= d, "retained components exceed dimension");
    f.p = selection.count;
  } else {
    const double q = selection.variance_fraction;
    Require(q > 0 && q <= 1, "variance fraction must lie in (0, 1]");
    double acc = 0.0;
    f.p = d;
    for (int i = 0; i < d; ++i) {
      acc += f.eigenvalues[i];
      if (acc >= q * trace * (1.0 - 1e-12)) {
        f.p = i + 1;
        break;
      }
    }
  }
  return f;
}

Vector Whiten(const Vector& r, const CovFactorization& factorization) {
  Require(r.size() == factorization.dim(), "residual dimension mismatch");
  const Vector lambdas = factorization.RetainedEigenvalues();
  if ((lambdas.array() <= 0).any()) {
    Fail(ErrorCode::kNumerical, "retained eigenvalue is not positive");
  }
  return (factorization.RetainedVectors().transpose() * r).array() /
         lambdas.array().sqrt();
}

double ProjectedEnergy(const Vector& r, const CovFactorization& factorization) {
  Require(r.size() == factorization.dim(), "residual dimension mismatch");
  return (factorization.RetainedVectors().transpose() * r).squaredNorm();
}

TestOutcome Chi2Test(const Vector& tau, double alpha) {
  Require(tau.size() > 0, "empty test vector");
  Require(alpha > 0 && alpha < 1, "alpha must lie in (0, 1)");
  TestOutcome out;
  out.statistic = tau.squaredNorm();
  out.threshold = Chi2Quantile(alpha, static_cast<double>(tau.size()));
  out.alarm = out.statistic > out.threshold;
  return out;
}

}  // namespace dpverify
