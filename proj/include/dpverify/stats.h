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

#ifndef DPVERIFY_STATS_H_
#define DPVERIFY_STATS_H_

#include <Eigen/Dense>

namespace dpverify {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Which eigen-components to keep: the top `count`, or the fewest whose
// eigenvalues reach `variance_fraction` of the trace.
struct ComponentSelection {
  int count = 0;
  double variance_fraction = 0.0;

  static ComponentSelection Count(int p) { return {p, 0.0}; }
  static ComponentSelection VarianceFraction(double q) { return {0, q}; }
  static ComponentSelection All() { return {-1, 0.0}; }
};

// Spectral factorization S = V diag(lambdas) V^T with eigenvalues in
// descending order. Each eigenvector is signed so that its largest-magnitude
// entry is positive, which makes the result a deterministic function of S.
struct CovFactorization {
  Matrix vectors;       // d x d, columns are eigenvectors
  Vector eigenvalues;   // d, descending
  int p = 0;            // retained components

  int dim() const { return static_cast<int>(eigenvalues.size()); }
  Matrix RetainedVectors() const { return vectors.leftCols(p); }
  Vector RetainedEigenvalues() const { return eigenvalues.head(p); }
};

// Throws kInvalidArgument on a non-square or non-symmetric S (relative
// tolerance 1e-10) and when an eigenvalue is below -1e-8 * trace. Small
// negative eigenvalues within that tolerance are set to zero.
CovFactorization EigFactorize(const Matrix& s, ComponentSelection selection);

// tau = diag(lambda_p)^(-1/2) V_p^T r. Requires the retained eigenvalues to
// be positive.
Vector Whiten(const Vector& r, const CovFactorization& factorization);

// Sum of squared projections of r on the retained eigenvectors.
double ProjectedEnergy(const Vector& r, const CovFactorization& factorization);

struct TestOutcome {
  double statistic = 0.0;  // ||tau||^2
  double threshold = 0.0;  // upper-alpha quantile of chi2 with dim(tau) dof
  bool alarm = false;      // statistic > threshold, strictly
};

TestOutcome Chi2Test(const Vector& tau, double alpha);

}  // namespace dpverify

#endif  // DPVERIFY_STATS_H_
