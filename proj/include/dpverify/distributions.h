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

// Distribution functions needed by the detector and the bound evaluators.
// Central and noncentral chi-square are built on our own regularized
// incomplete gamma so there is no special-function dependency.

#ifndef DPVERIFY_DISTRIBUTIONS_H_
#define DPVERIFY_DISTRIBUTIONS_H_

namespace dpverify {

struct TailPair {
  double cdf;
  double sf;  // computed directly, not as 1 - cdf
};

// Regularized incomplete gamma P(a, x) and Q(a, x) = 1 - P(a, x).
TailPair RegularizedGamma(double a, double x);
double RegularizedGammaP(double a, double x);
double RegularizedGammaQ(double a, double x);

// Gamma(shape, rate) CDF.
double GammaCdf(double x, double shape, double rate);
// Exponential(rate) CDF.
double ExpCdf(double x, double rate);
// CDF of N(mean, variance). variance == 0 gives the step function.
double NormalCdf(double x, double mean = 0.0, double variance = 1.0);

// Central chi-square with k degrees of freedom.
double Chi2Cdf(double x, double k);
double Chi2Sf(double x, double k);
// x with Chi2Sf(x, k) == upper_tail.
double Chi2Quantile(double upper_tail, double k);

// Noncentral chi-square with k degrees of freedom and noncentrality lambda,
// evaluated as a Poisson(lambda / 2) mixture of central chi-squares. The
// series starts at the Poisson mode and walks outwards with the gamma
// recurrences; terms are dropped once the remaining Poisson mass cannot move
// either tail. Capped at 1e5 terms. For lambda > 2e7 (the near-zero-noise
// limit) a Sankaran normal approximation is used instead.
TailPair NcChi2(double x, double k, double lambda);
double NcChi2Cdf(double x, double k, double lambda);
double NcChi2Sf(double x, double k, double lambda);
double NcChi2Pdf(double x, double k, double lambda);
// x with NcChi2Sf(x, k, lambda) == upper_tail, by safeguarded Newton on the
// log survival function inside a bisection bracket.
double NcChi2Quantile(double upper_tail, double k, double lambda);

}  // namespace dpverify

#endif  // DPVERIFY_DISTRIBUTIONS_H_
