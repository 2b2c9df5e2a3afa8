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

// Evaluators for the statistical and privacy guarantees of the sequential
// disclosure scheme.
//
// Noncentral chi-square CDFs are always evaluated on sigma^2-scaled
// statistics: F^tau(z) below means NcChi2Cdf(z / sigma^2, p, ||tau||^2 /
// sigma^2), the exact law of the perturbed statistic when the input vector is
// tau.

#ifndef DPVERIFY_BOUNDS_H_
#define DPVERIFY_BOUNDS_H_

#include <cstdint>
#include <deque>
#include <map>
#include <string>

#include "dpverify/privacy.h"
#include "dpverify/stats.h"

namespace dpverify {

// Sliding window over the last `window` vectors that remembers the one with
// the largest 2-norm (most recent on ties).
class TauMaxTracker {
 public:
  explicit TauMaxTracker(size_t window = 50);

  void Update(const Vector& v);
  bool empty() const { return history_.empty(); }
  size_t size() const { return history_.size(); }
  size_t window() const { return window_; }
  // Throws kFailedPrecondition when empty.
  const Vector& current_max() const;
  double max_norm2() const { return empty() ? 0.0 : current_max().squaredNorm(); }
  const std::deque<Vector>& history() const { return history_; }

 private:
  size_t window_;
  std::deque<Vector> history_;
  size_t argmax_ = 0;
};

// Per-session null-epoch state: largest covariance-perturbed
// whitened residual and largest raw residual seen on null epochs.
struct Trackers {
  explicit Trackers(size_t window = 50) : tau_cov(window), residual(window) {}
  TauMaxTracker tau_cov;
  TauMaxTracker residual;
};

// Inputs the Type-I evaluators need about the null reference.
struct NullReference {
  double tau_norm2 = 0.0;   // ||tau_ref||^2, unscaled
  double r_max_norm2 = 0.0;
};

// tau_ref is the larger of the tracked maximum and the boundary of the
// utility's own acceptance region, ||tau||^2 = chi2_{p, alpha}. Throws
// kFailedPrecondition when the trackers are empty.
NullReference MakeNullReference(const Trackers& trackers, int p, double alpha);

struct Lemma1Result {
  double res_energy = 0.0;
  double bound = 0.0;
  double confidence = 0.0;
};

Lemma1Result Lemma1Bound(const Vector& r, const CovFactorization& factorization,
                         double theta_l, double gamma_cov);

struct Thm2Interval {
  double lower = 0.0;
  double upper = 0.0;
  double joint_prob = 0.0;
  bool reordered = false;  // sum(tau) < 0 swapped the endpoints
};

// Interval for (T_res_hat - T) / sigma^2.
Thm2Interval ComputeThm2Interval(const Vector& tau, double sigma,
                                 double theta_r, double gamma_r);

// Mixing weights of the Type-I and misclassification bounds.
struct Omega {
  double w1 = 0.0;  // 1 - GammaCdf(res_energy * theta_l; p, eps_cov / (delta_l r_max^2))
  double w2 = 0.0;  // ExpCdf(theta_l; eps_cov / delta_l)^p
};

Omega ComputeOmega(double res_energy, double r_max_norm2, int d,
                   const PrivacyParams& params);

// chi^{2,NC}_{alpha_hat}: upper alpha_hat quantile of the scaled statistic at
// the reference noncentrality.
double DpQuantile(double alpha_hat, const NullReference& ref,
                  const PrivacyParams& params);

double Thm3E1Max(double alpha_hat, const Vector& tau_cov_hat,
                 double res_energy, const NullReference& ref, int d,
                 const PrivacyParams& params);

struct AlphaHatResult {
  double alpha_hat = 0.0;
  double e1max = 0.0;            // Monte Carlo estimate at alpha_hat
  double mc_stderr = 0.0;
  bool no_inversion_needed = false;  // e1max(alpha) <= alpha already
  bool at_floor = false;             // even 1e-12 overshoots alpha
  int iterations = 0;
};

// Solves E_I^max(alpha_hat) = alpha by bisection on log(alpha_hat) over
// (1e-12, alpha]. The first term of E_I^max is averaged over n_mc null epochs
// r ~ N(0, S) drawn in the eigenbasis of `reference`, pushed through the
// Laplace eigenvalue mechanism; the same draws are reused for every
// candidate, so the estimate is monotone in alpha_hat.
AlphaHatResult InvertAlphaHat(double alpha, const PrivacyParams& params,
                              const NullReference& ref,
                              const CovFactorization& reference, int n_mc,
                              uint64_t seed);

// Monte Carlo E_I^max at a fixed alpha_hat, for checking an inversion with
// fresh draws.
AlphaHatResult EstimateE1Max(double alpha_hat, const PrivacyParams& params,
                             const NullReference& ref,
                             const CovFactorization& reference, int n_mc,
                             uint64_t seed);

struct Thm4Bounds {
  double t_hat = 0.0;
  double fn_bound = 0.0;
  double fp_bound = 0.0;
};

Thm4Bounds ComputeThm4Bounds(const Vector& tau_cov_hat, double t_orig,
                             double alpha, double alpha_hat,
                             double res_energy, const NullReference& ref,
                             int d, const PrivacyParams& params);

struct Thm5Loss {
  double q = 0.0;  // 1^T S_hat^-1 1
  double loss = 0.0;
  double prob_bound = 0.0;
};

Thm5Loss ComputeThm5Loss(double delta_r, double sigma, const Matrix& s_hat,
                         double theta_r, int p, double gamma_r);

struct Thm6Privacy {
  double a = 0.0;
  double b = 0.0;
  double eps_prime = 0.0;
  double delta_prime = 0.0;
};

// Reports eps' at its lower bound and delta' there.
Thm6Privacy ComputeThm6Privacy(double eps_cov, double sigma,
                               const Vector& delta_vec, const Matrix& c);
// delta' at a chosen eps' >= eps_cov.
double Thm6DeltaAt(double eps_prime, double eps_cov, double sigma,
                   const Vector& delta_vec, const Matrix& c);
// (delta_r / sqrt(d)) * 1.
Vector UniformDeltaVector(double delta_r, int d);

struct BoundReport {
  // Inputs worth keeping next to the numbers.
  uint64_t seed = 0;
  int n_mc = 0;
  double alpha = 0.0;
  double sigma = 0.0;
  double theta_l = 0.0;
  double theta_r = 0.0;
  bool theta_r_vacuous = false;
  double res_energy = 0.0;
  double t_orig = 0.0;

  double lemma1_bound = 0.0;
  double lemma1_confidence = 0.0;
  Thm2Interval thm2;
  double alpha_hat = 0.0;
  double dp_quantile = 0.0;
  double thm3_e1max = 0.0;
  double omega1 = 0.0;
  double omega2 = 0.0;
  double thm4_t_hat = 0.0;
  double thm4_fn_bound = 0.0;
  double thm4_fp_bound = 0.0;
  double thm5_loss = 0.0;
  double thm5_prob_bound = 0.0;
  double thm6_eps_prime = 0.0;
  double thm6_delta_prime = 0.0;

  // Flat key -> value text, numbers at 17 significant digits.
  std::map<std::string, std::string> ToKeyValues() const;
};

}  // namespace dpverify

#endif  // DPVERIFY_BOUNDS_H_
