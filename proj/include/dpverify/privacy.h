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

// The two disclosure mechanisms: Laplace noise on the eigenvalues of the
// residual covariance, then Gaussian noise on the whitened residual.

#ifndef DPVERIFY_PRIVACY_H_
#define DPVERIFY_PRIVACY_H_

#include <cstdint>

#include "dpverify/rng.h"
#include "dpverify/stats.h"

namespace dpverify {

// Standard deviation of the Gaussian mechanism:
//   (delta_r / eps_r) * sqrt(2 ln(1.25 / gamma_r)).
// Throws if gamma_r >= 1.25 or any argument is nonpositive. The classical
// guarantee needs eps_r <= 1; larger values are accepted and flagged through
// PrivacyParams::eps_r_waived.
double GdpSigma(double delta_r, double eps_r, double gamma_r);

struct PrivacyParams {
  double eps_cov = 1.0;
  double eps_r = 1.0;
  double gamma_cov = 0.01;
  double gamma_r = 0.01;
  double delta_l = 0.1;    // eigenvalue sensitivity
  double delta_r = 50.0;   // residual sensitivity
  int p = 3;               // retained components
  double sigma = 0.0;      // Gaussian noise scale in use
  bool use_calibration = false;
  bool eps_r_waived = false;  // eps_r > 1 accepted outside the classical range

  // Fills sigma with GdpSigma and sets eps_r_waived.
  static PrivacyParams Make(double eps_cov, double eps_r, double gamma_cov,
                            double gamma_r, double delta_l, double delta_r,
                            int p, bool use_calibration = false);

  double MinSigma() const { return GdpSigma(delta_r, eps_r, gamma_r); }
  double LaplaceScale() const { return delta_l / eps_cov; }
  // Throws kInvalidArgument when a field is out of range, including a sigma
  // below MinSigma().
  void Validate(int d) const;
};

struct ThetaR {
  double value = 0.0;
  bool vacuous = false;  // value <= 0: the residual bound says nothing
};

// sigma^2 eps_r / delta_r - p delta_r / 2.
ThetaR ComputeThetaR(double sigma, double eps_r, double delta_r, int p);

// (delta_l / eps_cov) ln(d / gamma_cov).
double ComputeThetaL(double delta_l, double eps_cov, double gamma_cov, int d);

struct PerturbedCovariance {
  Matrix s_hat;
  // Factorization of s_hat by EigFactorize, i.e. exactly what the regulator
  // computes from the disclosed matrix.
  CovFactorization factorization;
  Vector raw_eigenvalues;  // lambda + Laplace, before flooring
  int clamp_count = 0;     // eigenvalues raised to the floor
};

// lambda_hat_i = max(lambda_i + Lap(laplace_scale), floor_frac * trace / d),
// eigenvectors unchanged.
PerturbedCovariance PerturbCovariance(const Matrix& s, double laplace_scale,
                                      ComponentSelection selection, Rng& rng,
                                      double floor_frac = 1e-8);

struct GdpDraw {
  Vector tau_hat;
  Vector noise;
};

GdpDraw GdpPerturb(const Vector& tau, double sigma, Rng& rng);

// mu = ||tau_max||^2 / quantile, the scale that puts the reference statistic
// at the DP threshold. Throws on a nonpositive quantile.
double CalibrationFactor(double tau_max_norm2, double quantile);

struct Disclosure {
  PerturbedCovariance covariance;
  Vector tau_cov_hat;  // whiten(r, S_hat)
  Vector tau_res_hat;  // tau_cov_hat + noise
  Vector tau_rg;       // r + V_p diag(lambda_hat_p)^(1/2) noise
  Vector noise;
  double sigma = 0.0;
};

// Covariance phase only.
struct CovariancePhase {
  PerturbedCovariance covariance;
  Vector tau_cov_hat;
};
CovariancePhase DiscloseCovariance(const Vector& r, const Matrix& s,
                                   const PrivacyParams& params, Rng& rng);
// Gaussian phase on top of a covariance phase, with an explicit sigma (the
// calibrated one when calibration is on).
Disclosure DiscloseResidual(const Vector& r, CovariancePhase cov, double sigma,
                            Rng& rng);

// Both phases with params.sigma. Draw order: d Laplace then p Gaussian.
Disclosure SequentialDisclose(const Vector& r, const Matrix& s,
                              const PrivacyParams& params, Rng& rng);

// Privacy spent so far under naive composition. Not enforced.
struct CompositionCounter {
  int64_t epochs = 0;
  double eps_total = 0.0;
  double delta_total = 0.0;

  void Record(const PrivacyParams& params) {
    ++epochs;
    eps_total += params.eps_cov + params.eps_r;
    delta_total += params.gamma_cov + params.gamma_r;
  }
};

}  // namespace dpverify

#endif  // DPVERIFY_PRIVACY_H_
