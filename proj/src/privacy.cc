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

#include "dpverify/privacy.h"

#include <cmath>
#include <string>

#include "dpverify/error.h"

namespace dpverify {

double GdpSigma(double delta_r, double eps_r, double gamma_r) {
  Require(std::isfinite(delta_r) && delta_r > 0, "delta_r must be positive");
  Require(std::isfinite(eps_r) && eps_r > 0, "eps_r must be positive");
  Require(gamma_r > 0, "gamma_r must be positive");
  Require(gamma_r < 1.25, "gamma_r must be below 1.25");
  return (delta_r / eps_r) * std::sqrt(2.0 * std::log(1.25 / gamma_r));
}

PrivacyParams PrivacyParams::Make(double eps_cov, double eps_r,
                                  double gamma_cov, double gamma_r,
                                  double delta_l, double delta_r, int p,
                                  bool use_calibration) {
  PrivacyParams params;
  params.eps_cov = eps_cov;
  params.eps_r = eps_r;
  params.gamma_cov = gamma_cov;
  params.gamma_r = gamma_r;
  params.delta_l = delta_l;
  params.delta_r = delta_r;
  params.p = p;
  params.use_calibration = use_calibration;
  params.sigma = GdpSigma(delta_r, eps_r, gamma_r);
  params.eps_r_waived = eps_r > 1.0;
  return params;
}

void PrivacyParams::Validate(int d) const {
  Require(std::isfinite(eps_cov) && eps_cov > 0, "eps_cov must be positive");
  Require(gamma_cov > 0 && gamma_cov < 1, "gamma_cov must lie in (0, 1)");
  Require(gamma_r > 0 && gamma_r < 1, "gamma_r must lie in (0, 1)");
  Require(std::isfinite(delta_l) && delta_l > 0, "delta_l must be positive");
  Require(p >= 1 && p <= d, "p must lie in [1, d]");
  const double min_sigma = MinSigma();
  Require(std::isfinite(sigma) && sigma >= min_sigma * (1.0 - 1e-12),
          "sigma " + std::to_string(sigma) + " is below the minimum " +
              std::to_string(min_sigma));
}

ThetaR ComputeThetaR(double sigma, double eps_r, double delta_r, int p) {
  Require(sigma > 0 && eps_r > 0 && delta_r > 0 && p >= 1,
          "theta_r arguments must be positive");
  ThetaR out;
  out.value = sigma * sigma * eps_r / delta_r - p * delta_r / 2.0;
  out.vacuous = out.value <= 0;
  return out;
}

double ComputeThetaL(double delta_l, double eps_cov, double gamma_cov, int d) {
  Require(delta_l > 0 && eps_cov > 0, "theta_l arguments must be positive");
  Require(gamma_cov > 0 && gamma_cov < 1, "gamma_cov must lie in (0, 1)");
  Require(d >= 1, "d must be positive");
  return (delta_l / eps_cov) * std::log(d / gamma_cov);
}

PerturbedCovariance PerturbCovariance(const Matrix& s, double laplace_scale,
                                      ComponentSelection selection, Rng& rng,
                                      double floor_frac) {
  Require(laplace_scale > 0, "Laplace scale must be positive");
  const CovFactorization f = EigFactorize(s, ComponentSelection::All());
  const int d = f.dim();
  const double floor = floor_frac * s.trace() / d;
  Require(floor > 0, "covariance trace must be positive");

  PerturbedCovariance out;
  out.raw_eigenvalues.resize(d);
  Vector lambda_hat(d);
  for (int i = 0; i < d; ++i) {
    out.raw_eigenvalues[i] = f.eigenvalues[i] + rng.Laplace(laplace_scale);
    lambda_hat[i] = out.raw_eigenvalues[i];
    if (lambda_hat[i] < floor) {
      lambda_hat[i] = floor;
      ++out.clamp_count;
    }
  }
  const Matrix s_hat =
      f.vectors * lambda_hat.asDiagonal() * f.vectors.transpose();
  out.s_hat = 0.5 * (s_hat + s_hat.transpose());
  out.factorization = EigFactorize(out.s_hat, selection);
  return out;
}

GdpDraw GdpPerturb(const Vector& tau, double sigma, Rng& rng) {
  Require(sigma > 0, "sigma must be positive");
  GdpDraw out;
  out.noise = sigma * rng.NormalVector(static_cast<int>(tau.size()));
  out.tau_hat = tau + out.noise;
  return out;
}

double CalibrationFactor(double tau_max_norm2, double quantile) {
  Require(quantile > 0, "calibration quantile must be positive");
  Require(tau_max_norm2 >= 0, "reference norm must be nonnegative");
  return tau_max_norm2 / quantile;
}

CovariancePhase DiscloseCovariance(const Vector& r, const Matrix& s,
                                   const PrivacyParams& params, Rng& rng) {
  Require(r.size() == s.rows(), "residual and covariance dimension mismatch");
  CovariancePhase out;
  out.covariance = PerturbCovariance(s, params.LaplaceScale(),
                                     ComponentSelection::Count(params.p), rng);
  out.tau_cov_hat = Whiten(r, out.covariance.factorization);
  return out;
}

Disclosure DiscloseResidual(const Vector& r, CovariancePhase cov, double sigma,
                            Rng& rng) {
  Disclosure out;
  const GdpDraw draw = GdpPerturb(cov.tau_cov_hat, sigma, rng);
  const CovFactorization& f = cov.covariance.factorization;
  out.tau_rg = r + f.RetainedVectors() *
                       (f.RetainedEigenvalues().cwiseSqrt().asDiagonal() *
                        draw.noise);
  out.tau_res_hat = draw.tau_hat;
  out.noise = draw.noise;
  out.tau_cov_hat = std::move(cov.tau_cov_hat);
  out.covariance = std::move(cov.covariance);
  out.sigma = sigma;
  return out;
}

Disclosure SequentialDisclose(const Vector& r, const Matrix& s,
                              const PrivacyParams& params, Rng& rng) {
  params.Validate(static_cast<int>(r.size()));
  CovariancePhase cov = DiscloseCovariance(r, s, params, rng);
  return DiscloseResidual(r, std::move(cov), params.sigma, rng);
}

}  // namespace dpverify
