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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "dpverify/distributions.h"
#include "dpverify/error.h"
#include "dpverify/rng.h"

namespace dpverify {
namespace {

constexpr double kAlphaHatFloor = 1e-12;

double Clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

std::string FormatDouble(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Per-draw quantities of the Monte Carlo null model.
struct NullDraws {
  std::vector<double> omega1;
  std::vector<double> noncentrality;  // ||tau_cov_hat||^2 / sigma^2
  double omega2 = 0.0;
};

NullDraws DrawNullEpochs(const PrivacyParams& params, const NullReference& ref,
                         const CovFactorization& reference, int n_mc,
                         uint64_t seed) {
  Require(n_mc >= 1, "n_mc must be positive");
  const int d = reference.dim();
  const int p = params.p;
  Require(p <= d, "p exceeds the reference dimension");
  const double sigma2 = params.sigma * params.sigma;
  const double floor = 1e-8 * reference.eigenvalues.sum() / d;
  const double scale = params.LaplaceScale();

  NullDraws draws;
  draws.omega1.reserve(n_mc);
  draws.noncentrality.reserve(n_mc);
  draws.omega2 = ComputeOmega(0.0, ref.r_max_norm2, d, params).w2;
  Rng rng(seed);
  std::vector<double> coords(d);
  for (int i = 0; i < n_mc; ++i) {
    double res_energy = 0.0;
    for (int j = 0; j < d; ++j) {
      coords[j] = std::sqrt(reference.eigenvalues[j]) * rng.Normal();
      if (j < p) res_energy += coords[j] * coords[j];
    }
    double nc = 0.0;
    for (int j = 0; j < d; ++j) {
      const double lambda_hat =
          std::max(reference.eigenvalues[j] + rng.Laplace(scale), floor);
      if (j < p) nc += coords[j] * coords[j] / lambda_hat;
    }
    draws.omega1.push_back(
        ComputeOmega(res_energy, ref.r_max_norm2, d, params).w1);
    draws.noncentrality.push_back(nc / sigma2);
  }
  return draws;
}

AlphaHatResult EvaluateDraws(const NullDraws& draws, double alpha_hat,
                             const NullReference& ref,
                             const PrivacyParams& params) {
  const double chi = DpQuantile(alpha_hat, ref, params);
  const size_t n = draws.omega1.size();
  double sum = 0.0;
  double sum_sq = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (draws.omega1[i] <= 0) continue;
    const double term =
        draws.omega1[i] * NcChi2Sf(chi, params.p, draws.noncentrality[i]);
    sum += term;
    sum_sq += term * term;
  }
  const double mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq / n - mean * mean)) *
                                 n / (n - 1.0)
                           : 0.0;
  AlphaHatResult out;
  out.alpha_hat = alpha_hat;
  out.e1max = Clamp01(mean + draws.omega2 * alpha_hat);
  out.mc_stderr = std::sqrt(var / n);
  return out;
}

}  // namespace

TauMaxTracker::TauMaxTracker(size_t window) : window_(window) {
  Require(window >= 1, "tracker window must be positive");
}

void TauMaxTracker::Update(const Vector& v) {
  if (!history_.empty()) {
    Require(v.size() == history_.front().size(), "tracker dimension mismatch");
  }
  history_.push_back(v);
  if (history_.size() > window_) history_.pop_front();
  argmax_ = 0;
  double best = -1.0;
  for (size_t i = 0; i < history_.size(); ++i) {
    const double n = history_[i].squaredNorm();
    if (n >= best) {
      best = n;
      argmax_ = i;
    }
  }
}

const Vector& TauMaxTracker::current_max() const {
  if (history_.empty()) {
    Fail(ErrorCode::kFailedPrecondition,
         "tracker is empty; run warm-up epochs first");
  }
  return history_[argmax_];
}

NullReference MakeNullReference(const Trackers& trackers, int p, double alpha) {
  if (trackers.tau_cov.empty() || trackers.residual.empty()) {
    Fail(ErrorCode::kFailedPrecondition,
         "null reference needs warm-up epochs in the trackers");
  }
  NullReference ref;
  ref.tau_norm2 =
      std::max(trackers.tau_cov.max_norm2(), Chi2Quantile(alpha, p));
  ref.r_max_norm2 = trackers.residual.max_norm2();
  return ref;
}

Lemma1Result Lemma1Bound(const Vector& r, const CovFactorization& factorization,
                         double theta_l, double gamma_cov) {
  Lemma1Result out;
  out.res_energy = ProjectedEnergy(r, factorization);
  out.bound = out.res_energy * theta_l;
  out.confidence = 1.0 - gamma_cov;
  return out;
}

Thm2Interval ComputeThm2Interval(const Vector& tau, double sigma,
                                 double theta_r, double gamma_r) {
  Require(sigma > 0, "sigma must be positive");
  const int p = static_cast<int>(tau.size());
  Require(p >= 1, "tau must be nonempty");
  const double sigma2 = sigma * sigma;
  const double scale = theta_r / (sigma2 * p);
  const double sum = tau.sum();
  Thm2Interval out;
  out.lower = scale * (theta_r - 2.0 * sum);
  out.upper = scale * (theta_r + 2.0 * sum);
  if (out.lower > out.upper) {
    std::swap(out.lower, out.upper);
    out.reordered = true;
  }
  const double nc = tau.squaredNorm() / sigma2;
  const double mass =
      NcChi2Cdf(out.upper, p, nc) - NcChi2Cdf(out.lower, p, nc);
  out.joint_prob = Clamp01(mass * std::pow(1.0 - gamma_r, p));
  return out;
}

Omega ComputeOmega(double res_energy, double r_max_norm2, int d,
                   const PrivacyParams& params) {
  const double theta_l =
      ComputeThetaL(params.delta_l, params.eps_cov, params.gamma_cov, d);
  Omega out;
  if (r_max_norm2 > 0) {
    const double rate = params.eps_cov / (params.delta_l * r_max_norm2);
    out.w1 = 1.0 - GammaCdf(res_energy * theta_l, params.p, rate);
  } else {
    out.w1 = res_energy > 0 ? 0.0 : 1.0;
  }
  out.w2 = std::pow(ExpCdf(theta_l, params.eps_cov / params.delta_l),
                    params.p);
  return out;
}

double DpQuantile(double alpha_hat, const NullReference& ref,
                  const PrivacyParams& params) {
  const double sigma2 = params.sigma * params.sigma;
  return NcChi2Quantile(alpha_hat, params.p, ref.tau_norm2 / sigma2);
}

double Thm3E1Max(double alpha_hat, const Vector& tau_cov_hat,
                 double res_energy, const NullReference& ref, int d,
                 const PrivacyParams& params) {
  Require(alpha_hat > 0 && alpha_hat < 1, "alpha_hat must lie in (0, 1)");
  if (ref.r_max_norm2 <= 0 && ref.tau_norm2 <= 0) {
    Fail(ErrorCode::kFailedPrecondition, "empty null reference");
  }
  const double sigma2 = params.sigma * params.sigma;
  const Omega omega = ComputeOmega(res_energy, ref.r_max_norm2, d, params);
  const double chi = DpQuantile(alpha_hat, ref, params);
  const double term1 =
      omega.w1 * NcChi2Sf(chi, params.p, tau_cov_hat.squaredNorm() / sigma2);
  const double term2 =
      omega.w2 * NcChi2Sf(chi, params.p, ref.tau_norm2 / sigma2);
  return Clamp01(term1 + term2);
}

AlphaHatResult EstimateE1Max(double alpha_hat, const PrivacyParams& params,
                             const NullReference& ref,
                             const CovFactorization& reference, int n_mc,
                             uint64_t seed) {
  const NullDraws draws = DrawNullEpochs(params, ref, reference, n_mc, seed);
  return EvaluateDraws(draws, alpha_hat, ref, params);
}

AlphaHatResult InvertAlphaHat(double alpha, const PrivacyParams& params,
                              const NullReference& ref,
                              const CovFactorization& reference, int n_mc,
                              uint64_t seed) {
  Require(alpha > kAlphaHatFloor && alpha < 1, "alpha must lie in (0, 1)");
  const NullDraws draws = DrawNullEpochs(params, ref, reference, n_mc, seed);

  AlphaHatResult hi = EvaluateDraws(draws, alpha, ref, params);
  if (hi.e1max <= alpha) {
    hi.no_inversion_needed = true;
    return hi;
  }
  AlphaHatResult lo = EvaluateDraws(draws, kAlphaHatFloor, ref, params);
  if (lo.e1max > alpha) {
    lo.at_floor = true;
    return lo;
  }
  // Invariant: e1max(lo) <= alpha < e1max(hi). Returns the feasible side.
  double log_lo = std::log(kAlphaHatFloor);
  double log_hi = std::log(alpha);
  int it = 0;
  while (++it <= 100 && log_hi - log_lo > 1e-6) {
    const double mid = 0.5 * (log_lo + log_hi);
    AlphaHatResult m = EvaluateDraws(draws, std::exp(mid), ref, params);
    if (m.e1max > alpha) {
      log_hi = mid;
    } else {
      log_lo = mid;
      lo = m;
      if (alpha - m.e1max <= 1e-3 * alpha) break;
    }
  }
  lo.iterations = it;
  return lo;
}

Thm4Bounds ComputeThm4Bounds(const Vector& tau_cov_hat, double t_orig,
                             double alpha, double alpha_hat,
                             double res_energy, const NullReference& ref,
                             int d, const PrivacyParams& params) {
  const double sigma2 = params.sigma * params.sigma;
  const Omega omega = ComputeOmega(res_energy, ref.r_max_norm2, d, params);
  const double chi = DpQuantile(alpha_hat, ref, params);
  Thm4Bounds out;
  out.t_hat = t_orig + sigma2 * chi - Chi2Quantile(alpha, params.p);
  TailPair at_cov{0.0, 1.0};
  TailPair at_ref{0.0, 1.0};
  if (out.t_hat > 0) {
    at_cov = NcChi2(out.t_hat / sigma2, params.p,
                    tau_cov_hat.squaredNorm() / sigma2);
    at_ref = NcChi2(out.t_hat / sigma2, params.p, ref.tau_norm2 / sigma2);
  }
  out.fn_bound = Clamp01(omega.w1 * at_cov.sf + omega.w2 * at_ref.sf);
  out.fp_bound = Clamp01(at_cov.cdf * (omega.w1 + omega.w2));
  return out;
}

Thm5Loss ComputeThm5Loss(double delta_r, double sigma, const Matrix& s_hat,
                         double theta_r, int p, double gamma_r) {
  Require(sigma > 0 && delta_r > 0 && p >= 1, "invalid loss arguments");
  const int d = static_cast<int>(s_hat.rows());
  Eigen::LDLT<Matrix> ldlt(s_hat);
  if (ldlt.info() != Eigen::Success) {
    Fail(ErrorCode::kNumerical, "S_hat factorization failed");
  }
  Thm5Loss out;
  out.q = Vector::Ones(d).dot(ldlt.solve(Vector::Ones(d)));
  if (!(out.q > 0)) {
    Fail(ErrorCode::kNumerical, "1^T S_hat^-1 1 is not positive");
  }
  out.loss = (delta_r / (sigma * sigma)) * out.q * out.q *
             (theta_r * theta_r / p + 1.0 / (2.0 * out.q));
  out.prob_bound = 1.0 - std::pow(1.0 - gamma_r, p);
  return out;
}

double Thm6DeltaAt(double eps_prime, double eps_cov, double sigma,
                   const Vector& delta_vec, const Matrix& c) {
  Require(eps_prime >= eps_cov, "eps' must be at least eps_cov");
  Eigen::LDLT<Matrix> ldlt(c);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    Fail(ErrorCode::kNumerical, "C is not positive definite");
  }
  const Vector x = ldlt.solve(delta_vec);
  const double a = delta_vec.dot(x);
  if (!(a > 0)) Fail(ErrorCode::kNumerical, "Delta^T C^-1 Delta <= 0");
  const double b = x.norm();
  const double arg = sigma * sigma * (eps_prime - eps_cov) / b - a / (2 * b);
  return Clamp01(NormalCdf(arg, 0.0, a) - NormalCdf(-arg, 0.0, a));
}

Thm6Privacy ComputeThm6Privacy(double eps_cov, double sigma,
                               const Vector& delta_vec, const Matrix& c) {
  Require(sigma > 0, "sigma must be positive");
  Require(delta_vec.size() == c.rows() && c.rows() == c.cols(),
          "Delta and C shapes disagree");
  Eigen::LDLT<Matrix> ldlt(c);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    Fail(ErrorCode::kNumerical, "C is not positive definite");
  }
  const Vector x = ldlt.solve(delta_vec);
  Thm6Privacy out;
  out.a = delta_vec.dot(x);
  if (!(out.a > 0)) Fail(ErrorCode::kNumerical, "Delta^T C^-1 Delta <= 0");
  out.b = x.norm();
  out.eps_prime = eps_cov + out.a / (2.0 * sigma * sigma);
  out.delta_prime = Thm6DeltaAt(out.eps_prime, eps_cov, sigma, delta_vec, c);
  return out;
}

Vector UniformDeltaVector(double delta_r, int d) {
  Require(d >= 1, "d must be positive");
  return Vector::Constant(d, delta_r / std::sqrt(static_cast<double>(d)));
}

std::map<std::string, std::string> BoundReport::ToKeyValues() const {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(seed);
  kv["n_mc"] = std::to_string(n_mc);
  kv["alpha"] = FormatDouble(alpha);
  kv["sigma"] = FormatDouble(sigma);
  kv["theta_l"] = FormatDouble(theta_l);
  kv["theta_r"] = FormatDouble(theta_r);
  kv["theta_r_vacuous"] = theta_r_vacuous ? "1" : "0";
  kv["res_energy"] = FormatDouble(res_energy);
  kv["t_orig"] = FormatDouble(t_orig);
  kv["lemma1_bound"] = FormatDouble(lemma1_bound);
  kv["lemma1_confidence"] = FormatDouble(lemma1_confidence);
  kv["thm2_lower"] = FormatDouble(thm2.lower);
  kv["thm2_upper"] = FormatDouble(thm2.upper);
  kv["thm2_joint_prob"] = FormatDouble(thm2.joint_prob);
  kv["thm2_reordered"] = thm2.reordered ? "1" : "0";
  kv["alpha_hat"] = FormatDouble(alpha_hat);
  kv["dp_quantile"] = FormatDouble(dp_quantile);
  kv["thm3_e1max"] = FormatDouble(thm3_e1max);
  kv["omega1"] = FormatDouble(omega1);
  kv["omega2"] = FormatDouble(omega2);
  kv["thm4_t_hat"] = FormatDouble(thm4_t_hat);
  kv["thm4_fn_bound"] = FormatDouble(thm4_fn_bound);
  kv["thm4_fp_bound"] = FormatDouble(thm4_fp_bound);
  kv["thm5_loss"] = FormatDouble(thm5_loss);
  kv["thm5_prob_bound"] = FormatDouble(thm5_prob_bound);
  kv["thm6_eps_prime"] = FormatDouble(thm6_eps_prime);
  kv["thm6_delta_prime"] = FormatDouble(thm6_delta_prime);
  return kv;
}

}  // namespace dpverify
