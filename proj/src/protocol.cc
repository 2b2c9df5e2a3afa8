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

#include "dpverify/protocol.h"

#include <cmath>
#include <string>

#include "dpverify/distributions.h"
#include "dpverify/error.h"
#include "dpverify/rng.h"

namespace dpverify {
namespace {

// Stream index reserved for the alpha_hat Monte Carlo draws. Epoch streams
// use w >= 0.
constexpr uint64_t kAlphaHatStream = 0xa1fa4a7ULL << 32;

bool Drifted(double cached_norm2, double norm2, double tolerance) {
  const double a = std::sqrt(cached_norm2);
  const double b = std::sqrt(norm2);
  return std::fabs(b - a) > tolerance * std::max(a, 1e-300);
}

}  // namespace

std::string_view ModeName(Mode mode) { return mode == Mode::kCr ? "cr" : "pv"; }

Mode ParseMode(std::string_view name) {
  if (name == "cr") return Mode::kCr;
  if (name == "pv") return Mode::kPv;
  Fail(ErrorCode::kInvalidArgument,
       "unknown mode '" + std::string(name) + "' (expected cr or pv)");
}

EpochAggregate AggregateEpoch(int64_t w, std::span<const ResidualRecord> records,
                              double alpha, int p) {
  Require(!records.empty(), "epoch has no records");
  EpochAggregate agg;
  agg.w = w;
  agg.steps = static_cast<int>(records.size());
  agg.t_first = records.front().t;
  agg.r = Vector::Zero(records.front().r.size());
  agg.s = Matrix::Zero(agg.r.size(), agg.r.size());
  for (size_t i = 0; i < records.size(); ++i) {
    if (records[i].t != agg.t_first + static_cast<int64_t>(i)) {
      Fail(ErrorCode::kInvalidArgument,
           "gap in epoch " + std::to_string(w) + " at t=" +
               std::to_string(records[i].t));
    }
    agg.r += records[i].r;
    agg.s += records[i].s;
  }
  const CovFactorization f = EigFactorize(agg.s, ComponentSelection::Count(p));
  const TestOutcome test = Chi2Test(Whiten(agg.r, f), alpha);
  agg.statistic = test.statistic;
  agg.threshold = test.threshold;
  agg.rho = test.alarm;
  return agg;
}

Verdict Rejection(std::string uid, int64_t w, std::string reason) {
  Verdict v;
  v.uid = std::move(uid);
  v.w = w;
  v.reason = std::move(reason);
  return v;
}

Verdict RegulatorCrVerify(const CrTuple& tuple, int p) {
  const int d = static_cast<int>(tuple.tau_rg.size());
  if (tuple.s_hat.rows() != d || tuple.s_hat.cols() != d || d == 0) {
    return Rejection(tuple.uid, tuple.w, "malformed disclosure: shape");
  }
  if (p < 1 || p > d) {
    return Rejection(tuple.uid, tuple.w, "malformed disclosure: p out of range");
  }
  if (!(tuple.thr > 0) || !std::isfinite(tuple.thr)) {
    return Rejection(tuple.uid, tuple.w,
                     "malformed disclosure: threshold must be positive");
  }
  Vector tau;
  try {
    const CovFactorization f =
        EigFactorize(tuple.s_hat, ComponentSelection::Count(p));
    tau = Whiten(tuple.tau_rg, f);
  } catch (const Error& e) {
    return Rejection(tuple.uid, tuple.w,
                     std::string("malformed disclosure: ") + e.what());
  }
  Verdict v;
  v.uid = tuple.uid;
  v.w = tuple.w;
  v.statistic = tau.squaredNorm();
  v.threshold = tuple.thr;
  v.rho_hat = v.statistic > v.threshold;
  v.matched = v.rho_hat == tuple.rho;
  return v;
}

Verdict RegulatorPvVerify(const PvTuple& tuple, int p) {
  if (!(tuple.alpha_hat > 0 && tuple.alpha_hat < 1)) {
    return Rejection(tuple.uid, tuple.w, "alpha_hat outside (0, 1)");
  }
  if (!(tuple.t_res >= 0) || !(tuple.t_cov >= 0) ||
      !std::isfinite(tuple.t_res) || !std::isfinite(tuple.t_cov)) {
    return Rejection(tuple.uid, tuple.w, "statistics must be finite and >= 0");
  }
  if (p < 1) return Rejection(tuple.uid, tuple.w, "p out of range");
  Verdict v;
  v.uid = tuple.uid;
  v.w = tuple.w;
  try {
    v.threshold = NcChi2Quantile(tuple.alpha_hat, p, tuple.t_cov);
    v.pvalue = NcChi2Sf(tuple.t_res, p, tuple.t_cov);
  } catch (const Error& e) {
    return Rejection(tuple.uid, tuple.w, e.what());
  }
  v.statistic = tuple.t_res;
  v.rho_hat = v.statistic > v.threshold;
  v.matched = v.rho_hat == tuple.rho;
  return v;
}

UtilitySession::UtilitySession(UtilityConfig config, int d)
    : config_(std::move(config)), d_(d), trackers_(config_.tracker_window) {
  config_.params.Validate(d_);
  Require(config_.alpha > 0 && config_.alpha < 1, "alpha must lie in (0, 1)");
  Require(config_.n_mc >= 1, "n_mc must be positive");
}

Handshake UtilitySession::MakeHandshake(int steps) const {
  Handshake hs;
  hs.uid = config_.uid;
  hs.mode = config_.mode;
  hs.d = d_;
  hs.p = config_.params.p;
  hs.steps = steps;
  hs.params = config_.params;
  return hs;
}

Disclosure UtilitySession::Disclose(const EpochAggregate& agg) {
  Require(agg.r.size() == d_, "epoch dimension does not match the session");
  const PrivacyParams& params = config_.params;
  const int p = params.p;
  Rng rng(DeriveSeed(config_.master_seed, config_.uid,
                     static_cast<uint64_t>(agg.w)));

  CovariancePhase cov = DiscloseCovariance(agg.r, agg.s, params, rng);
  // Cold start: a quiet first epoch seeds the trackers; an alarming one gets a
  // provisional reference and is never stored.
  const bool cold_start = trackers_.tau_cov.empty();
  NullReference ref;
  if (cold_start && agg.rho) {
    ref = {Chi2Quantile(config_.alpha, p), agg.r.squaredNorm()};
  } else {
    if (cold_start) {
      trackers_.tau_cov.Update(cov.tau_cov_hat);
      trackers_.residual.Update(agg.r);
    }
    ref = MakeNullReference(trackers_, p, config_.alpha);
  }
  const CovFactorization truth =
      EigFactorize(agg.s, ComponentSelection::Count(p));

  EpochDiagnostics diag;
  diag.alpha_recomputed =
      !alpha_cache_ ||
      Drifted(cached_reference_.tau_norm2, ref.tau_norm2,
              config_.drift_tolerance) ||
      Drifted(cached_reference_.r_max_norm2, ref.r_max_norm2,
              config_.drift_tolerance);
  if (diag.alpha_recomputed) {
    alpha_cache_ = InvertAlphaHat(
        config_.alpha, params, ref, truth, config_.n_mc,
        DeriveSeed(config_.master_seed, config_.uid, kAlphaHatStream));
    cached_reference_ = ref;
  }
  const double alpha_hat = alpha_cache_->alpha_hat;

  PrivacyParams effective = params;
  double chi = DpQuantile(alpha_hat, ref, effective);
  if (params.use_calibration) {
    const double mu = std::max(1.0, CalibrationFactor(ref.tau_norm2, chi));
    effective.sigma = std::sqrt(mu) * params.sigma;
    chi = DpQuantile(alpha_hat, ref, effective);
  }
  Disclosure disc = DiscloseResidual(agg.r, std::move(cov), effective.sigma, rng);

  diag.w = agg.w;
  diag.t_orig = agg.statistic;
  diag.res_energy = ProjectedEnergy(agg.r, truth);
  diag.tau_cov_hat = disc.tau_cov_hat;
  diag.tau_res_hat = disc.tau_res_hat;
  diag.noise = disc.noise;
  diag.sigma = effective.sigma;
  diag.alpha_hat = alpha_hat;
  diag.dp_quantile = chi;
  diag.reference = ref;
  diag.alpha_info = *alpha_cache_;
  diag.clamp_count = disc.covariance.clamp_count;
  diag.s_hat = disc.covariance.s_hat;
  last_ = std::move(diag);

  // Only quiet epochs feed the reference.
  if (!cold_start && !agg.rho) {
    trackers_.tau_cov.Update(disc.tau_cov_hat);
    trackers_.residual.Update(agg.r);
  }
  composition_.Record(params);
  return disc;
}

CrTuple UtilitySession::CrEpoch(const EpochAggregate& agg) {
  if (config_.mode != Mode::kCr) {
    Fail(ErrorCode::kProtocol, "session is in pv mode");
  }
  Disclosure disc = Disclose(agg);
  CrTuple tuple;
  tuple.uid = config_.uid;
  tuple.w = agg.w;
  tuple.s_hat = std::move(disc.covariance.s_hat);
  tuple.tau_rg = std::move(disc.tau_rg);
  tuple.thr = last_.sigma * last_.sigma * last_.dp_quantile;
  tuple.rho = agg.rho;
  return tuple;
}

PvTuple UtilitySession::PvEpoch(const EpochAggregate& agg) {
  if (config_.mode != Mode::kPv) {
    Fail(ErrorCode::kProtocol, "session is in cr mode");
  }
  Disclosure disc = Disclose(agg);
  const double sigma2 = last_.sigma * last_.sigma;
  PvTuple tuple;
  tuple.uid = config_.uid;
  tuple.w = agg.w;
  tuple.t_res = disc.tau_res_hat.squaredNorm() / sigma2;
  tuple.t_cov = last_.reference.tau_norm2 / sigma2;
  tuple.alpha_hat = last_.alpha_hat;
  tuple.rho = agg.rho;
  return tuple;
}

}  // namespace dpverify
