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

// Epoch aggregation and the utility/regulator halves of the two verification
// modes. CR ("covariance and residual") discloses S_hat and a noised residual
// the regulator re-whitens itself; PV ("p-value") discloses only scaled test
// statistics.
//
// Wire convention: every statistic is in the sigma^2-scaled frame. The CR
// threshold is sent pre-multiplied by sigma^2 so the regulator compares the
// plain ||whiten(tau_rg, S_hat)||^2 against it.

#ifndef DPVERIFY_PROTOCOL_H_
#define DPVERIFY_PROTOCOL_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "dpverify/bounds.h"
#include "dpverify/ekf.h"
#include "dpverify/privacy.h"
#include "dpverify/stats.h"

namespace dpverify {

enum class Mode { kCr, kPv };

std::string_view ModeName(Mode mode);
// Throws kInvalidArgument for anything but "cr" / "pv".
Mode ParseMode(std::string_view name);

struct EpochAggregate {
  int64_t w = 0;
  int steps = 0;     // W
  int64_t t_first = 0;
  Vector r;          // sum of the W residuals
  Matrix s;          // sum of the W innovation covariances
  double statistic = 0.0;
  double threshold = 0.0;
  bool rho = false;  // local alarm
};

// Sums exactly `records.size()` contiguous records and runs the chi-square
// test on whiten(r, S) with p components at level alpha. Throws on a gap in
// t or an empty span.
EpochAggregate AggregateEpoch(int64_t w, std::span<const ResidualRecord> records,
                              double alpha, int p);

struct CrTuple {
  std::string uid;
  int64_t w = 0;
  Matrix s_hat;
  Vector tau_rg;
  double thr = 0.0;  // sigma^2 * chi^{2,NC}_{alpha_hat}
  bool rho = false;
};

struct PvTuple {
  std::string uid;
  int64_t w = 0;
  double t_res = 0.0;      // ||tau_res_hat||^2 / sigma^2
  double t_cov = 0.0;      // reference noncentrality, scaled
  double alpha_hat = 0.0;
  bool rho = false;
};

struct Verdict {
  std::string uid;
  int64_t w = 0;
  bool rho_hat = false;
  bool matched = false;
  double statistic = 0.0;
  double threshold = 0.0;
  std::optional<double> pvalue;       // PV only
  std::optional<std::string> reason;  // set on rejection

  bool rejected() const { return reason.has_value(); }
};

Verdict Rejection(std::string uid, int64_t w, std::string reason);

struct Handshake {
  std::string uid;
  Mode mode = Mode::kCr;
  int d = 0;
  int p = 0;
  int steps = 0;  // W
  PrivacyParams params;
};

// Stateless regulator checks. A tuple that cannot be verified yields a
// rejection verdict, never an exception.
Verdict RegulatorCrVerify(const CrTuple& tuple, int p);
Verdict RegulatorPvVerify(const PvTuple& tuple, int p);

struct UtilityConfig {
  std::string uid = "utility";
  Mode mode = Mode::kCr;
  PrivacyParams params;
  double alpha = 0.05;
  int n_mc = 10000;
  size_t tracker_window = 50;
  uint64_t master_seed = 0;
  double drift_tolerance = 0.1;  // relative norm change that refreshes alpha_hat
};

// What the utility knows about an epoch beyond what it discloses.
struct EpochDiagnostics {
  int64_t w = 0;
  double t_orig = 0.0;
  double res_energy = 0.0;
  Vector tau_cov_hat;
  Vector tau_res_hat;
  Vector noise;
  double sigma = 0.0;
  double alpha_hat = 0.0;
  double dp_quantile = 0.0;  // chi^{2,NC}_{alpha_hat}, scaled frame
  NullReference reference;
  AlphaHatResult alpha_info;
  bool alpha_recomputed = false;
  int clamp_count = 0;
  Matrix s_hat;
};

// Per-utility state machine: trackers, alpha_hat cache, composition counter.
// Randomness for epoch w comes from DeriveSeed(master_seed, uid, w), so the
// disclosure of an epoch does not depend on what other sessions do.
class UtilitySession {
 public:
  UtilitySession(UtilityConfig config, int d);

  // Throws kProtocol when called in the other mode.
  CrTuple CrEpoch(const EpochAggregate& agg);
  PvTuple PvEpoch(const EpochAggregate& agg);

  const UtilityConfig& config() const { return config_; }
  const EpochDiagnostics& last() const { return last_; }
  const Trackers& trackers() const { return trackers_; }
  const CompositionCounter& composition() const { return composition_; }
  Handshake MakeHandshake(int steps) const;

 private:
  Disclosure Disclose(const EpochAggregate& agg);

  UtilityConfig config_;
  int d_;
  Trackers trackers_;
  CompositionCounter composition_;
  std::optional<AlphaHatResult> alpha_cache_;
  NullReference cached_reference_;
  EpochDiagnostics last_;
};

}  // namespace dpverify

#endif  // DPVERIFY_PROTOCOL_H_
