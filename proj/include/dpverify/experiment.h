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

// In-process experiment pipeline: plant -> EKF -> epochs -> utility ->
// wire -> regulator, plus the sweep / alignment / false-alarm drivers built
// on it. Every run is a pure function of (config, master seed, uid).

#ifndef DPVERIFY_EXPERIMENT_H_
#define DPVERIFY_EXPERIMENT_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dpverify/bounds.h"
#include "dpverify/ekf.h"
#include "dpverify/params_file.h"
#include "dpverify/protocol.h"

namespace dpverify {

std::string_view Version();

// "# seed=<s> params_hash=<h> version=<v>" (no newline).
std::string OutputHeader(uint64_t seed, const RunConfig& config);

// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
// concurrency). The first exception is rethrown after all workers finish.
void ParallelFor(int n, int threads, const std::function<void(int)>& fn);

struct EpochRecord {
  int64_t w = 0;
  int64_t t_first = 0;
  bool attack_active = false;  // any step of the epoch inside the window
  double t_stat = 0.0;         // ||tau||^2, utility side
  double t_stat_dp = 0.0;      // ||tau_res_hat||^2, unscaled
  double pvalue = 0.0;
  double pvalue_dp = 0.0;
  bool rho = false;
  bool rho_hat = false;
  bool matched = false;
  double alpha_hat = 0.0;
};

struct RunResult {
  std::string uid;
  std::vector<EpochRecord> epochs;
  CompositionCounter composition;
};

// Per-utility plant seed, separate from the disclosure streams.
uint64_t PlantSeed(uint64_t master_seed, std::string_view uid);

// Simulated plant plus EKF for scenario.total_steps() steps.
std::vector<ResidualRecord> SimulateResiduals(const Scenario& scenario,
                                              uint64_t plant_seed);

// Utility and regulator in one process. Residuals are cut into W-step epochs;
// a trailing partial epoch is dropped. Every tuple goes through the wire
// encoder and decoder before the regulator sees it.
// Everything the utility knew about epoch w, plus the exact tuple line it sent.
struct EpochSnapshot {
  EpochAggregate agg;
  EpochDiagnostics diag;
  std::string tuple_line;
};

// Optional per-epoch hook, for checks that need the utility's internals.
using EpochObserver =
    std::function<void(const EpochRecord&, const EpochSnapshot&)>;

RunResult RunPipeline(const RunConfig& config,
                      std::span<const ResidualRecord> residuals,
                      uint64_t master_seed, const std::string& uid,
                      const EpochObserver& observe = {});
RunResult RunSimulated(const RunConfig& config, uint64_t master_seed,
                       const std::string& uid = "utility");

// w,t_stat,t_stat_dp,pvalue,pvalue_dp,rho,rho_hat
void WriteEpochCsv(std::ostream& out, const RunResult& run);

struct SweepConfig {
  std::string param;  // eps_cov, eps_r, gamma_cov or gamma_r
  std::vector<double> grid;
  int repeats = 5;
  RunConfig base;

  void Validate() const;
};

struct SweepCell {
  double value = 0.0;
  int repeat = 0;
  uint64_t seed = 0;
  std::optional<RunResult> result;
  std::string error;  // set when the run failed
};

// Repeat r uses the same seed for every grid value.
std::vector<SweepCell> RunSweep(const SweepConfig& config, uint64_t master_seed,
                                int threads = 0);

// value,w,median,min,max of t_stat_dp across the repeats of each value.
void WriteSweepSummary(std::ostream& out, std::span<const SweepCell> cells);

struct AlignmentRow {
  double checkpoint_s = 0.0;
  int dp_and_nondp = 0;
  int only_nondp = 0;
  int repeats = 0;
  double alignment_rate = 0.0;
  double mean_alpha_hat = 0.0;
  double var_alpha_hat = 0.0;
};

// Counts, per checkpoint (seconds after attack start), the runs in which the
// local and the regulator alarm both fired on some epoch overlapping
// [attack start, attack start + checkpoint). Pure function of the records.
std::vector<AlignmentRow> ComputeAlignment(const Scenario& scenario,
                                           std::span<const RunResult> runs,
                                           std::span<const double> checkpoints_s);

// Throws kInvalidArgument when the scenario has no attack or the attack is
// shorter than the last checkpoint.
std::vector<AlignmentRow> RunAlignment(const RunConfig& config,
                                       std::span<const double> checkpoints_s,
                                       int repeats, uint64_t master_seed,
                                       int threads = 0);

void WriteAlignmentCsv(std::ostream& out, std::span<const AlignmentRow> rows);

struct FalseAlarmResult {
  int64_t epochs = 0;
  int64_t alarms = 0;        // rho_hat = 1
  int64_t local_alarms = 0;  // rho = 1
  double rate = 0.0;
};

// Only epochs with attack_active = false count.
FalseAlarmResult CountFalseAlarms(std::span<const RunResult> runs);
FalseAlarmResult RunFalseAlarms(const RunConfig& config, int repeats,
                                uint64_t master_seed, int threads = 0);


// Replays the utility up to epoch w. Throws kInvalidArgument if the stream
// has fewer than w + 1 epochs.
EpochSnapshot CaptureSnapshot(const RunConfig& config,
                              std::span<const ResidualRecord> residuals,
                              uint64_t master_seed, const std::string& uid,
                              int64_t w);

BoundReport EvaluateBounds(const RunConfig& config, const EpochSnapshot& snap,
                           uint64_t seed);

// Operator aid for choosing delta_r and delta_l: the largest epoch-aggregate
// residual norm and covariance eigenvalue seen on a calibration stream. Only
// reported; nothing is configured from it.
struct SensitivityEstimate {
  int64_t epochs = 0;
  double max_residual_norm = 0.0;
  double max_eigenvalue = 0.0;
};
SensitivityEstimate EstimateSensitivities(
    std::span<const ResidualRecord> residuals, int steps_per_epoch);

void WriteKeyValues(std::ostream& out,
                    const std::map<std::string, std::string>& kv);

}  // namespace dpverify

#endif  // DPVERIFY_EXPERIMENT_H_
