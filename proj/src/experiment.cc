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

#include "dpverify/experiment.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include <Eigen/Eigenvalues>

#include "dpverify/distributions.h"
#include "dpverify/error.h"
#include "dpverify/rng.h"
#include "dpverify/wire.h"

namespace dpverify {
namespace {

// Disjoint from epoch indices and from the alpha_hat stream.
constexpr uint64_t kPlantStream = 0x9a47ULL << 40;

struct EpochStep {
  const EpochAggregate& agg;
  const UtilitySession& session;
  const std::string& line;
  const Verdict& verdict;
};

// Drives utility and regulator over the residual stream; `fn` returns false
// to stop early.
void ForEachEpoch(const RunConfig& config,
                  std::span<const ResidualRecord> residuals,
                  uint64_t master_seed, const std::string& uid,
                  const std::function<bool(const EpochStep&)>& fn) {
  Require(!residuals.empty(), "empty residual stream");
  const int d = static_cast<int>(residuals.front().r.size());
  const int p = config.params.p;
  UtilityConfig uc;
  uc.uid = uid;
  uc.mode = config.mode;
  uc.params = config.params;
  uc.alpha = config.alpha;
  uc.n_mc = config.n_mc;
  uc.tracker_window = config.tracker_window;
  uc.master_seed = master_seed;
  UtilitySession session(uc, d);

  const size_t steps = static_cast<size_t>(config.scenario.steps_per_epoch);
  const int64_t n_epochs = static_cast<int64_t>(residuals.size() / steps);
  for (int64_t w = 0; w < n_epochs; ++w) {
    const EpochAggregate agg = AggregateEpoch(
        w, residuals.subspan(w * steps, steps), config.alpha, p);
    std::string line;
    Verdict verdict;
    if (config.mode == Mode::kCr) {
      line = EncodeCrTuple(session.CrEpoch(agg));
      verdict = RegulatorCrVerify(DecodeCrTuple(line), p);
    } else {
      line = EncodePvTuple(session.PvEpoch(agg));
      verdict = RegulatorPvVerify(DecodePvTuple(line), p);
    }
    if (verdict.rejected()) {
      Fail(ErrorCode::kProtocol, "regulator rejected epoch " +
                                     std::to_string(w) + ": " + *verdict.reason);
    }
    if (!fn({agg, session, line, verdict})) return;
  }
}

double Median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string_view Version() { return DPVERIFY_VERSION; }

std::string OutputHeader(uint64_t seed, const RunConfig& config) {
  return "# seed=" + std::to_string(seed) + " params_hash=" +
         ParamsHash(config) + " version=" + std::string(Version());
}

void ParallelFor(int n, int threads, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  if (threads <= 0) {
    threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  threads = std::min(threads, n);
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  const auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

uint64_t PlantSeed(uint64_t master_seed, std::string_view uid) {
  return DeriveSeed(master_seed, uid, kPlantStream);
}

std::vector<ResidualRecord> SimulateResiduals(const Scenario& scenario,
                                              uint64_t plant_seed) {
  const auto trace = GenerateTrace(scenario.plant, scenario.attack,
                                   scenario.total_steps(), plant_seed);
  const EkfModel model = EkfModel::ForPlant(scenario.plant);
  return RunFilter(trace, model, DefaultInitialBelief(model));
}

RunResult RunPipeline(const RunConfig& config,
                      std::span<const ResidualRecord> residuals,
                      uint64_t master_seed, const std::string& uid,
                      const EpochObserver& observe) {
  const int p = config.params.p;
  const int steps = config.scenario.steps_per_epoch;
  const std::optional<AttackSpec>& attack = config.scenario.attack;
  RunResult run;
  run.uid = uid;
  ForEachEpoch(config, residuals, master_seed, uid, [&](const EpochStep& e) {
    const EpochDiagnostics& diag = e.session.last();
    const double s2 = diag.sigma * diag.sigma;
    EpochRecord rec;
    rec.w = e.agg.w;
    rec.t_first = e.agg.t_first;
    rec.attack_active = attack && e.agg.t_first <= attack->t_end &&
                        e.agg.t_first + steps - 1 >= attack->t_start;
    rec.t_stat = e.agg.statistic;
    rec.t_stat_dp = diag.tau_res_hat.squaredNorm();
    rec.pvalue = Chi2Sf(rec.t_stat, p);
    rec.pvalue_dp =
        NcChi2Sf(rec.t_stat_dp / s2, p, diag.reference.tau_norm2 / s2);
    rec.rho = e.agg.rho;
    rec.rho_hat = e.verdict.rho_hat;
    rec.matched = e.verdict.matched;
    rec.alpha_hat = diag.alpha_hat;
    if (observe) observe(rec, EpochSnapshot{e.agg, diag, e.line});
    run.epochs.push_back(rec);
    run.composition = e.session.composition();
    return true;
  });
  return run;
}

RunResult RunSimulated(const RunConfig& config, uint64_t master_seed,
                       const std::string& uid) {
  config.Validate();
  const auto residuals =
      SimulateResiduals(config.scenario, PlantSeed(master_seed, uid));
  return RunPipeline(config, residuals, master_seed, uid);
}

void WriteEpochCsv(std::ostream& out, const RunResult& run) {
  out << "w,t_stat,t_stat_dp,pvalue,pvalue_dp,rho,rho_hat\n";
  for (const EpochRecord& r : run.epochs) {
    out << r.w << ',' << Num(r.t_stat) << ',' << Num(r.t_stat_dp) << ','
        << Num(r.pvalue) << ',' << Num(r.pvalue_dp) << ',' << r.rho << ','
        << r.rho_hat << '\n';
  }
}

void SweepConfig::Validate() const {
  Require(param == "eps_cov" || param == "eps_r" || param == "gamma_cov" ||
              param == "gamma_r",
          "sweep parameter must be eps_cov, eps_r, gamma_cov or gamma_r");
  Require(!grid.empty(), "sweep grid is empty");
  Require(repeats >= 1, "repeats must be >= 1");
}

std::vector<SweepCell> RunSweep(const SweepConfig& config, uint64_t master_seed,
                                int threads) {
  config.Validate();
  std::vector<SweepCell> cells;
  for (double value : config.grid) {
    for (int r = 0; r < config.repeats; ++r) {
      SweepCell cell;
      cell.value = value;
      cell.repeat = r;
      cell.seed = DeriveSeed(master_seed, "repeat", static_cast<uint64_t>(r));
      cells.push_back(cell);
    }
  }
  ParallelFor(static_cast<int>(cells.size()), threads, [&](int i) {
    SweepCell& cell = cells[i];
    try {
      RunConfig run = config.base;
      SetRunConfigValue(run, config.param, Num(cell.value));
      cell.result = RunSimulated(run, cell.seed);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });
  return cells;
}

void WriteSweepSummary(std::ostream& out, std::span<const SweepCell> cells) {
  out << "value,w,median,min,max\n";
  size_t i = 0;
  while (i < cells.size()) {
    size_t j = i;
    std::vector<const RunResult*> runs;
    for (; j < cells.size() && cells[j].value == cells[i].value; ++j) {
      if (cells[j].result) runs.push_back(&*cells[j].result);
    }
    size_t n_epochs = SIZE_MAX;
    for (const RunResult* r : runs) n_epochs = std::min(n_epochs, r->epochs.size());
    for (size_t w = 0; !runs.empty() && w < n_epochs; ++w) {
      std::vector<double> v;
      for (const RunResult* r : runs) v.push_back(r->epochs[w].t_stat_dp);
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      out << Num(cells[i].value) << ',' << w << ',' << Num(Median(v)) << ','
          << Num(*lo) << ',' << Num(*hi) << '\n';
    }
    i = j;
  }
}

std::vector<AlignmentRow> ComputeAlignment(const Scenario& scenario,
                                           std::span<const RunResult> runs,
                                           std::span<const double> checkpoints_s) {
  Require(scenario.attack.has_value(), "alignment needs an attack scenario");
  const int64_t start = scenario.attack->t_start;
  const int steps = scenario.steps_per_epoch;
  std::vector<AlignmentRow> rows;
  for (double cp : checkpoints_s) {
    const int64_t stop =
        start + static_cast<int64_t>(std::llround(cp / scenario.plant.dt));
    AlignmentRow row;
    row.checkpoint_s = cp;
    row.repeats = static_cast<int>(runs.size());
    double sum = 0.0, sum2 = 0.0;
    int64_t count = 0;
    for (const RunResult& run : runs) {
      bool local = false, dp = false;
      for (const EpochRecord& e : run.epochs) {
        if (e.t_first + steps - 1 < start || e.t_first >= stop) continue;
        local |= e.rho;
        dp |= e.rho_hat;
        sum += e.alpha_hat;
        sum2 += e.alpha_hat * e.alpha_hat;
        ++count;
      }
      row.dp_and_nondp += local && dp;
      row.only_nondp += local && !dp;
    }
    row.alignment_rate =
        runs.empty() ? 0.0 : static_cast<double>(row.dp_and_nondp) / runs.size();
    if (count > 0) {
      row.mean_alpha_hat = sum / count;
      row.var_alpha_hat =
          std::max(0.0, sum2 / count - row.mean_alpha_hat * row.mean_alpha_hat);
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<AlignmentRow> RunAlignment(const RunConfig& config,
                                       std::span<const double> checkpoints_s,
                                       int repeats, uint64_t master_seed,
                                       int threads) {
  const Scenario& scenario = config.scenario;
  Require(scenario.attack.has_value(), "alignment needs an attack scenario");
  Require(repeats >= 1, "repeats must be >= 1");
  Require(!checkpoints_s.empty(), "no checkpoints");
  const double max_cp =
      *std::max_element(checkpoints_s.begin(), checkpoints_s.end());
  const double window_s =
      (scenario.attack->t_end - scenario.attack->t_start + 1) * scenario.plant.dt;
  if (window_s + 1e-9 < max_cp) {
    Fail(ErrorCode::kInvalidArgument,
         "attack window (" + Num(window_s) +
             " s) is shorter than the last checkpoint (" + Num(max_cp) + " s)");
  }
  std::vector<RunResult> runs(repeats);
  ParallelFor(repeats, threads, [&](int r) {
    runs[r] = RunSimulated(
        config, DeriveSeed(master_seed, "align", static_cast<uint64_t>(r)));
  });
  return ComputeAlignment(scenario, runs, checkpoints_s);
}

void WriteAlignmentCsv(std::ostream& out, std::span<const AlignmentRow> rows) {
  out << "checkpoint_s,dp_and_nondp,only_nondp,repeats,alignment_rate,"
         "mean_alpha_hat,var_alpha_hat\n";
  for (const AlignmentRow& r : rows) {
    out << Num(r.checkpoint_s) << ',' << r.dp_and_nondp << ',' << r.only_nondp
        << ',' << r.repeats << ',' << Num(r.alignment_rate) << ','
        << Num(r.mean_alpha_hat) << ',' << Num(r.var_alpha_hat) << '\n';
  }
}

FalseAlarmResult CountFalseAlarms(std::span<const RunResult> runs) {
  FalseAlarmResult out;
  for (const RunResult& run : runs) {
    for (const EpochRecord& e : run.epochs) {
      if (e.attack_active) continue;
      ++out.epochs;
      out.alarms += e.rho_hat;
      out.local_alarms += e.rho;
    }
  }
  out.rate = out.epochs ? static_cast<double>(out.alarms) / out.epochs : 0.0;
  return out;
}

FalseAlarmResult RunFalseAlarms(const RunConfig& config, int repeats,
                                uint64_t master_seed, int threads) {
  Require(!config.scenario.attack.has_value(),
          "false-alarm runs must not contain an attack");
  Require(repeats >= 1, "repeats must be >= 1");
  std::vector<RunResult> runs(repeats);
  ParallelFor(repeats, threads, [&](int r) {
    runs[r] = RunSimulated(
        config, DeriveSeed(master_seed, "null", static_cast<uint64_t>(r)));
  });
  return CountFalseAlarms(runs);
}

EpochSnapshot CaptureSnapshot(const RunConfig& config,
                              std::span<const ResidualRecord> residuals,
                              uint64_t master_seed, const std::string& uid,
                              int64_t w) {
  Require(w >= 0, "epoch index must be >= 0");
  std::optional<EpochSnapshot> snap;
  ForEachEpoch(config, residuals, master_seed, uid, [&](const EpochStep& e) {
    if (e.agg.w < w) return true;
    snap = EpochSnapshot{e.agg, e.session.last(), e.line};
    return false;
  });
  if (!snap) {
    Fail(ErrorCode::kInvalidArgument,
         "stream has no epoch " + std::to_string(w));
  }
  return *snap;
}

BoundReport EvaluateBounds(const RunConfig& config, const EpochSnapshot& snap,
                           uint64_t seed) {
  const EpochAggregate& agg = snap.agg;
  const EpochDiagnostics& diag = snap.diag;
  PrivacyParams params = config.params;
  params.sigma = diag.sigma;  // calibrated value when calibration is on
  const int p = params.p;
  const int d = static_cast<int>(agg.r.size());

  const CovFactorization truth = EigFactorize(agg.s, ComponentSelection::Count(p));
  const Vector tau = Whiten(agg.r, truth);

  BoundReport report;
  report.seed = seed;
  report.n_mc = config.n_mc;
  report.alpha = config.alpha;
  report.sigma = params.sigma;
  report.theta_l = ComputeThetaL(params.delta_l, params.eps_cov, params.gamma_cov, d);
  const ThetaR theta_r =
      ComputeThetaR(params.sigma, params.eps_r, params.delta_r, p);
  report.theta_r = theta_r.value;
  report.theta_r_vacuous = theta_r.vacuous;
  report.t_orig = agg.statistic;

  const Lemma1Result l1 =
      Lemma1Bound(agg.r, truth, report.theta_l, params.gamma_cov);
  report.res_energy = l1.res_energy;
  report.lemma1_bound = l1.bound;
  report.lemma1_confidence = l1.confidence;
  if (!theta_r.vacuous) {
    report.thm2 =
        ComputeThm2Interval(tau, params.sigma, theta_r.value, params.gamma_r);
  }

  report.alpha_hat = diag.alpha_hat;
  report.dp_quantile = diag.dp_quantile;
  report.thm3_e1max = Thm3E1Max(diag.alpha_hat, diag.tau_cov_hat,
                                diag.res_energy, diag.reference, d, params);
  const Omega omega =
      ComputeOmega(diag.res_energy, diag.reference.r_max_norm2, d, params);
  report.omega1 = omega.w1;
  report.omega2 = omega.w2;
  const Thm4Bounds t4 =
      ComputeThm4Bounds(diag.tau_cov_hat, agg.statistic, config.alpha,
                        diag.alpha_hat, diag.res_energy, diag.reference, d, params);
  report.thm4_t_hat = t4.t_hat;
  report.thm4_fn_bound = t4.fn_bound;
  report.thm4_fp_bound = t4.fp_bound;

  const Thm5Loss t5 = ComputeThm5Loss(params.delta_r, params.sigma, diag.s_hat,
                                      theta_r.value, p, params.gamma_r);
  report.thm5_loss = t5.loss;
  report.thm5_prob_bound = t5.prob_bound;
  const Thm6Privacy t6 = ComputeThm6Privacy(
      params.eps_cov, params.sigma, UniformDeltaVector(params.delta_r, d), agg.s);
  report.thm6_eps_prime = t6.eps_prime;
  report.thm6_delta_prime = t6.delta_prime;
  return report;
}

SensitivityEstimate EstimateSensitivities(
    std::span<const ResidualRecord> residuals, int steps_per_epoch) {
  Require(steps_per_epoch >= 1, "W must be positive");
  SensitivityEstimate out;
  const size_t w = static_cast<size_t>(steps_per_epoch);
  for (size_t i = 0; i + w <= residuals.size(); i += w) {
    Vector r = residuals[i].r;
    Matrix s = residuals[i].s;
    for (size_t k = 1; k < w; ++k) {
      r += residuals[i + k].r;
      s += residuals[i + k].s;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(s, Eigen::EigenvaluesOnly);
    out.max_residual_norm = std::max(out.max_residual_norm, r.norm());
    out.max_eigenvalue = std::max(out.max_eigenvalue, eig.eigenvalues().maxCoeff());
    ++out.epochs;
  }
  return out;
}

void WriteKeyValues(std::ostream& out,
                    const std::map<std::string, std::string>& kv) {
  for (const auto& [key, value] : kv) out << key << '=' << value << '\n';
}

}  // namespace dpverify
