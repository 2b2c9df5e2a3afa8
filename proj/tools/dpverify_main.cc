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

// dpverify command-line tool. Every output file starts with a
// "# seed=... params_hash=... version=..." line; the rest is CSV or key=value.

#include <signal.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dpverify/ekf.h"
#include "dpverify/error.h"
#include "dpverify/experiment.h"
#include "dpverify/netsvc.h"
#include "dpverify/params_file.h"
#include "dpverify/rng.h"
#include "dpverify/wire.h"

namespace dpverify {
namespace {

struct Globals {
  uint64_t seed = 1;
  std::string out_dir = ".";
  std::string params_path;
  std::vector<std::string> overrides;  // key=value, applied after --params
  int threads = 0;
};

std::string FormatDouble(double v, int digits = 17) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

RunConfig BuildConfig(const Globals& g) {
  RunConfig config = g.params_path.empty() ? RunConfig{}
                                           : LoadRunConfig(g.params_path);
  for (const std::string& kv : g.overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      Fail(ErrorCode::kInvalidArgument, "--set expects key=value", kv);
    }
    SetRunConfigValue(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  config.Validate();
  return config;
}

std::filesystem::path OutPath(const Globals& g, const std::string& name) {
  std::filesystem::create_directories(g.out_dir);
  return std::filesystem::path(g.out_dir) / name;
}

std::ofstream OpenOut(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

// "sim" or "csv:PATH". CSV rows failing validation are dropped and counted.
std::vector<ResidualRecord> LoadSource(const std::string& source,
                                       const RunConfig& config, uint64_t seed,
                                       const std::string& uid) {
  if (source == "sim") {
    return SimulateResiduals(config.scenario, PlantSeed(seed, uid));
  }
  if (source.rfind("csv:", 0) != 0) {
    Fail(ErrorCode::kInvalidArgument, "source must be sim or csv:PATH", source);
  }
  const std::string path = source.substr(4);
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path);
  IngestReport report = ValidateResiduals(ReadResidualCsv(in));
  if (report.rejected_rows > 0) {
    std::cerr << "warning: " << report.rejected_rows
              << " rows with invalid S dropped from " << path << '\n';
  }
  return std::move(report.accepted);
}

std::vector<double> ParseList(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      Fail(ErrorCode::kInvalidArgument, "not a number list", text);
    }
    values.push_back(v);
  }
  if (values.empty()) Fail(ErrorCode::kInvalidArgument, "empty list", text);
  return values;
}

void WriteEstimate(std::ostream& out, const SensitivityEstimate& e) {
  out << "estimate_epochs=" << e.epochs << '\n'
      << "estimate_delta_r=" << FormatDouble(e.max_residual_norm) << '\n'
      << "estimate_delta_l=" << FormatDouble(e.max_eigenvalue) << '\n';
}

int CmdSimulate(const Globals& g, const std::string& uid,
                const std::string& source, bool write_residuals,
                bool estimate) {
  const RunConfig config = BuildConfig(g);
  const auto residuals = LoadSource(source, config, g.seed, uid);
  const RunResult run = RunPipeline(config, residuals, g.seed, uid);
  const auto path = OutPath(g, "simulate_" + uid + ".csv");
  std::ofstream out = OpenOut(path);
  out << OutputHeader(g.seed, config) << '\n';
  WriteEpochCsv(out, run);
  if (write_residuals) {
    std::ofstream res = OpenOut(OutPath(g, "residuals_" + uid + ".csv"));
    WriteResidualCsv(res, residuals);
  }
  if (estimate) {
    WriteEstimate(std::cout, EstimateSensitivities(
                                 residuals, config.scenario.steps_per_epoch));
  }
  std::cout << "epochs=" << run.epochs.size() << "\nout=" << path.string()
            << '\n';
  return 0;
}

int CmdSweep(const Globals& g, const std::string& param,
             const std::string& grid, int repeats) {
  SweepConfig sweep;
  sweep.param = param;
  sweep.grid = ParseList(grid);
  sweep.repeats = repeats;
  sweep.base = BuildConfig(g);
  const auto cells = RunSweep(sweep, g.seed, g.threads);
  const std::string header = OutputHeader(g.seed, sweep.base);
  int failures = 0;
  for (const SweepCell& cell : cells) {
    if (!cell.result) {
      ++failures;
      std::cerr << "cell " << param << '=' << FormatDouble(cell.value)
                << " repeat " << cell.repeat << " failed: " << cell.error
                << '\n';
      continue;
    }
    std::ofstream out = OpenOut(OutPath(
        g, "sweep_" + param + "_" + FormatDouble(cell.value, 6) + "_r" +
               std::to_string(cell.repeat) + ".csv"));
    out << header << " " << param << '=' << FormatDouble(cell.value)
        << " run_seed=" << cell.seed << '\n';
    WriteEpochCsv(out, *cell.result);
  }
  std::ofstream summary = OpenOut(OutPath(g, "sweep_" + param + "_summary.csv"));
  summary << header << '\n';
  WriteSweepSummary(summary, cells);
  std::cout << "cells=" << cells.size() << "\nfailed=" << failures << '\n';
  return 0;
}

int CmdAlign(const Globals& g, const std::string& checkpoints, int repeats) {
  const RunConfig config = BuildConfig(g);
  const auto cps = ParseList(checkpoints);
  const auto rows = RunAlignment(config, cps, repeats, g.seed, g.threads);
  std::ofstream out = OpenOut(OutPath(g, "align.csv"));
  out << OutputHeader(g.seed, config) << '\n';
  WriteAlignmentCsv(out, rows);
  WriteAlignmentCsv(std::cout, rows);
  return 0;
}

int CmdFalseAlarms(const Globals& g, const std::string& source, int repeats) {
  const RunConfig config = BuildConfig(g);
  FalseAlarmResult result;
  if (source == "sim") {
    result = RunFalseAlarms(config, repeats, g.seed, g.threads);
  } else {
    // One recorded trace, fresh privacy noise per repeat.
    const auto residuals = LoadSource(source, config, g.seed, "utility");
    std::vector<RunResult> runs(repeats);
    ParallelFor(repeats, g.threads, [&](int r) {
      runs[r] = RunPipeline(config, residuals, DeriveSeed(g.seed, "null", r),
                            "utility");
    });
    result = CountFalseAlarms(runs);
  }
  std::map<std::string, std::string> kv = {
      {"epochs", std::to_string(result.epochs)},
      {"alarms", std::to_string(result.alarms)},
      {"local_alarms", std::to_string(result.local_alarms)},
      {"rate", FormatDouble(result.rate)},
  };
  std::ofstream out = OpenOut(OutPath(g, "false_alarms.txt"));
  out << OutputHeader(g.seed, config) << '\n';
  WriteKeyValues(out, kv);
  WriteKeyValues(std::cout, kv);
  return 0;
}

// The RX tuple for (uid, w) in an audit log, if present.
std::optional<std::string> FindAuditTuple(const std::string& audit_path,
                                          const std::string& uid, int64_t w) {
  for (const AuditEntry& e : ReadAudit(audit_path).entries) {
    if (!e.rx) continue;
    const TupleAddress addr = PeekAddress(e.record);
    if (addr.uid == uid && addr.w == w) return e.record;
  }
  return std::nullopt;
}

int CmdBoundsReport(const Globals& g, const std::string& source,
                    const std::string& uid, int64_t w,
                    const std::string& audit_path) {
  const RunConfig config = BuildConfig(g);
  const auto residuals = LoadSource(source, config, g.seed, uid);
  const EpochSnapshot snap = CaptureSnapshot(config, residuals, g.seed, uid, w);
  if (!audit_path.empty()) {
    const auto logged = FindAuditTuple(audit_path, uid, w);
    if (!logged) {
      Fail(ErrorCode::kInvalidArgument,
           "no tuple for uid " + uid + " epoch " + std::to_string(w) +
               " in " + audit_path);
    }
    if (*logged != snap.tuple_line) {
      Fail(ErrorCode::kProtocol,
           "regenerated tuple differs from the audited one; check --seed, "
           "--params and --source");
    }
  }
  const BoundReport report = EvaluateBounds(config, snap, g.seed);
  std::ofstream out = OpenOut(OutPath(g, "bounds_report.txt"));
  out << OutputHeader(g.seed, config) << '\n';
  WriteKeyValues(out, report.ToKeyValues());
  WriteKeyValues(std::cout, report.ToKeyValues());
  return 0;
}

int CmdIngest(const Globals& g, const std::string& csv_path) {
  const RunConfig config = BuildConfig(g);
  std::ifstream in(csv_path);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + csv_path);
  auto rows = ReadResidualCsv(in);
  const size_t total = rows.size();
  const IngestReport report = ValidateResiduals(std::move(rows));
  std::ofstream out = OpenOut(OutPath(g, "ingested.csv"));
  WriteResidualCsv(out, report.accepted);

  std::cout << "rows=" << total << "\naccepted=" << report.accepted.size()
            << "\nrejected_rows=" << report.rejected_rows << '\n';
  if (!report.rejected_t.empty()) {
    std::cout << "rejected_t=";
    for (size_t i = 0; i < report.rejected_t.size(); ++i) {
      std::cout << (i ? "," : "") << report.rejected_t[i];
    }
    std::cout << '\n';
  }
  WriteEstimate(std::cout, EstimateSensitivities(
                               report.accepted,
                               config.scenario.steps_per_epoch));
  return 0;
}

int CmdServe(const std::string& listen, const std::string& audit,
             const std::string& allow) {
  // Block the stop signals before any thread exists so only sigwait sees them.
  sigset_t stop;
  sigemptyset(&stop);
  sigaddset(&stop, SIGINT);
  sigaddset(&stop, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop, nullptr);

  RegulatorServer server(
      {Endpoint::Parse(listen), audit, ParseModeAllow(allow)});
  server.Start();
  std::cout << "listening=127.0.0.1:" << server.port() << std::endl;
  int sig = 0;
  sigwait(&stop, &sig);
  server.Stop();
  for (const SessionSummary& s : server.Sessions()) {
    std::cout << "session c" << s.connection << " uid=" << s.uid
              << " tuples=" << s.stats.tuples
              << " verdicts=" << s.stats.verdicts
              << " mismatches=" << s.stats.mismatches
              << " rejections=" << s.stats.rejections << '\n';
  }
  return 0;
}

int CmdClient(const Globals& g, const std::string& connect,
              const std::string& mode, const std::string& source,
              std::optional<int64_t> epochs, const std::string& uid) {
  RunConfig run = BuildConfig(g);
  if (!mode.empty()) run.mode = ParseMode(mode);
  if (epochs) {
    Require(*epochs >= 1, "--epochs must be positive");
    run.scenario.epochs = *epochs;
  }
  auto residuals = LoadSource(source, run, g.seed, uid);
  const size_t keep =
      static_cast<size_t>(run.scenario.epochs * run.scenario.steps_per_epoch);
  if (epochs && residuals.size() > keep) residuals.resize(keep);

  ClientConfig cc;
  cc.regulator = Endpoint::Parse(connect);
  cc.run = run;
  cc.seed = g.seed;
  cc.uid = uid;
  const ClientSummary summary = RunUtilityClient(cc, residuals);

  std::ofstream out = OpenOut(OutPath(g, "client_" + uid + ".csv"));
  out << OutputHeader(g.seed, run) << '\n' << "w,rho,rho_hat,matched,rejected\n";
  int64_t mismatches = 0, rejected = 0;
  for (const EpochOutcome& e : summary.epochs) {
    out << e.w << ',' << e.rho << ',' << e.rho_hat << ',' << e.matched << ','
        << e.rejected << '\n';
    mismatches += !e.matched && !e.rejected;
    rejected += e.rejected;
  }
  std::cout << "uid=" << summary.uid << "\nepochs=" << summary.epochs.size()
            << "\nexpected_epochs=" << summary.expected_epochs
            << "\nmismatches=" << mismatches << "\nrejected=" << rejected
            << "\nreconnects=" << summary.reconnects
            << "\ncomplete=" << summary.complete << '\n';
  if (!summary.error.empty()) std::cerr << "error: " << summary.error << '\n';
  return summary.ok() ? 0 : 1;
}

int Main(int argc, char** argv) {
  CLI::App app{"dpverify: privacy-preserving attack-alarm verification"};
  app.set_version_flag("--version", std::string(Version()));
  app.require_subcommand(1);

  Globals g;
  app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
  app.add_option("--out", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--params", g.params_path, "key=value parameter file");
  app.add_option("--set", g.overrides, "Override one parameter (key=value)");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");

  int code = 0;

  auto* simulate = app.add_subcommand("simulate", "Run the pipeline once");
  std::string uid = "utility", source = "sim";
  bool write_residuals = false, estimate = false;
  simulate->add_option("--uid", uid);
  simulate->add_option("--source", source, "sim or csv:PATH");
  simulate->add_flag("--residuals", write_residuals,
                     "Also write the residual stream CSV");
  simulate->add_flag("--estimate-deltas", estimate,
                     "Report sensitivity estimates from the stream");
  simulate->callback(
      [&] { code = CmdSimulate(g, uid, source, write_residuals, estimate); });

  auto* sweep = app.add_subcommand("sweep", "Sweep one privacy parameter");
  std::string param, grid;
  int repeats = 5;
  sweep->add_option("--param", param, "eps_cov, eps_r, gamma_cov or gamma_r")
      ->required();
  sweep->add_option("--grid", grid, "Comma-separated values")->required();
  sweep->add_option("--repeats", repeats)->capture_default_str();
  sweep->callback([&] { code = CmdSweep(g, param, grid, repeats); });

  auto* align = app.add_subcommand("align", "Alignment of local and DP alarms");
  std::string checkpoints = "200,400,600";
  int align_repeats = 50;
  align->add_option("--checkpoints", checkpoints, "Seconds after attack start")
      ->capture_default_str();
  align->add_option("--repeats", align_repeats)->capture_default_str();
  align->callback([&] { code = CmdAlign(g, checkpoints, align_repeats); });

  auto* fa = app.add_subcommand("false-alarms", "Regulator false-alarm rate");
  int fa_repeats = 5;
  std::string fa_source = "sim";
  fa->add_option("--repeats", fa_repeats)->capture_default_str();
  fa->add_option("--source", fa_source, "sim or csv:PATH");
  fa->callback([&] { code = CmdFalseAlarms(g, fa_source, fa_repeats); });

  auto* bounds = app.add_subcommand("bounds-report", "Evaluate every bound");
  int64_t epoch = 0;
  std::string audit_in, bounds_source = "sim", bounds_uid = "utility";
  bounds->add_option("--epoch", epoch)->required();
  bounds->add_option("--uid", bounds_uid);
  bounds->add_option("--source", bounds_source, "sim or csv:PATH");
  bounds->add_option("--audit", audit_in,
                     "Check the regenerated tuple against this audit log");
  bounds->callback([&] {
    code = CmdBoundsReport(g, bounds_source, bounds_uid, epoch, audit_in);
  });

  auto* ingest = app.add_subcommand("ingest", "Validate a residual CSV");
  std::string csv_path;
  ingest->add_option("csv", csv_path)->required();
  ingest->callback([&] { code = CmdIngest(g, csv_path); });

  auto* serve = app.add_subcommand("serve", "Run the regulator");
  std::string listen = "127.0.0.1:7700", audit_out = "audit.log",
              allow = "both";
  serve->add_option("--listen", listen)->capture_default_str();
  serve->add_option("--audit", audit_out)->capture_default_str();
  serve->add_option("--mode-allow", allow, "cr, pv or both")
      ->capture_default_str();
  serve->callback([&] { code = CmdServe(listen, audit_out, allow); });

  auto* client = app.add_subcommand("client", "Run one utility");
  std::string connect, client_mode, client_source = "sim",
                                    client_uid = "utility";
  std::optional<int64_t> epochs;
  client->add_option("--connect", connect)->required();
  client->add_option("--mode", client_mode, "cr or pv");
  client->add_option("--source", client_source, "sim or csv:PATH");
  client->add_option("--epochs", epochs);
  client->add_option("--uid", client_uid);
  client->callback([&] {
    code = CmdClient(g, connect, client_mode, client_source, epochs,
                     client_uid);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error [" << ErrorCodeName(e.code()) << "]: " << e.what();
    if (!e.field().empty()) std::cerr << " (" << e.field() << ")";
    std::cerr << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return code;
}

}  // namespace
}  // namespace dpverify

int main(int argc, char** argv) { return dpverify::Main(argc, argv); }
