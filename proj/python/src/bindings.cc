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

// Thin Python surface. Configurations travel as {key: value} dicts using the
// params-file keys, so Python and the CLI share one vocabulary.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "dpverify/distributions.h"
#include "dpverify/error.h"
#include "dpverify/experiment.h"
#include "dpverify/params_file.h"
#include "dpverify/privacy.h"
#include "dpverify/wire.h"

namespace py = pybind11;

namespace dpverify {
namespace {

std::string ToText(const py::handle& value) {
  if (py::isinstance<py::bool_>(value)) return value.cast<bool>() ? "1" : "0";
  if (py::isinstance<py::float_>(value)) {
    return py::str(py::repr(value)).cast<std::string>();
  }
  if (py::isinstance<py::list>(value) || py::isinstance<py::tuple>(value)) {
    std::string out;
    for (const py::handle item : value) {
      out += (out.empty() ? "" : ",") + ToText(item);
    }
    return out;
  }
  return py::str(value).cast<std::string>();
}

RunConfig MakeConfig(const py::dict& overrides) {
  RunConfig config;
  for (const auto& [key, value] : overrides) {
    SetRunConfigValue(config, py::str(key).cast<std::string>(), ToText(value));
  }
  config.Validate();
  return config;
}

py::dict RunToColumns(const RunResult& run) {
  std::vector<int64_t> w;
  std::vector<double> t_stat, t_stat_dp, pvalue, pvalue_dp, alpha_hat;
  std::vector<bool> rho, rho_hat, matched, attack_active;
  for (const EpochRecord& r : run.epochs) {
    w.push_back(r.w);
    t_stat.push_back(r.t_stat);
    t_stat_dp.push_back(r.t_stat_dp);
    pvalue.push_back(r.pvalue);
    pvalue_dp.push_back(r.pvalue_dp);
    alpha_hat.push_back(r.alpha_hat);
    rho.push_back(r.rho);
    rho_hat.push_back(r.rho_hat);
    matched.push_back(r.matched);
    attack_active.push_back(r.attack_active);
  }
  py::dict out;
  out["w"] = w;
  out["t_stat"] = t_stat;
  out["t_stat_dp"] = t_stat_dp;
  out["pvalue"] = pvalue;
  out["pvalue_dp"] = pvalue_dp;
  out["alpha_hat"] = alpha_hat;
  out["rho"] = rho;
  out["rho_hat"] = rho_hat;
  out["matched"] = matched;
  out["attack_active"] = attack_active;
  return out;
}

py::dict RecordToDict(const WireRecord& record) {
  py::dict out;
  std::visit(
      [&](const auto& r) {
        using T = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<T, CrTuple>) {
          out["type"] = "cr";
          out["uid"] = r.uid;
          out["w"] = r.w;
          std::vector<std::vector<double>> s(r.s_hat.rows());
          for (int i = 0; i < r.s_hat.rows(); ++i) {
            for (int j = 0; j < r.s_hat.cols(); ++j) s[i].push_back(r.s_hat(i, j));
          }
          out["s_hat"] = s;
          out["tau_rg"] = std::vector<double>(r.tau_rg.begin(), r.tau_rg.end());
          out["thr"] = r.thr;
          out["rho"] = r.rho;
        } else if constexpr (std::is_same_v<T, PvTuple>) {
          out["type"] = "pv";
          out["uid"] = r.uid;
          out["w"] = r.w;
          out["t_res"] = r.t_res;
          out["t_cov"] = r.t_cov;
          out["alpha_hat"] = r.alpha_hat;
          out["rho"] = r.rho;
        } else if constexpr (std::is_same_v<T, Verdict>) {
          out["type"] = "verdict";
          out["uid"] = r.uid;
          out["w"] = r.w;
          out["rho_hat"] = r.rho_hat;
          out["matched"] = r.matched;
          out["statistic"] = r.statistic;
          out["threshold"] = r.threshold;
          if (r.pvalue) out["pvalue"] = *r.pvalue;
          if (r.reason) out["reason"] = *r.reason;
        } else if constexpr (std::is_same_v<T, Handshake>) {
          out["type"] = "handshake";
          out["uid"] = r.uid;
          out["mode"] = std::string(ModeName(r.mode));
          out["d"] = r.d;
          out["p"] = r.p;
          out["W"] = r.steps;
        } else {
          out["type"] = "error";
          out["message"] = r.message;
        }
      },
      record);
  return out;
}

}  // namespace
}  // namespace dpverify

PYBIND11_MODULE(_dpverify, m) {
  using namespace dpverify;
  m.doc() = "dpverify core bindings";

  static py::exception<Error> error_type(m, "DpverifyError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::handle(error_type.ptr())(e.what());
      exc.attr("code") = std::string(ErrorCodeName(e.code()));
      exc.attr("field") = e.field();
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  m.def("version", [] { return std::string(Version()); });

  m.def("gdp_sigma", &GdpSigma, py::arg("delta_r"), py::arg("eps_r"),
        py::arg("gamma_r"));
  m.def("chi2_quantile", &Chi2Quantile, py::arg("upper_tail"), py::arg("k"));
  m.def("nc_chi2_cdf", &NcChi2Cdf, py::arg("x"), py::arg("k"),
        py::arg("lam"));
  m.def("nc_chi2_sf", &NcChi2Sf, py::arg("x"), py::arg("k"), py::arg("lam"));
  m.def("nc_chi2_quantile", &NcChi2Quantile, py::arg("upper_tail"),
        py::arg("k"), py::arg("lam"));

  m.def(
      "config_dump",
      [](const py::dict& config) { return DumpRunConfig(MakeConfig(config)); },
      py::arg("config") = py::dict());
  m.def(
      "params_hash",
      [](const py::dict& config) { return ParamsHash(MakeConfig(config)); },
      py::arg("config") = py::dict());

  m.def(
      "simulate",
      [](const py::dict& config, uint64_t seed, const std::string& uid) {
        const RunConfig c = MakeConfig(config);
        RunResult run;
        {
          py::gil_scoped_release release;
          run = RunSimulated(c, seed, uid);
        }
        return RunToColumns(run);
      },
      py::arg("config") = py::dict(), py::arg("seed") = 1,
      py::arg("uid") = "utility");

  m.def(
      "false_alarms",
      [](const py::dict& config, int repeats, uint64_t seed) {
        const RunConfig c = MakeConfig(config);
        FalseAlarmResult r;
        {
          py::gil_scoped_release release;
          r = RunFalseAlarms(c, repeats, seed);
        }
        py::dict out;
        out["epochs"] = r.epochs;
        out["alarms"] = r.alarms;
        out["local_alarms"] = r.local_alarms;
        out["rate"] = r.rate;
        return out;
      },
      py::arg("config") = py::dict(), py::arg("repeats") = 5,
      py::arg("seed") = 1);

  m.def(
      "alignment",
      [](const py::dict& config, const std::vector<double>& checkpoints,
         int repeats, uint64_t seed) {
        const RunConfig c = MakeConfig(config);
        std::vector<AlignmentRow> rows;
        {
          py::gil_scoped_release release;
          rows = RunAlignment(c, checkpoints, repeats, seed);
        }
        py::list out;
        for (const AlignmentRow& r : rows) {
          py::dict row;
          row["checkpoint_s"] = r.checkpoint_s;
          row["dp_and_nondp"] = r.dp_and_nondp;
          row["only_nondp"] = r.only_nondp;
          row["repeats"] = r.repeats;
          row["alignment_rate"] = r.alignment_rate;
          row["mean_alpha_hat"] = r.mean_alpha_hat;
          row["var_alpha_hat"] = r.var_alpha_hat;
          out.append(row);
        }
        return out;
      },
      py::arg("config"), py::arg("checkpoints") = std::vector<double>{200, 400, 600},
      py::arg("repeats") = 50, py::arg("seed") = 1);

  m.def(
      "bounds_report",
      [](const py::dict& config, int64_t epoch, uint64_t seed,
         const std::string& uid) {
        const RunConfig c = MakeConfig(config);
        std::map<std::string, std::string> kv;
        {
          py::gil_scoped_release release;
          const auto residuals =
              SimulateResiduals(c.scenario, PlantSeed(seed, uid));
          kv = EvaluateBounds(c, CaptureSnapshot(c, residuals, seed, uid, epoch),
                              seed)
                   .ToKeyValues();
        }
        return kv;
      },
      py::arg("config") = py::dict(), py::arg("epoch") = 0,
      py::arg("seed") = 1, py::arg("uid") = "utility");

  m.def(
      "encode_pv",
      [](const std::string& uid, int64_t w, double t_res, double t_cov,
         double alpha_hat, bool rho) {
        return EncodePvTuple(PvTuple{uid, w, t_res, t_cov, alpha_hat, rho});
      },
      py::arg("uid"), py::arg("w"), py::arg("t_res"), py::arg("t_cov"),
      py::arg("alpha_hat"), py::arg("rho"));
  m.def(
      "decode_record",
      [](const std::string& line) { return RecordToDict(DecodeRecord(line)); },
      py::arg("line"));
}
