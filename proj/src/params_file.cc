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

#include "dpverify/params_file.h"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "dpverify/error.h"

namespace dpverify {
namespace {

std::string Trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double ToDouble(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    Fail(ErrorCode::kInvalidArgument, key + ": not a number: '" + v + "'", key);
  }
  return out;
}

int64_t ToInt(const std::string& key, const std::string& v) {
  int64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    Fail(ErrorCode::kInvalidArgument, key + ": not an integer: '" + v + "'",
         key);
  }
  return out;
}

bool ToBool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  Fail(ErrorCode::kInvalidArgument, key + ": expected true or false", key);
}

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

AttackSpec& EnsureAttack(RunConfig& c) {
  if (!c.scenario.attack) {
    c.scenario.attack = AttackSpec{};
  }
  return *c.scenario.attack;
}

void ResetSigma(PrivacyParams& p) {
  p.sigma = p.MinSigma();
  p.eps_r_waived = p.eps_r > 1.0;
}

}  // namespace

void RunConfig::Validate() const {
  const int d = scenario.plant.sensor_dim();
  params.Validate(d);
  scenario.plant.Validate();
  Require(alpha > 0 && alpha < 1, "alpha must lie in (0, 1)");
  Require(n_mc >= 1, "n_mc must be positive");
  Require(tracker_window >= 1, "tracker_window must be positive");
  Require(scenario.steps_per_epoch >= 1, "W must be positive");
  Require(scenario.epochs >= 1, "epochs must be positive");
  if (scenario.attack) scenario.attack->Validate(d);
}

void SetRunConfigValue(RunConfig& c, const std::string& key,
                       const std::string& value) {
  PrivacyParams& p = c.params;
  Scenario& s = c.scenario;
  if (key == "eps_cov") {
    p.eps_cov = ToDouble(key, value);
  } else if (key == "eps_r") {
    p.eps_r = ToDouble(key, value);
    ResetSigma(p);
  } else if (key == "gamma_cov") {
    p.gamma_cov = ToDouble(key, value);
  } else if (key == "gamma_r") {
    p.gamma_r = ToDouble(key, value);
    ResetSigma(p);
  } else if (key == "delta_l") {
    p.delta_l = ToDouble(key, value);
  } else if (key == "delta_r") {
    p.delta_r = ToDouble(key, value);
    ResetSigma(p);
  } else if (key == "p") {
    p.p = static_cast<int>(ToInt(key, value));
  } else if (key == "sigma") {
    p.sigma = ToDouble(key, value);
  } else if (key == "use_calibration") {
    p.use_calibration = ToBool(key, value);
  } else if (key == "alpha") {
    c.alpha = ToDouble(key, value);
  } else if (key == "n_mc") {
    c.n_mc = static_cast<int>(ToInt(key, value));
  } else if (key == "tracker_window") {
    const int64_t w = ToInt(key, value);
    Require(w >= 1, "tracker_window must be positive");
    c.tracker_window = static_cast<size_t>(w);
  } else if (key == "mode") {
    c.mode = ParseMode(value);
  } else if (key == "W") {
    s.steps_per_epoch = static_cast<int>(ToInt(key, value));
  } else if (key == "epochs") {
    s.epochs = ToInt(key, value);
  } else if (key == "dt") {
    s.plant.dt = ToDouble(key, value);
  } else if (key == "a") {
    s.plant.a = ToDouble(key, value);
  } else if (key == "b") {
    s.plant.b = ToDouble(key, value);
  } else if (key == "q_var") {
    s.plant.process_cov =
        ToDouble(key, value) *
        Matrix::Identity(PlantSpec::kStateDim, PlantSpec::kStateDim);
  } else if (key == "r_var") {
    s.plant.measurement_cov =
        ToDouble(key, value) *
        Matrix::Identity(PlantSpec::kSensorDim, PlantSpec::kSensorDim);
  } else if (key == "attack") {
    if (value == "none") {
      s.attack.reset();
    } else if (value == "bias") {
      EnsureAttack(c).kind = AttackKind::kBias;
    } else if (value == "variance_scale") {
      EnsureAttack(c).kind = AttackKind::kVarianceScale;
    } else if (value == "replay") {
      EnsureAttack(c).kind = AttackKind::kReplay;
    } else {
      Fail(ErrorCode::kInvalidArgument, "attack: unknown kind '" + value + "'",
           key);
    }
  } else if (key == "attack_targets") {
    std::vector<int> targets;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      targets.push_back(static_cast<int>(ToInt(key, Trim(item))));
    }
    EnsureAttack(c).targets = std::move(targets);
  } else if (key == "attack_magnitude") {
    EnsureAttack(c).magnitude = ToDouble(key, value);
  } else if (key == "attack_start") {
    EnsureAttack(c).t_start = ToInt(key, value);
  } else if (key == "attack_end") {
    EnsureAttack(c).t_end = ToInt(key, value);
  } else {
    Fail(ErrorCode::kInvalidArgument, "unknown key '" + key + "'", key);
  }
}

RunConfig ParseRunConfig(std::istream& in, const RunConfig& base) {
  RunConfig config = base;
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      Fail(ErrorCode::kInvalidArgument,
           "line " + std::to_string(line_no) + ": expected key=value",
           "line " + std::to_string(line_no));
    }
    entries.emplace_back(Trim(line.substr(0, eq)), Trim(line.substr(eq + 1)));
  }
  // sigma last, so an explicit value wins over the one derived from eps_r.
  const std::string* sigma = nullptr;
  for (const auto& [key, value] : entries) {
    if (key == "sigma") {
      sigma = &value;
    } else {
      SetRunConfigValue(config, key, value);
    }
  }
  if (sigma) SetRunConfigValue(config, "sigma", *sigma);
  return config;
}

RunConfig LoadRunConfig(const std::string& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open params file " + path, path);
  return ParseRunConfig(in, base);
}

std::string DumpRunConfig(const RunConfig& c) {
  const PrivacyParams& p = c.params;
  const Scenario& s = c.scenario;
  std::ostringstream out;
  out << "eps_cov=" << Num(p.eps_cov) << "\n"
      << "eps_r=" << Num(p.eps_r) << "\n"
      << "gamma_cov=" << Num(p.gamma_cov) << "\n"
      << "gamma_r=" << Num(p.gamma_r) << "\n"
      << "delta_l=" << Num(p.delta_l) << "\n"
      << "delta_r=" << Num(p.delta_r) << "\n"
      << "p=" << p.p << "\n"
      << "sigma=" << Num(p.sigma) << "\n"
      << "use_calibration=" << (p.use_calibration ? "true" : "false") << "\n"
      << "alpha=" << Num(c.alpha) << "\n"
      << "n_mc=" << c.n_mc << "\n"
      << "tracker_window=" << c.tracker_window << "\n"
      << "mode=" << ModeName(c.mode) << "\n"
      << "W=" << s.steps_per_epoch << "\n"
      << "epochs=" << s.epochs << "\n"
      << "dt=" << Num(s.plant.dt) << "\n"
      << "a=" << Num(s.plant.a) << "\n"
      << "b=" << Num(s.plant.b) << "\n"
      << "q_var=" << Num(s.plant.process_cov(0, 0)) << "\n"
      << "r_var=" << Num(s.plant.measurement_cov(0, 0)) << "\n";
  if (!s.attack) {
    out << "attack=none\n";
  } else {
    const AttackSpec& a = *s.attack;
    out << "attack="
        << (a.kind == AttackKind::kBias            ? "bias"
            : a.kind == AttackKind::kVarianceScale ? "variance_scale"
                                                   : "replay")
        << "\nattack_targets=";
    for (size_t i = 0; i < a.targets.size(); ++i) {
      out << (i ? "," : "") << a.targets[i];
    }
    out << "\nattack_magnitude=" << Num(a.magnitude) << "\n"
        << "attack_start=" << a.t_start << "\n"
        << "attack_end=" << a.t_end << "\n";
  }
  return out.str();
}

std::string ParamsHash(const RunConfig& config) {
  const std::string text = DumpRunConfig(config);
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dpverify
