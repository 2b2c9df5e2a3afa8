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

// Flat key=value run configuration: privacy parameters, detector settings,
// plant and attack. One `key=value` per line, `#` starts a comment. Unknown
// keys are an error so typos do not silently fall back to defaults.
//
//   eps_cov eps_r gamma_cov gamma_r delta_l delta_r p sigma use_calibration
//   alpha n_mc tracker_window mode W epochs
//   dt a b q_var r_var
//   attack (none|bias|variance_scale|replay) attack_targets (e.g. 0,2)
//   attack_magnitude attack_start attack_end   (steps, end inclusive)
//
// `sigma` defaults to the minimum admissible value for (delta_r, eps_r,
// gamma_r).

#ifndef DPVERIFY_PARAMS_FILE_H_
#define DPVERIFY_PARAMS_FILE_H_

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>

#include "dpverify/plant.h"
#include "dpverify/privacy.h"
#include "dpverify/protocol.h"

namespace dpverify {

struct Scenario {
  PlantSpec plant;
  std::optional<AttackSpec> attack;
  int steps_per_epoch = 20;  // W
  int64_t epochs = 200;

  int64_t total_steps() const { return steps_per_epoch * epochs; }
};

struct RunConfig {
  PrivacyParams params = PrivacyParams::Make(100, 100, 0.01, 0.01, 0.1, 50, 3);
  double alpha = 0.05;
  int n_mc = 10000;
  size_t tracker_window = 50;
  Mode mode = Mode::kCr;
  Scenario scenario;

  void Validate() const;
};

// Parses `key=value` lines on top of `base`. Throws kInvalidArgument naming
// the key (field()) or "line N" on malformed input.
RunConfig ParseRunConfig(std::istream& in, const RunConfig& base = {});
RunConfig LoadRunConfig(const std::string& path, const RunConfig& base = {});

// Applies one key; used by ParseRunConfig and by sweeps.
void SetRunConfigValue(RunConfig& config, const std::string& key,
                       const std::string& value);

// Canonical key=value dump; ParseRunConfig(DumpRunConfig(c)) == c.
std::string DumpRunConfig(const RunConfig& config);
// 16 hex digits over the canonical dump.
std::string ParamsHash(const RunConfig& config);

}  // namespace dpverify

#endif  // DPVERIFY_PARAMS_FILE_H_
