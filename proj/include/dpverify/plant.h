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

// Synthetic nonlinear plant: a damped pendulum with three sensors.
//
//   x1' = x1 + dt * x2
//   x2' = x2 + dt * (-a sin(x1) - b x2 + u)
//   y   = [x1, x2, sin(x1) + 0.5 x2]
//
// plus Gaussian process and measurement noise.

#ifndef DPVERIFY_PLANT_H_
#define DPVERIFY_PLANT_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "dpverify/rng.h"
#include "dpverify/stats.h"

namespace dpverify {

struct PlantSpec {
  static constexpr int kStateDim = 2;
  static constexpr int kSensorDim = 3;

  double dt = 0.1;
  double a = 1.0;
  double b = 0.5;
  Matrix process_cov = 1e-4 * Matrix::Identity(kStateDim, kStateDim);
  Matrix measurement_cov = 1e-2 * Matrix::Identity(kSensorDim, kSensorDim);

  int state_dim() const { return kStateDim; }
  int sensor_dim() const { return kSensorDim; }
  // Throws kInvalidArgument on a bad shape, non-PSD covariance or dt <= 0.
  void Validate() const;
};

enum class AttackKind { kBias, kVarianceScale, kReplay };

struct AttackSpec {
  AttackKind kind = AttackKind::kBias;
  std::vector<int> targets;  // sensor indices, nonempty
  double magnitude = 0.0;
  int64_t t_start = 0;
  int64_t t_end = 0;  // inclusive

  bool Active(int64_t t) const { return t >= t_start && t <= t_end; }
  void Validate(int sensor_dim) const;
};

struct PlantState {
  int64_t t = 0;
  Vector x;
};

struct StepResult {
  PlantState state;
  Vector y;
};

Vector PlantTransition(const Vector& x, double u, const PlantSpec& spec);
Vector PlantObservation(const Vector& x);

// Advances one step and emits the noisy measurement of the new state.
StepResult SimulateStep(const PlantState& state, double u,
                        const PlantSpec& spec, Rng& rng);

// Applies the attack to a clean measurement. `last_clean_y` is the last
// measurement before t_start; replay freezes the targets at it. Outside the
// attack window y is returned unchanged.
Vector InjectAttack(const Vector& y, const AttackSpec& attack, int64_t t,
                    const Vector& last_clean_y);

struct TraceRow {
  int64_t t = 0;
  Vector x;
  Vector y;
};

// u == 0 throughout; the plant starts at rest. Throws kDivergence if the
// state stops being finite.
std::vector<TraceRow> GenerateTrace(const PlantSpec& spec,
                                    const std::optional<AttackSpec>& attack,
                                    int64_t n_steps, uint64_t seed);

// Header `t,x1..xm,y1..yd`.
void WriteTraceCsv(std::ostream& out, const std::vector<TraceRow>& trace);

// Matrix square root of a PSD matrix, used to draw correlated noise.
Matrix PsdSqrt(const Matrix& cov);

}  // namespace dpverify

#endif  // DPVERIFY_PLANT_H_
