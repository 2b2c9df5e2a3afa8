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

#ifndef DPVERIFY_EKF_H_
#define DPVERIFY_EKF_H_

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "dpverify/plant.h"
#include "dpverify/stats.h"

namespace dpverify {

using VectorFn = std::function<Vector(const Vector&)>;

// Central-difference Jacobian. The default step for coordinate j is
// 1e-6 * max(1, |x0_j|).
Matrix Jacobian(const VectorFn& f, const Vector& x0,
                std::optional<double> step = std::nullopt);

struct EkfModel {
  std::function<Vector(const Vector&, double)> transition;
  VectorFn observation;
  Matrix process_cov;
  Matrix measurement_cov;

  static EkfModel ForPlant(const PlantSpec& spec);
  int state_dim() const { return static_cast<int>(process_cov.rows()); }
  int sensor_dim() const { return static_cast<int>(measurement_cov.rows()); }
};

struct EkfBelief {
  Vector x;
  Matrix p;
};

struct ResidualRecord {
  int64_t t = 0;
  Vector r;  // y - h(x_prior)
  Matrix s;  // innovation covariance H P H^T + R
};

EkfBelief EkfPredict(const EkfBelief& belief, double u, const EkfModel& model);

struct EkfUpdateResult {
  EkfBelief belief;
  ResidualRecord record;
};

// The gain uses S + 1e-10 * trace(S) / d * I; S itself is recorded
// unregularized. Throws kNumerical when S cannot be factored.
EkfUpdateResult EkfUpdate(const EkfBelief& prior, const Vector& y, int64_t t,
                          const EkfModel& model);

// Runs predict/update over the trace with u == 0, starting from `initial`
// (the belief one step before the first row).
std::vector<ResidualRecord> RunFilter(const std::vector<TraceRow>& trace,
                                      const EkfModel& model,
                                      const EkfBelief& initial);

// Belief that matches GenerateTrace's initial state exactly.
EkfBelief DefaultInitialBelief(const EkfModel& model);

// Header `t,r1..rd,s11,s12,..,sdd` (row-major S).
void WriteResidualCsv(std::ostream& out,
                      const std::vector<ResidualRecord>& records);
// Parses the format above. Throws kSchema naming the row (1-based, counting
// the header) on malformed input. Does not check symmetry or definiteness.
std::vector<ResidualRecord> ReadResidualCsv(std::istream& in);

struct IngestReport {
  std::vector<ResidualRecord> accepted;
  int rejected_rows = 0;           // S not symmetric PSD
  std::vector<int64_t> rejected_t;
};

// Drops rows whose S is not symmetric PSD and throws kSchema on a
// non-increasing timestamp.
IngestReport ValidateResiduals(std::vector<ResidualRecord> records);

}  // namespace dpverify

#endif  // DPVERIFY_EKF_H_
