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

#include "dpverify/plant.h"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "dpverify/error.h"

namespace dpverify {
namespace {

void CheckCovariance(const Matrix& cov, int dim, const char* name) {
  if (cov.rows() != dim || cov.cols() != dim) {
    Fail(ErrorCode::kInvalidArgument, std::string(name) + " has wrong shape");
  }
  // EigFactorize rejects asymmetric and indefinite input.
  EigFactorize(cov, ComponentSelection::All());
}

}  // namespace

void PlantSpec::Validate() const {
  Require(dt > 0 && std::isfinite(dt), "dt must be positive");
  Require(std::isfinite(a) && std::isfinite(b), "plant constants not finite");
  CheckCovariance(process_cov, kStateDim, "process covariance");
  CheckCovariance(measurement_cov, kSensorDim, "measurement covariance");
}

void AttackSpec::Validate(int sensor_dim) const {
  Require(!targets.empty(), "attack needs at least one target sensor");
  for (int i : targets) {
    Require(i >= 0 && i < sensor_dim, "attack target out of range");
  }
  Require(std::isfinite(magnitude), "attack magnitude must be finite");
  Require(t_end >= t_start, "attack window is empty");
  if (kind == AttackKind::kVarianceScale) {
    Require(magnitude >= 0, "variance scale must be nonnegative");
  }
}

Matrix PsdSqrt(const Matrix& cov) {
  const CovFactorization f = EigFactorize(cov, ComponentSelection::All());
  return f.vectors * f.eigenvalues.cwiseSqrt().asDiagonal() *
         f.vectors.transpose();
}

Vector PlantTransition(const Vector& x, double u, const PlantSpec& spec) {
  Vector next(2);
  next[0] = x[0] + spec.dt * x[1];
  next[1] = x[1] + spec.dt * (-spec.a * std::sin(x[0]) - spec.b * x[1] + u);
  return next;
}

Vector PlantObservation(const Vector& x) {
  Vector y(3);
  y << x[0], x[1], std::sin(x[0]) + 0.5 * x[1];
  return y;
}

StepResult SimulateStep(const PlantState& state, double u,
                        const PlantSpec& spec, Rng& rng) {
  StepResult out;
  out.state.t = state.t + 1;
  out.state.x = PlantTransition(state.x, u, spec) +
                PsdSqrt(spec.process_cov) * rng.NormalVector(spec.state_dim());
  if (!out.state.x.allFinite()) {
    Fail(ErrorCode::kDivergence,
         "plant state diverged at t=" + std::to_string(out.state.t));
  }
  out.y = PlantObservation(out.state.x) +
          PsdSqrt(spec.measurement_cov) * rng.NormalVector(spec.sensor_dim());
  return out;
}

Vector InjectAttack(const Vector& y, const AttackSpec& attack, int64_t t,
                    const Vector& last_clean_y) {
  if (!attack.Active(t)) return y;
  Vector out = y;
  for (int i : attack.targets) {
    switch (attack.kind) {
      case AttackKind::kBias:
        out[i] += attack.magnitude;
        break;
      case AttackKind::kVarianceScale:
        // Scales the variance of the deviation from the pre-attack value.
        out[i] = last_clean_y[i] +
                 std::sqrt(attack.magnitude) * (y[i] - last_clean_y[i]);
        break;
      case AttackKind::kReplay:
        out[i] = last_clean_y[i];
        break;
    }
  }
  return out;
}

std::vector<TraceRow> GenerateTrace(const PlantSpec& spec,
                                    const std::optional<AttackSpec>& attack,
                                    int64_t n_steps, uint64_t seed) {
  spec.Validate();
  Require(n_steps >= 0, "n_steps must be nonnegative");
  if (attack) attack->Validate(spec.sensor_dim());

  const Matrix q_sqrt = PsdSqrt(spec.process_cov);
  const Matrix r_sqrt = PsdSqrt(spec.measurement_cov);
  Rng rng(seed);
  std::vector<TraceRow> trace;
  trace.reserve(static_cast<size_t>(n_steps));
  Vector x = Vector::Zero(spec.state_dim());
  Vector last_clean = PlantObservation(x);
  for (int64_t t = 0; t < n_steps; ++t) {
    x = PlantTransition(x, 0.0, spec) + q_sqrt * rng.NormalVector(2);
    if (!x.allFinite()) {
      Fail(ErrorCode::kDivergence,
           "plant state diverged at t=" + std::to_string(t));
    }
    Vector y = PlantObservation(x) + r_sqrt * rng.NormalVector(3);
    if (attack) {
      if (t < attack->t_start) last_clean = y;
      y = InjectAttack(y, *attack, t, last_clean);
    }
    trace.push_back({t, x, y});
  }
  return trace;
}

void WriteTraceCsv(std::ostream& out, const std::vector<TraceRow>& trace) {
  out << "t";
  const int m = trace.empty() ? PlantSpec::kStateDim : trace[0].x.size();
  const int d = trace.empty() ? PlantSpec::kSensorDim : trace[0].y.size();
  for (int i = 1; i <= m; ++i) out << ",x" << i;
  for (int i = 1; i <= d; ++i) out << ",y" << i;
  out << "\n";
  char buf[32];
  for (const TraceRow& row : trace) {
    out << row.t;
    for (int i = 0; i < m; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", row.x[i]);
      out << buf;
    }
    for (int i = 0; i < d; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", row.y[i]);
      out << buf;
    }
    out << "\n";
  }
}

}  // namespace dpverify
