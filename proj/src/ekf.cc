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

#include "dpverify/ekf.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "dpverify/error.h"

namespace dpverify {
namespace {

Matrix Symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double ParseNumber(const std::string& text, int row, int column) {
  const char* begin = text.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  while (end != nullptr && (*end == ' ' || *end == '\r')) ++end;
  if (text.empty() || end == begin || *end != '\0' || !std::isfinite(v)) {
    Fail(ErrorCode::kSchema,
         "row " + std::to_string(row) + ", column " +
             std::to_string(column + 1) + ": not a finite number '" + text +
             "'",
         "row " + std::to_string(row));
  }
  return v;
}

}  // namespace

Matrix Jacobian(const VectorFn& f, const Vector& x0,
                std::optional<double> step) {
  const Vector f0 = f(x0);
  Matrix jac(f0.size(), x0.size());
  for (int j = 0; j < x0.size(); ++j) {
    const double h =
        step ? *step : 1e-6 * std::max(1.0, std::fabs(x0[j]));
    Vector plus = x0;
    Vector minus = x0;
    plus[j] += h;
    minus[j] -= h;
    jac.col(j) = (f(plus) - f(minus)) / (plus[j] - minus[j]);
  }
  return jac;
}

EkfModel EkfModel::ForPlant(const PlantSpec& spec) {
  spec.Validate();
  EkfModel model;
  model.transition = [spec](const Vector& x, double u) {
    return PlantTransition(x, u, spec);
  };
  model.observation = [](const Vector& x) { return PlantObservation(x); };
  model.process_cov = spec.process_cov;
  model.measurement_cov = spec.measurement_cov;
  return model;
}

EkfBelief DefaultInitialBelief(const EkfModel& model) {
  return {Vector::Zero(model.state_dim()), model.process_cov};
}

EkfBelief EkfPredict(const EkfBelief& belief, double u, const EkfModel& model) {
  const auto g = [&](const Vector& x) { return model.transition(x, u); };
  const Matrix jac = Jacobian(g, belief.x);
  EkfBelief out;
  out.x = g(belief.x);
  out.p = Symmetrize(jac * belief.p * jac.transpose() + model.process_cov);
  return out;
}

EkfUpdateResult EkfUpdate(const EkfBelief& prior, const Vector& y, int64_t t,
                          const EkfModel& model) {
  const int d = model.sensor_dim();
  Require(y.size() == d, "measurement dimension mismatch");
  const Matrix h = Jacobian(model.observation, prior.x);

  EkfUpdateResult out;
  out.record.t = t;
  out.record.r = y - model.observation(prior.x);
  out.record.s = Symmetrize(h * prior.p * h.transpose() + model.measurement_cov);

  const Matrix& s = out.record.s;
  const Matrix s_reg =
      s + (1e-10 * s.trace() / d) * Matrix::Identity(d, d);
  Eigen::LDLT<Matrix> ldlt(s_reg);
  const double rcond = ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0;
  if (!(rcond > 1e-14) || !ldlt.isPositive()) {
    Fail(ErrorCode::kNumerical,
         "innovation covariance is singular at t=" + std::to_string(t) +
             " (reciprocal condition estimate " + std::to_string(rcond) + ")");
  }
  // K = P H^T S^-1, computed as (S^-1 H P)^T.
  const Matrix gain = ldlt.solve(h * prior.p).transpose();
  const Matrix ikh =
      Matrix::Identity(prior.x.size(), prior.x.size()) - gain * h;
  out.belief.x = prior.x + gain * out.record.r;
  out.belief.p = Symmetrize(ikh * prior.p * ikh.transpose() +
                            gain * model.measurement_cov * gain.transpose());
  return out;
}

std::vector<ResidualRecord> RunFilter(const std::vector<TraceRow>& trace,
                                      const EkfModel& model,
                                      const EkfBelief& initial) {
  std::vector<ResidualRecord> records;
  records.reserve(trace.size());
  EkfBelief belief = initial;
  for (const TraceRow& row : trace) {
    EkfUpdateResult step =
        EkfUpdate(EkfPredict(belief, 0.0, model), row.y, row.t, model);
    belief = std::move(step.belief);
    records.push_back(std::move(step.record));
  }
  return records;
}

void WriteResidualCsv(std::ostream& out,
                      const std::vector<ResidualRecord>& records) {
  const int d = records.empty() ? PlantSpec::kSensorDim : records[0].r.size();
  out << "t";
  for (int i = 1; i <= d; ++i) out << ",r" << i;
  for (int i = 1; i <= d; ++i) {
    for (int j = 1; j <= d; ++j) out << ",s" << i << j;
  }
  out << "\n";
  char buf[32];
  for (const ResidualRecord& rec : records) {
    out << rec.t;
    for (int i = 0; i < d; ++i) {
      std::snprintf(buf, sizeof(buf), ",%.17g", rec.r[i]);
      out << buf;
    }
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        std::snprintf(buf, sizeof(buf), ",%.17g", rec.s(i, j));
        out << buf;
      }
    }
    out << "\n";
  }
}

std::vector<ResidualRecord> ReadResidualCsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    Fail(ErrorCode::kSchema, "row 1: missing header", "row 1");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = SplitCsvLine(line);
  const int columns = static_cast<int>(header.size());
  int d = 0;
  while (1 + d + d * d < columns) ++d;
  if (d == 0 || 1 + d + d * d != columns || header[0] != "t") {
    Fail(ErrorCode::kSchema,
         "row 1: header must be t,r1..rd,s11..sdd (got " +
             std::to_string(columns) + " columns)",
         "row 1");
  }
  for (int i = 0; i < d; ++i) {
    if (header[1 + i] != "r" + std::to_string(i + 1)) {
      Fail(ErrorCode::kSchema, "row 1: unexpected column '" + header[1 + i] +
                                   "'", "row 1");
    }
  }

  std::vector<ResidualRecord> records;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = SplitCsvLine(line);
    if (static_cast<int>(fields.size()) != columns) {
      Fail(ErrorCode::kSchema,
           "row " + std::to_string(row) + ": expected " +
               std::to_string(columns) + " fields, got " +
               std::to_string(fields.size()),
           "row " + std::to_string(row));
    }
    ResidualRecord rec;
    const double t = ParseNumber(fields[0], row, 0);
    if (t != std::floor(t)) {
      Fail(ErrorCode::kSchema,
           "row " + std::to_string(row) + ": timestamp is not an integer",
           "row " + std::to_string(row));
    }
    rec.t = static_cast<int64_t>(t);
    rec.r.resize(d);
    rec.s.resize(d, d);
    for (int i = 0; i < d; ++i) rec.r[i] = ParseNumber(fields[1 + i], row, 1 + i);
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        const int c = 1 + d + i * d + j;
        rec.s(i, j) = ParseNumber(fields[c], row, c);
      }
    }
    records.push_back(std::move(rec));
  }
  return records;
}

IngestReport ValidateResiduals(std::vector<ResidualRecord> records) {
  IngestReport report;
  for (size_t i = 0; i < records.size(); ++i) {
    if (i > 0 && records[i].t <= records[i - 1].t) {
      // Data rows start at row 2, below the header.
      const std::string row = "row " + std::to_string(i + 2);
      Fail(ErrorCode::kSchema,
           row + ": timestamp " + std::to_string(records[i].t) +
               " does not increase",
           row);
    }
    try {
      EigFactorize(records[i].s, ComponentSelection::All());
    } catch (const Error&) {
      ++report.rejected_rows;
      report.rejected_t.push_back(records[i].t);
      continue;
    }
    report.accepted.push_back(std::move(records[i]));
  }
  return report;
}

}  // namespace dpverify
