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
#include <sstream>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "dpverify/error.h"

namespace dpverify {
namespace {

using ::testing::HasSubstr;

PlantSpec NoiselessSpec() {
  PlantSpec spec;
  spec.process_cov.setZero();
  spec.measurement_cov.setZero();
  return spec;
}

TEST(PlantTest, NoiselessPlantStaysAtRest) {
  const auto trace = GenerateTrace(NoiselessSpec(), std::nullopt, 100, 1);
  ASSERT_EQ(trace.size(), 100u);
  for (const TraceRow& row : trace) {
    EXPECT_EQ(row.x.norm(), 0.0);
    EXPECT_EQ(row.y.norm(), 0.0);
  }
}

TEST(PlantTest, TransitionAndObservationFormulas) {
  PlantSpec spec;
  const Vector x = Eigen::Vector2d(0.3, -0.2);
  const Vector next = PlantTransition(x, 0.5, spec);
  EXPECT_DOUBLE_EQ(next[0], 0.3 + 0.1 * -0.2);
  EXPECT_DOUBLE_EQ(next[1], -0.2 + 0.1 * (-std::sin(0.3) + 0.1 + 0.5));
  const Vector y = PlantObservation(x);
  EXPECT_DOUBLE_EQ(y[2], std::sin(0.3) - 0.1);
}

TEST(PlantTest, NullMeasurementsAreCentered) {
  const int n = 10000;
  const auto trace = GenerateTrace(PlantSpec(), std::nullopt, n, 42);
  Vector mean = Vector::Zero(3);
  for (const TraceRow& row : trace) mean += row.y;
  mean /= n;
  // Measurement noise (sd 0.1) dominates the slow state, so samples are close
  // to independent.
  for (int i = 0; i < 3; ++i) EXPECT_LT(std::fabs(mean[i]), 3 * 0.12 / std::sqrt(n));
}

TEST(PlantTest, SameSeedSameTrace) {
  const auto a = GenerateTrace(PlantSpec(), std::nullopt, 50, 9);
  const auto b = GenerateTrace(PlantSpec(), std::nullopt, 50, 9);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].y, b[i].y);
}

TEST(PlantTest, SimulateStepMatchesTraceStep) {
  PlantSpec spec = NoiselessSpec();
  Rng rng(1);
  PlantState state{0, Eigen::Vector2d(0.2, 0.1)};
  const StepResult step = SimulateStep(state, 0.0, spec, rng);
  EXPECT_EQ(step.state.t, 1);
  EXPECT_EQ(step.state.x, PlantTransition(state.x, 0.0, spec));
}

TEST(AttackTest, BiasOnlyInsideWindowAndOnTargets) {
  AttackSpec attack{AttackKind::kBias, {1}, 2.5, 10, 19};
  const auto clean = GenerateTrace(PlantSpec(), std::nullopt, 30, 5);
  const auto hit = GenerateTrace(PlantSpec(), attack, 30, 5);
  for (int t = 0; t < 30; ++t) {
    const Vector diff = hit[t].y - clean[t].y;
    const double expected = (t >= 10 && t <= 19) ? 2.5 : 0.0;
    EXPECT_DOUBLE_EQ(diff[1], expected) << t;
    EXPECT_EQ(diff[0], 0.0);
    EXPECT_EQ(diff[2], 0.0);
  }
}

TEST(AttackTest, ReplayFreezesAndVarianceScales) {
  const Vector last = Eigen::Vector3d(1.0, 2.0, 3.0);
  const Vector y = Eigen::Vector3d(1.5, 2.5, 3.5);
  AttackSpec replay{AttackKind::kReplay, {0, 2}, 0.0, 0, 5};
  const Vector frozen = InjectAttack(y, replay, 3, last);
  EXPECT_EQ(frozen[0], 1.0);
  EXPECT_EQ(frozen[1], 2.5);
  EXPECT_EQ(frozen[2], 3.0);
  AttackSpec scale{AttackKind::kVarianceScale, {1}, 4.0, 0, 5};
  EXPECT_DOUBLE_EQ(InjectAttack(y, scale, 3, last)[1], 2.0 + 2.0 * 0.5);
  EXPECT_EQ(InjectAttack(y, scale, 6, last), y);
}

TEST(AttackTest, RejectsEmptyTargets) {
  AttackSpec attack{AttackKind::kBias, {}, 1.0, 0, 5};
  EXPECT_THROW(GenerateTrace(PlantSpec(), attack, 10, 1), Error);
}

TEST(PlantTest, DivergenceIsReported) {
  PlantSpec spec;
  spec.b = -1e5;
  try {
    GenerateTrace(spec, std::nullopt, 1000, 1);
    FAIL() << "expected divergence";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDivergence);
    EXPECT_THAT(e.what(), HasSubstr("t="));
  }
}

TEST(PlantTest, TraceCsvHeader) {
  std::ostringstream out;
  WriteTraceCsv(out, GenerateTrace(PlantSpec(), std::nullopt, 2, 1));
  EXPECT_THAT(out.str(), ::testing::StartsWith("t,x1,x2,y1,y2,y3\n0,"));
}

}  // namespace
}  // namespace dpverify
