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

#include <sstream>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "dpverify/error.h"
#include "dpverify/params_file.h"

namespace dpverify {
namespace {

using ::testing::HasSubstr;
using ::testing::StartsWith;

RunConfig SmallConfig() {
  RunConfig c;
  c.n_mc = 500;
  c.scenario.epochs = 40;
  return c;
}

TEST(ParamsFileTest, ParsesAndRoundTrips) {
  std::stringstream in(
      "# comment\n"
      "eps_cov = 50\n"
      "eps_r=2\n"
      "mode=pv\n"
      "W=10\n"
      "attack=bias\n"
      "attack_targets=0,2\n"
      "attack_magnitude=0.5\n"
      "attack_start=100\n"
      "attack_end=199\n");
  const RunConfig c = ParseRunConfig(in);
  EXPECT_EQ(c.params.eps_cov, 50);
  EXPECT_EQ(c.mode, Mode::kPv);
  EXPECT_EQ(c.scenario.steps_per_epoch, 10);
  ASSERT_TRUE(c.scenario.attack.has_value());
  EXPECT_THAT(c.scenario.attack->targets, ::testing::ElementsAre(0, 2));
  EXPECT_DOUBLE_EQ(c.params.sigma, GdpSigma(50, 2, 0.01));
  EXPECT_TRUE(c.params.eps_r_waived);
  EXPECT_NO_THROW(c.Validate());

  std::stringstream dump(DumpRunConfig(c));
  const RunConfig back = ParseRunConfig(dump);
  EXPECT_EQ(DumpRunConfig(back), DumpRunConfig(c));
  EXPECT_EQ(ParamsHash(back), ParamsHash(c));
  EXPECT_EQ(ParamsHash(c).size(), 16u);
}

TEST(ParamsFileTest, ExplicitSigmaWinsRegardlessOfOrder) {
  std::stringstream in("sigma=9\neps_r=3\n");
  EXPECT_EQ(ParseRunConfig(in).params.sigma, 9.0);
}

TEST(ParamsFileTest, ErrorsNameTheKey) {
  std::stringstream unknown("epsilon=1\n");
  try {
    ParseRunConfig(unknown);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.field(), "epsilon");
  }
  std::stringstream bad("alpha=abc\n");
  EXPECT_THROW(ParseRunConfig(bad), Error);
  std::stringstream no_eq("alpha\n");
  EXPECT_THROW(ParseRunConfig(no_eq), Error);
}

TEST(PipelineTest, DeterministicPerSeedAndHeader) {
  const RunConfig c = SmallConfig();
  const RunResult a = RunSimulated(c, 3);
  const RunResult b = RunSimulated(c, 3);
  ASSERT_EQ(a.epochs.size(), 40u);
  std::stringstream x, y;
  WriteEpochCsv(x, a);
  WriteEpochCsv(y, b);
  EXPECT_EQ(x.str(), y.str());
  EXPECT_THAT(x.str(), StartsWith("w,t_stat,t_stat_dp,pvalue,pvalue_dp,rho,rho_hat\n"));
  EXPECT_EQ(a.composition.epochs, 40);
  EXPECT_THAT(OutputHeader(3, c), HasSubstr("params_hash=" + ParamsHash(c)));
}

TEST(PipelineTest, TrailingPartialEpochIsDropped) {
  RunConfig c = SmallConfig();
  auto residuals = SimulateResiduals(c.scenario, 1);
  residuals.resize(residuals.size() - 5);
  EXPECT_EQ(RunPipeline(c, residuals, 1, "u").epochs.size(), 39u);
}

TEST(SweepTest, SingleRepeatEnvelopeIsDegenerate) {
  SweepConfig s;
  s.param = "eps_cov";
  s.grid = {10.0, 100.0};
  s.repeats = 1;
  s.base = SmallConfig();
  const auto cells = RunSweep(s, 4, 2);
  ASSERT_EQ(cells.size(), 2u);
  for (const SweepCell& cell : cells) ASSERT_TRUE(cell.result) << cell.error;
  std::stringstream out;
  WriteSweepSummary(out, cells);
  std::string line;
  std::getline(out, line);
  EXPECT_EQ(line, "value,w,median,min,max");
  while (std::getline(out, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string t; std::getline(ss, t, ',');) f.push_back(t);
    ASSERT_EQ(f.size(), 5u);
    EXPECT_EQ(f[2], f[3]);
    EXPECT_EQ(f[3], f[4]);
  }
  s.param = "delta_r";
  EXPECT_THROW(RunSweep(s, 4), Error);
}

TEST(AlignmentTest, NegligibleNoiseAlignsEverywhere) {
  RunConfig c = SmallConfig();
  c.params = PrivacyParams::Make(1e9, 1e9, 0.01, 0.01, 0.1, 50, 3);
  c.scenario.epochs = 60;
  c.scenario.attack = AttackSpec{AttackKind::kBias, {0}, 0.5, 200, 1199};
  const double cps[] = {20.0, 60.0, 100.0};
  const auto rows = RunAlignment(c, cps, 4, 1);
  for (const AlignmentRow& r : rows) {
    EXPECT_EQ(r.alignment_rate, 1.0);
    EXPECT_EQ(r.only_nondp, 0);
  }
  const double too_long[] = {500.0};
  EXPECT_THROW(RunAlignment(c, too_long, 1, 1), Error);
}

TEST(FalseAlarmTest, TinyAlphaSilencesTheRegulator) {
  RunConfig c = SmallConfig();
  c.alpha = 1e-6;
  const FalseAlarmResult r = RunFalseAlarms(c, 2, 1);
  EXPECT_EQ(r.epochs, 80);
  EXPECT_EQ(r.alarms, 0);
  c.scenario.attack = AttackSpec{AttackKind::kBias, {0}, 0.5, 0, 10};
  EXPECT_THROW(RunFalseAlarms(c, 1, 1), Error);
}

TEST(BoundsReportTest, SnapshotReproducesTupleAndHasAllKeys) {
  const RunConfig c = SmallConfig();
  const auto residuals = SimulateResiduals(c.scenario, PlantSeed(7, "utility"));
  const EpochSnapshot a = CaptureSnapshot(c, residuals, 7, "utility", 12);
  const EpochSnapshot b = CaptureSnapshot(c, residuals, 7, "utility", 12);
  EXPECT_EQ(a.tuple_line, b.tuple_line);
  const BoundReport report = EvaluateBounds(c, a, 7);
  const auto kv = report.ToKeyValues();
  EXPECT_EQ(kv, EvaluateBounds(c, b, 7).ToKeyValues());
  EXPECT_GE(report.thm4_fn_bound, 0.0);
  EXPECT_LE(report.thm4_fp_bound, 1.0);
  EXPECT_NEAR(report.thm3_e1max, report.alpha, 0.2 * report.alpha);
  EXPECT_THROW(CaptureSnapshot(c, residuals, 7, "utility", 400), Error);
}

TEST(BoundsReportTest, NegligibleNoiseLeaksPrivacy) {
  RunConfig c = SmallConfig();
  c.params = PrivacyParams::Make(1e6, 1e6, 0.01, 0.01, 0.1, 50, 3);
  const auto residuals = SimulateResiduals(c.scenario, 1);
  const BoundReport r =
      EvaluateBounds(c, CaptureSnapshot(c, residuals, 1, "u", 5), 1);
  // Almost no randomization: the end-to-end epsilon explodes past eps_cov.
  EXPECT_GT(r.thm6_eps_prime, 1e3 * c.params.eps_cov);
}

}  // namespace
}  // namespace dpverify
