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

#include "dpverify/netsvc.h"

#include <sys/socket.h>

#include <filesystem>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "dpverify/error.h"
#include "dpverify/experiment.h"
#include "dpverify/wire.h"

namespace dpverify {
namespace {

using ::testing::HasSubstr;

std::string TempPath(const std::string& name) {
  return (std::filesystem::temp_directory_path() /
          ("dpverify_" + name + "_" + std::to_string(::getpid())))
      .string();
}

RunConfig SmallConfig(Mode mode = Mode::kCr) {
  RunConfig c;
  c.mode = mode;
  c.n_mc = 500;
  c.scenario.epochs = 30;
  return c;
}

Handshake TestHandshake(Mode mode) {
  Handshake hs;
  hs.uid = "u";
  hs.mode = mode;
  hs.d = 3;
  hs.p = 3;
  hs.steps = 20;
  hs.params = PrivacyParams::Make(100, 100, 0.01, 0.01, 0.1, 50, 3);
  return hs;
}

TEST(EndpointTest, Parse) {
  const Endpoint e = Endpoint::Parse("localhost:9000");
  EXPECT_EQ(e.host, "localhost");
  EXPECT_EQ(e.port, 9000);
  EXPECT_EQ(Endpoint::Parse(":80").host, "127.0.0.1");
  EXPECT_THROW(Endpoint::Parse("nohost"), Error);
  EXPECT_THROW(Endpoint::Parse("h:99999"), Error);
}

TEST(RegulatorSessionTest, HandshakeThenVerdicts) {
  RegulatorSession session(ModeAllow::kBoth);
  const auto ack = session.OnLine(EncodeHandshake(TestHandshake(Mode::kPv)));
  ASSERT_EQ(ack.lines.size(), 1u);
  EXPECT_FALSE(ack.close);
  EXPECT_TRUE(session.handshaken());

  const PvTuple t{"u", 0, 1.0, 2.0, 0.05, false};
  const Verdict v = DecodeVerdict(session.OnLine(EncodePvTuple(t)).lines.at(0));
  EXPECT_FALSE(v.rejected());
  EXPECT_TRUE(v.matched);

  // Duplicate epoch: rejection, counter untouched.
  const Verdict dup = DecodeVerdict(session.OnLine(EncodePvTuple(t)).lines.at(0));
  EXPECT_TRUE(dup.rejected());
  EXPECT_THAT(*dup.reason, HasSubstr("duplicate"));

  // Wrong mode, foreign uid, garbage: all rejections addressed to this uid.
  const CrTuple cr{"u", 5, Matrix::Identity(3, 3), Vector::Ones(3), 1.0, false};
  EXPECT_TRUE(DecodeVerdict(session.OnLine(EncodeCrTuple(cr)).lines.at(0)).rejected());
  const PvTuple other{"x", 6, 1.0, 2.0, 0.05, false};
  const Verdict foreign =
      DecodeVerdict(session.OnLine(EncodePvTuple(other)).lines.at(0));
  EXPECT_TRUE(foreign.rejected());
  EXPECT_EQ(foreign.uid, "u");
  const Verdict junk = DecodeVerdict(session.OnLine("{\"w\":9,").lines.at(0));
  EXPECT_TRUE(junk.rejected());
  EXPECT_EQ(session.stats().verdicts, 1);
  EXPECT_EQ(session.stats().rejections, 4);
}

TEST(RegulatorSessionTest, BadHandshakeClosesWithErrorRecord) {
  RegulatorSession pv_only(ModeAllow::kPv);
  const auto out = pv_only.OnLine(EncodeHandshake(TestHandshake(Mode::kCr)));
  EXPECT_TRUE(out.close);
  EXPECT_TRUE(std::holds_alternative<WireError>(DecodeRecord(out.lines.at(0))));

  RegulatorSession session(ModeAllow::kBoth);
  EXPECT_TRUE(session.OnLine("not json").close);
  Handshake bad = TestHandshake(Mode::kCr);
  bad.p = 4;
  RegulatorSession s2(ModeAllow::kBoth);
  EXPECT_TRUE(s2.OnLine(EncodeHandshake(bad)).close);
}

TEST(ServiceTest, LoopbackRunMatchesInProcessPipeline) {
  const std::string audit = TempPath("loop");
  RegulatorServer server({Endpoint{"127.0.0.1", 0}, audit, ModeAllow::kBoth});
  server.Start();
  const RunConfig c = SmallConfig();
  const auto residuals = SimulateResiduals(c.scenario, PlantSeed(11, "utility"));
  ClientConfig cc;
  cc.regulator = Endpoint{"127.0.0.1", server.port()};
  cc.run = c;
  cc.seed = 11;
  const ClientSummary a = RunUtilityClient(cc, residuals);
  const ClientSummary b = RunUtilityClient(cc, residuals);
  server.Stop();
  ASSERT_TRUE(a.ok()) << a.error;
  EXPECT_EQ(a.sent, b.sent);  // byte-identical tuple stream

  const RunResult local = RunPipeline(c, residuals, 11, "utility");
  ASSERT_EQ(local.epochs.size(), a.epochs.size());
  for (size_t i = 0; i < a.epochs.size(); ++i) {
    EXPECT_EQ(a.epochs[i].rho_hat, local.epochs[i].rho_hat);
    EXPECT_EQ(a.epochs[i].rho, local.epochs[i].rho);
  }
  const AuditFile log = ReadAudit(audit);
  EXPECT_TRUE(ReplayAudit(log).ok()) << ReplayAudit(log).first_mismatch;
  EXPECT_TRUE(CheckIsolation(log).ok);
  std::filesystem::remove(audit);
}

TEST(ServiceTest, DimensionMismatchAbortsBeforeFirstTuple) {
  RunConfig c = SmallConfig();
  auto residuals = SimulateResiduals(c.scenario, 1);
  ClientConfig cc;
  cc.regulator = Endpoint{"127.0.0.1", 1};  // never contacted
  cc.run = c;
  cc.expected_d = 4;
  const ClientSummary s = RunUtilityClient(cc, residuals);
  EXPECT_FALSE(s.ok());
  EXPECT_TRUE(s.sent.empty());
  EXPECT_THAT(s.error, HasSubstr("dimension"));
}

TEST(ServiceTest, UnreachableRegulatorRetriesThenGivesUp) {
  Socket probe = Socket::Listen(Endpoint{"127.0.0.1", 0});
  const uint16_t port = probe.local_port();
  probe.Close();
  ClientConfig cc;
  cc.regulator = Endpoint{"127.0.0.1", port};
  cc.run = SmallConfig();
  cc.backoff_ms = {1, 2, 4};
  const ClientSummary s =
      RunUtilityClient(cc, SimulateResiduals(cc.run.scenario, 1));
  EXPECT_FALSE(s.ok());
  EXPECT_EQ(s.reconnects, 3);
  EXPECT_THAT(s.error, HasSubstr("giving up"));
}

TEST(ServiceTest, DisconnectMidLineEmitsNoVerdict) {
  const std::string audit = TempPath("partial");
  RegulatorServer server({Endpoint{"127.0.0.1", 0}, audit, ModeAllow::kBoth});
  server.Start();
  {
    Socket s = Socket::Connect(Endpoint{"127.0.0.1", server.port()});
    s.SendLine(EncodeHandshake(TestHandshake(Mode::kPv)));
    std::string ack;
    ASSERT_TRUE(s.ReadLine(ack, 5000));
    const std::string half = EncodePvTuple({"u", 0, 1.0, 2.0, 0.05, false});
    ASSERT_GT(::send(s.fd(), half.data(), half.size() / 2, MSG_NOSIGNAL), 0);
  }
  server.Stop();
  const auto sessions = server.Sessions();
  ASSERT_EQ(sessions.size(), 1u);
  EXPECT_EQ(sessions[0].stats.tuples, 0);
  EXPECT_EQ(ReadAudit(audit).entries.size(), 2u);  // handshake + ack
  std::filesystem::remove(audit);
}

TEST(HarnessTest, IsolatedSessionsAndByteExactReplay) {
  const std::string audit = TempPath("harness");
  std::vector<HarnessUtility> utilities;
  for (int j = 0; j < 3; ++j) {
    HarnessUtility u;
    u.uid = "plant-" + std::to_string(j);
    u.run = SmallConfig(j == 1 ? Mode::kPv : Mode::kCr);
    u.seed = 100 + j;
    utilities.push_back(u);
  }
  const HarnessResult r = RunHarness(utilities, audit);
  EXPECT_FALSE(r.partial);
  ASSERT_EQ(r.summaries.size(), 3u);
  for (const ClientSummary& s : r.summaries) {
    EXPECT_EQ(s.epochs.size(), 30u) << s.uid << ": " << s.error;
  }
  const AuditFile log = ReadAudit(audit);
  const ReplayReport replay = ReplayAudit(log);
  EXPECT_TRUE(replay.ok()) << replay.first_mismatch;
  EXPECT_EQ(replay.sessions, 3);
  EXPECT_TRUE(CheckIsolation(log).ok) << CheckIsolation(log).problem;
  std::filesystem::remove(audit);
}

}  // namespace
}  // namespace dpverify
