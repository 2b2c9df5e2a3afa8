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

// Regulator service and utility client over TCP with newline-delimited wire
// records.
//
// Session: the client sends a handshake, the regulator echoes it back (or
// sends an error record and closes), then the client streams one tuple per
// epoch and reads one verdict per tuple. The audit log records every line in
// both directions as
//
//   <ISO-8601 UTC> <RX|TX> c<connection> <record>
//
// after a "# dpverify-audit v1 mode_allow=<m>" header, and is enough to
// replay the regulator byte for byte.

#ifndef DPVERIFY_NETSVC_H_
#define DPVERIFY_NETSVC_H_

#include <atomic>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "dpverify/ekf.h"
#include "dpverify/params_file.h"
#include "dpverify/protocol.h"

namespace dpverify {

struct Endpoint {
  std::string host = "127.0.0.1";
  uint16_t port = 0;

  // "host:port"; throws kInvalidArgument.
  static Endpoint Parse(std::string_view text);
  std::string ToString() const;
};

// Owning socket descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& other) noexcept;
  Socket& operator=(Socket&& other) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  // Throw kIo.
  static Socket Connect(const Endpoint& endpoint);
  static Socket Listen(const Endpoint& endpoint, int backlog = 64);
  // Returns an invalid socket once the listener has been shut down.
  Socket Accept();

  void SendLine(std::string_view line);
  // Reads one complete line (without '\n'). Returns false on EOF; a trailing
  // partial line is discarded. timeout_ms < 0 waits forever.
  bool ReadLine(std::string& line, int timeout_ms = -1);
  void Shutdown();
  void Close();

  bool valid() const { return fd_ >= 0; }
  int fd() const { return fd_; }
  uint16_t local_port() const;

 private:
  int fd_ = -1;
  std::string buffer_;
};

enum class ModeAllow { kCr, kPv, kBoth };
ModeAllow ParseModeAllow(std::string_view text);
std::string_view ModeAllowName(ModeAllow allow);

struct SessionStats {
  int64_t tuples = 0;
  int64_t verdicts = 0;
  int64_t mismatches = 0;
  int64_t rejections = 0;
};

// Regulator side of one connection as a pure state machine: the same object
// drives the live server and the audit replay.
class RegulatorSession {
 public:
  struct Output {
    std::vector<std::string> lines;
    bool close = false;
  };

  explicit RegulatorSession(ModeAllow allow) : allow_(allow) {}

  Output OnLine(std::string_view line);

  bool handshaken() const { return handshake_.has_value(); }
  const Handshake& handshake() const { return *handshake_; }
  const SessionStats& stats() const { return stats_; }

 private:
  Output OnHandshake(std::string_view line);
  std::string Reject(int64_t w, const std::string& reason);

  ModeAllow allow_;
  std::optional<Handshake> handshake_;
  int64_t last_w_ = -1;
  SessionStats stats_;
};

// Append-only, thread-safe audit log.
class AuditLog {
 public:
  AuditLog(const std::string& path, ModeAllow allow);
  void Append(std::string_view direction, int64_t connection,
              std::string_view record);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

struct ServerConfig {
  Endpoint listen;
  std::string audit_path;
  ModeAllow allow = ModeAllow::kBoth;
};

struct SessionSummary {
  int64_t connection = 0;
  std::string uid;  // empty if the handshake failed
  SessionStats stats;
};

class RegulatorServer {
 public:
  explicit RegulatorServer(ServerConfig config);
  ~RegulatorServer();

  // Binds and starts accepting on a background thread.
  void Start();
  uint16_t port() const { return port_; }
  // Stops accepting, waits up to drain_ms for sessions to end, then closes
  // the rest. Every tuple already read gets its verdict.
  void Stop(int drain_ms = 2000);
  std::vector<SessionSummary> Sessions() const;

 private:
  struct Conn {
    int64_t id;
    Socket socket;
    std::thread thread;
    std::atomic<bool> done{false};
    SessionSummary summary;
  };
  void AcceptLoop();
  void Serve(Conn& conn);

  ServerConfig config_;
  std::unique_ptr<AuditLog> audit_;
  Socket listener_;
  uint16_t port_ = 0;
  std::thread accept_thread_;
  std::atomic<bool> stopping_{false};
  mutable std::mutex mu_;
  std::vector<std::unique_ptr<Conn>> conns_;
  int64_t next_id_ = 0;
};

struct ClientConfig {
  Endpoint regulator;
  RunConfig run;
  uint64_t seed = 0;
  std::string uid = "utility";
  int expected_d = PlantSpec::kSensorDim;  // announced in the handshake
  int max_retries = 3;
  std::vector<int> backoff_ms = {1000, 2000, 4000};
  int io_timeout_ms = 30000;
};

struct EpochOutcome {
  int64_t w = 0;
  bool rho = false;
  bool rho_hat = false;
  bool matched = false;
  bool rejected = false;
};

struct ClientSummary {
  std::string uid;
  std::vector<EpochOutcome> epochs;
  int64_t expected_epochs = 0;
  bool complete = false;
  int reconnects = 0;
  std::string error;
  std::vector<std::string> sent;  // tuple lines, in order

  // Exit status contract: every epoch verdicted and none rejected.
  bool ok() const;
};

// Streams one tuple per W-record epoch. Connection failures are retried with
// backoff; tuples not yet verdicted are re-sent, never recomputed. A residual
// dimension different from expected_d aborts before the first tuple.
ClientSummary RunUtilityClient(const ClientConfig& config,
                               std::span<const ResidualRecord> residuals);

struct HarnessUtility {
  std::string uid;
  RunConfig run;
  uint64_t seed = 0;
};

struct HarnessResult {
  std::vector<ClientSummary> summaries;
  std::vector<SessionSummary> sessions;
  bool partial = false;
};

// In-process regulator on an ephemeral loopback port plus one client thread
// per utility, each on its own simulated plant.
HarnessResult RunHarness(std::span<const HarnessUtility> utilities,
                         const std::string& audit_path,
                         ModeAllow allow = ModeAllow::kBoth);

struct AuditEntry {
  std::string timestamp;
  bool rx = false;
  int64_t connection = 0;
  std::string record;
};

struct AuditFile {
  ModeAllow allow = ModeAllow::kBoth;
  std::vector<AuditEntry> entries;
};

// Throws kSchema naming the line.
AuditFile ReadAudit(const std::string& path);

struct ReplayReport {
  int64_t sessions = 0;
  int64_t compared = 0;
  int64_t mismatches = 0;
  std::string first_mismatch;
  bool ok() const { return mismatches == 0; }
};

// Feeds each connection's RX lines to a fresh RegulatorSession and compares
// its output with the logged TX lines byte for byte.
ReplayReport ReplayAudit(const AuditFile& audit);

struct IsolationReport {
  bool ok = true;
  std::string problem;
};

// Every verdict on a connection names that connection's handshake uid.
IsolationReport CheckIsolation(const AuditFile& audit);

}  // namespace dpverify

#endif  // DPVERIFY_NETSVC_H_
