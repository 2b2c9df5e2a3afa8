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

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <deque>
#include <map>
#include <sstream>

#include "dpverify/error.h"
#include "dpverify/experiment.h"
#include "dpverify/wire.h"

namespace dpverify {
namespace {

[[noreturn]] void IoFail(const std::string& what) {
  Fail(ErrorCode::kIo, what + ": " + std::strerror(errno));
}

std::string Iso8601Now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t secs = std::chrono::system_clock::to_time_t(now);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(
                          now.time_since_epoch()) %
                      1000000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  const size_t n = std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + n, sizeof(buf) - n, ".%06lldZ",
                static_cast<long long>(micros.count()));
  return buf;
}

sockaddr_in Resolve(const Endpoint& endpoint) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const int rc = getaddrinfo(endpoint.host.c_str(), nullptr, &hints, &res);
  if (rc != 0 || res == nullptr) {
    Fail(ErrorCode::kIo, "cannot resolve " + endpoint.host + ": " +
                             gai_strerror(rc));
  }
  sockaddr_in addr = *reinterpret_cast<sockaddr_in*>(res->ai_addr);
  freeaddrinfo(res);
  addr.sin_port = htons(endpoint.port);
  return addr;
}

constexpr char kAuditHeader[] = "# dpverify-audit v1 mode_allow=";

}  // namespace

Endpoint Endpoint::Parse(std::string_view text) {
  const size_t colon = text.rfind(':');
  if (colon == std::string_view::npos || colon + 1 == text.size()) {
    Fail(ErrorCode::kInvalidArgument,
         "expected host:port, got '" + std::string(text) + "'");
  }
  Endpoint out;
  if (colon > 0) out.host = std::string(text.substr(0, colon));
  const std::string port(text.substr(colon + 1));
  char* end = nullptr;
  const long v = std::strtol(port.c_str(), &end, 10);
  if (*end != '\0' || v < 0 || v > 65535) {
    Fail(ErrorCode::kInvalidArgument, "bad port '" + port + "'");
  }
  out.port = static_cast<uint16_t>(v);
  return out;
}

std::string Endpoint::ToString() const {
  return host + ":" + std::to_string(port);
}

Socket::~Socket() { Close(); }

Socket::Socket(Socket&& other) noexcept
    : fd_(other.fd_), buffer_(std::move(other.buffer_)) {
  other.fd_ = -1;
}

Socket& Socket::operator=(Socket&& other) noexcept {
  if (this != &other) {
    Close();
    fd_ = other.fd_;
    buffer_ = std::move(other.buffer_);
    other.fd_ = -1;
  }
  return *this;
}

Socket Socket::Connect(const Endpoint& endpoint) {
  const sockaddr_in addr = Resolve(endpoint);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) IoFail("socket");
  if (::connect(s.fd_, reinterpret_cast<const sockaddr*>(&addr),
                sizeof(addr)) != 0) {
    IoFail("connect to " + endpoint.ToString());
  }
  const int one = 1;
  ::setsockopt(s.fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return s;
}

Socket Socket::Listen(const Endpoint& endpoint, int backlog) {
  const sockaddr_in addr = Resolve(endpoint);
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) IoFail("socket");
  const int one = 1;
  ::setsockopt(s.fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(s.fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) !=
      0) {
    IoFail("bind " + endpoint.ToString());
  }
  if (::listen(s.fd_, backlog) != 0) IoFail("listen");
  return s;
}

Socket Socket::Accept() {
  for (;;) {
    const int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
    if (fd >= 0) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return Socket(fd);
    }
    if (errno == EINTR || errno == ECONNABORTED) continue;
    return Socket();
  }
}

void Socket::SendLine(std::string_view line) {
  std::string data(line);
  data += '\n';
  size_t off = 0;
  while (off < data.size()) {
    const ssize_t n =
        ::send(fd_, data.data() + off, data.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      IoFail("send");
    }
    off += static_cast<size_t>(n);
  }
}

bool Socket::ReadLine(std::string& line, int timeout_ms) {
  for (;;) {
    const size_t nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return true;
    }
    if (timeout_ms >= 0) {
      pollfd pfd{fd_, POLLIN, 0};
      const int rc = ::poll(&pfd, 1, timeout_ms);
      if (rc == 0) Fail(ErrorCode::kIo, "read timed out");
      if (rc < 0) {
        if (errno == EINTR) continue;
        IoFail("poll");
      }
    }
    char buf[4096];
    const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      IoFail("recv");
    }
    if (n == 0) {
      buffer_.clear();  // partial line at EOF is dropped
      return false;
    }
    buffer_.append(buf, static_cast<size_t>(n));
  }
}

void Socket::Shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::Close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

uint16_t Socket::local_port() const {
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  if (::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len) != 0) {
    IoFail("getsockname");
  }
  return ntohs(addr.sin_port);
}

ModeAllow ParseModeAllow(std::string_view text) {
  if (text == "cr") return ModeAllow::kCr;
  if (text == "pv") return ModeAllow::kPv;
  if (text == "both") return ModeAllow::kBoth;
  Fail(ErrorCode::kInvalidArgument,
       "mode-allow must be cr, pv or both, got '" + std::string(text) + "'");
}

std::string_view ModeAllowName(ModeAllow allow) {
  switch (allow) {
    case ModeAllow::kCr:
      return "cr";
    case ModeAllow::kPv:
      return "pv";
    case ModeAllow::kBoth:
      return "both";
  }
  return "both";
}

RegulatorSession::Output RegulatorSession::OnHandshake(std::string_view line) {
  Output out;
  try {
    Handshake hs = DecodeHandshake(line);
    if (allow_ != ModeAllow::kBoth &&
        (allow_ == ModeAllow::kCr) != (hs.mode == Mode::kCr)) {
      Fail(ErrorCode::kProtocol,
           "mode " + std::string(ModeName(hs.mode)) + " not accepted here");
    }
    Require(hs.d >= 1, "d must be positive");
    Require(hs.p >= 1 && hs.p <= hs.d, "p must lie in [1, d]");
    Require(hs.steps >= 1, "W must be positive");
    Require(hs.params.p == hs.p, "params.p disagrees with p");
    hs.params.Validate(hs.d);
    out.lines.push_back(EncodeHandshake(hs));
    handshake_ = std::move(hs);
  } catch (const Error& e) {
    out.lines.push_back(EncodeError(std::string("handshake rejected: ") + e.what()));
    out.close = true;
  }
  return out;
}

std::string RegulatorSession::Reject(int64_t w, const std::string& reason) {
  ++stats_.rejections;
  return EncodeVerdict(Rejection(handshake_->uid, w, reason));
}

RegulatorSession::Output RegulatorSession::OnLine(std::string_view line) {
  if (!handshake_) return OnHandshake(line);
  const Handshake& hs = *handshake_;
  ++stats_.tuples;
  Output out;
  WireRecord record;
  try {
    record = DecodeRecord(line);
  } catch (const Error& e) {
    out.lines.push_back(Reject(PeekAddress(line).w,
                               std::string("malformed tuple: ") + e.what()));
    return out;
  }

  const CrTuple* cr = std::get_if<CrTuple>(&record);
  const PvTuple* pv = std::get_if<PvTuple>(&record);
  if (!cr && !pv) {
    out.lines.push_back(Reject(PeekAddress(line).w, "expected a tuple"));
    return out;
  }
  const std::string& uid = cr ? cr->uid : pv->uid;
  const int64_t w = cr ? cr->w : pv->w;
  if ((cr != nullptr) != (hs.mode == Mode::kCr)) {
    out.lines.push_back(
        Reject(w, "session mode is " + std::string(ModeName(hs.mode))));
    return out;
  }
  if (uid != hs.uid) {
    out.lines.push_back(Reject(w, "uid does not match the handshake"));
    return out;
  }
  if (w <= last_w_) {
    out.lines.push_back(Reject(w, "duplicate or out-of-order epoch"));
    return out;
  }
  if (cr && cr->tau_rg.size() != hs.d) {
    out.lines.push_back(Reject(w, "tau_rg length does not match d"));
    return out;
  }
  last_w_ = w;
  const Verdict v = cr ? RegulatorCrVerify(*cr, hs.p) : RegulatorPvVerify(*pv, hs.p);
  if (v.rejected()) {
    ++stats_.rejections;
  } else {
    ++stats_.verdicts;
    stats_.mismatches += !v.matched;
  }
  out.lines.push_back(EncodeVerdict(v));
  return out;
}

AuditLog::AuditLog(const std::string& path, ModeAllow allow)
    : out_(path, std::ios::out | std::ios::trunc) {
  if (!out_) Fail(ErrorCode::kIo, "cannot open audit log " + path, path);
  out_ << kAuditHeader << ModeAllowName(allow) << '\n';
  out_.flush();
}

void AuditLog::Append(std::string_view direction, int64_t connection,
                      std::string_view record) {
  const std::string ts = Iso8601Now();
  std::lock_guard<std::mutex> lock(mu_);
  out_ << ts << ' ' << direction << " c" << connection << ' ' << record << '\n';
  out_.flush();
}

RegulatorServer::RegulatorServer(ServerConfig config)
    : config_(std::move(config)) {}

RegulatorServer::~RegulatorServer() { Stop(0); }

void RegulatorServer::Start() {
  Require(!config_.audit_path.empty(), "an audit log path is required");
  audit_ = std::make_unique<AuditLog>(config_.audit_path, config_.allow);
  listener_ = Socket::Listen(config_.listen);
  port_ = listener_.local_port();
  accept_thread_ = std::thread([this] { AcceptLoop(); });
}

void RegulatorServer::AcceptLoop() {
  while (!stopping_) {
    Socket s = listener_.Accept();
    if (!s.valid()) break;
    std::lock_guard<std::mutex> lock(mu_);
    if (stopping_) break;
    auto conn = std::make_unique<Conn>();
    conn->id = next_id_++;
    conn->summary.connection = conn->id;
    conn->socket = std::move(s);
    Conn* raw = conn.get();
    conn->thread = std::thread([this, raw] { Serve(*raw); });
    conns_.push_back(std::move(conn));
  }
}

void RegulatorServer::Serve(Conn& conn) {
  RegulatorSession session(config_.allow);
  try {
    std::string line;
    while (conn.socket.ReadLine(line)) {
      audit_->Append("RX", conn.id, line);
      const RegulatorSession::Output out = session.OnLine(line);
      for (const std::string& reply : out.lines) {
        audit_->Append("TX", conn.id, reply);
        conn.socket.SendLine(reply);
      }
      if (out.close) break;
    }
  } catch (const Error&) {
    // Peer went away; whatever was read has been answered.
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (session.handshaken()) conn.summary.uid = session.handshake().uid;
    conn.summary.stats = session.stats();
  }
  conn.socket.Shutdown();
  conn.done = true;
}

void RegulatorServer::Stop(int drain_ms) {
  if (stopping_.exchange(true)) return;
  listener_.Shutdown();
  if (accept_thread_.joinable()) accept_thread_.join();
  listener_.Close();
  const auto deadline =
      std::chrono::steady_clock::now() + std::chrono::milliseconds(drain_ms);
  for (;;) {
    bool all_done = true;
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (const auto& c : conns_) all_done &= c->done.load();
    }
    if (all_done || std::chrono::steady_clock::now() >= deadline) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  std::lock_guard<std::mutex> lock(mu_);
  for (auto& c : conns_) {
    if (!c->done) c->socket.Shutdown();
  }
  for (auto& c : conns_) {
    if (c->thread.joinable()) c->thread.join();
  }
}

std::vector<SessionSummary> RegulatorServer::Sessions() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<SessionSummary> out;
  for (const auto& c : conns_) out.push_back(c->summary);
  return out;
}

bool ClientSummary::ok() const {
  if (!complete || static_cast<int64_t>(epochs.size()) != expected_epochs) {
    return false;
  }
  for (const EpochOutcome& e : epochs) {
    if (e.rejected) return false;
  }
  return true;
}

ClientSummary RunUtilityClient(const ClientConfig& config,
                               std::span<const ResidualRecord> residuals) {
  ClientSummary summary;
  summary.uid = config.uid;
  if (residuals.empty()) {
    summary.error = "residual source is empty";
    return summary;
  }
  const int d = static_cast<int>(residuals.front().r.size());
  if (d != config.expected_d) {
    summary.error = "residual dimension " + std::to_string(d) +
                    " does not match the handshake d=" +
                    std::to_string(config.expected_d);
    return summary;
  }
  const RunConfig& run = config.run;
  const int steps = run.scenario.steps_per_epoch;
  const int64_t n_epochs = static_cast<int64_t>(residuals.size()) / steps;
  summary.expected_epochs = n_epochs;
  if (n_epochs == 0) {
    summary.error = "residual source is shorter than one epoch";
    return summary;
  }

  UtilityConfig uc;
  uc.uid = config.uid;
  uc.mode = run.mode;
  uc.params = run.params;
  uc.alpha = run.alpha;
  uc.n_mc = run.n_mc;
  uc.tracker_window = run.tracker_window;
  uc.master_seed = config.seed;
  std::optional<UtilitySession> session;
  try {
    session.emplace(uc, d);
  } catch (const Error& e) {
    summary.error = e.what();
    return summary;
  }
  const std::string hs_line = EncodeHandshake(session->MakeHandshake(steps));

  struct Pending {
    int64_t w;
    bool rho;
    std::string line;
  };
  std::deque<Pending> pending;
  int64_t next_w = 0;
  int failures = 0;

  for (;;) {
    try {
      Socket s = Socket::Connect(config.regulator);
      std::string reply;
      s.SendLine(hs_line);
      if (!s.ReadLine(reply, config.io_timeout_ms)) {
        Fail(ErrorCode::kIo, "regulator closed during handshake");
      }
      const WireRecord ack = DecodeRecord(reply);
      if (const auto* err = std::get_if<WireError>(&ack)) {
        summary.error = err->message;
        return summary;
      }
      if (!std::holds_alternative<Handshake>(ack)) {
        Fail(ErrorCode::kProtocol, "expected a handshake acknowledgement");
      }

      const auto exchange = [&](const Pending& p) {
        s.SendLine(p.line);
        std::string line;
        if (!s.ReadLine(line, config.io_timeout_ms)) {
          Fail(ErrorCode::kIo, "regulator closed before the verdict");
        }
        const WireRecord rec = DecodeRecord(line);
        const Verdict* v = std::get_if<Verdict>(&rec);
        if (!v) Fail(ErrorCode::kProtocol, "expected a verdict");
        if (v->w != p.w) {
          Fail(ErrorCode::kProtocol, "verdict for epoch " + std::to_string(v->w) +
                                         ", expected " + std::to_string(p.w));
        }
        summary.epochs.push_back(
            {p.w, p.rho, v->rho_hat, v->matched, v->rejected()});
        failures = 0;
      };

      while (!pending.empty()) {
        exchange(pending.front());
        pending.pop_front();
      }
      for (; next_w < n_epochs; ++next_w) {
        const EpochAggregate agg = AggregateEpoch(
            next_w, residuals.subspan(next_w * steps, steps), run.alpha,
            run.params.p);
        const std::string line = run.mode == Mode::kCr
                                     ? EncodeCrTuple(session->CrEpoch(agg))
                                     : EncodePvTuple(session->PvEpoch(agg));
        summary.sent.push_back(line);
        pending.push_back({next_w, agg.rho, line});
        exchange(pending.front());
        pending.pop_front();
      }
      summary.complete = true;
      return summary;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kIo) {
        summary.error = e.what();
        return summary;
      }
      if (failures >= config.max_retries) {
        summary.error = std::string("giving up after retries: ") + e.what();
        return summary;
      }
      const int wait = config.backoff_ms.empty()
                           ? 0
                           : config.backoff_ms[std::min<size_t>(
                                 failures, config.backoff_ms.size() - 1)];
      std::this_thread::sleep_for(std::chrono::milliseconds(wait));
      ++failures;
      ++summary.reconnects;
    }
  }
}

HarnessResult RunHarness(std::span<const HarnessUtility> utilities,
                         const std::string& audit_path, ModeAllow allow) {
  Require(!utilities.empty(), "harness needs at least one utility");
  ServerConfig sc;
  sc.listen = Endpoint{"127.0.0.1", 0};
  sc.audit_path = audit_path;
  sc.allow = allow;
  RegulatorServer server(sc);
  server.Start();

  HarnessResult result;
  result.summaries.resize(utilities.size());
  std::vector<std::thread> threads;
  for (size_t i = 0; i < utilities.size(); ++i) {
    threads.emplace_back([&, i] {
      const HarnessUtility& u = utilities[i];
      try {
        const auto residuals =
            SimulateResiduals(u.run.scenario, PlantSeed(u.seed, u.uid));
        ClientConfig cc;
        cc.regulator = Endpoint{"127.0.0.1", server.port()};
        cc.run = u.run;
        cc.seed = u.seed;
        cc.uid = u.uid;
        cc.expected_d = u.run.scenario.plant.sensor_dim();
        result.summaries[i] = RunUtilityClient(cc, residuals);
      } catch (const std::exception& e) {
        result.summaries[i].uid = u.uid;
        result.summaries[i].error = e.what();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  server.Stop();
  result.sessions = server.Sessions();
  for (const ClientSummary& s : result.summaries) result.partial |= !s.ok();
  return result;
}

AuditFile ReadAudit(const std::string& path) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open audit log " + path, path);
  AuditFile audit;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = "line " + std::to_string(line_no);
    if (line.rfind(kAuditHeader, 0) == 0) {
      audit.allow = ParseModeAllow(line.substr(std::strlen(kAuditHeader)));
      continue;
    }
    if (line.empty()) continue;
    const size_t a = line.find(' ');
    const size_t b = a == std::string::npos ? a : line.find(' ', a + 1);
    const size_t c = b == std::string::npos ? b : line.find(' ', b + 1);
    if (c == std::string::npos || line[b + 1] != 'c') {
      Fail(ErrorCode::kSchema, where + ": malformed audit entry", where);
    }
    AuditEntry e;
    e.timestamp = line.substr(0, a);
    const std::string dir = line.substr(a + 1, b - a - 1);
    if (dir != "RX" && dir != "TX") {
      Fail(ErrorCode::kSchema, where + ": bad direction '" + dir + "'", where);
    }
    e.rx = dir == "RX";
    try {
      e.connection = std::stoll(line.substr(b + 2, c - b - 2));
    } catch (const std::exception&) {
      Fail(ErrorCode::kSchema, where + ": bad connection id", where);
    }
    e.record = line.substr(c + 1);
    audit.entries.push_back(std::move(e));
  }
  return audit;
}

ReplayReport ReplayAudit(const AuditFile& audit) {
  std::map<int64_t, RegulatorSession> sessions;
  std::map<int64_t, std::vector<std::string>> produced, logged;
  for (const AuditEntry& e : audit.entries) {
    if (e.rx) {
      auto it = sessions.try_emplace(e.connection, audit.allow).first;
      for (std::string& line : it->second.OnLine(e.record).lines) {
        produced[e.connection].push_back(std::move(line));
      }
    } else {
      logged[e.connection].push_back(e.record);
    }
  }
  ReplayReport report;
  report.sessions = static_cast<int64_t>(sessions.size());
  for (const auto& [conn, lines] : logged) {
    const std::vector<std::string>& mine = produced[conn];
    const size_t n = std::max(lines.size(), mine.size());
    for (size_t i = 0; i < n; ++i) {
      ++report.compared;
      const bool same = i < lines.size() && i < mine.size() && lines[i] == mine[i];
      if (!same) {
        if (report.mismatches == 0) {
          report.first_mismatch = "c" + std::to_string(conn) + " #" +
                                  std::to_string(i) + ": logged '" +
                                  (i < lines.size() ? lines[i] : "") +
                                  "' replayed '" +
                                  (i < mine.size() ? mine[i] : "") + "'";
        }
        ++report.mismatches;
      }
    }
  }
  return report;
}

IsolationReport CheckIsolation(const AuditFile& audit) {
  std::map<int64_t, std::string> uid_of;
  IsolationReport report;
  for (const AuditEntry& e : audit.entries) {
    if (e.rx) {
      if (!uid_of.count(e.connection)) {
        try {
          uid_of[e.connection] = DecodeHandshake(e.record).uid;
        } catch (const Error&) {
          uid_of[e.connection] = "";
        }
      }
      continue;
    }
    WireRecord rec;
    try {
      rec = DecodeRecord(e.record);
    } catch (const Error& err) {
      report.ok = false;
      report.problem = "undecodable TX record on c" +
                       std::to_string(e.connection) + ": " + err.what();
      return report;
    }
    const Verdict* v = std::get_if<Verdict>(&rec);
    if (v && v->uid != uid_of[e.connection]) {
      report.ok = false;
      report.problem = "verdict for uid '" + v->uid + "' on c" +
                       std::to_string(e.connection) + " whose handshake uid is '" +
                       uid_of[e.connection] + "'";
      return report;
    }
  }
  return report;
}

}  // namespace dpverify
