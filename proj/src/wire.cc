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

#include "dpverify/wire.h"

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "json.hpp"
#include "dpverify/error.h"

namespace dpverify {
namespace {

using ::nlohmann::json;

// Builds one flat object. Keys are emitted in call order.
class LineWriter {
 public:
  LineWriter() : out_("{") {}

  LineWriter& Int(std::string_view key, int64_t v) {
    Key(key);
    out_ += std::to_string(v);
    return *this;
  }
  LineWriter& Bool(std::string_view key, bool v) {
    Key(key);
    out_ += v ? "true" : "false";
    return *this;
  }
  LineWriter& Num(std::string_view key, double v) {
    Key(key);
    AppendNumber(v, key);
    return *this;
  }
  LineWriter& Str(std::string_view key, std::string_view v) {
    Key(key);
    try {
      out_ += json(std::string(v)).dump();
    } catch (const json::exception& e) {
      Fail(ErrorCode::kInvalidArgument,
           std::string(key) + " is not valid UTF-8");
    }
    return *this;
  }
  LineWriter& Array(std::string_view key, const double* data, int n) {
    Key(key);
    out_ += '[';
    for (int i = 0; i < n; ++i) {
      if (i > 0) out_ += ',';
      AppendNumber(data[i], key);
    }
    out_ += ']';
    return *this;
  }
  LineWriter& Raw(std::string_view key, const std::string& encoded) {
    Key(key);
    out_ += encoded;
    return *this;
  }
  std::string Done() { return out_ + "}"; }

 private:
  void Key(std::string_view key) {
    if (out_.size() > 1) out_ += ',';
    out_ += '"';
    out_ += key;
    out_ += "\":";
  }
  void AppendNumber(double v, std::string_view key) {
    if (!std::isfinite(v)) {
      Fail(ErrorCode::kInvalidArgument,
           "cannot encode non-finite " + std::string(key));
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out_ += buf;
  }

  std::string out_;
};

[[noreturn]] void SchemaError(const std::string& path, const std::string& what) {
  Fail(ErrorCode::kSchema, path + ": " + what, path);
}

// SAX pass that only tracks where the parser is, so a failed parse can name
// the offending field (nlohmann's own errors carry a byte offset only).
class PathTracker : public nlohmann::json_sax<json> {
 public:
  bool null() override { return Value(); }
  bool boolean(bool) override { return Value(); }
  bool number_integer(number_integer_t) override { return Value(); }
  bool number_unsigned(number_unsigned_t) override { return Value(); }
  bool number_float(number_float_t, const string_t&) override { return Value(); }
  bool string(string_t&) override { return Value(); }
  bool binary(binary_t&) override { return Value(); }
  bool start_object(std::size_t) override {
    stack_.push_back({false, 0, ""});
    return true;
  }
  bool key(string_t& k) override {
    stack_.back().key = k;
    return true;
  }
  bool end_object() override { return Close(); }
  bool start_array(std::size_t) override {
    stack_.push_back({true, 0, ""});
    return true;
  }
  bool end_array() override { return Close(); }
  bool parse_error(std::size_t, const std::string&,
                   const nlohmann::detail::exception&) override {
    return false;
  }

  std::string Path() const {
    std::string out;
    // The outermost frame is the record itself.
    for (const Frame& f : stack_) {
      if (f.is_array) {
        out += "[" + std::to_string(f.index) + "]";
      } else if (!f.key.empty()) {
        out += (out.empty() ? "" : ".") + f.key;
      }
    }
    return out;
  }

 private:
  struct Frame {
    bool is_array;
    size_t index;
    std::string key;
  };
  bool Value() {
    if (!stack_.empty() && stack_.back().is_array) ++stack_.back().index;
    return true;
  }
  bool Close() {
    stack_.pop_back();
    return Value();
  }
  std::vector<Frame> stack_;
};

json ParseObject(std::string_view line) {
  json j;
  try {
    j = json::parse(line.begin(), line.end());
  } catch (const json::exception& e) {
    PathTracker tracker;
    json::sax_parse(line.begin(), line.end(), &tracker);
    Fail(ErrorCode::kSchema, std::string("not a valid record: ") + e.what(),
         tracker.Path());
  }
  if (!j.is_object()) SchemaError("$", "record must be an object");
  return j;
}

const json& Field(const json& j, const std::string& key,
                  const std::string& prefix = "") {
  const auto it = j.find(key);
  if (it == j.end()) SchemaError(prefix + key, "missing");
  return *it;
}

double NumberAt(const json& v, const std::string& path) {
  if (!v.is_number()) SchemaError(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) SchemaError(path, "non-finite number");
  return x;
}

double GetNumber(const json& j, const std::string& key) {
  return NumberAt(Field(j, key), key);
}

int64_t GetInt(const json& j, const std::string& key) {
  const json& v = Field(j, key);
  if (!v.is_number_integer()) SchemaError(key, "expected an integer");
  return v.get<int64_t>();
}

bool GetBit(const json& j, const std::string& key) {
  const int64_t v = GetInt(j, key);
  if (v != 0 && v != 1) SchemaError(key, "expected 0 or 1");
  return v == 1;
}

bool GetBool(const json& j, const std::string& key) {
  const json& v = Field(j, key);
  if (!v.is_boolean()) SchemaError(key, "expected true or false");
  return v.get<bool>();
}

std::string GetString(const json& j, const std::string& key) {
  const json& v = Field(j, key);
  if (!v.is_string()) SchemaError(key, "expected a string");
  return v.get<std::string>();
}

Vector GetArray(const json& j, const std::string& key) {
  const json& v = Field(j, key);
  if (!v.is_array()) SchemaError(key, "expected an array");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) {
    out[i] = NumberAt(v[i], key + "[" + std::to_string(i) + "]");
  }
  return out;
}

void CheckVersion(const json& j) {
  const int64_t v = GetInt(j, "v");
  if (v != kWireVersion) {
    Fail(ErrorCode::kVersion,
         "wire version " + std::to_string(v) + " is not supported (expected " +
             std::to_string(kWireVersion) + ")",
         "v");
  }
}

Mode GetMode(const json& j) {
  const std::string mode = GetString(j, "mode");
  if (mode == "cr") return Mode::kCr;
  if (mode == "pv") return Mode::kPv;
  SchemaError("mode", "expected \"cr\" or \"pv\"");
}

std::string EncodeParams(const PrivacyParams& p) {
  return LineWriter()
      .Num("eps_cov", p.eps_cov)
      .Num("eps_r", p.eps_r)
      .Num("gamma_cov", p.gamma_cov)
      .Num("gamma_r", p.gamma_r)
      .Num("delta_l", p.delta_l)
      .Num("delta_r", p.delta_r)
      .Int("p", p.p)
      .Num("sigma", p.sigma)
      .Bool("use_calibration", p.use_calibration)
      .Bool("eps_r_waived", p.eps_r_waived)
      .Done();
}

PrivacyParams DecodeParams(const json& j) {
  const json& obj = Field(j, "params");
  if (!obj.is_object()) SchemaError("params", "expected an object");
  PrivacyParams p;
  const auto num = [&](const char* key) {
    return NumberAt(Field(obj, key, "params."), std::string("params.") + key);
  };
  p.eps_cov = num("eps_cov");
  p.eps_r = num("eps_r");
  p.gamma_cov = num("gamma_cov");
  p.gamma_r = num("gamma_r");
  p.delta_l = num("delta_l");
  p.delta_r = num("delta_r");
  const json& pp = Field(obj, "p", "params.");
  if (!pp.is_number_integer()) SchemaError("params.p", "expected an integer");
  p.p = pp.get<int>();
  p.sigma = num("sigma");
  const auto flag = [&](const char* key) {
    const json& v = Field(obj, key, "params.");
    if (!v.is_boolean()) {
      SchemaError(std::string("params.") + key, "expected true or false");
    }
    return v.get<bool>();
  };
  p.use_calibration = flag("use_calibration");
  p.eps_r_waived = flag("eps_r_waived");
  return p;
}

Handshake HandshakeFrom(const json& j) {
  CheckVersion(j);
  Handshake hs;
  hs.mode = GetMode(j);
  hs.uid = GetString(j, "uid");
  hs.d = static_cast<int>(GetInt(j, "d"));
  hs.p = static_cast<int>(GetInt(j, "p"));
  hs.steps = static_cast<int>(GetInt(j, "W"));
  hs.params = DecodeParams(j);
  return hs;
}

CrTuple CrFrom(const json& j) {
  CheckVersion(j);
  if (GetMode(j) != Mode::kCr) SchemaError("mode", "expected \"cr\"");
  CrTuple t;
  t.uid = GetString(j, "uid");
  t.w = GetInt(j, "w");
  t.tau_rg = GetArray(j, "tau_rg");
  const Vector flat = GetArray(j, "s_hat");
  const Eigen::Index d = t.tau_rg.size();
  if (d == 0) SchemaError("tau_rg", "empty");
  if (flat.size() != d * d) {
    SchemaError("s_hat", "expected " + std::to_string(d * d) + " entries, got " +
                             std::to_string(flat.size()));
  }
  t.s_hat.resize(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) t.s_hat(i, k) = flat[i * d + k];
  }
  t.thr = GetNumber(j, "thr");
  t.rho = GetBit(j, "rho");
  return t;
}

PvTuple PvFrom(const json& j) {
  CheckVersion(j);
  if (GetMode(j) != Mode::kPv) SchemaError("mode", "expected \"pv\"");
  PvTuple t;
  t.uid = GetString(j, "uid");
  t.w = GetInt(j, "w");
  t.t_res = GetNumber(j, "t_res");
  t.t_cov = GetNumber(j, "t_cov");
  t.alpha_hat = GetNumber(j, "alpha_hat");
  t.rho = GetBit(j, "rho");
  return t;
}

Verdict VerdictFrom(const json& j) {
  CheckVersion(j);
  Verdict v;
  v.uid = GetString(j, "uid");
  v.w = GetInt(j, "w");
  v.rho_hat = GetBit(j, "rho_hat");
  v.matched = GetBool(j, "matched");
  if (j.contains("pvalue")) v.pvalue = GetNumber(j, "pvalue");
  if (j.contains("reason")) v.reason = GetString(j, "reason");
  return v;
}

}  // namespace

std::string EncodeHandshake(const Handshake& hs) {
  return LineWriter()
      .Int("v", kWireVersion)
      .Str("mode", ModeName(hs.mode))
      .Str("uid", hs.uid)
      .Int("d", hs.d)
      .Int("p", hs.p)
      .Int("W", hs.steps)
      .Raw("params", EncodeParams(hs.params))
      .Done();
}

std::string EncodeCrTuple(const CrTuple& tuple) {
  const Eigen::Index d = tuple.tau_rg.size();
  Require(tuple.s_hat.rows() == d && tuple.s_hat.cols() == d,
          "s_hat shape does not match tau_rg");
  // Eigen stores column-major; the wire is row-major.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>
      row_major = tuple.s_hat;
  return LineWriter()
      .Int("v", kWireVersion)
      .Str("mode", "cr")
      .Str("uid", tuple.uid)
      .Int("w", tuple.w)
      .Array("s_hat", row_major.data(), static_cast<int>(d * d))
      .Array("tau_rg", tuple.tau_rg.data(), static_cast<int>(d))
      .Num("thr", tuple.thr)
      .Int("rho", tuple.rho ? 1 : 0)
      .Done();
}

std::string EncodePvTuple(const PvTuple& tuple) {
  return LineWriter()
      .Int("v", kWireVersion)
      .Str("mode", "pv")
      .Str("uid", tuple.uid)
      .Int("w", tuple.w)
      .Num("t_res", tuple.t_res)
      .Num("t_cov", tuple.t_cov)
      .Num("alpha_hat", tuple.alpha_hat)
      .Int("rho", tuple.rho ? 1 : 0)
      .Done();
}

std::string EncodeVerdict(const Verdict& verdict) {
  LineWriter w;
  w.Int("v", kWireVersion)
      .Str("uid", verdict.uid)
      .Int("w", verdict.w)
      .Int("rho_hat", verdict.rho_hat ? 1 : 0)
      .Bool("matched", verdict.matched);
  if (verdict.pvalue) w.Num("pvalue", *verdict.pvalue);
  if (verdict.reason) w.Str("reason", *verdict.reason);
  return w.Done();
}

std::string EncodeError(std::string_view message) {
  return LineWriter().Int("v", kWireVersion).Str("error", message).Done();
}

Handshake DecodeHandshake(std::string_view line) {
  return HandshakeFrom(ParseObject(line));
}
CrTuple DecodeCrTuple(std::string_view line) { return CrFrom(ParseObject(line)); }
PvTuple DecodePvTuple(std::string_view line) { return PvFrom(ParseObject(line)); }
Verdict DecodeVerdict(std::string_view line) {
  return VerdictFrom(ParseObject(line));
}

WireRecord DecodeRecord(std::string_view line) {
  const json j = ParseObject(line);
  if (j.contains("error")) {
    CheckVersion(j);
    return WireError{GetString(j, "error")};
  }
  if (j.contains("rho_hat")) return VerdictFrom(j);
  if (j.contains("params")) return HandshakeFrom(j);
  CheckVersion(j);
  if (GetMode(j) == Mode::kCr) return CrFrom(j);
  return PvFrom(j);
}

TupleAddress PeekAddress(std::string_view line) {
  TupleAddress out;
  try {
    const json j = json::parse(line.begin(), line.end());
    if (!j.is_object()) return out;
    if (auto it = j.find("uid"); it != j.end() && it->is_string()) {
      out.uid = it->get<std::string>();
    }
    if (auto it = j.find("w"); it != j.end() && it->is_number_integer()) {
      out.w = it->get<int64_t>();
    }
  } catch (const json::exception&) {
  }
  return out;
}

}  // namespace dpverify
