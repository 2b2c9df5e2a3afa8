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

// Newline-delimited wire records. Each record is one flat JSON object on one
// line; numbers are printed with 17 significant digits so every double
// survives a round trip exactly. Encoders return the line without the
// trailing newline.
//
//   tuple:     v, mode, uid, w, then s_hat, tau_rg, thr, rho      (cr)
//                                  or t_res, t_cov, alpha_hat, rho (pv)
//   verdict:   v, uid, w, rho_hat, matched, [pvalue], [reason]
//   handshake: v, mode, uid, d, p, W, params{...}
//   error:     v, error

#ifndef DPVERIFY_WIRE_H_
#define DPVERIFY_WIRE_H_

#include <string>
#include <string_view>
#include <variant>

#include "dpverify/protocol.h"

namespace dpverify {

inline constexpr int kWireVersion = 1;

struct WireError {
  std::string message;
};

using WireRecord = std::variant<Handshake, CrTuple, PvTuple, Verdict, WireError>;

// Throws kInvalidArgument on non-finite numbers or invalid UTF-8 in uid.
std::string EncodeHandshake(const Handshake& hs);
std::string EncodeCrTuple(const CrTuple& tuple);
std::string EncodePvTuple(const PvTuple& tuple);
std::string EncodeVerdict(const Verdict& verdict);
std::string EncodeError(std::string_view message);

// Decoders throw Error with code kSchema (field() names the offending path,
// e.g. "s_hat[4]") or kVersion. Unknown fields are ignored.
Handshake DecodeHandshake(std::string_view line);
CrTuple DecodeCrTuple(std::string_view line);
PvTuple DecodePvTuple(std::string_view line);
Verdict DecodeVerdict(std::string_view line);
// Classifies the record by its fields and decodes it.
WireRecord DecodeRecord(std::string_view line);

// Best-effort (uid, w) of a malformed tuple, for addressing the rejection.
struct TupleAddress {
  std::string uid;
  int64_t w = -1;
};
TupleAddress PeekAddress(std::string_view line);

}  // namespace dpverify

#endif  // DPVERIFY_WIRE_H_
