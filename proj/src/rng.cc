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

#include "dpverify/rng.h"

#include <cmath>

namespace dpverify {

uint64_t Mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t DeriveSeed(uint64_t master_seed, std::string_view uid,
                    uint64_t epoch) {
  // FNV-1a over the uid bytes, then mixed with the seed and epoch.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : uid) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return Mix64(Mix64(master_seed ^ Mix64(h)) ^ epoch);
}

uint64_t DeriveSeed(uint64_t master_seed, uint64_t stream) {
  return Mix64(Mix64(master_seed) ^ Mix64(stream + 0x5851f42d4c957f2dULL));
}

double Rng::Uniform() {
  // 53 random bits mapped to the centers of 2^53 equal cells.
  const uint64_t bits = engine_() >> 11;
  return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double Rng::Laplace(double scale) {
  const double u = Uniform() - 0.5;
  const double sign = u < 0 ? -1.0 : 1.0;
  return -scale * sign * std::log1p(-2.0 * std::fabs(u));
}

Eigen::VectorXd Rng::NormalVector(int n) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = Normal();
  return v;
}

}  // namespace dpverify
