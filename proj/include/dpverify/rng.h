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

#ifndef DPVERIFY_RNG_H_
#define DPVERIFY_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>

#include <Eigen/Dense>

namespace dpverify {

// SplitMix64 finalizer. Used to derive independent stream seeds.
uint64_t Mix64(uint64_t x);

// Seed for the stream owned by (uid, epoch) under a master seed. Streams for
// different sessions or epochs never share state, so a run is reproducible
// regardless of how sessions interleave.
uint64_t DeriveSeed(uint64_t master_seed, std::string_view uid, uint64_t epoch);
uint64_t DeriveSeed(uint64_t master_seed, uint64_t stream);

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  double Normal() { return normal_(engine_); }
  // Uniform on the open interval (0, 1).
  double Uniform();
  // Zero-mean Laplace with the given scale, by inverse CDF.
  double Laplace(double scale);
  Eigen::VectorXd NormalVector(int n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace dpverify

#endif  // DPVERIFY_RNG_H_
