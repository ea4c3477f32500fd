// Copyright 2026 The SAiW Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SAIW_COMMON_HPP_
#define SAIW_COMMON_HPP_

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace saiw {

#ifdef SAIW_SCALAR32
using Scalar = float;
#else
using Scalar = double;
#endif

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Raised when a primitive produces NaN/Inf; non-finite values are never
// silently propagated.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// splitmix64 finalizer; used for seed derivation.
uint64_t hash_mix(uint64_t x);
uint64_t hash_combine(uint64_t a, uint64_t b);
uint64_t hash_combine(uint64_t a, uint64_t b, uint64_t c);

// Deterministic xoshiro256++ generator. Not std::mt19937: distributions in
// libstdc++ are not portable across implementations, and attack seeds must
// reproduce bit-identically everywhere.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0);

  uint64_t next_u64();
  // Uniform in [0,1), 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi);
  // Standard normal via Box-Muller. Stateless between calls (no cached
  // spare) so the generator state is exactly the four words below.
  double normal();

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<uint64_t, 4> s_{};
};

struct Runtime {
  int threads = 1;
  bool finite_checks = true;
};

Runtime& runtime();

// Splits [0,n) into contiguous chunks, one per worker. Each chunk is
// processed by exactly one thread, so any computation whose outputs are
// disjoint across indices is bit-identical regardless of thread count.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);

}  // namespace saiw

#endif  // SAIW_COMMON_HPP_
