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

#include "saiw/common.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>
#include <vector>

namespace saiw {

uint64_t hash_mix(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

uint64_t hash_combine(uint64_t a, uint64_t b) {
  return hash_mix(a ^ (hash_mix(b) + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2)));
}

uint64_t hash_combine(uint64_t a, uint64_t b, uint64_t c) {
  return hash_combine(hash_combine(a, b), c);
}

Rng::Rng(uint64_t seed) {
  // Expand the seed with splitmix64; xoshiro must not start at all-zero.
  uint64_t x = seed;
  for (auto& w : s_) {
    x += 0x9E3779B97F4A7C15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    w = z ^ (z >> 31);
  }
}

static inline uint64_t rotl(uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

int64_t Rng::uniform_int(int64_t lo, int64_t hi) {
  if (hi < lo) throw Error("uniform_int: empty range");
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  // Rejection sampling for an unbiased draw.
  const uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return lo + static_cast<int64_t>(r % span);
}

double Rng::normal() {
  double u1 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

Runtime& runtime() {
  static Runtime rt = [] {
    Runtime r;
    if (const char* env = std::getenv("SAIW_THREADS")) {
      r.threads = std::max(1, std::atoi(env));
    } else {
      r.threads = std::max(1u, std::thread::hardware_concurrency());
    }
    return r;
  }();
  return rt;
}

namespace {

// Small persistent pool. Work items are contiguous chunks of an index
// range; each chunk is owned by one worker.
class Pool {
 public:
  static Pool& instance() {
    // Leaked on purpose: workers park in cv_.wait at exit and must not be
    // destroyed mid-wait.
    static Pool* pool = new Pool();
    return *pool;
  }

  void run(int64_t n, const std::function<void(int64_t, int64_t)>& body, int workers) {
    ensure_workers(workers - 1);
    std::vector<std::pair<int64_t, int64_t>> chunks;
    const int64_t per = (n + workers - 1) / workers;
    for (int64_t lo = 0; lo < n; lo += per) chunks.emplace_back(lo, std::min(n, lo + per));

    {
      std::unique_lock<std::mutex> lk(mu_);
      body_ = &body;
      chunks_ = std::move(chunks);
      next_chunk_ = 1;  // chunk 0 runs on the calling thread
      pending_ = static_cast<int>(chunks_.size()) - 1;
      error_.clear();
      ++generation_;
    }
    cv_.notify_all();

    if (!chunks_.empty()) {
      try {
        body(chunks_[0].first, chunks_[0].second);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lk(mu_);
        if (error_.empty()) error_ = e.what();
      }
    }

    std::unique_lock<std::mutex> lk(mu_);
    done_cv_.wait(lk, [&] { return pending_ == 0; });
    body_ = nullptr;
    if (!error_.empty()) throw Error("parallel_for worker failed: " + error_);
  }

 private:
  Pool() = default;

  void ensure_workers(int count) {
    std::lock_guard<std::mutex> lk(mu_);
    while (static_cast<int>(threads_.size()) < count) {
      threads_.emplace_back([this] { worker_loop(); });
    }
  }

  void worker_loop() {
    uint64_t seen = 0;
    while (true) {
      std::unique_lock<std::mutex> lk(mu_);
      cv_.wait(lk, [&] { return generation_ != seen; });
      seen = generation_;
      while (next_chunk_ < static_cast<int64_t>(chunks_.size())) {
        const auto chunk = chunks_[next_chunk_++];
        const auto* body = body_;
        lk.unlock();
        try {
          (*body)(chunk.first, chunk.second);
        } catch (const std::exception& e) {
          lk.lock();
          if (error_.empty()) error_ = e.what();
          lk.unlock();
        }
        lk.lock();
        if (--pending_ == 0) done_cv_.notify_all();
      }
    }
  }

  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable done_cv_;
  std::vector<std::thread> threads_;
  std::vector<std::pair<int64_t, int64_t>> chunks_;
  const std::function<void(int64_t, int64_t)>* body_ = nullptr;
  int64_t next_chunk_ = 0;
  int pending_ = 0;
  uint64_t generation_ = 0;
  std::string error_;
};

}  // namespace

void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body) {
  if (n <= 0) return;
  const int workers = std::min<int64_t>(runtime().threads, n);
  // Callers hand over coarse work items (conv planes, matmul rows), so even
  // a handful of indices is worth dispatching.
  if (workers <= 1 || n < 2) {
    body(0, n);
    return;
  }
  Pool::instance().run(n, body, workers);
}

}  // namespace saiw
