// Copyright 2026 The wlt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <charconv>
#include <exception>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

namespace wlt {

/// All library failures are reported with this exception type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Logging. Warnings go to stderr when the verbosity is at least 1.

inline int& verbosity() {
  static int level = 1;
  return level;
}

inline void warn(const std::string& msg) {
  if (verbosity() < 1) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "WARNING: " << msg << '\n';
}

inline void info(const std::string& msg) {
  if (verbosity() < 2) return;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  std::cerr << "LOG: " << msg << '\n';
}

// ---------------------------------------------------------------------------
// Log-domain arithmetic.

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();
inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == kLogZero) return a;
  return a + std::log1p(std::exp(b - a));
}

inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kLogZero; }

// ---------------------------------------------------------------------------
// SplitMix64 in counter form: draw i is mix64(seed + (i + 1) * golden).
// Uniform and integer draws are bit-identical on every IEEE platform.

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Combines seed material into a new stream seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0) {
  std::uint64_t h = mix64(base ^ 0x6A09E667F3BCC909ULL);
  h = mix64(h ^ (a + 0x9E3779B97F4A7C15ULL));
  h = mix64(h ^ (b + 0x3C6EF372FE94F82BULL));
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64() {
    ++counter_;
    return mix64(seed_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). Rejection keeps it unbiased.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw Error("Rng::below: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Uniform integer in [lo, hi].
  int range(int lo, int hi) {
    if (hi < lo) throw Error("Rng::range: hi < lo");
    return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  /// Standard normal via the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Text helpers.

/// Shortest decimal form that reads back to the identical double.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

/// Fixed-point rendering with the given number of decimals.
inline std::string format_fixed(double x, int decimals) {
  char buf[128];
  auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::fixed,
                           decimals);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    // from_chars rejects "inf"/"nan" spellings we never write; report them.
    throw Error("malformed number '" + std::string(s) + "'");
  }
  return v;
}

inline long parse_long(std::string_view s) {
  long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("malformed integer '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' ||
                               line[i] == '\r' || line[i] == '\n'))
      ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' &&
           line[j] != '\r' && line[j] != '\n')
      ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n'))
    ++b;
  while (e > b &&
         (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' || s[e - 1] == '\n'))
    --e;
  return std::string(s.substr(b, e - b));
}

// ---------------------------------------------------------------------------
// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index is handled by
// exactly one call; callers write results into per-index slots.

template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += workers) fn(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace wlt
