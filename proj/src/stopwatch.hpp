#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>

namespace cellsense {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}

  // Never returns 0 so callers can rely on a positive duration.
  std::uint64_t elapsed_ns() const {
    const auto d = std::chrono::steady_clock::now() - start_;
    const auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(d).count();
    return static_cast<std::uint64_t>(std::max<std::int64_t>(ns, 1));
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace cellsense
