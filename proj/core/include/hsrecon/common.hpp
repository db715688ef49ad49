#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hsrecon {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape or dimension contract violation.
struct ShapeError : Error {
  using Error::Error;
};

/// Malformed file, unreadable path, or inconsistent dataset.
struct DataError : Error {
  using Error::Error;
};

/// Non-finite value where the computation cannot continue (NaN loss etc.).
struct NumericError : Error {
  using Error::Error;
};

/// Counter-based deterministic RNG (splitmix64). Used everywhere randomness
/// is needed so that results are bit-identical across platforms and runs;
/// std::uniform_real_distribution is implementation-defined and is avoided.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  /// Deterministic substream seed for item `index` under this generator's seed.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
    Rng r(seed ^ (0xD1B54A32D192ED03ULL * (index + 1)));
    return r.next_u64();
  }

 private:
  std::uint64_t state_;
};

/// Seeded Fisher-Yates shuffle (std::shuffle is implementation-defined).
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

/// Worker-thread cap shared by all parallel loops. 0 = hardware concurrency.
void set_worker_threads(int n);
int worker_threads();

/// Runs fn(i) for i in [0, n) across worker threads. Iterations must write to
/// disjoint state; the schedule is static so output never depends on timing.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

/// FNV-1a 64-bit over raw bytes; used to fingerprint generated artifacts.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::string& path);

}  // namespace hsrecon
