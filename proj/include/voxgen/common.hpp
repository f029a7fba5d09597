#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace voxgen {

// ---------------------------------------------------------------------------
// Error types
// ---------------------------------------------------------------------------

/// Base class for all voxgen errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeMismatch : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct InvalidStride : Error { using Error::Error; };
struct InvalidAxis : Error { using Error::Error; };
struct NotScalar : Error { using Error::Error; };
struct TapeConsumed : Error { using Error::Error; };
struct NoActiveTape : Error { using Error::Error; };
struct MissingGradient : Error { using Error::Error; };
struct ContextMismatch : Error { using Error::Error; };
struct InvalidCamera : Error { using Error::Error; };
struct NonPositiveDisplacement : Error { using Error::Error; };
struct DegenerateCamera : Error { using Error::Error; };
struct BadMagic : Error { using Error::Error; };
struct TruncatedFile : Error { using Error::Error; };
struct LabelCountMismatch : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct CheckpointCorrupt : Error { using Error::Error; };
struct NonDeterministicFunction : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Random numbers
// ---------------------------------------------------------------------------

/// Seeded random stream. Distribution mapping is implemented here rather than
/// with std::*_distribution so that a given seed produces the same sequence
/// on every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller. Consumes two draws per call.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t randint(std::uint64_t n) { return gen_() % n; }

 private:
  std::mt19937_64 gen_;
};

/// splitmix64 finalizer; used to derive independent per-step / per-purpose
/// seeds from one base seed so that training runs are replayable from any
/// checkpointed step.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return mix_seed(mix_seed(base ^ 0x6a09e667f3bcc908ULL) + mix_seed(stream) +
                  0x9e3779b97f4a7c15ULL * index);
}

}  // namespace voxgen
