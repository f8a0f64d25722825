#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace mvsim {

/// Philox4x32-10 block function: maps a 128-bit counter and 64-bit key to
/// 128 pseudo-random bits. Stateless, so any (key, counter) can be evaluated
/// independently of every other.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

/// Identifies one independent random stream. Streams with different keys
/// never share counter space.
struct StreamKey {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint32_t stream = 0;
};

/// Reserved step values for streams that are not tied to a time step.
inline constexpr std::uint64_t kInitialStateStep = std::numeric_limits<std::uint64_t>::max();
inline constexpr std::uint64_t kValidationStep = kInitialStateStep - 1;

/// Reserved stream id for draws shared by a whole noise block (e.g. the
/// joint Lévy-area tail of the cross-particle expansion).
inline constexpr std::uint32_t kSharedStream = std::numeric_limits<std::uint32_t>::max();

/// Counter-based generator for one stream. Satisfies
/// UniformRandomBitGenerator; `normal()` uses Box-Muller so the sequence is
/// identical across standard libraries.
class CounterRng {
 public:
  using result_type = std::uint32_t;

  explicit CounterRng(StreamKey key) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept;

  /// Uniform on (0, 1], 53 random bits.
  double uniform() noexcept;
  double normal() noexcept;

 private:
  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> counter_{};
  std::array<std::uint32_t, 4> buffer_{};
  unsigned next_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mvsim
