#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace kinlim {

/// Philox4x32-10 block function (Salmon et al., SC'11).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

/// Counter-based random stream satisfying UniformRandomBitGenerator.
///
/// A stream is identified by (seed, stream_id, substream); draws walk a 64-bit
/// block counter, so distinct identifiers never share output and a stream's
/// contents do not depend on which thread consumes it.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint32_t stream_id, std::uint32_t substream);

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint32_t stream_id_;
  std::uint32_t substream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
};

/// Stream for trajectory `trajectory` of ensemble `ensemble_index`; the
/// limit-equation ensemble uses kLimitEnsemble.
inline constexpr std::uint32_t kLimitEnsemble = 0xFFFFu;
RngStream trajectory_stream(std::uint64_t base_seed, std::uint32_t ensemble_index, std::uint32_t trajectory);

}  // namespace kinlim
