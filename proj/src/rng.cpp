#include "kinlim/rng.hpp"

namespace kinlim {

namespace {
constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  std::uint64_t p = std::uint64_t(a) * b;
  hi = std::uint32_t(p >> 32);
  lo = std::uint32_t(p);
}
}  // namespace

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

RngStream::RngStream(std::uint64_t seed, std::uint32_t stream_id, std::uint32_t substream)
    : key_{std::uint32_t(seed), std::uint32_t(seed >> 32)}, stream_id_(stream_id), substream_(substream) {}

RngStream::result_type RngStream::operator()() {
  if (used_ >= 4) {
    buffer_ = philox4x32_10({std::uint32_t(block_), std::uint32_t(block_ >> 32), substream_, stream_id_}, key_);
    ++block_;
    used_ = 0;
  }
  std::uint64_t hi = buffer_[used_];
  std::uint64_t lo = buffer_[used_ + 1];
  used_ += 2;
  return (hi << 32) | lo;
}

double RngStream::uniform() { return double((*this)() >> 11) * 0x1.0p-53; }

RngStream trajectory_stream(std::uint64_t base_seed, std::uint32_t ensemble_index, std::uint32_t trajectory) {
  return RngStream(base_seed, ensemble_index, trajectory);
}

}  // namespace kinlim
