#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace mindex {

// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
// A Stream is a pure function of (key, stream id, block counter), so any step of
// any run can be regenerated without replaying earlier draws.
class Stream {
 public:
  Stream(std::uint64_t key, std::uint64_t stream_id);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  double normal();
  void fill_normal(std::span<double> out);

  // Number of 32-bit words consumed so far.
  std::uint64_t words_used() const { return words_; }

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
  std::uint64_t words_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Key for the stream of one training step: mix(master_seed, run_index, step_index).
std::uint64_t derive_key(std::uint64_t master_seed, std::uint64_t run_index,
                         std::uint64_t step_index);

// Sub-stream ids used inside one step; kept fixed so serialized runs stay stable.
enum class Substream : std::uint64_t {
  data = 1,
  label_noise = 2,
  orthogonal = 3,
  init = 4,
  test_set = 5,
  teacher = 6,
};

Stream step_stream(std::uint64_t master_seed, std::uint64_t run_index,
                   std::uint64_t step_index, Substream which);

}  // namespace mindex
