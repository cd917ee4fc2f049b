#include "mindex/rng.hpp"

#include <cmath>
#include <numbers>

namespace mindex {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

std::array<std::uint32_t, 4> philox10(std::array<std::uint32_t, 4> c,
                                      std::array<std::uint32_t, 2> k) {
  std::uint32_t c0 = c[0], c1 = c[1], c2 = c[2], c3 = c[3], k0 = k[0], k1 = k[1];
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * c0;
    const std::uint64_t p1 = std::uint64_t{kMul1} * c2;
    const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1 ^ k0;
    const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ k1;
    c1 = static_cast<std::uint32_t>(p1);
    c3 = static_cast<std::uint32_t>(p0);
    c0 = n0;
    c2 = n2;
    k0 += kWeyl0;
    k1 += kWeyl1;
  }
  return {c0, c1, c2, c3};
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_key(std::uint64_t master_seed, std::uint64_t run_index,
                         std::uint64_t step_index) {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ run_index);
  h = splitmix64(h ^ (step_index * 0xD6E8FEB86659FD93ull));
  return h;
}

Stream::Stream(std::uint64_t key, std::uint64_t stream_id)
    : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)},
      stream_id_(stream_id) {}

void Stream::refill() {
  buf_ = philox10({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                   static_cast<std::uint32_t>(stream_id_),
                   static_cast<std::uint32_t>(stream_id_ >> 32)},
                  key_);
  ++block_;
  pos_ = 0;
}

std::uint32_t Stream::next_u32() {
  if (pos_ == 4) refill();
  ++words_;
  return buf_[pos_++];
}

std::uint64_t Stream::next_u64() {
  const std::uint64_t hi = next_u32();
  return (hi << 32) | next_u32();
}

double Stream::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Stream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller: fixed consumption of two uniforms per pair, no rejection loop.
  const double r = std::sqrt(-2.0 * std::log(uniform()));
  const double theta = 2.0 * std::numbers::pi * uniform();
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

void Stream::fill_normal(std::span<double> out) {
  std::size_t i = 0;
  if (has_spare_ && !out.empty()) out[i++] = normal();
  // Same sequence as repeated normal(), one Philox block per aligned pair.
  if (pos_ == 4) {
    for (; i + 1 < out.size(); i += 2) {
      refill();
      words_ += 4;
      pos_ = 4;
      const std::uint64_t a = (std::uint64_t{buf_[0]} << 32) | buf_[1];
      const std::uint64_t b = (std::uint64_t{buf_[2]} << 32) | buf_[3];
      const double u1 = (static_cast<double>(a >> 11) + 0.5) * 0x1.0p-53;
      const double u2 = (static_cast<double>(b >> 11) + 0.5) * 0x1.0p-53;
      const double r = std::sqrt(-2.0 * std::log(u1));
      const double theta = 2.0 * std::numbers::pi * u2;
      out[i] = r * std::cos(theta);
      out[i + 1] = r * std::sin(theta);
    }
  }
  for (; i < out.size(); ++i) out[i] = normal();
}

Stream step_stream(std::uint64_t master_seed, std::uint64_t run_index, std::uint64_t step_index,
                   Substream which) {
  return Stream(derive_key(master_seed, run_index, step_index),
                static_cast<std::uint64_t>(which));
}

}  // namespace mindex
