#include "ccsoc/rng.hpp"

#include <cmath>

namespace ccsoc {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mul_hi_lo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(product >> 32);
    lo = static_cast<std::uint32_t>(product);
}

inline void philox_round(std::array<std::uint32_t, 4>& ctr, std::uint32_t k0, std::uint32_t k1) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mul_hi_lo(kPhiloxM0, ctr[0], hi0, lo0);
    mul_hi_lo(kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
}

} // namespace

Philox::Philox(std::uint64_t seed, std::uint64_t stream)
    : stream_(stream),
      key0_(static_cast<std::uint32_t>(seed)),
      key1_(static_cast<std::uint32_t>(seed >> 32)) {}

void Philox::refill() {
    block_ = {static_cast<std::uint32_t>(block_index_),
              static_cast<std::uint32_t>(block_index_ >> 32),
              static_cast<std::uint32_t>(stream_),
              static_cast<std::uint32_t>(stream_ >> 32)};
    std::uint32_t k0 = key0_;
    std::uint32_t k1 = key1_;
    for (int round = 0; round < 10; ++round) {
        if (round != 0) {
            k0 += kPhiloxW0;
            k1 += kPhiloxW1;
        }
        philox_round(block_, k0, k1);
    }
    ++block_index_;
    pos_ = 0;
}

std::uint32_t Philox::next_u32() {
    if (pos_ >= 4) {
        refill();
    }
    return block_[pos_++];
}

std::uint64_t Philox::next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
}

double Philox::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Philox::gaussian() {
    if (has_cached_gauss_) {
        has_cached_gauss_ = false;
        return cached_gauss_;
    }
    // u1 in (0, 1] keeps the log finite.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    cached_gauss_ = radius * std::sin(angle);
    has_cached_gauss_ = true;
    return radius * std::cos(angle);
}

} // namespace ccsoc
