#pragma once

#include <array>
#include <cstdint>

namespace ccsoc {

/// Counter-based generator (Philox4x32-10, Salmon et al. 2011).
///
/// Every output block is a pure function of (seed, stream, block index), so
/// independent streams can be consumed from different threads in any order
/// and still reproduce bit-identical sequences. A stream is cheap to create;
/// Monte-Carlo code derives one stream per (run, purpose) pair.
class Philox {
public:
    explicit Philox(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01();

    /// Standard normal deviate (Box-Muller; second value cached).
    double gaussian();

private:
    void refill();

    std::array<std::uint32_t, 4> block_{};
    std::uint64_t block_index_ = 0;
    std::uint64_t stream_ = 0;
    std::uint32_t key0_ = 0;
    std::uint32_t key1_ = 0;
    int pos_ = 4;
    double cached_gauss_ = 0.0;
    bool has_cached_gauss_ = false;
};

/// Purpose tags carving one substream per independent noise mechanism.
enum class RngPurpose : std::uint32_t {
    Profile = 0,
    CurrentNoise = 1,
    CapacityDraw = 2,
    EfficiencyChargeDraw = 3,
    EfficiencyDischargeDraw = 4,
    TimingDraw = 5,
    VoltageNoise = 6,
};

/// Stream id for Monte-Carlo run `run_index` and the given purpose.
/// Distinct (run, purpose) pairs map to distinct streams for run counts
/// up to 2^60.
constexpr std::uint64_t mc_stream(std::uint64_t run_index, RngPurpose purpose) {
    return (run_index << 4) | static_cast<std::uint64_t>(purpose);
}

} // namespace ccsoc
