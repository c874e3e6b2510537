#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace dsn {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is identified by (seed, stream id). The 64-bit seed is the key,
/// the upper 64 bits of the 128-bit counter carry the stream id and the lower
/// 64 bits count blocks. Every (seed, stream) pair therefore yields an
/// independent, reproducible sequence without any shared state, which is what
/// lets trials and Monte Carlo blocks run on any number of workers.
class Philox4x32 {
public:
    using result_type = std::uint32_t;

    Philox4x32() : Philox4x32(0, 0) {}
    Philox4x32(std::uint64_t seed, std::uint64_t stream)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        if (index_ == 4) {
            refill();
        }
        return buffer_[index_++];
    }

    /// Skip whole 4-word blocks.
    void discard_blocks(std::uint64_t n) {
        block_ += n;
        index_ = 4;
    }

    std::uint64_t seed() const {
        return static_cast<std::uint64_t>(key_[0]) | (static_cast<std::uint64_t>(key_[1]) << 32);
    }
    std::uint64_t stream() const { return stream_; }

    /// Raw block function, exposed for known-answer tests.
    static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
        constexpr std::uint32_t kMul0 = 0xD2511F53u;
        constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
        constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
        constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
            const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
            const auto lo0 = static_cast<std::uint32_t>(p0);
            const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
            const auto lo1 = static_cast<std::uint32_t>(p1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

private:
    void refill() {
        const std::array<std::uint32_t, 4> ctr{
            static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
            static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
        buffer_ = block(ctr, key_);
        ++block_;
        index_ = 0;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int index_ = 4;
};

/// Fixed stream ids used inside one simulation trial.
namespace streams {
inline constexpr std::uint64_t kSources = 0;
inline constexpr std::uint64_t kMatrix1 = 1;
inline constexpr std::uint64_t kMatrix2 = 2;
inline constexpr std::uint64_t kNoise1 = 3;
inline constexpr std::uint64_t kNoise2 = 4;
/// Random draws of the proxcheck self-test.
inline constexpr std::uint64_t kProxcheck = 5;
/// Replica Monte Carlo blocks use ids kReplicaBase + block index.
inline constexpr std::uint64_t kReplicaBase = 1ull << 32;
}  // namespace streams

}  // namespace dsn
