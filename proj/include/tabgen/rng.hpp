#pragma once

#include <cmath>
#include <cstdint>
#include <array>

namespace tabgen {

// Philox4x32-10 counter-based generator. Streams are cheap to construct,
// so every logical consumer (a row, an epoch, a tensor init) gets its own
// stream and results do not depend on thread scheduling.
class Philox {
  public:
    Philox(uint64_t seed, uint64_t stream) {
        key_[0] = static_cast<uint32_t>(seed);
        key_[1] = static_cast<uint32_t>(seed >> 32);
        ctr_[0] = 0;
        ctr_[1] = 0;
        ctr_[2] = static_cast<uint32_t>(stream);
        ctr_[3] = static_cast<uint32_t>(stream >> 32);
        buf_pos_ = 4;
        have_spare_ = false;
    }

    // Derives an independent stream; mixing constant keeps (seed, a, b)
    // triples from colliding with plain stream ids.
    static uint64_t substream(uint64_t a, uint64_t b) {
        uint64_t h = a * 0x9E3779B97F4A7C15ull;
        h ^= b + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
        return h;
    }

    uint32_t next_u32() {
        if (buf_pos_ == 4) refill();
        return buf_[buf_pos_++];
    }

    uint64_t next_u64() {
        uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1]; safe as a log() argument.
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    // Standard normal via Box-Muller; caches the second draw of each pair.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform_pos();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Integer in [0, n), n >= 1. Rejection-free modulo is fine here: n is
    // tiny compared to 2^64 in every call site.
    uint64_t below(uint64_t n) { return next_u64() % n; }

    // One Philox block; exposed for known-answer tests.
    static std::array<uint32_t, 4> block(const std::array<uint32_t, 4>& ctr,
                                         const std::array<uint32_t, 2>& key) {
        constexpr uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
        constexpr uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
        std::array<uint32_t, 4> c = ctr;
        std::array<uint32_t, 2> k = key;
        for (int round = 0; round < 10; ++round) {
            uint64_t p0 = static_cast<uint64_t>(kM0) * c[0];
            uint64_t p1 = static_cast<uint64_t>(kM1) * c[2];
            uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
            uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
            c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
            k[0] += kW0;
            k[1] += kW1;
        }
        return c;
    }

  private:
    void refill() {
        buf_ = block(ctr_, key_);
        buf_pos_ = 0;
        if (++ctr_[0] == 0 && ++ctr_[1] == 0) ++ctr_[2];  // 96-bit per-stream space
    }

    std::array<uint32_t, 2> key_;
    std::array<uint32_t, 4> ctr_;
    std::array<uint32_t, 4> buf_{};
    int buf_pos_;
    double spare_ = 0.0;
    bool have_spare_;
};

// Purpose tags for Philox streams.  Every independent consumer of randomness
// hashes one of these with its own index via Philox::substream so that
// adding a consumer never shifts the draws of another.
namespace streams {
constexpr uint64_t kSplit = 1;       // train/holdout row shuffle
constexpr uint64_t kInit = 2;        // parameter initialization, per tensor
constexpr uint64_t kTrainRow = 3;    // per-(step, row) noise draws
constexpr uint64_t kShuffle = 4;     // per-epoch batch order
constexpr uint64_t kSampleRow = 5;   // per-row reverse-process draws
constexpr uint64_t kImputeRow = 6;   // per-row imputation draws
constexpr uint64_t kMetric = 7;      // metric-internal randomness (C2ST)
}  // namespace streams

}  // namespace tabgen
