#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstddef>

namespace latreg {

// Counter-based RNG (Philox4x32-10, Salmon et al. 2011).
//
// A stream is addressed by (seed, stream_id): the 64-bit seed is the cipher
// key, the 64-bit stream id occupies the high counter words, and the block
// index occupies the low words. Streams are therefore independent and can be
// consumed in any order, which is what makes parallel bootstrap/Monte Carlo
// runs bit-identical to serial ones.
//
// Stream-id conventions used in this library:
//   bootstrap draw r                -> stream id r
//   Monte Carlo cell c, rep r       -> stream id c * 2^32 + r
//   single simulate_* call          -> stream id passed by caller (default 0)
class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id = 0)
        : key0_(static_cast<std::uint32_t>(seed)),
          key1_(static_cast<std::uint32_t>(seed >> 32)),
          stream_lo_(static_cast<std::uint32_t>(stream_id)),
          stream_hi_(static_cast<std::uint32_t>(stream_id >> 32)) {}

    std::uint64_t next_u64() {
        if (buf_pos_ >= 2) {
            refill();
        }
        return buf_[buf_pos_++];
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller; generates pairs and caches the second.
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        // u1 in (0,1] so log() is finite.
        const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Uniform integer in [0, n), n >= 1. Multiply-shift map; the O(n/2^64)
    /// deviation from uniformity is irrelevant at the sample sizes used here.
    std::size_t bounded(std::size_t n) {
        return static_cast<std::size_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

  private:
    static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                        std::uint32_t& lo) {
        const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
        hi = static_cast<std::uint32_t>(p >> 32);
        lo = static_cast<std::uint32_t>(p);
    }

    void refill() {
        std::uint32_t x0 = static_cast<std::uint32_t>(block_);
        std::uint32_t x1 = static_cast<std::uint32_t>(block_ >> 32);
        std::uint32_t x2 = stream_lo_;
        std::uint32_t x3 = stream_hi_;
        std::uint32_t k0 = key0_;
        std::uint32_t k1 = key1_;
        for (int round = 0; round < 10; ++round) {
            std::uint32_t hi0, lo0, hi1, lo1;
            mulhilo(0xD2511F53u, x0, hi0, lo0);
            mulhilo(0xCD9E8D57u, x2, hi1, lo1);
            const std::uint32_t y0 = hi1 ^ x1 ^ k0;
            const std::uint32_t y1 = lo1;
            const std::uint32_t y2 = hi0 ^ x3 ^ k1;
            const std::uint32_t y3 = lo0;
            x0 = y0;
            x1 = y1;
            x2 = y2;
            x3 = y3;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        buf_[0] = (static_cast<std::uint64_t>(x1) << 32) | x0;
        buf_[1] = (static_cast<std::uint64_t>(x3) << 32) | x2;
        buf_pos_ = 0;
        ++block_;
    }

    std::uint32_t key0_, key1_;
    std::uint32_t stream_lo_, stream_hi_;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 2> buf_{};
    int buf_pos_ = 2;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

} // namespace latreg
