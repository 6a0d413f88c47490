#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string_view>

namespace pinning {

// Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3").
// Stateless: the output block is a pure function of (key, counter).
struct Philox4x32 {
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    static Counter block(Counter ctr, Key key) {
        constexpr std::uint32_t kM0 = 0xD2511F53u;
        constexpr std::uint32_t kM1 = 0xCD9E8D57u;
        constexpr std::uint32_t kW0 = 0x9E3779B9u;
        constexpr std::uint32_t kW1 = 0xBB67AE85u;
        for (int round = 0; round < 10; ++round) {
            const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
            const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
            ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
                   static_cast<std::uint32_t>(p1),
                   static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
                   static_cast<std::uint32_t>(p0)};
            key[0] += kW0;
            key[1] += kW1;
        }
        return ctr;
    }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Seed of task `index` within `command`. Stable across versions and
// independent of how tasks are scheduled.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view command,
                                 std::uint64_t index) {
    std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
    for (unsigned char c : command) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return splitmix64(splitmix64(master ^ h) + index);
}

// 53-bit uniform in [0, 1).
inline double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Sequential stream over Philox blocks. Satisfies UniformRandomBitGenerator.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_(stream) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        if (cached_ == 0) {
            const Philox4x32::Counter ctr{static_cast<std::uint32_t>(counter_),
                                          static_cast<std::uint32_t>(counter_ >> 32),
                                          static_cast<std::uint32_t>(stream_),
                                          static_cast<std::uint32_t>(stream_ >> 32)};
            ++counter_;
            const auto out = Philox4x32::block(ctr, key_);
            buffer_[0] = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
            buffer_[1] = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
            cached_ = 2;
        }
        return buffer_[--cached_];
    }

    double uniform() { return to_unit((*this)()); }

    // Uniform in (0, 1].
    double uniform_pos() { return 1.0 - uniform(); }

private:
    Philox4x32::Key key_;
    std::uint64_t stream_;
    std::uint64_t counter_ = 0;
    std::array<std::uint64_t, 2> buffer_{};
    int cached_ = 0;
};

}  // namespace pinning
