#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace coldscatter::rng {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

// Philox4x32 with 10 rounds.
Counter philox4x32_10(Counter ctr, Key key);

// Independent stream per (seed, stream id); block counter in words 0-1.
class Philox {
public:
    using result_type = std::uint32_t;

    Philox(std::uint64_t seed, std::uint64_t stream);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
    result_type operator()();

    // 53-bit uniform in [0, 1).
    double uniform();
    // Uniform in (0, 1], safe for logarithms.
    double uniform_pos() { return 1.0 - uniform(); }
    double normal();

private:
    void refill();

    Counter ctr_{};
    Key key_{};
    Counter buf_{};
    int pos_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace coldscatter::rng
