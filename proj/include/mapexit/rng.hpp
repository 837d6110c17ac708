#pragma once

#include <array>
#include <cstdint>

namespace mapexit {

/// Philox4x32-10 block: a pure function of (counter, key).
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key);

/// Random stream of one simulated path. Draw k of path p under seed s depends on
/// (s, p, k) only, so results do not depend on how paths are spread over threads.
class PathRng {
public:
    PathRng(std::uint64_t seed, std::uint64_t path);

    std::uint64_t next_u64();
    /// Uniform on (0, 1), never 0 or 1.
    double uniform();
    double normal();
    double exponential();

private:
    void refill();

    std::array<std::uint32_t, 2> key_;
    std::uint64_t path_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int pos_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace mapexit
