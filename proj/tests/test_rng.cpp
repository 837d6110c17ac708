#include <doctest.h>

#include <cmath>

#include "mapexit/rng.hpp"

using mapexit::PathRng;
using mapexit::philox4x32;

TEST_CASE("Philox4x32-10 known-answer vectors") {
    using A4 = std::array<std::uint32_t, 4>;
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == A4{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          A4{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          A4{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and distinct") {
    PathRng a(42, 7), b(42, 7), c(42, 8), d(43, 7);
    bool differ_c = false, differ_d = false;
    for (int k = 0; k < 100; ++k) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        differ_c |= x != c.next_u64();
        differ_d |= x != d.next_u64();
    }
    CHECK(differ_c);
    CHECK(differ_d);
}

TEST_CASE("uniform, normal and exponential moments") {
    PathRng r(1, 0);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0, se = 0;
    double umin = 1, umax = 0;
    for (int k = 0; k < n; ++k) {
        const double u = r.uniform();
        umin = std::min(umin, u);
        umax = std::max(umax, u);
        su += u;
        const double z = r.normal();
        sn += z;
        sn2 += z * z;
        se += r.exponential();
    }
    CHECK(umin > 0.0);
    CHECK(umax < 1.0);
    CHECK(std::abs(su / n - 0.5) < 5 * std::sqrt(1.0 / 12 / n));
    CHECK(std::abs(sn / n) < 5 / std::sqrt(double(n)));
    CHECK(std::abs(sn2 / n - 1.0) < 5 * std::sqrt(2.0 / n));
    CHECK(std::abs(se / n - 1.0) < 5 / std::sqrt(double(n)));
}
