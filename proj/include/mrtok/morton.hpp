#pragma once

#include <cstdint>

namespace mrtok {

// "Insert" a 0 bit after each of the 32 low bits of x.
inline std::uint64_t interleave_zeros(std::uint64_t x) {
    x &= 0x00000000ffffffffULL;
    x = (x ^ (x << 16)) & 0x0000ffff0000ffffULL;
    x = (x ^ (x << 8)) & 0x00ff00ff00ff00ffULL;
    x = (x ^ (x << 4)) & 0x0f0f0f0f0f0f0f0fULL;
    x = (x ^ (x << 2)) & 0x3333333333333333ULL;
    x = (x ^ (x << 1)) & 0x5555555555555555ULL;
    return x;
}

/// Morton (z-order) code of a cell coordinate pair. x occupies the even bits,
/// so for a 2x2 grid the order is TL, TR, BL, BR.
inline std::uint64_t morton2(std::uint32_t x, std::uint32_t y) {
    return interleave_zeros(x) | (interleave_zeros(y) << 1);
}

}  // namespace mrtok
