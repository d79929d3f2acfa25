#pragma once

// Exact-conserving integer splits used by attribution. Everything here works on
// unsigned 128-bit amounts so the same code serves micro-tonne values and the
// finer internal propagation scale.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "elkg/error.hpp"

namespace elkg {

using u128 = unsigned __int128;

namespace detail {

struct U256 {
  u128 hi = 0;
  u128 lo = 0;
};

inline U256 mul_wide(u128 a, u128 b) {
  constexpr u128 kMask = (u128{1} << 64) - 1;
  const u128 a0 = a & kMask, a1 = a >> 64;
  const u128 b0 = b & kMask, b1 = b >> 64;
  const u128 p00 = a0 * b0, p01 = a0 * b1, p10 = a1 * b0, p11 = a1 * b1;
  const u128 mid = (p00 >> 64) + (p01 & kMask) + (p10 & kMask);
  U256 r;
  r.lo = (p00 & kMask) | (mid << 64);
  r.hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
  return r;
}

}  // namespace detail

struct DivMod {
  u128 quot = 0;
  u128 rem = 0;
};

/// floor(a * b / c) and its remainder, without intermediate overflow.
/// Requires c > 0 and a quotient that fits in 128 bits.
inline DivMod mul_div(u128 a, u128 b, u128 c) {
  const detail::U256 n = detail::mul_wide(a, b);
  if (n.hi == 0) return {n.lo / c, n.lo % c};
  DivMod out;
  u128 rem = 0;
  for (int bit = 255; bit >= 0; --bit) {
    const bool carry = (rem >> 127) != 0;
    const u128 next = bit >= 128 ? (n.hi >> (bit - 128)) & 1 : (n.lo >> bit) & 1;
    rem = (rem << 1) | next;
    if (carry || rem >= c) {
      rem -= c;
      if (bit < 128) out.quot |= u128{1} << bit;
    }
  }
  out.rem = rem;
  return out;
}

/// round-half-even(a * b / c).
inline u128 mul_div_round_half_even(u128 a, u128 b, u128 c) {
  const DivMod d = mul_div(a, b, c);
  // 2*rem vs c without overflowing: rem < c.
  const u128 half_gap = c - d.rem;  // > 0
  if (d.rem > half_gap || (d.rem == half_gap && (d.quot & 1) != 0)) return d.quot + 1;
  return d.quot;
}

inline u128 div_round_half_even(u128 a, u128 c) { return mul_div_round_half_even(a, 1, c); }

struct TransferSplit {
  u128 moved = 0;
  u128 residual = 0;
};

/// Pro-rata share of a batch's remaining liability that leaves with
/// `transfer_qty` of its `remaining_qty`. A transfer that empties the batch
/// takes the whole remainder, so moved + residual == remaining_liability always.
inline TransferSplit transfer_share(u128 remaining_liability, u128 remaining_qty,
                                    u128 transfer_qty) {
  if (transfer_qty > remaining_qty) {
    throw Error(Errc::Overdraw, "transfer quantity exceeds remaining quantity");
  }
  if (transfer_qty == remaining_qty) return {remaining_liability, 0};
  if (transfer_qty == 0) return {0, remaining_liability};
  const u128 moved = mul_div_round_half_even(remaining_liability, transfer_qty, remaining_qty);
  return {moved, remaining_liability - moved};
}

/// Largest-remainder apportionment of `pool` proportionally to `weights`.
/// Shares sum to `pool` exactly; leftover units go to the largest fractional
/// parts, ties broken by `ids` ascending. Zero weights are allowed here as long
/// as at least one weight is positive (they always receive zero).
inline std::vector<u128> allocate_largest_remainder(u128 pool, std::span<const u128> weights,
                                                    std::span<const std::string_view> ids) {
  if (weights.empty()) throw Error(Errc::EmptyWeights, "allocation needs at least one weight");
  u128 total = 0;
  for (u128 w : weights) total += w;
  if (total == 0) throw Error(Errc::EmptyWeights, "allocation weights sum to zero");

  std::vector<u128> shares(weights.size());
  std::vector<u128> rems(weights.size());
  u128 assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const DivMod d = mul_div(pool, weights[i], total);
    shares[i] = d.quot;
    rems[i] = d.rem;
    assigned += d.quot;
  }
  u128 leftover = pool - assigned;  // < number of weights
  if (leftover == 0) return shares;

  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rems[a] != rems[b]) return rems[a] > rems[b];
    if (!ids.empty() && ids[a] != ids[b]) return ids[a] < ids[b];
    return a < b;
  });
  for (std::size_t k = 0; leftover > 0; ++k, --leftover) ++shares[order[k]];
  return shares;
}

}  // namespace elkg
