#pragma once

// Index calculus for dyadic trees.
//
// A tree with N levels has a root pipe (not indexed) and 2^i branches at each
// level i = 1..N. Branch (i, j) has parent (i-1, ceil(j/2)) and children
// (i+1, 2j-1), (i+1, 2j). Vectors over all non-root branches are stored
// level-major with positions ascending, so (i, j) lives at flat index
// 2^i - 2 + (j - 1).

#include <bit>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dyadic/errors.hpp"

namespace dyadic {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Hard upper bound on the level count for pure index arithmetic. Matrix
/// assembly applies its own (smaller, configurable) cap.
inline constexpr int kMaxIndexLevels = 30;

struct BranchIndex {
  int level = 1;
  int position = 1;

  friend constexpr auto operator<=>(const BranchIndex&, const BranchIndex&) = default;
};

inline std::string to_string(const BranchIndex& b) {
  return std::to_string(b.level) + "," + std::to_string(b.position);
}

/// Root-to-branch path, level 1 first. Never contains the root pipe.
using Path = std::vector<BranchIndex>;

constexpr std::size_t outlet_count(int levels) { return std::size_t{1} << levels; }

/// Number of non-root branches, 2^{N+1} - 2.
constexpr std::size_t branch_count(int levels) { return (std::size_t{2} << levels) - 2; }

constexpr std::size_t level_offset(int level) { return (std::size_t{1} << level) - 2; }

inline bool is_valid(const BranchIndex& b) {
  return b.level >= 1 && b.level <= kMaxIndexLevels && b.position >= 1 &&
         static_cast<std::uint64_t>(b.position) <= (std::uint64_t{1} << b.level);
}

inline void require_valid(const BranchIndex& b) {
  if (!is_valid(b)) {
    throw ValidationError("invalid branch index (" + to_string(b) + ")");
  }
}

inline void require_levels(int levels) {
  if (levels < 1 || levels > kMaxIndexLevels) {
    throw ValidationError("level count must be in [1, " + std::to_string(kMaxIndexLevels) +
                          "], got " + std::to_string(levels));
  }
}

constexpr std::size_t flat_index(const BranchIndex& b) {
  return level_offset(b.level) + static_cast<std::size_t>(b.position - 1);
}

inline BranchIndex branch_at(std::size_t flat) {
  // level i covers flat indices [2^i - 2, 2^{i+1} - 2)
  const int level = std::bit_width(flat + 2) - 1;
  return {level, static_cast<int>(flat - level_offset(level)) + 1};
}

/// Inverse of branch_count; rejects lengths that are not 2^{N+1} - 2.
inline int levels_for_branch_count(std::size_t n) {
  const std::size_t outlets_times_two = n + 2;
  if (n == 0 || !std::has_single_bit(outlets_times_two)) {
    throw ValidationError("vector length " + std::to_string(n) +
                          " is not 2^{N+1} - 2 for any level count N >= 1");
  }
  return std::bit_width(outlets_times_two) - 2;
}

/// Inverse of outlet_count; rejects lengths that are not 2^N with N >= 1.
inline int levels_for_outlet_count(std::size_t n) {
  if (n < 2 || !std::has_single_bit(n)) {
    throw ValidationError("outlet vector length " + std::to_string(n) +
                          " is not 2^N for any level count N >= 1");
  }
  return std::bit_width(n) - 1;
}

inline BranchIndex parent(const BranchIndex& b) {
  if (b.level < 2) {
    throw ValidationError("level-1 branch (" + to_string(b) + ") has the root pipe as parent");
  }
  return {b.level - 1, (b.position + 1) / 2};
}

inline std::pair<BranchIndex, BranchIndex> children(const BranchIndex& b) {
  return {{b.level + 1, 2 * b.position - 1}, {b.level + 1, 2 * b.position}};
}

/// All branches of an N-level tree in canonical (level-major) order.
inline std::vector<BranchIndex> branch_set(int levels) {
  require_levels(levels);
  std::vector<BranchIndex> out;
  out.reserve(branch_count(levels));
  for (int i = 1; i <= levels; ++i) {
    const int width = 1 << i;
    for (int j = 1; j <= width; ++j) out.push_back({i, j});
  }
  return out;
}

inline Path path_to(const BranchIndex& b) {
  require_valid(b);
  Path path(static_cast<std::size_t>(b.level));
  int m = b.position;
  for (int k = b.level; k >= 1; --k) {
    path[static_cast<std::size_t>(k - 1)] = {k, m};
    m = (m + 1) / 2;
  }
  return path;
}

/// First s entries of a path; s = 0 gives the empty path.
inline Path subpath(const Path& path, std::size_t s) {
  if (s > path.size()) {
    throw ValidationError("subpath length " + std::to_string(s) + " exceeds path length " +
                          std::to_string(path.size()));
  }
  return Path(path.begin(), path.begin() + static_cast<std::ptrdiff_t>(s));
}

/// Smallest bit position k such that a and b agree on every bit >= k.
constexpr int nu(std::uint64_t a, std::uint64_t b) { return std::bit_width(a ^ b); }

/// Position (1-based) of the level-`level` ancestor of outlet `outlet` (1-based)
/// in an N-level tree.
constexpr int ancestor_position(int levels, int outlet, int level) {
  return ((outlet - 1) >> (levels - level)) + 1;
}

namespace detail {

inline int checked_levels_for(const Vector& v, const char* what) {
  const int levels = levels_for_branch_count(static_cast<std::size_t>(v.size()));
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (!(v[k] > 0.0)) {
      throw ValidationError(std::string(what) + "[" + to_string(branch_at(static_cast<std::size_t>(k))) +
                            "] must be > 0, got " + std::to_string(v[k]));
    }
  }
  return levels;
}

}  // namespace detail

/// Cumulative ratios: xi(i,j) is the product of x along path_to(i,j).
inline Vector xi_from_x(const Vector& x) {
  const int levels = detail::checked_levels_for(x, "x");
  Vector xi(x.size());
  for (int i = 1; i <= levels; ++i) {
    for (int j = 1; j <= (1 << i); ++j) {
      const auto k = static_cast<Eigen::Index>(flat_index({i, j}));
      xi[k] = x[k] * (i == 1 ? 1.0 : xi[static_cast<Eigen::Index>(flat_index(parent({i, j})))]);
    }
  }
  return xi;
}

inline Vector x_from_xi(const Vector& xi) {
  const int levels = detail::checked_levels_for(xi, "xi");
  Vector x(xi.size());
  for (int i = 1; i <= levels; ++i) {
    for (int j = 1; j <= (1 << i); ++j) {
      const auto k = static_cast<Eigen::Index>(flat_index({i, j}));
      x[k] = xi[k] / (i == 1 ? 1.0 : xi[static_cast<Eigen::Index>(flat_index(parent({i, j})))]);
    }
  }
  return x;
}

}  // namespace dyadic
