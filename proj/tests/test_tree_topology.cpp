#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "dyadic/tree_topology.hpp"

using namespace dyadic;

namespace {

// brute force: largest bit where a and b differ, plus one
int nu_oracle(std::uint64_t a, std::uint64_t b) {
  int k = 0;
  for (int bit = 0; bit < 64; ++bit) {
    if (((a >> bit) & 1u) != ((b >> bit) & 1u)) k = bit + 1;
  }
  return k;
}

}  // namespace

TEST(BranchSet, SmallestTree) {
  EXPECT_EQ(branch_set(1), (std::vector<BranchIndex>{{1, 1}, {1, 2}}));
}

TEST(BranchSet, TwoLevels) {
  const std::vector<BranchIndex> want{{1, 1}, {1, 2}, {2, 1}, {2, 2}, {2, 3}, {2, 4}};
  EXPECT_EQ(branch_set(2), want);
  EXPECT_EQ(branch_count(2), 6u);
}

TEST(BranchSet, FourLevelsHasThirtyBranches) { EXPECT_EQ(branch_set(4).size(), 30u); }

TEST(BranchSet, RejectsZeroLevels) { EXPECT_THROW(branch_set(0), ValidationError); }

TEST(BranchSet, FlatIndexMatchesEnumerationOrder) {
  const auto all = branch_set(6);
  for (std::size_t k = 0; k < all.size(); ++k) {
    EXPECT_EQ(flat_index(all[k]), k);
    EXPECT_EQ(branch_at(k), all[k]);
  }
}

TEST(Parent, CeilHalfAgreesWithChildrenMap) {
  for (int i = 1; i < 8; ++i) {
    for (int j = 1; j <= (1 << i); ++j) {
      const auto [l, r] = children({i, j});
      EXPECT_EQ(parent(l), (BranchIndex{i, j}));
      EXPECT_EQ(parent(r), (BranchIndex{i, j}));
      // ceil(j/2) written directly
      EXPECT_EQ(parent(l).position, (l.position + 1) / 2);
      EXPECT_EQ(parent(r).position, static_cast<int>(std::ceil(r.position / 2.0)));
    }
  }
  EXPECT_THROW(parent({1, 2}), ValidationError);
}

TEST(PathTo, FirstOutletOfTwoLevelTree) {
  EXPECT_EQ(path_to({2, 1}), (Path{{1, 1}, {2, 1}}));
}

TEST(PathTo, LevelOneBranchIsItsOwnPath) { EXPECT_EQ(path_to({1, 2}), (Path{{1, 2}})); }

TEST(PathTo, ThreeSix) { EXPECT_EQ(path_to({3, 6}), (Path{{1, 2}, {2, 3}, {3, 6}})); }

TEST(PathTo, LengthAndTerminalAndParentChain) {
  for (const auto& b : branch_set(6)) {
    const Path p = path_to(b);
    ASSERT_EQ(p.size(), static_cast<std::size_t>(b.level));
    EXPECT_EQ(p.back(), b);
    for (std::size_t k = 1; k < p.size(); ++k) EXPECT_EQ(parent(p[k]), p[k - 1]);
  }
}

TEST(PathTo, RejectsInvalidIndex) {
  EXPECT_THROW(path_to({2, 5}), ValidationError);
  EXPECT_THROW(path_to({0, 1}), ValidationError);
}

TEST(Subpath, Prefixes) {
  EXPECT_EQ(subpath({{1, 1}, {2, 1}}, 1), (Path{{1, 1}}));
  EXPECT_TRUE(subpath(path_to({4, 9}), 0).empty());
  EXPECT_EQ(subpath({{1, 2}, {2, 3}, {3, 6}}, 2), (Path{{1, 2}, {2, 3}}));
  EXPECT_THROW(subpath(path_to({2, 1}), 3), ValidationError);
}

TEST(Nu, Examples) {
  EXPECT_EQ(nu(0, 0), 0);
  EXPECT_EQ(nu(1, 2), 2);
  EXPECT_EQ(nu(5, 7), 2);
}

TEST(Nu, MatchesBitOracleAndIsSymmetric) {
  for (std::uint64_t a = 0; a < 70; ++a) {
    EXPECT_EQ(nu(a, a), 0);
    for (std::uint64_t b = 0; b < 70; ++b) {
      EXPECT_EQ(nu(a, b), nu_oracle(a, b));
      EXPECT_EQ(nu(a, b), nu(b, a));
    }
  }
}

TEST(Nu, SubpathIsPathIntersection) {
  for (int n = 1; n <= 6; ++n) {
    for (int i = 1; i <= (1 << n); ++i) {
      const Path pi = path_to({n, i});
      const std::set<BranchIndex> si(pi.begin(), pi.end());
      for (int j = 1; j <= (1 << n); ++j) {
        const Path pj = path_to({n, j});
        std::set<BranchIndex> common;
        for (const auto& b : pj) {
          if (si.count(b)) common.insert(b);
        }
        const Path sub = subpath(pi, static_cast<std::size_t>(n - nu(i - 1, j - 1)));
        EXPECT_EQ(std::set<BranchIndex>(sub.begin(), sub.end()), common) << n << " " << i << " " << j;
      }
    }
  }
}

TEST(AncestorPosition, AgreesWithPath) {
  const int n = 5;
  for (int o = 1; o <= (1 << n); ++o) {
    const Path p = path_to({n, o});
    for (int k = 1; k <= n; ++k) EXPECT_EQ(ancestor_position(n, o, k), p[static_cast<std::size_t>(k - 1)].position);
  }
}

TEST(ChangeOfVariables, UnitRatios) {
  EXPECT_TRUE(xi_from_x(Vector::Ones(14)).isApprox(Vector::Ones(14)));
  EXPECT_TRUE(x_from_xi(Vector::Ones(14)).isApprox(Vector::Ones(14)));
}

TEST(ChangeOfVariables, ProductAlongPath) {
  Vector x = Vector::Ones(6);
  x[0] = 0.7;  // (1,1)
  x[2] = 0.3;  // (2,1)
  const Vector xi = xi_from_x(x);
  EXPECT_DOUBLE_EQ(xi[flat_index({2, 1})], 0.7 * 0.3);
  // (1,2) is not on the path to (2,1)
  x[1] = 5.0;
  EXPECT_DOUBLE_EQ(xi_from_x(x)[flat_index({2, 1})], 0.7 * 0.3);
}

TEST(ChangeOfVariables, RatioAlongPath) {
  Vector xi = Vector::Ones(6);
  xi[0] = 0.5;
  xi[2] = 0.25;
  EXPECT_DOUBLE_EQ(x_from_xi(xi)[flat_index({2, 1})], 0.5);
}

TEST(ChangeOfVariables, RoundTripsOnRandomVectors) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(0.05, 3.0);
  for (int n = 1; n <= 7; ++n) {
    Vector x(static_cast<Eigen::Index>(branch_count(n)));
    for (auto& v : x) v = d(rng);
    const Vector back = x_from_xi(xi_from_x(x));
    EXPECT_LE(((back - x).array().abs() / x.array()).maxCoeff(), 1e-12);
    const Vector xi = x;
    const Vector back2 = xi_from_x(x_from_xi(xi));
    EXPECT_LE(((back2 - xi).array().abs() / xi.array()).maxCoeff(), 1e-12);
  }
}

TEST(ChangeOfVariables, RejectsNonPositive) {
  Vector x = Vector::Ones(6);
  x[3] = 0.0;
  EXPECT_THROW(xi_from_x(x), ValidationError);
  x[3] = -1.0;
  EXPECT_THROW(x_from_xi(x), ValidationError);
  EXPECT_THROW(xi_from_x(Vector::Ones(5)), ValidationError);
}
