#pragma once

// Poiseuille resistance networks on dyadic trees.
//
// Branch (i, j) carries resistance r0 / xi(i,j); the root pipe carries r0.
// With q the outlet flows and p the outlet pressures,
//     p0 * u - p = A(xi) q,
// where A is the symmetric positive definite resistance matrix.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dyadic/errors.hpp"
#include "dyadic/tree_topology.hpp"

namespace dyadic {

struct NetworkLimits {
  /// Largest level count accepted by dense matrix assembly (4096 x 4096 at 12).
  int max_levels = 12;
  /// Ratios below this are rejected as degenerate branches.
  double xi_min = 1e-12;
};

class TreeGeometry {
 public:
  TreeGeometry(double r0, Vector xi, std::optional<double> root_radius = std::nullopt,
               std::optional<double> root_length = std::nullopt, const NetworkLimits& limits = {})
      : r0_(r0), xi_(std::move(xi)), root_radius_(root_radius), root_length_(root_length) {
    levels_ = levels_for_branch_count(static_cast<std::size_t>(xi_.size()));
    if (!(r0_ > 0.0) || !std::isfinite(r0_)) {
      throw ValidationError("r0 must be a positive finite resistance, got " + std::to_string(r0_));
    }
    for (Eigen::Index k = 0; k < xi_.size(); ++k) {
      const double v = xi_[k];
      const auto b = branch_at(static_cast<std::size_t>(k));
      if (!std::isfinite(v) || !(v > 0.0)) {
        throw ValidationError("xi[" + to_string(b) + "] must be positive and finite, got " +
                              std::to_string(v));
      }
      if (v < limits.xi_min) {
        throw ValidationError("degenerate branch: xi[" + to_string(b) + "] = " + std::to_string(v) +
                              " is below the floor " + std::to_string(limits.xi_min));
      }
    }
    if (root_radius_ && !(*root_radius_ > 0.0)) throw ValidationError("R0 must be > 0");
    if (root_length_ && !(*root_length_ > 0.0)) throw ValidationError("L0 must be > 0");
  }

  int levels() const { return levels_; }
  double r0() const { return r0_; }
  const Vector& xi() const { return xi_; }
  double xi(const BranchIndex& b) const { return xi_[static_cast<Eigen::Index>(flat_index(b))]; }
  double resistance(const BranchIndex& b) const { return r0_ / xi(b); }
  std::optional<double> root_radius() const { return root_radius_; }
  std::optional<double> root_length() const { return root_length_; }
  std::size_t outlets() const { return outlet_count(levels_); }

 private:
  int levels_ = 0;
  double r0_ = 1.0;
  Vector xi_;
  std::optional<double> root_radius_;
  std::optional<double> root_length_;
};

/// Parents (i,j) whose larger daughter ratio exceeds xi(i,j), i.e. where radii
/// fail to decrease down the tree.
inline std::vector<BranchIndex> monotonicity_violations(const TreeGeometry& g) {
  std::vector<BranchIndex> bad;
  for (int i = 1; i < g.levels(); ++i) {
    for (int j = 1; j <= (1 << i); ++j) {
      const auto [left, right] = children({i, j});
      if (std::max(g.xi(left), g.xi(right)) > g.xi({i, j})) bad.push_back({i, j});
    }
  }
  return bad;
}

/// Branch flows over B_N from outlet flows by conservation at every node.
inline Vector propagate_flows(const Vector& outlet_flows) {
  const int levels = levels_for_outlet_count(static_cast<std::size_t>(outlet_flows.size()));
  Vector q(static_cast<Eigen::Index>(branch_count(levels)));
  q.segment(static_cast<Eigen::Index>(level_offset(levels)), outlet_flows.size()) = outlet_flows;
  for (int i = levels - 1; i >= 1; --i) {
    for (int j = 1; j <= (1 << i); ++j) {
      const auto [left, right] = children({i, j});
      q[static_cast<Eigen::Index>(flat_index({i, j}))] =
          q[static_cast<Eigen::Index>(flat_index(left))] + q[static_cast<Eigen::Index>(flat_index(right))];
    }
  }
  return q;
}

namespace detail {

inline void require_outlet_vector(const TreeGeometry& g, const Vector& v, const char* name) {
  if (static_cast<std::size_t>(v.size()) != g.outlets()) {
    throw ValidationError(std::string(name) + " has length " + std::to_string(v.size()) +
                          ", expected 2^N = " + std::to_string(g.outlets()));
  }
}

inline void require_assembly_cap(int levels, const NetworkLimits& limits) {
  if (levels > limits.max_levels) {
    throw ValidationError("level count " + std::to_string(levels) + " exceeds the assembly cap " +
                          std::to_string(limits.max_levels));
  }
}

}  // namespace detail

/// Entry (i, j) is r0 plus the resistances of the branches shared by the
/// root-to-outlet paths of outlets i and j. The shared part is the first
/// N - nu(i-1, j-1) branches of either path.
inline Matrix resistance_matrix(const TreeGeometry& g, const NetworkLimits& limits = {}) {
  const int n_levels = g.levels();
  detail::require_assembly_cap(n_levels, limits);
  const auto n = static_cast<Eigen::Index>(g.outlets());

  // prefix(s, i): sum of 1/xi over the first s branches of outlet i's path
  Matrix prefix = Matrix::Zero(n_levels + 1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int s = 1; s <= n_levels; ++s) {
      const BranchIndex b{s, ancestor_position(n_levels, static_cast<int>(i) + 1, s)};
      prefix(s, i) = prefix(s - 1, i) + 1.0 / g.xi(b);
    }
  }

  Matrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a(i, i) = g.r0() * (1.0 + prefix(n_levels, i));
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const int shared = n_levels - nu(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      a(i, j) = g.r0() * (1.0 + prefix(shared, i));
      a(j, i) = a(i, j);
    }
  }
  return a;
}

/// Throws NumericalDegeneracyError if unpivoted Cholesky fails.
inline void require_positive_definite(const Matrix& a) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) {
    throw NumericalDegeneracyError("resistance matrix failed Cholesky factorization");
  }
}

/// Limit of eps * A(xi_eps) / r0 along the pipe-collapse geometry: the
/// resistance matrix of the tree in which branches on the path to outlet 1
/// have resistance 0, all others 1, and the root contributes nothing.
inline Matrix tilde_a1(int levels) {
  require_levels(levels);
  const auto n = static_cast<Eigen::Index>(outlet_count(levels));
  Matrix a = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const int shared = levels - nu(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      int count = 0;
      for (int k = 1; k <= shared; ++k) {
        if (ancestor_position(levels, static_cast<int>(i) + 1, k) != 1) ++count;
      }
      a(i, j) = count;
    }
  }
  return a;
}

struct MixedSystem {
  Matrix matrix;
  Vector rhs;
};

/// System M q = b for outlet flows given outlet pressures p and inlet flow
/// phi. Rows 1..2^N-1 are (A v_i)^T with v_i = e_i - e_{i+1}; the last row
/// is u^T. Independent of the inlet pressure.
inline MixedSystem mixed_system(const TreeGeometry& g, const Vector& outlet_pressures, double phi,
                                const NetworkLimits& limits = {}) {
  detail::require_outlet_vector(g, outlet_pressures, "outlet pressures");
  const Matrix a = resistance_matrix(g, limits);
  const auto n = a.rows();
  MixedSystem sys{Matrix(n, n), Vector(n)};
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    sys.matrix.row(i) = a.row(i) - a.row(i + 1);
    sys.rhs[i] = -(outlet_pressures[i] - outlet_pressures[i + 1]);
  }
  sys.matrix.row(n - 1).setOnes();
  sys.rhs[n - 1] = phi;
  return sys;
}

struct VolumeReport {
  /// 1 + sum(xi): tree volume in units of the root pipe volume.
  double dimensionless = 1.0;
  /// pi R0^2 L0 * dimensionless, when both root dimensions are known (m^3).
  std::optional<double> physical;
};

inline VolumeReport volume(const TreeGeometry& g) {
  VolumeReport v{1.0 + g.xi().sum(), std::nullopt};
  if (g.root_radius() && g.root_length()) {
    v.physical = std::numbers::pi * *g.root_radius() * *g.root_radius() * *g.root_length() * v.dimensionless;
  }
  return v;
}

/// q^T A(xi) q.
inline double energy_quadratic(const Vector& outlet_flows, const TreeGeometry& g,
                               const NetworkLimits& limits = {}) {
  detail::require_outlet_vector(g, outlet_flows, "outlet flows");
  return outlet_flows.dot(resistance_matrix(g, limits) * outlet_flows);
}

/// r0 Phi^2 + sum over branches of r0 q(i,j)^2 / xi(i,j).
inline double energy_branchwise(const Vector& outlet_flows, const TreeGeometry& g) {
  detail::require_outlet_vector(g, outlet_flows, "outlet flows");
  const Vector q = propagate_flows(outlet_flows);
  const double phi = outlet_flows.sum();
  return g.r0() * (phi * phi + (q.array().square() / g.xi().array()).sum());
}

}  // namespace dyadic
