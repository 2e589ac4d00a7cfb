#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace expop {

inline constexpr int kMaxDim = 3;

using MultiIndex = std::array<int, kMaxDim>;
using Point = std::array<double, kMaxDim>;

/// Element of the dyadic hierarchy: level plus lexicographic multi-index
/// (first coordinate fastest).
struct ElementId {
  int level = 0;
  MultiIndex m{};

  friend bool operator==(const ElementId&, const ElementId&) = default;
};

class LevelOutOfRange : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Nested uniform Cartesian hierarchy T_0, ..., T_L on [0,1]^d with h_l = 2^-l.
class HierGrid {
 public:
  HierGrid(int dim, int max_level);

  int dim() const { return dim_; }
  int max_level() const { return max_level_; }

  static double h(int level);
  /// Elements per coordinate direction on a level.
  static int per_dim(int level) { return 1 << level; }
  std::int64_t count(int level) const;

  std::int64_t linear(const ElementId& e) const;
  ElementId element(int level, std::int64_t linear_index) const;
  bool valid(const ElementId& e) const;

  /// The 2^d elements of T_{l+1} inside `e`, lexicographic order.
  std::vector<ElementId> children(const ElementId& e) const;
  ElementId parent(const ElementId& e) const;
  /// Ancestor (or self) of `e` on a coarser level.
  ElementId ancestor(const ElementId& e, int level) const;

  /// Same-level elements whose closures meet the closure of `e` (including `e`).
  std::vector<ElementId> patch(const ElementId& e) const;
  /// Closure of a set of same-level elements under `patch`, `rings` times.
  std::vector<std::int64_t> expand(int level, const std::vector<std::int64_t>& elems,
                                   int rings) const;

  Point midpoint(const ElementId& e) const;
  double volume(int level) const;

 private:
  void check_level(int level) const;

  int dim_;
  int max_level_;
};

/// Fine discretization grid with mesh width 2^-J and zero boundary trace.
///
/// Nodes are addressed by multi-indices in {0..2^J}^d; interior nodes
/// (all coordinates in 1..2^J-1) carry degrees of freedom, numbered
/// lexicographically. Fine elements are numbered lexicographically over
/// {0..2^J-1}^d.
class FineGrid {
 public:
  FineGrid(int dim, int fine_level);

  int dim() const { return dim_; }
  int level() const { return level_; }
  double h() const { return h_; }
  int cells_per_dim() const { return 1 << level_; }
  std::int64_t num_dofs() const { return num_dofs_; }
  std::int64_t num_elements() const { return num_elements_; }
  /// Number of nodes including the boundary.
  std::int64_t num_nodes() const;

  /// Dof number of a node, or -1 for boundary nodes.
  std::int64_t dof(const MultiIndex& node) const;
  MultiIndex dof_node(std::int64_t dof) const;
  Point node_point(const MultiIndex& node) const;

  MultiIndex element_index(std::int64_t elem) const;
  std::int64_t element_linear(const MultiIndex& m) const;
  Point element_midpoint(std::int64_t elem) const;

  /// Dofs of the 2^d vertices of a fine element (-1 for boundary vertices),
  /// vertex j has offset bit k of j in direction k.
  std::array<std::int64_t, 1 << kMaxDim> element_dofs(std::int64_t elem) const;

  /// Linear index of the level-`level` element containing fine element `elem`.
  std::int64_t coarse_element(std::int64_t elem, int level) const;

 private:
  int dim_;
  int level_;
  double h_;
  std::int64_t num_dofs_;
  std::int64_t num_elements_;
};

}  // namespace expop
