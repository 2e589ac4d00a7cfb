#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

#include "expop/grid.hpp"

namespace expop {

/// Coefficient vector of a d-linear function on the interior dofs of a FineGrid.
using FineFunction = Eigen::VectorXd;

/// Function that is constant on each element of one hierarchy level.
struct PiecewiseConstant {
  int dim = 1;
  int level = 0;
  Eigen::VectorXd values;  ///< one value per element, lexicographic
};

struct HaarFunction {
  std::int64_t index = 0;
  int level = 0;
  /// Support element: in T_{l-1} for l >= 1, in T_0 for l = 0.
  ElementId parent;
  /// Sign pattern: bit k set means the function flips sign across the
  /// midplane normal to direction k. Zero only for level-0 indicators.
  int kind = 0;
  double l2norm = 1.0;
};

/// The L2-orthogonal Haar basis on the dyadic hierarchy, ordered by level,
/// then parent element, then kind.
class HaarBasis {
 public:
  explicit HaarBasis(const HierGrid& grid);

  const HierGrid& grid() const { return grid_; }
  std::int64_t size() const { return static_cast<std::int64_t>(functions_.size()); }
  const HaarFunction& operator[](std::int64_t i) const { return functions_[i]; }
  const std::vector<HaarFunction>& functions() const { return functions_; }

  std::int64_t level_offset(int level) const { return offsets_[level]; }
  std::int64_t level_size(int level) const { return offsets_[level + 1] - offsets_[level]; }
  int kinds_per_parent() const { return (1 << grid_.dim()) - 1; }
  std::int64_t index(int level, std::int64_t parent_linear, int kind) const;

  /// Sign (+1/-1) of a kind on the child with offset bits `child_offset`.
  static double sign(int kind, int child_offset);
  /// phi_i as a piecewise constant on its own level (unnormalized, values in {0, +-1}).
  PiecewiseConstant as_piecewise(std::int64_t i) const;

 private:
  HierGrid grid_;
  std::vector<HaarFunction> functions_;
  std::vector<std::int64_t> offsets_;
};

HaarBasis build_haar(const HierGrid& grid);

/// Element integrals of a fine function over the elements of level `level`.
Eigen::VectorXd element_integrals(const FineGrid& fine, const FineFunction& v, int level);

/// L2 projection onto piecewise constants on T_level (element means).
PiecewiseConstant project_pc(const FineGrid& fine, const FineFunction& v, int level);
/// Change of level for a piecewise constant: averages when coarsening,
/// copies when refining.
PiecewiseConstant project_pc(const PiecewiseConstant& v, int level);

/// beta_i = (v, phi_i) / ||phi_i|| for the piecewise-constant Pi_L v.
Eigen::VectorXd haar_analyze(const PiecewiseConstant& v, const HaarBasis& basis);
Eigen::VectorXd haar_analyze(const FineGrid& fine, const FineFunction& v,
                             const HaarBasis& basis);
/// sum_i beta_i phi_i / ||phi_i|| on T_L.
PiecewiseConstant haar_synthesize(const Eigen::VectorXd& beta, const HaarBasis& basis);

/// Tensor-product hat on element `linear_elem` of `level`, scaled to unit mean.
FineFunction element_bubble(const HierGrid& grid, const FineGrid& fine, int level,
                            std::int64_t linear_elem);
/// sum_T (Pi_l phi)|_T * bubble_T; requires fine.level() > phi.level.
FineFunction bubble_lift(const PiecewiseConstant& phi, const HierGrid& grid, const FineGrid& fine);

/// Interpolate a function of position at the interior nodes.
template <class F>
FineFunction interpolate(const FineGrid& fine, F&& f) {
  FineFunction v(fine.num_dofs());
  for (std::int64_t i = 0; i < fine.num_dofs(); ++i) v[i] = f(fine.node_point(fine.dof_node(i)));
  return v;
}

}  // namespace expop
