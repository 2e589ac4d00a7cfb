#pragma once

#include <Eigen/Core>
#include <Eigen/Cholesky>
#include <Eigen/SparseCholesky>

#include <stdexcept>

#include <cstdint>
#include <memory>
#include <vector>

#include "expop/fem.hpp"
#include "expop/grid.hpp"
#include "expop/haar.hpp"

namespace expop {

/// Rows are the elements of T_l, columns the fine dofs; (B v)_T = int_T v.
/// Its kernel is W_l = ker(Pi_l) restricted to V_h.
struct MeanZeroConstraint {
  int level = 0;
  SparseMat B;
};

MeanZeroConstraint build_constraint(const HierGrid& grid, const FineGrid& fine, int level,
                                    Boundary boundary = Boundary::eliminate);

/// Fine dofs interior to the patch D_T (sorted).
std::vector<std::int64_t> patch_dofs(const HierGrid& grid, const FineGrid& fine,
                                     const ElementId& elem);

/// Level-l elements touched by the nonzero dofs of v (closed elements).
std::vector<std::int64_t> support_elements(const FineGrid& fine, const FineFunction& v, int level);

class SingularLocalSystem : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Factorized saddle-point system of one patch:
///   [K_loc  B_loc^T] [w]   [r_loc]
///   [B_loc  0      ] [mu] = [0    ]
/// solved by a sparse Cholesky of K_loc and a dense Schur complement.
class PatchProblem {
 public:
  PatchProblem(const HierGrid& grid, const FineGrid& fine, const SparseMat& K,
               const ElementId& elem);

  const std::vector<std::int64_t>& dofs() const { return dofs_; }
  const std::vector<std::int64_t>& elements() const { return elements_; }
  /// Returns the local solution w for the local residual restriction.
  Eigen::VectorXd solve(const Eigen::VectorXd& r_loc) const;
  const Eigen::MatrixXd& local_constraint() const { return B_loc_; }

 private:
  std::vector<std::int64_t> dofs_;
  std::vector<std::int64_t> elements_;
  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> chol_;
  Eigen::MatrixXd B_loc_;  ///< rows: patch elements
  Eigen::MatrixXd G_;      ///< K_loc^{-1} B_loc^T
  Eigen::LLT<Eigen::MatrixXd> schur_;
};

struct CorrectorResult {
  FineFunction value;
  int iterations = 0;
  /// sqrt(r.Pr / r0.Pr0) after the last step (0 when converged exactly).
  double relative_residual = 0.0;
};

/// Corrector machinery for one coefficient sample: local Ritz projections
/// P_T onto W_T, the additive preconditioner P_l = sum_T P_T, and the
/// truncated corrector C_l^delta given by k PCG steps on W_l.
///
/// Patch factorizations are built lazily per level and cached.
class Corrector {
 public:
  Corrector(const HierGrid& grid, const FineGrid& fine, const SparseMat& K);

  const HierGrid& grid() const { return grid_; }
  const FineGrid& fine() const { return fine_; }
  const SparseMat& stiffness() const { return K_; }

  /// w in W_T with a(w, v) = r(v) for all v in W_T, extended by zero.
  FineFunction local_projection(int level, std::int64_t elem, const Eigen::VectorXd& residual);
  FineFunction preconditioner_apply(int level, const Eigen::VectorXd& residual);
  /// k steps of PCG for a(c, v) = a(u, v), v in W_l, from c = 0.
  CorrectorResult corrector_apply(int level, const FineFunction& u, int k);

  /// Drops the cached factorizations of a level.
  void release(int level);

 private:
  struct Level {
    std::vector<std::unique_ptr<PatchProblem>> patches;
    MeanZeroConstraint constraint;
    SparseMat bubbles;  ///< columns: unit-mean bubble of each element
  };
  Level& level_data(int level);
  void remove_means(int level, FineFunction& z);

  HierGrid grid_;
  FineGrid fine_;
  SparseMat K_;
  std::vector<std::unique_ptr<Level>> levels_;
};

/// Energy-normalized coefficient-adapted basis b_phi^delta for one sample.
struct LocalizedBasis {
  std::int64_t sample_index = 0;
  int iterations = 0;                       ///< PCG steps k used for every corrector
  std::vector<FineFunction> vectors;        ///< normalized, Haar ordering
  std::vector<double> energy;               ///< |||b||| before normalization (phi with values +-1)
  std::vector<std::vector<std::int64_t>> support;  ///< level-lev(i) elements, sorted
  std::vector<double> residual;             ///< final relative PCG residual
  std::vector<int> level;
};

LocalizedBasis build_localized_basis(Corrector& corrector, const HaarBasis& basis, int k,
                                     std::int64_t sample_index = 0);

}  // namespace expop
