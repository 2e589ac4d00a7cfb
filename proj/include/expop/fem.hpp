#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <functional>
#include <iosfwd>
#include <string>

#include "expop/grid.hpp"
#include "expop/haar.hpp"
#include "expop/randfield.hpp"

namespace expop {

/// Compressed row storage.
using SparseMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class Boundary {
  eliminate,  ///< interior dofs only (the space V_h)
  keep,       ///< all nodes, lexicographic over {0..2^J}^d
};

/// Q1 stiffness of a_omega on the fine grid; the coefficient is taken
/// constant per fine element (value at the element midpoint).
SparseMat assemble_stiffness(const CoeffSample& sample, const FineGrid& fine,
                             Boundary boundary = Boundary::eliminate);
SparseMat assemble_mass(const FineGrid& fine, Boundary boundary = Boundary::eliminate);

/// Load vector of a piecewise constant right-hand side, integrated exactly.
Eigen::VectorXd load_vector(const FineGrid& fine, const PiecewiseConstant& f);

double energy_norm(const SparseMat& K, const FineFunction& v);

struct SolveResult {
  FineFunction x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = true;
};

/// Unpreconditioned CG from zero; not converging is reported, not thrown.
SolveResult solve_dirichlet(const SparseMat& K, const Eigen::VectorXd& rhs, double tol = 1e-10,
                            int maxit = 100000);

/// Exact L2 distance between a fine Q1 function and a piecewise constant
/// on a level no finer than the fine grid.
double l2_distance(const FineGrid& fine, const FineFunction& u, const PiecewiseConstant& c);
/// L2 distance between a function of position and a piecewise constant,
/// by tensor Gauss-Legendre quadrature with `points` nodes per direction on
/// each element of `c`.
double l2_distance(const std::function<double(const Point&)>& u, const PiecewiseConstant& c,
                   int points = 3);
/// L2 norm of the gradient of a fine Q1 function.
double h1_seminorm(const FineGrid& fine, const FineFunction& v);

void write_matrix_market(std::ostream& os, const SparseMat& A, const std::string& comment = {});
SparseMat read_matrix_market(std::istream& is);
void write_vector_csv(std::ostream& os, const Eigen::VectorXd& v);
Eigen::VectorXd read_vector_csv(std::istream& is);

}  // namespace expop
