#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include "expop/corrector.hpp"
#include "expop/fem.hpp"
#include "expop/haar.hpp"

namespace expop {

using Block = Eigen::SparseMatrix<double>;

/// (L+1) x (L+1) grid of optional sparse blocks following the Haar level
/// structure; block (k, l) has #H_k rows and #H_l columns. Absent blocks are
/// structural zeros.
class BlockMat {
 public:
  BlockMat() = default;
  explicit BlockMat(std::vector<std::int64_t> level_sizes);
  static BlockMat like(const HaarBasis& basis);

  int levels() const { return static_cast<int>(sizes_.size()); }
  std::int64_t level_size(int l) const { return sizes_.at(l); }
  std::int64_t offset(int l) const;
  std::int64_t size() const;
  const std::vector<std::int64_t>& level_sizes() const { return sizes_; }

  bool has(int k, int l) const;
  const Block& block(int k, int l) const;
  Block& block(int k, int l);
  void set(int k, int l, Block b);
  void erase(int k, int l);
  /// Pairs (k, l) of stored blocks, row-major order.
  std::vector<std::pair<int, int>> stored() const;

  std::int64_t nnz() const;
  SparseMat to_global() const;
  Eigen::MatrixXd to_dense() const;
  /// y = A x in global indexing.
  Eigen::VectorXd multiply(const Eigen::VectorXd& x) const;

 private:
  std::size_t slot(int k, int l) const;
  std::vector<std::int64_t> sizes_;
  std::vector<std::optional<Block>> blocks_;
};

class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// dist(mid(phi_i), mid(phi_j)) / h_{min(lev i, lev j)}.
double haar_distance(std::int64_t i, std::int64_t j, const HaarBasis& basis);

/// Diagonal blocks a(b_j, b_i) of the normalized localized basis; pairs
/// with disjoint supports are structural zeros.
BlockMat assemble_S_delta(const LocalizedBasis& lbasis, const HaarBasis& basis, const SparseMat& K);

/// k CG steps per column on S x = e_i from x = 0, symmetrized.
Block invert_block_cg(const Block& S, int k);
BlockMat invert_blocks_cg(const BlockMat& S, int k);

/// T_ij = (b_j, phi_i / ||phi_i||) for lev(j) <= lev(i), with normalized b_j.
BlockMat assemble_T_delta(const LocalizedBasis& lbasis, const HaarBasis& basis,
                          const FineGrid& fine);

using LevelPredicate = std::function<bool(int, int)>;

/// Y_(l,k) = sum_{j <= min(l,k)} T_(l,j) R_(j,j) T_(k,j)^T for kept (l,k).
BlockMat per_sample_Y(const BlockMat& T, const BlockMat& R, const LevelPredicate& keep);

/// Global Matrix Market export; the sidecar records level sizes and stored blocks.
void write_block_mat(std::ostream& mm, std::ostream& sidecar_json, const BlockMat& A);
BlockMat read_block_mat(std::istream& mm, std::istream& sidecar_json);

/// Condition number of a symmetric block (dense eigenvalues).
double condition_number(const Block& S);

}  // namespace expop
