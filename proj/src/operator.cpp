#include "expop/operator.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <sstream>
#include <string>

namespace expop {

namespace {

bool intersects(const std::vector<std::int64_t>& a, const std::vector<std::int64_t>& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) return true;
    if (*i < *j)
      ++i;
    else
      ++j;
  }
  return false;
}

Block from_dense(const Eigen::MatrixXd& X) {
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index c = 0; c < X.cols(); ++c)
    for (Eigen::Index r = 0; r < X.rows(); ++r)
      if (X(r, c) != 0.0) trip.emplace_back(r, c, X(r, c));
  Block B(X.rows(), X.cols());
  B.setFromTriplets(trip.begin(), trip.end());
  return B;
}

}  // namespace

BlockMat::BlockMat(std::vector<std::int64_t> level_sizes)
    : sizes_(std::move(level_sizes)), blocks_(sizes_.size() * sizes_.size()) {}

BlockMat BlockMat::like(const HaarBasis& basis) {
  std::vector<std::int64_t> sizes;
  for (int l = 0; l <= basis.grid().max_level(); ++l) sizes.push_back(basis.level_size(l));
  return BlockMat(std::move(sizes));
}

std::int64_t BlockMat::offset(int l) const {
  std::int64_t off = 0;
  for (int i = 0; i < l; ++i) off += sizes_.at(i);
  return off;
}

std::int64_t BlockMat::size() const { return offset(levels()); }

std::size_t BlockMat::slot(int k, int l) const {
  if (k < 0 || l < 0 || k >= levels() || l >= levels())
    throw std::out_of_range("BlockMat: block index out of range");
  return static_cast<std::size_t>(k) * sizes_.size() + static_cast<std::size_t>(l);
}

bool BlockMat::has(int k, int l) const { return blocks_[slot(k, l)].has_value(); }

const Block& BlockMat::block(int k, int l) const {
  const auto& b = blocks_[slot(k, l)];
  if (!b) throw std::out_of_range("BlockMat: block not stored");
  return *b;
}

Block& BlockMat::block(int k, int l) {
  auto& b = blocks_[slot(k, l)];
  if (!b) throw std::out_of_range("BlockMat: block not stored");
  return *b;
}

void BlockMat::set(int k, int l, Block b) {
  if (b.rows() != sizes_.at(k) || b.cols() != sizes_.at(l))
    throw std::invalid_argument("BlockMat: block shape does not match level sizes");
  b.makeCompressed();
  blocks_[slot(k, l)] = std::move(b);
}

void BlockMat::erase(int k, int l) { blocks_[slot(k, l)].reset(); }

std::vector<std::pair<int, int>> BlockMat::stored() const {
  std::vector<std::pair<int, int>> out;
  for (int k = 0; k < levels(); ++k)
    for (int l = 0; l < levels(); ++l)
      if (has(k, l)) out.emplace_back(k, l);
  return out;
}

std::int64_t BlockMat::nnz() const {
  std::int64_t n = 0;
  for (const auto& b : blocks_)
    if (b) n += b->nonZeros();
  return n;
}

SparseMat BlockMat::to_global() const {
  std::vector<Eigen::Triplet<double>> trip;
  for (auto [k, l] : stored()) {
    const auto& b = block(k, l);
    const auto r0 = offset(k), c0 = offset(l);
    for (int c = 0; c < b.outerSize(); ++c)
      for (Block::InnerIterator it(b, c); it; ++it)
        trip.emplace_back(r0 + it.row(), c0 + it.col(), it.value());
  }
  SparseMat A(size(), size());
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  return A;
}

Eigen::MatrixXd BlockMat::to_dense() const { return Eigen::MatrixXd(to_global()); }

Eigen::VectorXd BlockMat::multiply(const Eigen::VectorXd& x) const {
  if (x.size() != size()) throw std::invalid_argument("BlockMat::multiply: size mismatch");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(size());
  for (auto [k, l] : stored())
    y.segment(offset(k), sizes_[k]) += block(k, l) * x.segment(offset(l), sizes_[l]);
  return y;
}

double haar_distance(std::int64_t i, std::int64_t j, const HaarBasis& basis) {
  const auto& g = basis.grid();
  const auto pi = g.midpoint(basis[i].parent);
  const auto pj = g.midpoint(basis[j].parent);
  double s = 0.0;
  for (int k = 0; k < g.dim(); ++k) s += (pi[k] - pj[k]) * (pi[k] - pj[k]);
  return std::sqrt(s) / HierGrid::h(std::min(basis[i].level, basis[j].level));
}

BlockMat assemble_S_delta(const LocalizedBasis& lbasis, const HaarBasis& basis, const SparseMat& K) {
  if (static_cast<std::int64_t>(lbasis.vectors.size()) != basis.size())
    throw std::invalid_argument("assemble_S_delta: basis/sample mismatch");
  BlockMat S = BlockMat::like(basis);
  for (int l = 0; l < S.levels(); ++l) {
    const auto off = basis.level_offset(l);
    const auto n = basis.level_size(l);
    std::vector<Eigen::VectorXd> Kb(static_cast<std::size_t>(n));
    for (std::int64_t j = 0; j < n; ++j) {
      if (lbasis.vectors[off + j].size() != K.rows())
        throw std::invalid_argument("assemble_S_delta: vector/stiffness mismatch");
      Kb[j] = K * lbasis.vectors[off + j];
    }
    std::vector<Eigen::Triplet<double>> trip;
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t i = 0; i <= j; ++i) {
        if (!intersects(lbasis.support[off + i], lbasis.support[off + j])) continue;
        const double v = lbasis.vectors[off + i].dot(Kb[j]);
        trip.emplace_back(i, j, v);
        if (i != j) trip.emplace_back(j, i, v);
      }
    Block b(n, n);
    b.setFromTriplets(trip.begin(), trip.end());
    S.set(l, l, std::move(b));
  }
  return S;
}

Block invert_block_cg(const Block& S, int k) {
  // squared residual at which the column is solved to machine precision
  constexpr double kConverged = 1e-32;
  if (S.rows() != S.cols()) throw std::invalid_argument("invert_block_cg: block not square");
  if (k < 1) throw std::invalid_argument("invert_block_cg: need at least one CG step");
  const auto n = S.rows();
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd r(n), p(n), q(n);
  for (Eigen::Index col = 0; col < n; ++col) {
    auto x = X.col(col);
    r.setZero();
    r[col] = 1.0;
    p = r;
    double rr = 1.0;
    for (int it = 0; it < k; ++it) {
      q.noalias() = S * p;
      const double pq = p.dot(q);
      if (!(pq > 0.0)) {
        std::ostringstream msg;
        msg << "invert_block_cg: non-positive curvature " << pq << " in column " << col
            << " at step " << it + 1 << " (block size " << n << ")";
        throw NotPositiveDefinite(msg.str());
      }
      const double alpha = rr / pq;
      x += alpha * p;
      r -= alpha * q;
      const double rr_new = r.squaredNorm();
      if (rr_new <= kConverged) break;
      p = r + (rr_new / rr) * p;
      rr = rr_new;
    }
  }
  const Eigen::MatrixXd Xs = 0.5 * (X + X.transpose());
  return from_dense(Xs);
}

BlockMat invert_blocks_cg(const BlockMat& S, int k) {
  BlockMat R(S.level_sizes());
  for (int l = 0; l < S.levels(); ++l)
    if (S.has(l, l)) R.set(l, l, invert_block_cg(S.block(l, l), k));
  return R;
}

BlockMat assemble_T_delta(const LocalizedBasis& lbasis, const HaarBasis& basis,
                          const FineGrid& fine) {
  if (static_cast<std::int64_t>(lbasis.vectors.size()) != basis.size())
    throw std::invalid_argument("assemble_T_delta: basis mismatch");
  BlockMat T = BlockMat::like(basis);
  const int levels = T.levels();
  // triplets per (row level, column level)
  std::vector<std::vector<Eigen::Triplet<double>>> trip(static_cast<std::size_t>(levels * levels));
  for (std::int64_t j = 0; j < basis.size(); ++j) {
    const int lj = basis[j].level;
    const auto beta = haar_analyze(fine, lbasis.vectors[j], basis);
    for (std::int64_t i = basis.level_offset(lj); i < basis.size(); ++i) {
      if (beta[i] == 0.0) continue;
      const int li = basis[i].level;
      trip[li * levels + lj].emplace_back(i - basis.level_offset(li), j - basis.level_offset(lj),
                                          beta[i]);
    }
  }
  for (int k = 0; k < levels; ++k)
    for (int l = 0; l <= k; ++l) {
      Block b(T.level_size(k), T.level_size(l));
      auto& t = trip[k * levels + l];
      b.setFromTriplets(t.begin(), t.end());
      T.set(k, l, std::move(b));
    }
  return T;
}

BlockMat per_sample_Y(const BlockMat& T, const BlockMat& R, const LevelPredicate& keep) {
  if (T.level_sizes() != R.level_sizes())
    throw std::invalid_argument("per_sample_Y: shape mismatch");
  BlockMat Y(T.level_sizes());
  const int levels = T.levels();
  for (int l = 0; l < levels; ++l)
    for (int k = l; k < levels; ++k) {
      if (!keep(l, k)) continue;
      Block acc(T.level_size(l), T.level_size(k));
      for (int j = 0; j <= l; ++j) {
        if (!T.has(l, j) || !T.has(k, j) || !R.has(j, j)) continue;
        const Block TR = T.block(l, j) * R.block(j, j);
        const Block Tk_t = T.block(k, j).transpose();
        acc += Block(TR * Tk_t);
      }
      if (k != l && keep(k, l)) Y.set(k, l, Block(acc.transpose()));
      Y.set(l, k, std::move(acc));
    }
  return Y;
}

void write_block_mat(std::ostream& mm, std::ostream& sidecar_json, const BlockMat& A) {
  write_matrix_market(mm, A.to_global(), " block matrix, global Haar indexing");
  nlohmann::json j;
  j["level_sizes"] = A.level_sizes();
  std::vector<std::int64_t> offsets;
  for (int l = 0; l <= A.levels(); ++l) offsets.push_back(A.offset(l));
  j["level_offsets"] = offsets;
  nlohmann::json blocks = nlohmann::json::array();
  for (auto [k, l] : A.stored()) blocks.push_back({k, l});
  j["blocks"] = blocks;
  j["nnz"] = A.nnz();
  sidecar_json << j.dump(2) << '\n';
}

BlockMat read_block_mat(std::istream& mm, std::istream& sidecar_json) {
  const auto j = nlohmann::json::parse(sidecar_json);
  BlockMat A(j.at("level_sizes").get<std::vector<std::int64_t>>());
  const SparseMat G = read_matrix_market(mm);
  if (G.rows() != A.size() || G.cols() != A.size())
    throw std::runtime_error("read_block_mat: matrix size does not match sidecar");
  for (const auto& kl : j.at("blocks")) {
    const int k = kl.at(0).get<int>();
    const int l = kl.at(1).get<int>();
    const auto r0 = A.offset(k), c0 = A.offset(l);
    std::vector<Eigen::Triplet<double>> trip;
    for (std::int64_t r = 0; r < A.level_size(k); ++r)
      for (SparseMat::InnerIterator it(G, r0 + r); it; ++it)
        if (it.col() >= c0 && it.col() < c0 + A.level_size(l))
          trip.emplace_back(r, it.col() - c0, it.value());
    Block b(A.level_size(k), A.level_size(l));
    b.setFromTriplets(trip.begin(), trip.end());
    A.set(k, l, std::move(b));
  }
  return A;
}

double condition_number(const Block& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(S), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  if (ev.minCoeff() <= 0.0) return std::numeric_limits<double>::infinity();
  return ev.maxCoeff() / ev.minCoeff();
}

}  // namespace expop
