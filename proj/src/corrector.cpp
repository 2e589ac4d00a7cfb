#include "expop/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace expop {

namespace {

// Enumerates the multi-indices of a box [lo, hi) (first coordinate fastest).
template <class F>
void for_box(int d, const MultiIndex& lo, const MultiIndex& hi, F&& f) {
  std::int64_t count = 1;
  for (int k = 0; k < d; ++k) {
    if (hi[k] <= lo[k]) return;
    count *= hi[k] - lo[k];
  }
  for (std::int64_t q = 0; q < count; ++q) {
    MultiIndex m{};
    std::int64_t rem = q;
    for (int k = 0; k < d; ++k) {
      const int ext = hi[k] - lo[k];
      m[k] = lo[k] + static_cast<int>(rem % ext);
      rem /= ext;
    }
    f(m);
  }
}

// Fine element multi-index range covered by a coarse element.
void fine_range(const FineGrid& fine, const ElementId& e, MultiIndex& lo, MultiIndex& hi) {
  const int c = 1 << (fine.level() - e.level);
  for (int k = 0; k < fine.dim(); ++k) {
    lo[k] = e.m[k] * c;
    hi[k] = (e.m[k] + 1) * c;
  }
}

}  // namespace

MeanZeroConstraint build_constraint(const HierGrid& grid, const FineGrid& fine, int level,
                                    Boundary boundary) {
  if (level < 0 || level > grid.max_level()) throw LevelOutOfRange("build_constraint: bad level");
  if (level > fine.level()) throw LevelOutOfRange("build_constraint: level finer than fine grid");
  const int d = fine.dim();
  const double w = std::pow(fine.h(), d) / (1 << d);
  const std::int64_t cols = boundary == Boundary::eliminate ? fine.num_dofs() : fine.num_nodes();
  std::vector<Eigen::Triplet<double>> trip;
  for (std::int64_t e = 0; e < fine.num_elements(); ++e) {
    const auto row = fine.coarse_element(e, level);
    const auto m = fine.element_index(e);
    for (int j = 0; j < (1 << d); ++j) {
      MultiIndex node = m;
      for (int k = 0; k < d; ++k) node[k] += (j >> k) & 1;
      std::int64_t col = -1;
      if (boundary == Boundary::eliminate) {
        col = fine.dof(node);
      } else {
        col = 0;
        for (int k = d - 1; k >= 0; --k) col = col * (fine.cells_per_dim() + 1) + node[k];
      }
      if (col >= 0) trip.emplace_back(row, col, w);
    }
  }
  MeanZeroConstraint c;
  c.level = level;
  c.B.resize(grid.count(level), cols);
  c.B.setFromTriplets(trip.begin(), trip.end());
  c.B.makeCompressed();
  return c;
}

std::vector<std::int64_t> patch_dofs(const HierGrid& grid, const FineGrid& fine,
                                     const ElementId& elem) {
  if (!grid.valid(elem)) throw std::invalid_argument("patch_dofs: invalid element");
  const int d = fine.dim();
  const int c = 1 << (fine.level() - elem.level);
  const int n = HierGrid::per_dim(elem.level);
  MultiIndex lo{}, hi{};
  for (int k = 0; k < d; ++k) {
    lo[k] = std::max(0, elem.m[k] - 1) * c + 1;
    hi[k] = (std::min(n - 1, elem.m[k] + 1) + 1) * c;  // exclusive
  }
  std::vector<std::int64_t> dofs;
  for_box(d, lo, hi, [&](const MultiIndex& node) { dofs.push_back(fine.dof(node)); });
  return dofs;
}

std::vector<std::int64_t> support_elements(const FineGrid& fine, const FineFunction& v, int level) {
  const int d = fine.dim();
  const int c = 1 << (fine.level() - level);
  const int n = 1 << level;
  std::vector<std::int64_t> out;
  for (std::int64_t i = 0; i < v.size(); ++i) {
    if (v[i] == 0.0) continue;
    const auto node = fine.dof_node(i);
    MultiIndex lo{}, hi{};
    for (int k = 0; k < d; ++k) {
      const int q = node[k] / c;
      lo[k] = (node[k] % c == 0) ? std::max(0, q - 1) : q;
      hi[k] = std::min(n, q + 1);
    }
    for_box(d, lo, hi, [&](const MultiIndex& m) {
      std::int64_t idx = 0;
      for (int k = d - 1; k >= 0; --k) idx = idx * n + m[k];
      out.push_back(idx);
    });
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

PatchProblem::PatchProblem(const HierGrid& grid, const FineGrid& fine, const SparseMat& K,
                           const ElementId& elem) {
  const int d = fine.dim();
  if (fine.level() <= elem.level)
    throw LevelOutOfRange("PatchProblem: fine grid too coarse for level " +
                          std::to_string(elem.level));
  dofs_ = patch_dofs(grid, fine, elem);
  for (const auto& p : grid.patch(elem)) elements_.push_back(grid.linear(p));
  const auto n_loc = static_cast<Eigen::Index>(dofs_.size());
  auto local = [&](std::int64_t g) -> Eigen::Index {
    auto it = std::lower_bound(dofs_.begin(), dofs_.end(), g);
    return (it != dofs_.end() && *it == g) ? it - dofs_.begin() : -1;
  };

  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index i = 0; i < n_loc; ++i)
    for (SparseMat::InnerIterator it(K, dofs_[i]); it; ++it) {
      const auto j = local(it.col());
      if (j >= 0) trip.emplace_back(i, j, it.value());
    }
  Eigen::SparseMatrix<double> K_loc(n_loc, n_loc);
  K_loc.setFromTriplets(trip.begin(), trip.end());
  chol_.compute(K_loc);
  if (chol_.info() != Eigen::Success)
    throw SingularLocalSystem("patch stiffness is not positive definite");

  const double w = std::pow(fine.h(), d) / (1 << d);
  B_loc_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(elements_.size()), n_loc);
  for (std::size_t r = 0; r < elements_.size(); ++r) {
    MultiIndex lo{}, hi{};
    fine_range(fine, grid.element(elem.level, elements_[r]), lo, hi);
    for_box(d, lo, hi, [&](const MultiIndex& m) {
      for (auto g : fine.element_dofs(fine.element_linear(m))) {
        if (g < 0) continue;
        const auto j = local(g);
        if (j >= 0) B_loc_(static_cast<Eigen::Index>(r), j) += w;
      }
    });
  }
  G_ = chol_.solve(Eigen::MatrixXd(B_loc_.transpose()));
  const Eigen::MatrixXd schur = B_loc_ * G_;
  schur_.compute(schur);
  const double dmax = schur.diagonal().maxCoeff();
  Eigen::VectorXd piv = Eigen::MatrixXd(schur_.matrixL()).diagonal();
  if (schur_.info() != Eigen::Success || piv.minCoeff() * piv.minCoeff() <= 1e-14 * dmax)
    throw SingularLocalSystem("patch constraint matrix is rank deficient");
}

Eigen::VectorXd PatchProblem::solve(const Eigen::VectorXd& r_loc) const {
  const Eigen::VectorXd y = chol_.solve(r_loc);
  const Eigen::VectorXd mu = schur_.solve(B_loc_ * y);
  return y - G_ * mu;
}

Corrector::Corrector(const HierGrid& grid, const FineGrid& fine, const SparseMat& K)
    : grid_(grid), fine_(fine), K_(K) {
  if (grid.dim() != fine.dim()) throw std::invalid_argument("Corrector: dimension mismatch");
  if (K.rows() != fine.num_dofs()) throw std::invalid_argument("Corrector: stiffness size mismatch");
  levels_.resize(grid.max_level() + 1);
}

Corrector::Level& Corrector::level_data(int level) {
  if (level < 0 || level > grid_.max_level()) throw LevelOutOfRange("Corrector: bad level");
  auto& slot = levels_[level];
  if (!slot) {
    auto lv = std::make_unique<Level>();
    lv->constraint = build_constraint(grid_, fine_, level);
    for (std::int64_t t = 0; t < grid_.count(level); ++t)
      lv->patches.push_back(
          std::make_unique<PatchProblem>(grid_, fine_, K_, grid_.element(level, t)));
    std::vector<Eigen::Triplet<double>> trip;
    for (std::int64_t t = 0; t < grid_.count(level); ++t) {
      const auto b = element_bubble(grid_, fine_, level, t);
      for (Eigen::Index i = 0; i < b.size(); ++i)
        if (b[i] != 0.0) trip.emplace_back(i, t, b[i]);
    }
    lv->bubbles.resize(fine_.num_dofs(), grid_.count(level));
    lv->bubbles.setFromTriplets(trip.begin(), trip.end());
    slot = std::move(lv);
  }
  return *slot;
}

void Corrector::release(int level) {
  if (level >= 0 && level < static_cast<int>(levels_.size())) levels_[level].reset();
}

void Corrector::remove_means(int level, FineFunction& z) {
  auto& lv = level_data(level);
  const Eigen::VectorXd means = (lv.constraint.B * z) / grid_.volume(level);
  z -= lv.bubbles * means;
}

FineFunction Corrector::local_projection(int level, std::int64_t elem,
                                         const Eigen::VectorXd& residual) {
  if (residual.size() != fine_.num_dofs())
    throw std::invalid_argument("local_projection: residual size mismatch");
  const auto& p = *level_data(level).patches.at(elem);
  Eigen::VectorXd r_loc(static_cast<Eigen::Index>(p.dofs().size()));
  for (std::size_t i = 0; i < p.dofs().size(); ++i) r_loc[i] = residual[p.dofs()[i]];
  FineFunction w = FineFunction::Zero(fine_.num_dofs());
  if (r_loc.isZero(0.0)) return w;
  const auto w_loc = p.solve(r_loc);
  for (std::size_t i = 0; i < p.dofs().size(); ++i) w[p.dofs()[i]] = w_loc[i];
  return w;
}

FineFunction Corrector::preconditioner_apply(int level, const Eigen::VectorXd& residual) {
  if (residual.size() != fine_.num_dofs())
    throw std::invalid_argument("preconditioner_apply: residual size mismatch");
  auto& lv = level_data(level);
  FineFunction z = FineFunction::Zero(fine_.num_dofs());
  Eigen::VectorXd r_loc;
  for (const auto& p : lv.patches) {
    const auto& dofs = p->dofs();
    r_loc.resize(static_cast<Eigen::Index>(dofs.size()));
    bool any = false;
    for (std::size_t i = 0; i < dofs.size(); ++i) {
      r_loc[i] = residual[dofs[i]];
      any = any || r_loc[i] != 0.0;
    }
    if (!any) continue;
    const auto w_loc = p->solve(r_loc);
    for (std::size_t i = 0; i < dofs.size(); ++i) z[dofs[i]] += w_loc[i];
  }
  remove_means(level, z);
  return z;
}

CorrectorResult Corrector::corrector_apply(int level, const FineFunction& u, int k) {
  if (k < 0) throw std::invalid_argument("corrector_apply: negative iteration count");
  if (u.size() != fine_.num_dofs()) throw std::invalid_argument("corrector_apply: size mismatch");
  CorrectorResult out;
  out.value = FineFunction::Zero(fine_.num_dofs());
  if (k == 0) {
    out.relative_residual = 1.0;
    return out;
  }
  Eigen::VectorXd r = K_ * u;
  FineFunction z = preconditioner_apply(level, r);
  double rz = r.dot(z);
  const double rz0 = rz;
  if (rz <= 0.0) return out;  // u is already a-orthogonal to W_l
  FineFunction p = z;
  Eigen::VectorXd q(u.size());
  for (int it = 1; it <= k; ++it) {
    q.noalias() = K_ * p;
    const double pq = p.dot(q);
    if (!(pq > 0.0)) break;
    const double alpha = rz / pq;
    out.value += alpha * p;
    r -= alpha * q;
    out.iterations = it;
    z = preconditioner_apply(level, r);
    const double rz_new = r.dot(z);
    out.relative_residual = std::sqrt(std::max(0.0, rz_new) / rz0);
    if (it == k || rz_new <= 0.0) break;
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  return out;
}

LocalizedBasis build_localized_basis(Corrector& corrector, const HaarBasis& basis, int k,
                                     std::int64_t sample_index) {
  const auto& grid = corrector.grid();
  const auto& fine = corrector.fine();
  if (basis.grid().max_level() != grid.max_level() || basis.grid().dim() != grid.dim())
    throw std::invalid_argument("build_localized_basis: basis/grid mismatch");
  LocalizedBasis lb;
  lb.sample_index = sample_index;
  lb.iterations = k;
  const auto n = static_cast<std::size_t>(basis.size());
  lb.vectors.resize(n);
  lb.energy.resize(n);
  lb.support.resize(n);
  lb.residual.resize(n);
  lb.level.resize(n);
  for (int l = 0; l <= grid.max_level(); ++l) {
    for (std::int64_t i = basis.level_offset(l); i < basis.level_offset(l + 1); ++i) {
      const FineFunction lift = bubble_lift(basis.as_piecewise(i), grid, fine);
      const auto corr = corrector.corrector_apply(l, lift, k);
      FineFunction b = lift - corr.value;
      const double e = energy_norm(corrector.stiffness(), b);
      b /= e;
      lb.support[i] = support_elements(fine, b, l);
      lb.vectors[i] = std::move(b);
      lb.energy[i] = e;
      lb.residual[i] = corr.relative_residual;
      lb.level[i] = l;
    }
    corrector.release(l);
  }
  return lb;
}

}  // namespace expop
