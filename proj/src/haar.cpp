#include "expop/haar.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace expop {

HaarBasis::HaarBasis(const HierGrid& grid) : grid_(grid) {
  const int d = grid.dim();
  const int kinds = (1 << d) - 1;
  offsets_.push_back(0);
  for (std::int64_t t = 0; t < grid.count(0); ++t) {
    HaarFunction f;
    f.index = static_cast<std::int64_t>(functions_.size());
    f.level = 0;
    f.parent = grid.element(0, t);
    f.kind = 0;
    f.l2norm = std::sqrt(grid.volume(0));
    functions_.push_back(f);
  }
  offsets_.push_back(static_cast<std::int64_t>(functions_.size()));
  for (int l = 1; l <= grid.max_level(); ++l) {
    const double norm = std::sqrt(grid.volume(l - 1));
    for (std::int64_t t = 0; t < grid.count(l - 1); ++t) {
      for (int j = 1; j <= kinds; ++j) {
        HaarFunction f;
        f.index = static_cast<std::int64_t>(functions_.size());
        f.level = l;
        f.parent = grid.element(l - 1, t);
        f.kind = j;
        f.l2norm = norm;
        functions_.push_back(f);
      }
    }
    offsets_.push_back(static_cast<std::int64_t>(functions_.size()));
  }
}

std::int64_t HaarBasis::index(int level, std::int64_t parent_linear, int kind) const {
  if (level == 0) return parent_linear;
  return offsets_[level] + parent_linear * kinds_per_parent() + (kind - 1);
}

double HaarBasis::sign(int kind, int child_offset) {
  // parity of the bits shared by kind and offset
  int bits = kind & child_offset;
  int parity = 0;
  while (bits) {
    parity ^= bits & 1;
    bits >>= 1;
  }
  return parity ? -1.0 : 1.0;
}

PiecewiseConstant HaarBasis::as_piecewise(std::int64_t i) const {
  const auto& f = functions_.at(i);
  PiecewiseConstant pc{grid_.dim(), f.level, Eigen::VectorXd::Zero(grid_.count(f.level))};
  if (f.level == 0) {
    pc.values[grid_.linear(f.parent)] = 1.0;
    return pc;
  }
  const auto kids = grid_.children(f.parent);
  for (int c = 0; c < static_cast<int>(kids.size()); ++c)
    pc.values[grid_.linear(kids[c])] = sign(f.kind, c);
  return pc;
}

HaarBasis build_haar(const HierGrid& grid) { return HaarBasis(grid); }

Eigen::VectorXd element_integrals(const FineGrid& fine, const FineFunction& v, int level) {
  if (v.size() != fine.num_dofs()) throw std::invalid_argument("element_integrals: size mismatch");
  if (level < 0 || level > fine.level())
    throw LevelOutOfRange("element_integrals: level finer than the fine grid");
  const int d = fine.dim();
  const std::int64_t ncoarse = std::int64_t{1} << (d * level);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(ncoarse);
  const double w = std::pow(fine.h(), d) / (1 << d);
  for (std::int64_t e = 0; e < fine.num_elements(); ++e) {
    const auto dofs = fine.element_dofs(e);
    double s = 0.0;
    for (int j = 0; j < (1 << d); ++j)
      if (dofs[j] >= 0) s += v[dofs[j]];
    out[fine.coarse_element(e, level)] += w * s;
  }
  return out;
}

PiecewiseConstant project_pc(const FineGrid& fine, const FineFunction& v, int level) {
  PiecewiseConstant pc{fine.dim(), level, element_integrals(fine, v, level)};
  pc.values /= std::pow(HierGrid::h(level), fine.dim());
  return pc;
}

PiecewiseConstant project_pc(const PiecewiseConstant& v, int level) {
  const int d = v.dim;
  HierGrid g(d, std::max(level, v.level));
  PiecewiseConstant out{d, level, Eigen::VectorXd::Zero(g.count(level))};
  if (level <= v.level) {
    const double scale = 1.0 / static_cast<double>(std::int64_t{1} << (d * (v.level - level)));
    for (std::int64_t i = 0; i < g.count(v.level); ++i) {
      const auto a = g.ancestor(g.element(v.level, i), level);
      out.values[g.linear(a)] += scale * v.values[i];
    }
  } else {
    for (std::int64_t i = 0; i < g.count(level); ++i) {
      const auto a = g.ancestor(g.element(level, i), v.level);
      out.values[i] = v.values[g.linear(a)];
    }
  }
  return out;
}

Eigen::VectorXd haar_analyze(const PiecewiseConstant& v, const HaarBasis& basis) {
  const auto& g = basis.grid();
  const int d = g.dim();
  const int L = g.max_level();
  if (v.dim != d) throw std::invalid_argument("haar_analyze: dimension mismatch");
  const auto vL = project_pc(v, L);
  // integrals over each level's elements, finest first
  std::vector<Eigen::VectorXd> integrals(L + 1);
  integrals[L] = vL.values * g.volume(L);
  for (int l = L - 1; l >= 0; --l) {
    integrals[l] = Eigen::VectorXd::Zero(g.count(l));
    for (std::int64_t i = 0; i < g.count(l + 1); ++i)
      integrals[l][g.linear(g.parent(g.element(l + 1, i)))] += integrals[l + 1][i];
  }
  Eigen::VectorXd beta(basis.size());
  for (std::int64_t t = 0; t < g.count(0); ++t) beta[t] = integrals[0][t] / basis[t].l2norm;
  const int kinds = basis.kinds_per_parent();
  for (int l = 1; l <= L; ++l) {
    for (std::int64_t p = 0; p < g.count(l - 1); ++p) {
      const auto kids = g.children(g.element(l - 1, p));
      for (int j = 1; j <= kinds; ++j) {
        double s = 0.0;
        for (int c = 0; c < static_cast<int>(kids.size()); ++c)
          s += HaarBasis::sign(j, c) * integrals[l][g.linear(kids[c])];
        const auto i = basis.index(l, p, j);
        beta[i] = s / basis[i].l2norm;
      }
    }
  }
  return beta;
}

Eigen::VectorXd haar_analyze(const FineGrid& fine, const FineFunction& v, const HaarBasis& basis) {
  return haar_analyze(project_pc(fine, v, basis.grid().max_level()), basis);
}

PiecewiseConstant haar_synthesize(const Eigen::VectorXd& beta, const HaarBasis& basis) {
  if (beta.size() != basis.size()) throw std::invalid_argument("haar_synthesize: length mismatch");
  const auto& g = basis.grid();
  const int d = g.dim();
  Eigen::VectorXd cur(g.count(0));
  for (std::int64_t t = 0; t < g.count(0); ++t) cur[t] = beta[t] / basis[t].l2norm;
  const int kinds = basis.kinds_per_parent();
  for (int l = 1; l <= g.max_level(); ++l) {
    Eigen::VectorXd next(g.count(l));
    for (std::int64_t p = 0; p < g.count(l - 1); ++p) {
      const auto kids = g.children(g.element(l - 1, p));
      for (int c = 0; c < static_cast<int>(kids.size()); ++c) {
        double val = cur[p];
        for (int j = 1; j <= kinds; ++j) {
          const auto i = basis.index(l, p, j);
          val += beta[i] * HaarBasis::sign(j, c) / basis[i].l2norm;
        }
        next[g.linear(kids[c])] = val;
      }
    }
    cur = std::move(next);
  }
  return {d, g.max_level(), cur};
}

FineFunction element_bubble(const HierGrid& grid, const FineGrid& fine, int level,
                            std::int64_t linear_elem) {
  if (fine.level() <= level)
    throw LevelOutOfRange("bubble: fine grid cannot host a bubble inside a level-" +
                          std::to_string(level) + " element");
  const int d = grid.dim();
  const auto e = grid.element(level, linear_elem);
  const int cells = 1 << (fine.level() - level);  // fine cells per element side
  FineFunction v = FineFunction::Zero(fine.num_dofs());
  const int half = cells / 2;
  const double scale = static_cast<double>(1 << d);
  // interior nodes of the element
  std::int64_t count = 1;
  for (int k = 0; k < d; ++k) count *= (cells - 1);
  for (std::int64_t q = 0; q < count; ++q) {
    std::int64_t rem = q;
    MultiIndex node{};
    double val = scale;
    for (int k = 0; k < d; ++k) {
      const int local = static_cast<int>(rem % (cells - 1)) + 1;
      rem /= (cells - 1);
      node[k] = e.m[k] * cells + local;
      val *= 1.0 - std::abs(local - half) / static_cast<double>(half);
    }
    const auto dof = fine.dof(node);
    if (dof >= 0) v[dof] = val;
  }
  return v;
}

FineFunction bubble_lift(const PiecewiseConstant& phi, const HierGrid& grid, const FineGrid& fine) {
  if (phi.dim != grid.dim() || phi.dim != fine.dim())
    throw std::invalid_argument("bubble_lift: dimension mismatch");
  if (fine.level() <= phi.level)
    throw LevelOutOfRange("bubble_lift: fine grid too coarse for level " +
                          std::to_string(phi.level));
  FineFunction v = FineFunction::Zero(fine.num_dofs());
  for (std::int64_t t = 0; t < phi.values.size(); ++t)
    if (phi.values[t] != 0.0) v += phi.values[t] * element_bubble(grid, fine, phi.level, t);
  return v;
}

}  // namespace expop
