#include "expop/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace expop {

namespace {

std::int64_t ipow(std::int64_t base, int e) {
  std::int64_t r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

}  // namespace

HierGrid::HierGrid(int dim, int max_level) : dim_(dim), max_level_(max_level) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("HierGrid: dimension must be 1..3");
  if (max_level < 0 || max_level > 20) throw std::invalid_argument("HierGrid: bad max level");
}

double HierGrid::h(int level) { return std::ldexp(1.0, -level); }

std::int64_t HierGrid::count(int level) const {
  check_level(level);
  return ipow(per_dim(level), dim_);
}

void HierGrid::check_level(int level) const {
  if (level < 0 || level > max_level_)
    throw LevelOutOfRange("level " + std::to_string(level) + " outside 0.." +
                          std::to_string(max_level_));
}

bool HierGrid::valid(const ElementId& e) const {
  if (e.level < 0 || e.level > max_level_) return false;
  const int n = per_dim(e.level);
  for (int k = 0; k < dim_; ++k)
    if (e.m[k] < 0 || e.m[k] >= n) return false;
  for (int k = dim_; k < kMaxDim; ++k)
    if (e.m[k] != 0) return false;
  return true;
}

std::int64_t HierGrid::linear(const ElementId& e) const {
  if (!valid(e)) throw std::invalid_argument("HierGrid: invalid element");
  const std::int64_t n = per_dim(e.level);
  std::int64_t idx = 0;
  for (int k = dim_ - 1; k >= 0; --k) idx = idx * n + e.m[k];
  return idx;
}

ElementId HierGrid::element(int level, std::int64_t linear_index) const {
  check_level(level);
  if (linear_index < 0 || linear_index >= count(level))
    throw std::out_of_range("HierGrid: element index out of range");
  ElementId e{level, {}};
  const std::int64_t n = per_dim(level);
  for (int k = 0; k < dim_; ++k) {
    e.m[k] = static_cast<int>(linear_index % n);
    linear_index /= n;
  }
  return e;
}

std::vector<ElementId> HierGrid::children(const ElementId& e) const {
  if (!valid(e)) throw std::invalid_argument("HierGrid: invalid element");
  if (e.level >= max_level_) throw LevelOutOfRange("children: element already on finest level");
  std::vector<ElementId> out;
  out.reserve(std::size_t{1} << dim_);
  for (int j = 0; j < (1 << dim_); ++j) {
    ElementId c{e.level + 1, {}};
    for (int k = 0; k < dim_; ++k) c.m[k] = 2 * e.m[k] + ((j >> k) & 1);
    out.push_back(c);
  }
  return out;
}

ElementId HierGrid::parent(const ElementId& e) const {
  if (!valid(e)) throw std::invalid_argument("HierGrid: invalid element");
  if (e.level == 0) throw LevelOutOfRange("parent: level-0 element has no parent");
  return ancestor(e, e.level - 1);
}

ElementId HierGrid::ancestor(const ElementId& e, int level) const {
  if (level < 0 || level > e.level) throw LevelOutOfRange("ancestor: bad level");
  ElementId a{level, {}};
  const int shift = e.level - level;
  for (int k = 0; k < dim_; ++k) a.m[k] = e.m[k] >> shift;
  return a;
}

std::vector<ElementId> HierGrid::patch(const ElementId& e) const {
  if (!valid(e)) throw std::invalid_argument("HierGrid: invalid element");
  const int n = per_dim(e.level);
  std::vector<ElementId> out;
  const int reps = static_cast<int>(ipow(3, dim_));
  for (int r = 0; r < reps; ++r) {
    ElementId k{e.level, {}};
    int code = r;
    bool inside = true;
    for (int c = 0; c < dim_; ++c) {
      k.m[c] = e.m[c] + (code % 3) - 1;
      code /= 3;
      if (k.m[c] < 0 || k.m[c] >= n) inside = false;
    }
    if (inside) out.push_back(k);
  }
  // Lexicographic order with first coordinate fastest.
  std::sort(out.begin(), out.end(), [this](const ElementId& a, const ElementId& b) {
    return linear(a) < linear(b);
  });
  return out;
}

std::vector<std::int64_t> HierGrid::expand(int level, const std::vector<std::int64_t>& elems,
                                           int rings) const {
  std::vector<std::int64_t> cur = elems;
  std::sort(cur.begin(), cur.end());
  cur.erase(std::unique(cur.begin(), cur.end()), cur.end());
  for (int r = 0; r < rings; ++r) {
    std::vector<std::int64_t> next;
    for (auto id : cur)
      for (const auto& k : patch(element(level, id))) next.push_back(linear(k));
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    cur = std::move(next);
  }
  return cur;
}

Point HierGrid::midpoint(const ElementId& e) const {
  if (!valid(e)) throw std::invalid_argument("HierGrid: invalid element");
  Point p{};
  const double hl = h(e.level);
  for (int k = 0; k < dim_; ++k) p[k] = (e.m[k] + 0.5) * hl;
  return p;
}

double HierGrid::volume(int level) const { return std::pow(h(level), dim_); }

FineGrid::FineGrid(int dim, int fine_level) : dim_(dim), level_(fine_level) {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("FineGrid: dimension must be 1..3");
  if (fine_level < 1 || fine_level > 20) throw std::invalid_argument("FineGrid: bad fine level");
  h_ = std::ldexp(1.0, -fine_level);
  num_dofs_ = ipow((1 << fine_level) - 1, dim);
  num_elements_ = ipow(1 << fine_level, dim);
}

std::int64_t FineGrid::num_nodes() const { return ipow(cells_per_dim() + 1, dim_); }

std::int64_t FineGrid::dof(const MultiIndex& node) const {
  const int n = cells_per_dim();
  std::int64_t idx = 0;
  for (int k = dim_ - 1; k >= 0; --k) {
    if (node[k] <= 0 || node[k] >= n) return -1;
    idx = idx * (n - 1) + (node[k] - 1);
  }
  return idx;
}

MultiIndex FineGrid::dof_node(std::int64_t dof) const {
  const int n = cells_per_dim() - 1;
  MultiIndex m{};
  for (int k = 0; k < dim_; ++k) {
    m[k] = static_cast<int>(dof % n) + 1;
    dof /= n;
  }
  return m;
}

Point FineGrid::node_point(const MultiIndex& node) const {
  Point p{};
  for (int k = 0; k < dim_; ++k) p[k] = node[k] * h_;
  return p;
}

MultiIndex FineGrid::element_index(std::int64_t elem) const {
  const int n = cells_per_dim();
  MultiIndex m{};
  for (int k = 0; k < dim_; ++k) {
    m[k] = static_cast<int>(elem % n);
    elem /= n;
  }
  return m;
}

std::int64_t FineGrid::element_linear(const MultiIndex& m) const {
  const std::int64_t n = cells_per_dim();
  std::int64_t idx = 0;
  for (int k = dim_ - 1; k >= 0; --k) idx = idx * n + m[k];
  return idx;
}

Point FineGrid::element_midpoint(std::int64_t elem) const {
  const auto m = element_index(elem);
  Point p{};
  for (int k = 0; k < dim_; ++k) p[k] = (m[k] + 0.5) * h_;
  return p;
}

std::array<std::int64_t, 1 << kMaxDim> FineGrid::element_dofs(std::int64_t elem) const {
  const auto m = element_index(elem);
  std::array<std::int64_t, 1 << kMaxDim> out{};
  out.fill(-1);
  for (int j = 0; j < (1 << dim_); ++j) {
    MultiIndex node = m;
    for (int k = 0; k < dim_; ++k) node[k] += (j >> k) & 1;
    out[j] = dof(node);
  }
  return out;
}

std::int64_t FineGrid::coarse_element(std::int64_t elem, int level) const {
  if (level > level_) throw LevelOutOfRange("coarse_element: level finer than fine grid");
  auto m = element_index(elem);
  const int shift = level_ - level;
  const std::int64_t n = std::int64_t{1} << level;
  std::int64_t idx = 0;
  for (int k = dim_ - 1; k >= 0; --k) idx = idx * n + (m[k] >> shift);
  return idx;
}

}  // namespace expop
