#include "expop/fem.hpp"

#include <array>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace expop {

namespace {

constexpr int kMaxVerts = 1 << kMaxDim;
using ElementMatrix = std::array<std::array<double, kMaxVerts>, kMaxVerts>;

// Tensor-product Q1 element matrices on a cube of side h.
ElementMatrix reference_stiffness(int d, double h) {
  const double m1[2][2] = {{h / 3.0, h / 6.0}, {h / 6.0, h / 3.0}};
  const double s1[2][2] = {{1.0 / h, -1.0 / h}, {-1.0 / h, 1.0 / h}};
  ElementMatrix K{};
  for (int a = 0; a < (1 << d); ++a)
    for (int b = 0; b < (1 << d); ++b) {
      double sum = 0.0;
      for (int k = 0; k < d; ++k) {
        double prod = 1.0;
        for (int m = 0; m < d; ++m) {
          const int am = (a >> m) & 1, bm = (b >> m) & 1;
          prod *= (m == k) ? s1[am][bm] : m1[am][bm];
        }
        sum += prod;
      }
      K[a][b] = sum;
    }
  return K;
}

ElementMatrix reference_mass(int d, double h) {
  const double m1[2][2] = {{h / 3.0, h / 6.0}, {h / 6.0, h / 3.0}};
  ElementMatrix M{};
  for (int a = 0; a < (1 << d); ++a)
    for (int b = 0; b < (1 << d); ++b) {
      double prod = 1.0;
      for (int m = 0; m < d; ++m) prod *= m1[(a >> m) & 1][(b >> m) & 1];
      M[a][b] = prod;
    }
  return M;
}

// Global indices of the element vertices under the chosen numbering.
std::array<std::int64_t, kMaxVerts> vertex_indices(const FineGrid& fine, std::int64_t e,
                                                   Boundary boundary) {
  if (boundary == Boundary::eliminate) return fine.element_dofs(e);
  const auto m = fine.element_index(e);
  const std::int64_t n = fine.cells_per_dim() + 1;
  std::array<std::int64_t, kMaxVerts> out{};
  out.fill(-1);
  for (int j = 0; j < (1 << fine.dim()); ++j) {
    std::int64_t idx = 0;
    for (int k = fine.dim() - 1; k >= 0; --k) idx = idx * n + (m[k] + ((j >> k) & 1));
    out[j] = idx;
  }
  return out;
}

template <class CoefFn>
SparseMat assemble(const FineGrid& fine, const ElementMatrix& ref, Boundary boundary,
                   CoefFn&& coef) {
  const int d = fine.dim();
  const std::int64_t n = boundary == Boundary::eliminate ? fine.num_dofs() : fine.num_nodes();
  if (n == 0) throw std::invalid_argument("assemble: empty grid");
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(fine.num_elements()) << (2 * d));
  for (std::int64_t e = 0; e < fine.num_elements(); ++e) {
    const double c = coef(e);
    const auto idx = vertex_indices(fine, e, boundary);
    for (int a = 0; a < (1 << d); ++a) {
      if (idx[a] < 0) continue;
      for (int b = 0; b < (1 << d); ++b)
        if (idx[b] >= 0) trip.emplace_back(idx[a], idx[b], c * ref[a][b]);
    }
  }
  SparseMat A(n, n);
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  return A;
}

struct Gauss {
  std::vector<double> x, w;  // on [0,1]
};

Gauss gauss_legendre(int points) {
  switch (points) {
    case 1:
      return {{0.5}, {1.0}};
    case 2: {
      const double a = 0.5 / std::sqrt(3.0);
      return {{0.5 - a, 0.5 + a}, {0.5, 0.5}};
    }
    case 3: {
      const double a = 0.5 * std::sqrt(0.6);
      return {{0.5 - a, 0.5, 0.5 + a}, {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0}};
    }
    case 4: {
      const double r = std::sqrt(6.0 / 5.0);
      const double x1 = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * r), x2 = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * r);
      const double w1 = (18.0 + std::sqrt(30.0)) / 36.0, w2 = (18.0 - std::sqrt(30.0)) / 36.0;
      return {{0.5 - 0.5 * x2, 0.5 - 0.5 * x1, 0.5 + 0.5 * x1, 0.5 + 0.5 * x2},
              {0.5 * w2, 0.5 * w1, 0.5 * w1, 0.5 * w2}};
    }
    default:
      throw std::invalid_argument("gauss_legendre: 1..4 points supported");
  }
}

}  // namespace

SparseMat assemble_stiffness(const CoeffSample& sample, const FineGrid& fine, Boundary boundary) {
  if (fine.level() < sample.eps_level)
    throw std::invalid_argument("assemble_stiffness: fine grid does not resolve epsilon");
  return assemble(fine, reference_stiffness(fine.dim(), fine.h()), boundary,
                  [&](std::int64_t e) { return coeff_on_fine_element(sample, fine, e); });
}

SparseMat assemble_mass(const FineGrid& fine, Boundary boundary) {
  return assemble(fine, reference_mass(fine.dim(), fine.h()), boundary,
                  [](std::int64_t) { return 1.0; });
}

Eigen::VectorXd load_vector(const FineGrid& fine, const PiecewiseConstant& f) {
  if (f.dim != fine.dim()) throw std::invalid_argument("load_vector: dimension mismatch");
  if (f.level > fine.level()) throw std::invalid_argument("load_vector: rhs finer than fine grid");
  const int d = fine.dim();
  const double w = std::pow(fine.h(), d) / (1 << d);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(fine.num_dofs());
  for (std::int64_t e = 0; e < fine.num_elements(); ++e) {
    const double val = f.values[fine.coarse_element(e, f.level)];
    if (val == 0.0) continue;
    for (auto dof : fine.element_dofs(e))
      if (dof >= 0) b[dof] += w * val;
  }
  return b;
}

double energy_norm(const SparseMat& K, const FineFunction& v) {
  if (v.size() != K.rows()) throw std::invalid_argument("energy_norm: size mismatch");
  return std::sqrt(std::max(0.0, v.dot(K * v)));
}

SolveResult solve_dirichlet(const SparseMat& K, const Eigen::VectorXd& rhs, double tol, int maxit) {
  if (rhs.size() != K.rows()) throw std::invalid_argument("solve_dirichlet: size mismatch");
  SolveResult out;
  out.x = Eigen::VectorXd::Zero(rhs.size());
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) return out;
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd p = r;
  Eigen::VectorXd q(rhs.size());
  double rr = r.squaredNorm();
  const double stop = tol * tol * bnorm * bnorm;
  int it = 0;
  while (it < maxit && rr > stop) {
    q.noalias() = K * p;
    const double alpha = rr / p.dot(q);
    out.x += alpha * p;
    r -= alpha * q;
    const double rr_new = r.squaredNorm();
    p = r + (rr_new / rr) * p;
    rr = rr_new;
    ++it;
  }
  out.iterations = it;
  out.relative_residual = (rhs - K * out.x).norm() / bnorm;
  out.converged = rr <= stop;
  return out;
}

double l2_distance(const FineGrid& fine, const FineFunction& u, const PiecewiseConstant& c) {
  if (c.level > fine.level()) throw std::invalid_argument("l2_distance: level finer than grid");
  const int d = fine.dim();
  const auto g = gauss_legendre(2);
  const int nq = 1 << d;  // 2 points per direction
  const double vol = std::pow(fine.h(), d);
  double sum = 0.0;
  for (std::int64_t e = 0; e < fine.num_elements(); ++e) {
    const auto dofs = fine.element_dofs(e);
    const double cv = c.values[fine.coarse_element(e, c.level)];
    for (int q = 0; q < nq; ++q) {
      double w = vol, val = 0.0;
      std::array<double, kMaxDim> x{};
      for (int k = 0; k < d; ++k) {
        x[k] = g.x[(q >> k) & 1];
        w *= g.w[(q >> k) & 1];
      }
      for (int a = 0; a < (1 << d); ++a) {
        if (dofs[a] < 0) continue;
        double shape = 1.0;
        for (int k = 0; k < d; ++k) shape *= ((a >> k) & 1) ? x[k] : 1.0 - x[k];
        val += shape * u[dofs[a]];
      }
      sum += w * (val - cv) * (val - cv);
    }
  }
  return std::sqrt(sum);
}

double l2_distance(const std::function<double(const Point&)>& u, const PiecewiseConstant& c,
                   int points) {
  const int d = c.dim;
  const auto g = gauss_legendre(points);
  HierGrid grid(d, c.level);
  const double hl = HierGrid::h(c.level);
  const double vol = grid.volume(c.level);
  int nq = 1;
  for (int k = 0; k < d; ++k) nq *= points;
  double sum = 0.0;
  for (std::int64_t t = 0; t < grid.count(c.level); ++t) {
    const auto e = grid.element(c.level, t);
    for (int q = 0; q < nq; ++q) {
      Point x{};
      double w = vol;
      int code = q;
      for (int k = 0; k < d; ++k) {
        const int i = code % points;
        code /= points;
        x[k] = (e.m[k] + g.x[i]) * hl;
        w *= g.w[i];
      }
      const double diff = u(x) - c.values[t];
      sum += w * diff * diff;
    }
  }
  return std::sqrt(sum);
}

double h1_seminorm(const FineGrid& fine, const FineFunction& v) {
  const int d = fine.dim();
  const auto K = reference_stiffness(d, fine.h());
  double sum = 0.0;
  for (std::int64_t e = 0; e < fine.num_elements(); ++e) {
    const auto dofs = fine.element_dofs(e);
    std::array<double, kMaxVerts> ve{};
    for (int a = 0; a < (1 << d); ++a) ve[a] = dofs[a] >= 0 ? v[dofs[a]] : 0.0;
    for (int a = 0; a < (1 << d); ++a)
      for (int b = 0; b < (1 << d); ++b) sum += ve[a] * K[a][b] * ve[b];
  }
  return std::sqrt(std::max(0.0, sum));
}

void write_matrix_market(std::ostream& os, const SparseMat& A, const std::string& comment) {
  std::ostringstream out;
  out.precision(17);
  out << "%%MatrixMarket matrix coordinate real general\n";
  if (!comment.empty()) out << '%' << comment << '\n';
  out << A.rows() << ' ' << A.cols() << ' ' << A.nonZeros() << '\n';
  for (int r = 0; r < A.outerSize(); ++r)
    for (SparseMat::InnerIterator it(A, r); it; ++it)
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
  os << out.str();
}

SparseMat read_matrix_market(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("%%MatrixMarket matrix coordinate real", 0) != 0)
    throw std::runtime_error("matrix market: unsupported header");
  const bool symmetric = line.find("symmetric") != std::string::npos;
  do {
    if (!std::getline(is, line)) throw std::runtime_error("matrix market: missing size line");
  } while (!line.empty() && line[0] == '%');
  std::istringstream size(line);
  std::int64_t rows = 0, cols = 0, nnz = 0;
  size >> rows >> cols >> nnz;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(nnz);
  for (std::int64_t k = 0; k < nnz; ++k) {
    std::int64_t i = 0, j = 0;
    double v = 0.0;
    if (!(is >> i >> j >> v)) throw std::runtime_error("matrix market: truncated entries");
    trip.emplace_back(i - 1, j - 1, v);
    if (symmetric && i != j) trip.emplace_back(j - 1, i - 1, v);
  }
  SparseMat A(rows, cols);
  A.setFromTriplets(trip.begin(), trip.end());
  A.makeCompressed();
  return A;
}

void write_vector_csv(std::ostream& os, const Eigen::VectorXd& v) {
  std::ostringstream out;
  out.precision(17);
  for (Eigen::Index i = 0; i < v.size(); ++i) out << v[i] << '\n';
  os << out.str();
}

Eigen::VectorXd read_vector_csv(std::istream& is) {
  std::vector<double> vals;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    vals.push_back(std::stod(line));
  }
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

}  // namespace expop
