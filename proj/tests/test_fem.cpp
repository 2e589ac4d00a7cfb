#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "expop/fem.hpp"

using namespace expop;

namespace {
CoeffSample constant_sample(int dim, double c) {
  auto s = unit_sample(dim);
  s.values *= c;
  return s;
}
}  // namespace

TEST_CASE("1D stiffness on h = 1/4") {
  const auto K = assemble_stiffness(unit_sample(1), FineGrid(1, 2));
  Eigen::Matrix3d expect;
  expect << 8, -4, 0, -4, 8, -4, 0, -4, 8;
  CHECK((Eigen::MatrixXd(K) - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("stiffness is linear in the coefficient and symmetric") {
  SamplePlan p;
  p.dim = 2;
  p.eps_level = 2;
  p.gamma_min = 0.5;
  p.gamma_max = 10;
  p.num_samples = 4;
  FineGrid fine(2, 3);
  auto s = draw_sample(p, 3);
  const SparseMat K = assemble_stiffness(s, fine);
  s.values *= 2.0;
  const SparseMat K2 = assemble_stiffness(s, fine);
  CHECK((Eigen::MatrixXd(K2) - 2.0 * Eigen::MatrixXd(K)).cwiseAbs().maxCoeff() <= 1e-12);
  const Eigen::MatrixXd D(K);
  CHECK((D - D.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * D.cwiseAbs().maxCoeff());
  CHECK(D.diagonal().minCoeff() > 0.0);
}

TEST_CASE("full stiffness annihilates constants") {
  for (int d = 1; d <= 2; ++d) {
    FineGrid fine(d, 3);
    const auto K = assemble_stiffness(unit_sample(d), fine, Boundary::keep);
    CHECK(K.rows() == fine.num_nodes());
    CHECK((K * Eigen::VectorXd::Ones(K.cols())).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("mass matrix") {
  const auto M = assemble_mass(FineGrid(1, 1));
  CHECK(M.rows() == 1);
  CHECK(M.coeff(0, 0) == doctest::Approx(1.0 / 3.0));
  FineGrid fine(2, 3);
  const auto Mk = assemble_mass(fine, Boundary::keep);
  const Eigen::VectorXd one = Eigen::VectorXd::Ones(Mk.rows());
  CHECK(one.dot(Mk * one) == doctest::Approx(1.0));
  // interpolant of x*y: integral of (xy)^2 for bilinear interpolant equals exact value 1/9
  Eigen::VectorXd xy(Mk.rows());
  const int n = fine.cells_per_dim() + 1;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) xy[j * n + i] = (double(i) / (n - 1)) * (double(j) / (n - 1));
  CHECK(xy.dot(Mk * xy) == doctest::Approx(1.0 / 9.0));
  const auto Mi = assemble_mass(fine);
  for (int t = 0; t < 10; ++t) {
    const Eigen::VectorXd x = Eigen::VectorXd::Random(Mi.rows());
    CHECK(x.dot(Mi * x) > 0.0);
  }
}

TEST_CASE("energy norm") {
  const auto K = assemble_stiffness(unit_sample(1), FineGrid(1, 1));
  const Eigen::VectorXd hat = Eigen::VectorXd::Ones(1);
  CHECK(energy_norm(K, hat) == doctest::Approx(2.0));
  CHECK(energy_norm(K, 2 * hat) == doctest::Approx(4.0));
  CHECK(energy_norm(K, 0 * hat) == 0.0);
}

TEST_CASE("Dirichlet solve reproduces x(1-x)/2") {
  for (int J = 4; J <= 7; ++J) {
    FineGrid fine(1, J);
    const auto K = assemble_stiffness(unit_sample(1), fine);
    const auto rhs = load_vector(fine, PiecewiseConstant{1, 0, Eigen::VectorXd::Ones(1)});
    const auto sol = solve_dirichlet(K, rhs);
    CHECK(sol.converged);
    double err = 0.0;
    for (std::int64_t i = 0; i < fine.num_dofs(); ++i) {
      const double x = fine.node_point(fine.dof_node(i))[0];
      err = std::max(err, std::abs(sol.x[i] - x * (1 - x) / 2));
    }
    // 1D linear elements are nodally exact here
    CHECK(err <= 1e-9);
  }
}

TEST_CASE("solver contract") {
  FineGrid fine(2, 3);
  SamplePlan p;
  p.dim = 2;
  p.eps_level = 3;
  p.gamma_min = 0.5;
  p.gamma_max = 10;
  p.num_samples = 2;
  const auto K = assemble_stiffness(draw_sample(p, 1), fine);
  CHECK(solve_dirichlet(K, Eigen::VectorXd::Zero(K.rows())).x.isZero());
  const Eigen::VectorXd b = Eigen::VectorXd::Random(K.rows());
  const auto sol = solve_dirichlet(K, b, 1e-10);
  CHECK((K * sol.x - b).norm() <= 1e-10 * b.norm() * 1.0001);
  const auto bad = solve_dirichlet(K, b, 1e-14, 2);
  CHECK_FALSE(bad.converged);
}

TEST_CASE("spectral bounds against the Laplacian") {
  FineGrid fine(2, 3);
  SamplePlan p;
  p.dim = 2;
  p.eps_level = 2;
  p.gamma_min = 0.5;
  p.gamma_max = 10;
  p.num_samples = 3;
  const auto K1 = assemble_stiffness(unit_sample(2), fine);
  const auto K = assemble_stiffness(draw_sample(p, 2), fine);
  for (int t = 0; t < 20; ++t) {
    const Eigen::VectorXd x = Eigen::VectorXd::Random(K.rows());
    const double a = x.dot(K * x), a1 = x.dot(K1 * x);
    CHECK(a >= 0.5 * a1 * (1 - 1e-12));
    CHECK(a <= 10.0 * a1 * (1 + 1e-12));
  }
}

TEST_CASE("L2 error of a smooth manufactured solution drops by four") {
  // -u'' = pi^2 sin(pi x) with u = sin(pi x); f as fine piecewise constants
  std::vector<double> errs;
  for (int J = 4; J <= 6; ++J) {
    FineGrid fine(1, J);
    const int n = fine.cells_per_dim();
    PiecewiseConstant f{1, J, Eigen::VectorXd(n)};
    for (int e = 0; e < n; ++e) {
      const double a = double(e) / n, b = double(e + 1) / n;
      f.values[e] = M_PI * (std::cos(M_PI * a) - std::cos(M_PI * b)) * n;
    }
    const auto K = assemble_stiffness(unit_sample(1), fine);
    const auto u = solve_dirichlet(K, load_vector(fine, f), 1e-13).x;
    // L2 distance to the exact solution by fine Gauss quadrature through the zero function
    double e2 = 0.0;
    const double h = fine.h();
    for (int e = 0; e < n; ++e)
      for (double q : {-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526}) {
        const double w = (std::abs(q) > 0.5 ? 0.3478548451374538 : 0.6521451548625461) * h / 2;
        const double x = (e + (q + 1) / 2) * h;
        const double ul = e == 0 ? 0.0 : u[e - 1];
        const double ur = e == n - 1 ? 0.0 : u[e];
        const double t = (q + 1) / 2;
        const double uh = (1 - t) * ul + t * ur;
        e2 += w * std::pow(uh - std::sin(M_PI * x), 2);
      }
    errs.push_back(std::sqrt(e2));
  }
  for (std::size_t i = 1; i < errs.size(); ++i) {
    CHECK(errs[i - 1] / errs[i] >= 4 * 0.8);
    CHECK(errs[i - 1] / errs[i] <= 4 * 1.2);
  }
}

TEST_CASE("exact L2 distance between a fine function and piecewise constants") {
  FineGrid fine(2, 4);
  const FineFunction v = interpolate(fine, [](const Point& x) { return x[0] * (1 - x[0]) * x[1] * (1 - x[1]); });
  const auto Mk = assemble_mass(fine);
  const double norm2 = v.dot(assemble_mass(fine) * v);
  const PiecewiseConstant zero{2, 1, Eigen::VectorXd::Zero(4)};
  CHECK(l2_distance(fine, v, zero) == doctest::Approx(std::sqrt(norm2)).epsilon(1e-12));
  // distance to its own projection: |v|^2 - |Pi v|^2
  const auto p = project_pc(fine, v, 2);
  const double proj2 = p.values.squaredNorm() / 16.0;
  CHECK(l2_distance(fine, v, p) == doctest::Approx(std::sqrt(norm2 - proj2)).epsilon(1e-10));
  CHECK(Mk.rows() == fine.num_dofs());
  const PiecewiseConstant half{1, 1, Eigen::Vector2d(1.0, 0.0)};
  CHECK(l2_distance([](const Point&) { return 1.0; }, half, 2) == doctest::Approx(std::sqrt(0.5)));
}

TEST_CASE("Matrix Market and vector CSV roundtrip") {
  const auto K = assemble_stiffness(unit_sample(2), FineGrid(2, 2));
  std::stringstream ss;
  write_matrix_market(ss, K, "test");
  const std::string text = ss.str();
  CHECK(text.rfind("%%MatrixMarket matrix coordinate real general", 0) == 0);
  const auto back = read_matrix_market(ss);
  CHECK((Eigen::MatrixXd(back) - Eigen::MatrixXd(K)).cwiseAbs().maxCoeff() == 0.0);
  std::stringstream sym("%%MatrixMarket matrix coordinate real symmetric\n2 2 2\n1 1 2\n2 1 -1\n");
  const auto S = read_matrix_market(sym);
  CHECK(S.coeff(0, 1) == -1.0);
  CHECK(S.coeff(1, 0) == -1.0);
  const Eigen::VectorXd v = Eigen::VectorXd::Random(7);
  std::stringstream vs;
  write_vector_csv(vs, v);
  CHECK(read_vector_csv(vs) == v);
}
