#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "expop/corrector.hpp"
#include "expop/randfield.hpp"
#include "oracle.hpp"

using namespace expop;

namespace {

CoeffSample random_sample(int dim, int E, std::int64_t k) {
  SamplePlan p;
  p.dim = dim;
  p.eps_level = E;
  p.gamma_min = 0.5;
  p.gamma_max = 10;
  p.num_samples = k + 1;
  p.generator.kind = GeneratorKind::mc;
  p.generator.seed = 1234;
  return draw_sample(p, k);
}

double energy(const Eigen::MatrixXd& K, const Eigen::VectorXd& v) { return std::sqrt(v.dot(K * v)); }

}  // namespace

TEST_CASE("constraint rows hold element integrals") {
  HierGrid g(2, 2);
  FineGrid fine(2, 4);
  for (int l = 0; l <= 2; ++l) {
    const auto C = build_constraint(g, fine, l, Boundary::keep);
    const Eigen::VectorXd row = C.B * Eigen::VectorXd::Ones(C.B.cols());
    CHECK((row.array() - g.volume(l)).abs().maxCoeff() <= 1e-14);
    const auto Ci = build_constraint(g, fine, l);
    for (std::int64_t t = 0; t < g.count(l); t += 3) {
      const Eigen::VectorXd b = Ci.B * element_bubble(g, fine, l, t);
      CHECK((b - g.volume(l) * Eigen::VectorXd::Unit(g.count(l), t)).cwiseAbs().maxCoeff() <= 1e-14);
    }
  }
}

TEST_CASE("kernel of the constraint has zero projection") {
  HierGrid g(1, 2);
  FineGrid fine(1, 5);
  const Eigen::MatrixXd B(build_constraint(g, fine, 2).B);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
  const Eigen::MatrixXd N = lu.kernel();
  for (int c = 0; c < N.cols(); c += 5)
    CHECK(project_pc(fine, N.col(c), 2).values.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("local projection matches the dense patch oracle") {
  for (int d = 1; d <= 2; ++d) {
    HierGrid g(d, 2);
    FineGrid fine(d, d == 1 ? 6 : 4);
    const auto K = assemble_stiffness(d == 1 ? unit_sample(1) : random_sample(2, 2, 3), fine);
    Corrector corr(g, fine, K);
    const Eigen::VectorXd r = Eigen::VectorXd::Random(fine.num_dofs());
    for (std::int64_t t : {std::int64_t{0}, g.count(2) / 2}) {
      const auto w = corr.local_projection(2, t, r);
      PatchProblem pp(g, fine, K, g.element(2, t));
      const auto& dofs = pp.dofs();
      const Eigen::MatrixXd Kd(K);
      Eigen::MatrixXd Kl(dofs.size(), dofs.size());
      Eigen::VectorXd rl(dofs.size());
      for (std::size_t a = 0; a < dofs.size(); ++a) {
        rl[a] = r[dofs[a]];
        for (std::size_t b = 0; b < dofs.size(); ++b) Kl(a, b) = Kd(dofs[a], dofs[b]);
      }
      const Eigen::MatrixXd& Bl = pp.local_constraint();
      const auto n = Kl.rows(), m = Bl.rows();
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n + m, n + m);
      A.topLeftCorner(n, n) = Kl;
      A.topRightCorner(n, m) = Bl.transpose();
      A.bottomLeftCorner(m, n) = Bl;
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
      rhs.head(n) = rl;
      const Eigen::VectorXd ref = A.fullPivLu().solve(rhs).head(n);
      Eigen::VectorXd got(n);
      for (std::size_t a = 0; a < dofs.size(); ++a) got[a] = w[dofs[a]];
      CHECK((got - ref).norm() <= 1e-10 * ref.norm());
      // zero outside the patch and in the kernel of all level constraints
      CHECK(std::abs(w.squaredNorm() - got.squaredNorm()) <= 1e-14 * w.squaredNorm());
      const auto C = build_constraint(g, fine, 2);
      CHECK((C.B * w).cwiseAbs().maxCoeff() <= 1e-10 * w.cwiseAbs().maxCoeff());
    }
  }
}

TEST_CASE("local projection of a residual vanishing on the patch is zero") {
  HierGrid g(1, 3);
  FineGrid fine(1, 6);
  Corrector corr(g, fine, assemble_stiffness(unit_sample(1), fine));
  Eigen::VectorXd r = Eigen::VectorXd::Zero(fine.num_dofs());
  r.tail(5).setOnes();
  CHECK(corr.local_projection(3, 1, r).isZero());
}

TEST_CASE("preconditioner is linear and maps zero to zero") {
  HierGrid g(2, 2);
  FineGrid fine(2, 4);
  Corrector corr(g, fine, assemble_stiffness(random_sample(2, 3, 1), fine));
  const Eigen::VectorXd z = Eigen::VectorXd::Zero(fine.num_dofs());
  CHECK(corr.preconditioner_apply(1, z).isZero());
  for (int t = 0; t < 3; ++t) {
    const Eigen::VectorXd a = Eigen::VectorXd::Random(fine.num_dofs());
    const Eigen::VectorXd b = Eigen::VectorXd::Random(fine.num_dofs());
    const auto lhs = corr.preconditioner_apply(2, 2.0 * a - 3.0 * b);
    const Eigen::VectorXd rhs = 2.0 * corr.preconditioner_apply(2, a) - 3.0 * corr.preconditioner_apply(2, b);
    CHECK((lhs - rhs).norm() <= 1e-11 * rhs.norm());
  }
}

TEST_CASE("preconditioned spectrum is bounded uniformly in the level") {
  HierGrid g(1, 4);
  FineGrid fine(1, 7);
  const auto K = assemble_stiffness(random_sample(1, 5, 0), fine);
  const Eigen::MatrixXd Kd(K);
  Corrector corr(g, fine, K);
  std::vector<double> ratios;
  for (int l = 1; l <= 4; ++l) {
    const Eigen::MatrixXd B(build_constraint(g, fine, l).B);
    const Eigen::MatrixXd N = Eigen::FullPivLU<Eigen::MatrixXd>(B).kernel();
    // generalized eigenproblem of N^T K P K N against N^T K N
    Eigen::MatrixXd PKN(fine.num_dofs(), N.cols());
    for (int c = 0; c < N.cols(); ++c) PKN.col(c) = corr.preconditioner_apply(l, Kd * N.col(c));
    const Eigen::MatrixXd A = N.transpose() * Kd * PKN;
    const Eigen::MatrixXd M = N.transpose() * Kd * N;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (A + A.transpose()), M);
    ratios.push_back(es.eigenvalues().maxCoeff() / es.eigenvalues().minCoeff());
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
  const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
  MESSAGE("K2/K1 per level: " << ratios[0] << " " << ratios[1] << " " << ratios[2] << " " << ratios[3]);
  CHECK(*hi <= 3.0 * *lo);
  CHECK(*hi < 20.0);
}

TEST_CASE("corrector of a function a-orthogonal to the kernel is zero") {
  HierGrid g(1, 2);
  FineGrid fine(1, 6);
  const auto K = assemble_stiffness(random_sample(1, 4, 2), fine);
  const Eigen::MatrixXd Kd(K);
  const Eigen::MatrixXd B(build_constraint(g, fine, 2).B);
  Corrector corr(g, fine, K);
  // u = K^{-1} B^T y is a-orthogonal to ker B
  const Eigen::VectorXd u = Kd.ldlt().solve(B.transpose() * Eigen::VectorXd::Random(B.rows()));
  const auto c = corr.corrector_apply(2, u, 4);
  CHECK(energy(Kd, c.value) <= 1e-9 * energy(Kd, u));
  CHECK_THROWS(corr.corrector_apply(2, u, -1));
}

TEST_CASE("truncated corrector converges geometrically to the exact one") {
  HierGrid g(1, 3);
  FineGrid fine(1, 6);
  const auto K = assemble_stiffness(random_sample(1, 4, 5), fine);
  const Eigen::MatrixXd Kd(K);
  Corrector corr(g, fine, K);
  HaarBasis basis(g);
  for (std::int64_t i : {std::int64_t{2}, std::int64_t{5}}) {
    const int l = basis[i].level;
    const Eigen::MatrixXd B(build_constraint(g, fine, l).B);
    const auto lift = bubble_lift(basis.as_piecewise(i), g, fine);
    const Eigen::VectorXd exact = oracle::corrector(Kd, B, lift);
    double prev = energy(Kd, exact);
    for (int k = 1; k <= 4; ++k) {
      const auto c = corr.corrector_apply(l, lift, k);
      const double err = energy(Kd, c.value - exact);
      if (prev > 1e-12 * energy(Kd, exact)) CHECK(err <= 0.5 * prev);
      prev = err;
      CHECK((B * c.value).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, c.value.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("support grows by a bounded number of rings per step") {
  HierGrid g(1, 5);
  FineGrid fine(1, 8);
  const auto K = assemble_stiffness(random_sample(1, 6, 1), fine);
  Corrector corr(g, fine, K);
  HaarBasis basis(g);
  const std::int64_t i = basis.level_offset(5) + 7;
  const auto phi = basis.as_piecewise(i);
  std::vector<std::int64_t> supp;
  for (std::int64_t t = 0; t < phi.values.size(); ++t)
    if (phi.values[t] != 0.0) supp.push_back(t);
  const auto lift = bubble_lift(phi, g, fine);
  for (int k = 1; k <= 3; ++k) {
    const FineFunction b = lift - corr.corrector_apply(5, lift, k).value;
    const auto s = support_elements(fine, b, 5);
    const auto allowed = g.expand(5, supp, 2 * k + 1);
    CHECK(std::includes(allowed.begin(), allowed.end(), s.begin(), s.end()));
    const auto tighter = g.expand(5, supp, 2 * k - 1);
    CHECK(s.size() > tighter.size());
  }
}

TEST_CASE("single-level basis on [0,1] is 6x(1-x)") {
  HierGrid g(1, 0);
  FineGrid fine(1, 8);
  const auto K = assemble_stiffness(unit_sample(1), fine);
  Corrector corr(g, fine, K);
  HaarBasis basis(g);
  const auto lb = build_localized_basis(corr, basis, 200);
  const auto exact = oracle::exact_basis(g, fine, K, basis);
  CHECK((lb.vectors[0] - exact[0]).cwiseAbs().maxCoeff() <= 1e-8);
  // energy of 6x(1-x) is sqrt(12); nodal values of the unnormalized function
  const FineFunction b = lb.vectors[0] * lb.energy[0];
  const double e = lb.energy[0];
  CHECK(e == doctest::Approx(std::sqrt(12.0)).epsilon(1e-3));
  const double mid = b[fine.num_dofs() / 2];
  CHECK(mid == doctest::Approx(1.5).epsilon(1e-3));
  CHECK(element_integrals(fine, lb.vectors[0], 0)[0] == doctest::Approx(1.0 / e).epsilon(1e-10));
}

TEST_CASE("normalized basis and constraint reproduction") {
  HierGrid g(2, 2);
  FineGrid fine(2, 4);
  const auto K = assemble_stiffness(random_sample(2, 3, 4), fine);
  Corrector corr(g, fine, K);
  HaarBasis basis(g);
  const auto lb = build_localized_basis(corr, basis, 2);
  CHECK(lb.vectors.size() == std::size_t(basis.size()));
  for (std::int64_t i = 0; i < basis.size(); ++i) {
    CHECK(energy_norm(K, lb.vectors[i]) == doctest::Approx(1.0).epsilon(1e-12));
    const int l = basis[i].level;
    const auto p = project_pc(fine, lb.vectors[i], l);
    const auto phi = basis.as_piecewise(i);
    CHECK((p.values * lb.energy[i] - phi.values).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(std::is_sorted(lb.support[i].begin(), lb.support[i].end()));
  }
}

TEST_CASE("energy norms scale like 1/h") {
  HierGrid g(1, 4);
  FineGrid fine(1, 8);
  HaarBasis basis(g);
  double lo = 1e300, hi = 0.0;
  for (int s = 0; s < 4; ++s) {
    const auto K = assemble_stiffness(random_sample(1, 5, s), fine);
    Corrector corr(g, fine, K);
    const auto lb = build_localized_basis(corr, basis, 3);
    for (std::int64_t i = 1; i < basis.size(); ++i) {
      const double r = HierGrid::h(basis[i].level) * lb.energy[i] / basis[i].l2norm;
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
  }
  CHECK(hi / lo < 20.0);
}

TEST_CASE("exact correctors give cross-level a-orthogonality") {
  HierGrid g(1, 3);
  FineGrid fine(1, 6);
  const auto K = assemble_stiffness(random_sample(1, 4, 0), fine);
  HaarBasis basis(g);
  const auto b = oracle::exact_basis(g, fine, K, basis);
  const Eigen::MatrixXd Kd(K);
  for (std::int64_t i = 0; i < basis.size(); ++i)
    for (std::int64_t j = 0; j < basis.size(); ++j)
      if (basis[i].level != basis[j].level) CHECK(std::abs(b[i].dot(Kd * b[j])) <= 1e-8);
}
