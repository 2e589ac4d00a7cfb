#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <random>

#include "expop/compress.hpp"
#include "expop/fem.hpp"

using namespace expop;

namespace {

SamplePlan plan(int dim, int E, std::int64_t M) {
  SamplePlan p;
  p.dim = dim;
  p.eps_level = E;
  p.gamma_min = 0.5;
  p.gamma_max = 10;
  p.num_samples = M;
  return p;
}

PipelineSettings settings(int k, CutoffMode mode) {
  PipelineSettings ps;
  ps.k = k;
  ps.k_inverse = k;
  ps.cutoff = mode;
  return ps;
}

double rel_diff(const BlockMat& a, const BlockMat& b) {
  const Eigen::MatrixXd A = a.to_dense(), B = b.to_dense();
  return (A - B).cwiseAbs().maxCoeff() / std::max(1e-300, B.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("cutoff modes") {
  CHECK(relaxed_slack(1) == 1);
  CHECK(relaxed_slack(2) == 1);
  CHECK(relaxed_slack(3) == 2);
  CHECK(relaxed_slack(4) == 2);
  CHECK(relaxed_slack(5) == 3);
  CHECK(keep_block(CutoffMode::relaxed, 2, 2, 1));
  CHECK_FALSE(keep_block(CutoffMode::relaxed, 2, 2, 2));
  CHECK_FALSE(keep_block(CutoffMode::standard, 2, 2, 1));
  for (int L = 1; L <= 8; ++L)
    for (int l = 0; l <= L; ++l)
      for (int k = 0; k <= L; ++k) {
        CHECK(keep_block(CutoffMode::standard, L, l, k) == keep_block(CutoffMode::standard, L, k, l));
        if (keep_block(CutoffMode::standard, L, l, k)) CHECK(keep_block(CutoffMode::relaxed, L, l, k));
      }
  CHECK(cutoff_from_string("relaxed") == CutoffMode::relaxed);
  CHECK_THROWS(cutoff_from_string("loose"));
}

TEST_CASE("accumulator means") {
  HierGrid g(1, 3);
  FineGrid fine(1, 6);
  HaarBasis basis(g);
  const auto p = plan(1, 4, 4);
  const auto ps = settings(2, CutoffMode::standard);
  std::vector<BlockMat> Ys;
  for (int s = 0; s < 4; ++s) Ys.push_back(sample_products(g, fine, basis, draw_sample(p, s), ps).Y);

  Accumulator one;
  one.accumulate(Ys[0]);
  CHECK(rel_diff(finalize(one, CutoffMode::standard, {}).R, Ys[0]) == 0.0);

  Accumulator copies;
  for (int i = 0; i < 5; ++i) copies.accumulate(Ys[1]);
  CHECK(rel_diff(finalize(copies, CutoffMode::standard, {}).R, Ys[1]) <= 1e-15);

  Accumulator seq, a, b;
  for (int s = 0; s < 4; ++s) seq.accumulate(Ys[s]);
  a.accumulate(Ys[0]);
  a.accumulate(Ys[1]);
  b.accumulate(Ys[2]);
  b.accumulate(Ys[3]);
  a.merge(b);
  CHECK(a.count() == 4);
  CHECK(rel_diff(finalize(a, CutoffMode::standard, {}).R, finalize(seq, CutoffMode::standard, {}).R) <= 1e-13);

  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(basis.size(), basis.size());
  for (const auto& Y : Ys) mean += Y.to_dense() / 4.0;
  CHECK((finalize(seq, CutoffMode::standard, {}).R.to_dense() - mean).cwiseAbs().maxCoeff() <= 1e-15);

  CHECK_THROWS_AS(finalize(Accumulator{}, CutoffMode::standard, {}), EmptyAccumulator);
  Accumulator wrong;
  wrong.accumulate(BlockMat(std::vector<std::int64_t>{1, 1}));
  CHECK_THROWS(wrong.accumulate(Ys[0]));
}

TEST_CASE("finalize nnz accounting and nesting") {
  HierGrid g(1, 3);
  FineGrid fine(1, 6);
  HaarBasis basis(g);
  const auto acc = accumulate_samples(plan(1, 4, 4), g, fine, basis, settings(2, CutoffMode::relaxed));
  const auto std_op = finalize(acc, CutoffMode::standard, {});
  const auto rel_op = finalize(acc, CutoffMode::relaxed, {});
  std::int64_t bound = 0;
  for (int l = 0; l <= 3; ++l)
    for (int k = 0; k <= 3; ++k)
      if (l + k <= 3) bound += basis.level_size(l) * basis.level_size(k);
  CHECK(bound == 20);
  CHECK(std_op.meta.nnz <= bound);
  CHECK(std_op.meta.nnz == std_op.R.nnz());
  CHECK(rel_op.meta.nnz >= std_op.meta.nnz);
  for (auto kl : std_op.R.stored()) CHECK(rel_op.R.has(kl.first, kl.second));
  CHECK(std_op.meta.M == 4);
  CHECK(std_op.meta.cutoff == CutoffMode::standard);
  const Eigen::MatrixXd R = rel_op.R.to_dense();
  CHECK((R - R.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * R.cwiseAbs().maxCoeff());
}

TEST_CASE("relaxed operator at L=2 keeps l+k <= 3") {
  HierGrid g(1, 2);
  FineGrid fine(1, 5);
  HaarBasis basis(g);
  const auto acc = accumulate_samples(plan(1, 3, 2), g, fine, basis, settings(1, CutoffMode::relaxed));
  const auto op = finalize(acc, CutoffMode::relaxed, {});
  for (int l = 0; l <= 2; ++l)
    for (int k = 0; k <= 2; ++k) CHECK(op.R.has(l, k) == (l + k <= 3));
}

TEST_CASE("thread count does not change the sum") {
  HierGrid g(1, 3);
  FineGrid fine(1, 6);
  HaarBasis basis(g);
  const auto p = plan(1, 4, 6);
  const auto a = accumulate_samples(p, g, fine, basis, settings(2, CutoffMode::standard), 1, 2);
  const auto b = accumulate_samples(p, g, fine, basis, settings(2, CutoffMode::standard), 3, 2);
  CHECK((a.sum().to_dense() - b.sum().to_dense()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("apply is linear and maps zero to zero") {
  HierGrid g(2, 2);
  FineGrid fine(2, 4);
  HaarBasis basis(g);
  const auto op = finalize(accumulate_samples(plan(2, 3, 2), g, fine, basis, settings(1, CutoffMode::standard)),
                           CutoffMode::standard, {});
  const PiecewiseConstant zero{2, 3, Eigen::VectorXd::Zero(64)};
  CHECK(apply(op, basis, zero).values.isZero());
  const PiecewiseConstant f{2, 3, Eigen::VectorXd::Random(64)};
  const PiecewiseConstant h{2, 3, Eigen::VectorXd::Random(64)};
  const PiecewiseConstant fh{2, 3, f.values + h.values};
  const Eigen::VectorXd lhs = apply(op, basis, fh).values;
  const Eigen::VectorXd rhs = apply(op, basis, f).values + apply(op, basis, h).values;
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * rhs.cwiseAbs().maxCoeff());
  CHECK_THROWS(apply(op, basis, PiecewiseConstant{1, 2, Eigen::VectorXd::Zero(4)}));
  const FineFunction v = FineFunction::Random(fine.num_dofs());
  CHECK(apply(op, basis, fine, v).values.isApprox(apply(op, basis, project_pc(fine, v, 2)).values));
}

TEST_CASE("deterministic operator approximates x(1-x)/2 at rate 2^-L") {
  FineGrid fine(1, 9);
  const PiecewiseConstant one{1, 0, Eigen::VectorXd::Ones(1)};
  std::vector<double> consts;
  for (int L = 1; L <= 6; ++L) {
    HierGrid g(1, L);
    HaarBasis basis(g);
    SamplePlan p;
    p.eps_level = 0;
    const auto op = finalize(accumulate_samples(p, g, fine, basis, settings((L + 1) / 2, CutoffMode::standard)),
                             CutoffMode::standard, {});
    const double err = l2_distance([](const Point& x) { return x[0] * (1 - x[0]) / 2; }, apply(op, basis, one), 4);
    consts.push_back(err / std::ldexp(1.0, -L));
  }
  // error = C 2^-L with C frozen from a reference run
  for (double c : consts) CHECK(c <= 0.09);
}

TEST_CASE("operator norm stays below the continuous bound") {
  FineGrid fine(1, 8);
  std::mt19937 rng(2);
  std::vector<double> norms;
  for (int L = 1; L <= 5; ++L) {
    HierGrid g(1, L);
    HaarBasis basis(g);
    const auto op = finalize(accumulate_samples(plan(1, 5, 4), g, fine, basis, settings((L + 1) / 2, CutoffMode::standard)),
                             CutoffMode::standard, {});
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      const PiecewiseConstant f{1, L, Eigen::VectorXd::Random(1 << L)};
      worst = std::max(worst, apply(op, basis, f).values.norm() / f.values.norm());
    }
    norms.push_back(worst);
  }
  // the coefficient is at least 0.5, so the exact mean inverse has norm at most 2/pi^2
  for (double n : norms) CHECK(n <= 1.1 * 2.0 / (M_PI * M_PI));
}

TEST_CASE("post-processing") {
  HierGrid g(1, 4);
  FineGrid fine(1, 8);
  HaarBasis basis(g);
  const auto lap = laplacian_basis(g, fine, basis, 2);
  CHECK(synthesize_adapted(Eigen::VectorXd::Zero(basis.size()), lap.basis, lap.T).isZero());
  const auto acc = accumulate_samples(plan(1, 5, 4), g, fine, basis, settings(2, CutoffMode::relaxed));
  const auto op = finalize(acc, CutoffMode::relaxed, {});
  const PiecewiseConstant f{1, 1, Eigen::Vector2d(0.0, 1.0)};
  const auto u1 = postprocess_gradient(op, basis, f, lap.basis, lap.T);
  const auto back = project_pc(fine, u1, 4);
  const auto direct = apply(op, basis, f);
  CHECK((back.values - direct.values).cwiseAbs().maxCoeff() <= 1e-9 * direct.values.cwiseAbs().maxCoeff());
}

TEST_CASE("post-processing error drops for the Laplacian with a constant source") {
  FineGrid fine(1, 8);
  const auto K = assemble_stiffness(unit_sample(1), fine);
  const PiecewiseConstant one{1, 0, Eigen::VectorXd::Ones(1)};
  const auto uh = solve_dirichlet(K, load_vector(fine, one), 1e-13).x;
  const double ref = h1_seminorm(fine, uh);
  for (int L = 2; L <= 5; ++L) {
    HierGrid g(1, L);
    HaarBasis basis(g);
    const auto lap = laplacian_basis(g, fine, basis, (L + 1) / 2);
    SamplePlan p;
    const auto op = finalize(accumulate_samples(p, g, fine, basis, settings((L + 1) / 2, CutoffMode::relaxed)),
                             CutoffMode::relaxed, {});
    const auto u1 = postprocess_gradient(op, basis, one, lap.basis, lap.T);
    // one-dimensional localized Laplacian bases reproduce the Galerkin solution
    CHECK(h1_seminorm(fine, u1 - uh) <= 1e-10 * ref);
  }
}

TEST_CASE("operator serialization roundtrip") {
  HierGrid g(2, 2);
  FineGrid fine(2, 4);
  HaarBasis basis(g);
  OperatorMeta meta;
  meta.dim = 2;
  meta.k = 1;
  meta.fine_level = 4;
  meta.eps_level = 3;
  meta.gamma_min = 0.5;
  meta.gamma_max = 10;
  const auto op = finalize(accumulate_samples(plan(2, 3, 2), g, fine, basis, settings(1, CutoffMode::standard)),
                           CutoffMode::standard, meta);
  const auto dir = std::filesystem::temp_directory_path() / "expop_test_op";
  std::filesystem::create_directories(dir);
  const std::string prefix = (dir / "R").string();
  save_operator(op, prefix);
  const auto back = load_operator(prefix);
  CHECK(back.meta.L == 2);
  CHECK(back.meta.dim == 2);
  CHECK(back.meta.M == 2);
  CHECK(back.meta.nnz == op.meta.nnz);
  CHECK(back.meta.gamma_max == 10.0);
  CHECK(back.meta.cutoff == CutoffMode::standard);
  CHECK(back.R.stored() == op.R.stored());
  CHECK((back.R.to_dense() - op.R.to_dense()).cwiseAbs().maxCoeff() == 0.0);
  std::filesystem::remove_all(dir);
  CHECK_THROWS(load_operator((dir / "missing").string()));
}
