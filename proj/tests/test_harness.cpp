#include <doctest.h>

#include <cmath>
#include <sstream>

#include "expop/fem.hpp"
#include "expop/harness.hpp"

using namespace expop;

namespace {

ExperimentConfig small_config() {
  auto c = default_config(1);
  c.J = 6;
  c.E = 3;
  c.L_min = 1;
  c.L_max = 3;
  c.reference_samples = "8";
  c.timing = false;
  return c;
}

std::string csv(const std::vector<ErrorRow>& rows) {
  std::ostringstream os;
  write_rows_csv(os, rows);
  return os.str();
}

}  // namespace

TEST_CASE("default configs") {
  const auto c1 = default_config(1);
  CHECK(c1.J == 10);
  CHECK(c1.E == 6);
  CHECK(c1.L_min == 1);
  CHECK(c1.L_max == 8);
  CHECK(c1.gamma_min == 0.5);
  CHECK(c1.gamma_max == 10.0);
  CHECK(c1.samples_for(5) == 32);
  CHECK(c1.reference_count() == 1024);
  CHECK(c1.k_for(1) == 1);
  CHECK(c1.k_for(4) == 2);
  CHECK(c1.k_for(5) == 3);
  CHECK(c1.k_inverse_for(5) == 3);
  CHECK_NOTHROW(c1.validate());
  const auto c2 = default_config(2);
  CHECK(c2.J == 6);
  CHECK(c2.E == 4);
  CHECK(c2.L_max == 4);
  CHECK_NOTHROW(c2.validate());
}

TEST_CASE("config validation") {
  auto c = small_config();
  c.J = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  c.E = 7;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  c.gamma_min = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  c.samples = "zero";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  c.samples = "0";
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  c.reference_skip = 4;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c.reference_skip = 8;
  CHECK_NOTHROW(c.validate());
  c = small_config();
  c.generator.kind = GeneratorKind::mc;
  c.generator.seed = c.reference_seed;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("json config and overrides") {
  nlohmann::json j = {{"d", 2}, {"L", {1, 3}}, {"samples", 4}, {"cutoff", "relaxed"}, {"generator", "mc"}};
  const auto c = config_from_json(j);
  CHECK(c.dim == 2);
  CHECK(c.J == 6);
  CHECK(c.L_min == 1);
  CHECK(c.L_max == 3);
  CHECK(c.samples_for(3) == 4);
  CHECK(c.cutoff == CutoffMode::relaxed);
  CHECK(c.generator.kind == GeneratorKind::mc);
  const auto back = config_from_json(config_to_json(c));
  CHECK(config_to_json(back) == config_to_json(c));
  CHECK_THROWS(config_from_json({{"cutoff", "wide"}}));

  const auto a1 = config_from_json({{"d", 1}, {"generator", "auto"}});
  CHECK(a1.generator.kind == GeneratorKind::sobol);
  const auto a2 = config_from_json({{"d", 2}, {"E", 6}, {"J", 7}, {"generator", "auto"}});
  CHECK(a2.generator.kind == GeneratorKind::mc);
}

TEST_CASE("default source is the indicator of the right half") {
  const auto f1 = source_function(SourceSpec{}, 1, 3);
  CHECK(f1.values.head(4).isZero());
  CHECK(f1.values.tail(4).isOnes());
  const auto f2 = source_function(SourceSpec{}, 2, 2);
  HierGrid g(2, 2);
  for (std::int64_t e = 0; e < g.count(2); ++e)
    CHECK(f2.values[e] == (g.midpoint(g.element(2, e))[0] > 0.5 ? 1.0 : 0.0));
  SourceSpec c;
  c.kind = "constant";
  c.value = 3.0;
  CHECK((source_function(c, 2, 2).values.array() == 3.0).all());
}

TEST_CASE("reference solution") {
  auto c = small_config();
  c.gamma_min = c.gamma_max = 1.0;
  CHECK(c.reference_count() == 1);
  SourceSpec one;
  one.kind = "constant";
  const FineGrid fine(1, c.J);
  const auto u = reference_solution(c, source_function(one, 1, c.J));
  double worst = 0.0;
  for (std::int64_t i = 0; i < fine.num_dofs(); ++i) {
    const double x = fine.node_point(fine.dof_node(i))[0];
    worst = std::max(worst, std::abs(u[i] - x * (1 - x) / 2));
  }
  CHECK(worst <= fine.h() * fine.h());

  auto r = small_config();
  r.reference_samples = "1";
  const auto f = source_function(SourceSpec{}, 1, r.J);
  SamplePlan plan;
  plan.eps_level = r.E;
  plan.gamma_min = r.gamma_min;
  plan.gamma_max = r.gamma_max;
  plan.num_samples = 1;
  plan.generator.skip = r.reference_skip;
  const auto K = assemble_stiffness(draw_sample(plan, 0), fine);
  const auto direct = solve_dirichlet(K, load_vector(fine, f), r.solver_tol).x;
  CHECK((reference_solution(r, f) - direct).norm() == 0.0);
}

TEST_CASE("slope fit") {
  std::vector<ErrorRow> rows;
  for (int L = 1; L <= 5; ++L) {
    ErrorRow r;
    r.L = L;
    r.nnz = 3 << L;
    r.l2_error = 1.0 / static_cast<double>(r.nnz);
    rows.push_back(r);
  }
  CHECK(fit_slope(rows).slope == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(fit_slope(rows, 3).rows_used == 3);
  for (auto& r : rows) r.l2_error = 0.25;
  CHECK(std::abs(fit_slope(rows).slope) <= 1e-12);
  CHECK_THROWS(fit_slope(std::vector<ErrorRow>(rows.begin(), rows.begin() + 1)));
  std::ostringstream os;
  report(os, rows, 1);
  CHECK(os.str().find("slope") != std::string::npos);
}

TEST_CASE("csv roundtrip") {
  std::vector<ErrorRow> rows(2);
  rows[0] = {1, 3, 0.125, std::nullopt, 0.5, 2};
  rows[1] = {2, 8, 1.0 / 3.0, 0.1, 1.25, 4};
  const auto text = csv(rows);
  CHECK(text.rfind("L,nnz,l2_error,h1_error,seconds,M\n", 0) == 0);
  std::istringstream is(text);
  const auto back = read_rows_csv(is);
  REQUIRE(back.size() == 2);
  CHECK(back[1].l2_error == rows[1].l2_error);
  CHECK_FALSE(back[0].h1_error.has_value());
  CHECK(*back[1].h1_error == 0.1);
  CHECK(back[1].M == 4);
  CHECK(csv(back) == text);
  std::istringstream bad("L,nnz\n1,2\n");
  CHECK_THROWS(read_rows_csv(bad));
}

TEST_CASE("experiment rows are deterministic") {
  auto c = small_config();
  const auto rows = run_experiment(c);
  REQUIRE(rows.size() == 3);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(rows[i].L == static_cast<int>(i) + 1);
    CHECK(rows[i].M == (std::int64_t{1} << rows[i].L));
    CHECK(rows[i].l2_error > 0.0);
    if (i > 0) CHECK(rows[i].nnz > rows[i - 1].nnz);
  }
  c.threads = 2;
  CHECK(csv(run_experiment(c)) == csv(rows));
}

TEST_CASE("deterministic experiment converges monotonically") {
  auto c = small_config();
  c.gamma_min = c.gamma_max = 1.0;
  c.J = 8;
  c.L_max = 5;
  c.h1 = true;
  const auto rows = run_experiment(c);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].l2_error < rows[i - 1].l2_error);
  for (const auto& r : rows) CHECK(r.h1_error.has_value());
}
