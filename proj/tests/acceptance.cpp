// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "expop/compress.hpp"
#include "expop/fem.hpp"
#include "expop/harness.hpp"
#include "oracle.hpp"

using namespace expop;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

SamplePlan random_plan(int E, std::int64_t M) {
  SamplePlan p;
  p.dim = 1;
  p.eps_level = E;
  p.gamma_min = 0.5;
  p.gamma_max = 10;
  p.num_samples = M;
  return p;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::string fixed(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string join(const std::vector<double>& v, bool use_sci = true) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + (use_sci ? sci(v[i]) : fixed(v[i], 2));
  return s + "]";
}

// least-squares slope of y against x
double slope(const std::vector<double>& x, const std::vector<double>& y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

Outcome haar_orthonormality() {
  double worst = 0.0;
  for (int d = 1; d <= 2; ++d)
    for (int L = 0; L <= 4; ++L) {
      HierGrid g(d, L);
      HaarBasis b(g);
      Eigen::MatrixXd P(g.count(L), b.size());
      for (std::int64_t i = 0; i < b.size(); ++i)
        P.col(i) = project_pc(b.as_piecewise(i), L).values / b[i].l2norm;
      const Eigen::MatrixXd G = P.transpose() * P * g.volume(L);
      worst = std::max(worst, (G - Eigen::MatrixXd::Identity(b.size(), b.size())).cwiseAbs().maxCoeff());
    }
  return {worst <= 1e-12, "max|G-I|=" + sci(worst) + " over d=1,2 L=0..4"};
}

Outcome exact_orthogonality() {
  HierGrid g(1, 3);
  FineGrid fine(1, 6);
  HaarBasis basis(g);
  const auto K = assemble_stiffness(draw_sample(random_plan(4, 1), 0), fine);
  const auto b = oracle::exact_basis(g, fine, K, basis);
  const Eigen::MatrixXd Kd(K);
  double worst = 0.0;
  for (std::int64_t i = 0; i < basis.size(); ++i)
    for (std::int64_t j = 0; j < basis.size(); ++j)
      if (basis[i].level != basis[j].level) worst = std::max(worst, std::abs(b[i].dot(Kd * b[j])));
  return {worst <= 1e-8, "max cross-level |a(b_i,b_j)|=" + sci(worst)};
}

// Energy of v on the fine elements outside the given level-l elements (d=1).
double energy_outside(const FineGrid& fine, const CoeffSample& s, const FineFunction& v, const HierGrid& g,
                      int level, const std::vector<std::int64_t>& inside) {
  std::vector<bool> in(g.count(level), false);
  for (auto e : inside) in[e] = true;
  const auto n = fine.cells_per_dim();
  Eigen::VectorXd full = Eigen::VectorXd::Zero(n + 1);
  full.segment(1, n - 1) = v;
  double e2 = 0.0;
  for (std::int64_t e = 0; e < n; ++e) {
    if (in[fine.coarse_element(e, level)]) continue;
    const double dv = full[e + 1] - full[e];
    e2 += coeff_on_fine_element(s, fine, e) * dv * dv / fine.h();
  }
  return e2;
}

Outcome exponential_decay() {
  // five rings of level-l patches need at least 12 level-l elements, so the
  // wavelets of level 4 are measured
  const int L = 4;
  HierGrid g(1, L);
  FineGrid fine(1, 9);
  HaarBasis basis(g);
  const std::int64_t i = basis.index(L, 3, 0);
  const auto phi = basis.as_piecewise(i);
  std::vector<std::int64_t> supp;
  for (std::int64_t t = 0; t < phi.values.size(); ++t)
    if (phi.values[t] != 0.0) supp.push_back(t);
  const Eigen::MatrixXd B(build_constraint(g, fine, L).B);
  const auto lift = bubble_lift(phi, g, fine);
  const auto plan = random_plan(6, 5);
  bool pass = true;
  double worst_rate = -1e300;
  std::string first;
  for (std::int64_t s = 0; s < plan.num_samples; ++s) {
    const auto sample = draw_sample(plan, s);
    const Eigen::MatrixXd K(assemble_stiffness(sample, fine));
    const Eigen::VectorXd b = lift - oracle::corrector(K, B, lift);
    const double total = b.dot(K * b);
    std::vector<double> n, logr, ratios;
    for (int r = 1; r <= 5; ++r) {
      const double out = energy_outside(fine, sample, b, g, L, g.expand(L, supp, r));
      n.push_back(r);
      ratios.push_back(std::sqrt(out / total));
      logr.push_back(0.5 * std::log(out / total));
    }
    bool monotone = true;
    for (std::size_t k = 1; k < ratios.size(); ++k) monotone = monotone && ratios[k] < ratios[k - 1];
    const double rate = slope(n, logr);
    worst_rate = std::max(worst_rate, rate);
    pass = pass && monotone && rate <= -0.5;
    if (s == 0) first = join(ratios);
  }
  return {pass, "level 4, J=9, 5 samples: worst rate " + fixed(worst_rate) +
                    " per ring; sample 0 outside/total " + first};
}

Outcome localization_error() {
  HierGrid g(1, 3);
  FineGrid fine(1, 6);
  HaarBasis basis(g);
  const auto K = assemble_stiffness(draw_sample(random_plan(4, 1), 0), fine);
  const Eigen::MatrixXd Kd(K);
  const auto exact = oracle::exact_basis(g, fine, K, basis);
  std::vector<std::vector<double>> err(basis.size());
  for (int k = 1; k <= 5; ++k) {
    Corrector corr(g, fine, K);
    const auto lb = build_localized_basis(corr, basis, k);
    for (std::int64_t i = 0; i < basis.size(); ++i) {
      const Eigen::VectorXd d = exact[i] - lb.vectors[i];
      err[i].push_back(std::sqrt(std::max(0.0, d.dot(Kd * d))));
    }
  }
  // a step counts once the previous error is above the roundoff floor
  const double floor = 1e-10;
  double worst_ratio = 0.0;
  int steps = 0;
  std::vector<double> worst_curve(5, 0.0);
  for (std::int64_t i = 0; i < basis.size(); ++i)
    for (int k = 0; k < 5; ++k) {
      worst_curve[k] = std::max(worst_curve[k], err[i][k]);
      if (k > 0 && err[i][k - 1] > floor) {
        worst_ratio = std::max(worst_ratio, err[i][k] / err[i][k - 1]);
        ++steps;
      }
    }
  return {worst_ratio <= 0.5 && steps > 0,
          "max_i |||b-b^k||| for k=1..5 " + join(worst_curve) + "; worst step ratio " +
              sci(worst_ratio) + " over " + std::to_string(steps) + " steps above " + sci(floor)};
}

Outcome riesz_conditioning() {
  FineGrid fine(1, 10);
  const auto plan = random_plan(6, 10);
  std::vector<double> worst(7, 0.0);
  for (int L = 1; L <= 6; ++L) {
    HierGrid g(1, L);
    HaarBasis basis(g);
    PipelineSettings ps;
    ps.k = ps.k_inverse = (L + 1) / 2;
    for (std::int64_t s = 0; s < plan.num_samples; ++s) {
      const auto sample = draw_sample(plan, s);
      const auto K = assemble_stiffness(sample, fine);
      Corrector corr(g, fine, K);
      const auto lb = build_localized_basis(corr, basis, ps.k, s);
      const auto S = assemble_S_delta(lb, basis, K);
      for (int l = 0; l <= L; ++l) worst[L] = std::max(worst[L], condition_number(S.block(l, l)));
    }
  }
  double top = 0.0;
  for (int L = 1; L <= 6; ++L) top = std::max(top, worst[L]);
  const double growth = worst[6] / worst[3];
  return {top <= 100.0 && growth <= 2.0,
          "max cond per L=1..6 " + join({worst.begin() + 1, worst.end()}, false) + "; cond(L=6)/cond(L=3)=" +
              fixed(growth)};
}

Outcome deterministic_rate() {
  FineGrid fine(1, 10);
  const PiecewiseConstant one{1, 0, Eigen::VectorXd::Ones(1)};
  std::vector<double> Ls, logs, errs;
  for (int L = 2; L <= 7; ++L) {
    HierGrid g(1, L);
    HaarBasis basis(g);
    SamplePlan p;
    PipelineSettings ps;
    ps.k = ps.k_inverse = (L + 1) / 2;
    const auto op = finalize(accumulate_samples(p, g, fine, basis, ps), CutoffMode::standard, {});
    const double e = l2_distance([](const Point& x) { return x[0] * (1 - x[0]) / 2; }, apply(op, basis, one), 4);
    Ls.push_back(L);
    logs.push_back(-std::log2(e));
    errs.push_back(e);
  }
  const double rate = slope(Ls, logs);
  return {rate >= 0.8, "errors L=2..7 " + join(errs) + "; rate " + fixed(rate) + " per level"};
}

Outcome random_rate(int dim, int J, int E, int L_max, double bound, bool strict) {
  auto cfg = default_config(dim);
  cfg.J = J;
  cfg.E = E;
  cfg.L_min = 1;
  cfg.L_max = L_max;
  const auto rows = run_experiment(cfg);
  std::vector<double> errs, nnz;
  bool decreasing = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    errs.push_back(rows[i].l2_error);
    nnz.push_back(static_cast<double>(rows[i].nnz));
    if (i > 0) decreasing = decreasing && rows[i].l2_error < rows[i - 1].l2_error;
  }
  const double s = fit_slope(rows).slope;
  std::string nnz_s = "[";
  for (std::size_t i = 0; i < nnz.size(); ++i) nnz_s += (i ? " " : "") + std::to_string(rows[i].nnz);
  nnz_s += "]";
  return {s <= bound && (!strict || decreasing),
          "d=" + std::to_string(dim) + " J=" + std::to_string(J) + " E=" + std::to_string(E) + " nnz " + nnz_s +
              " l2 " + join(errs) + "; slope " + fixed(s) + (strict ? (decreasing ? ", decreasing" : ", NOT decreasing") : "")};
}

Outcome truncation_accounting() {
  struct Case {
    int dim, L, J, E;
  };
  bool pass = true;
  std::string detail;
  for (auto c : {Case{1, 4, 7, 5}, Case{2, 2, 4, 3}}) {
    HierGrid g(c.dim, c.L);
    FineGrid fine(c.dim, c.J);
    HaarBasis basis(g);
    auto plan = random_plan(c.E, 2);
    plan.dim = c.dim;
    PipelineSettings ps;
    ps.k = ps.k_inverse = (c.L + 1) / 2;
    ps.cutoff = CutoffMode::relaxed;
    const auto acc = accumulate_samples(plan, g, fine, basis, ps);
    const auto st = finalize(acc, CutoffMode::standard, {});
    const auto rel = finalize(acc, CutoffMode::relaxed, {});
    std::int64_t counted = 0, bound = 0;
    for (auto [k, l] : st.R.stored()) counted += st.R.block(k, l).nonZeros();
    for (int k = 0; k <= c.L; ++k)
      for (int l = 0; l <= c.L; ++l)
        if (k + l <= c.L) bound += basis.level_size(k) * basis.level_size(l);
    bool blocks_ok = true, superset = rel.R.nnz() >= st.R.nnz();
    for (auto [k, l] : st.R.stored()) {
      blocks_ok = blocks_ok && k + l <= c.L;
      superset = superset && rel.R.has(k, l) &&
                 Eigen::MatrixXd(rel.R.block(k, l) - st.R.block(k, l)).cwiseAbs().maxCoeff() == 0.0;
    }
    pass = pass && st.meta.nnz == counted && counted <= bound && blocks_ok && superset;
    detail += (detail.empty() ? "" : "; ") + std::string("d=") + std::to_string(c.dim) + " L=" +
              std::to_string(c.L) + ": nnz " + std::to_string(st.meta.nnz) + " = sum " + std::to_string(counted) +
              " <= " + std::to_string(bound) + ", relaxed nnz " + std::to_string(rel.R.nnz()) +
              (superset ? " superset" : " NOT superset");
  }
  return {pass, detail};
}

Outcome postprocessing() {
  auto cfg = default_config(1);
  cfg.J = 10;
  cfg.L_min = 2;
  cfg.L_max = 6;
  cfg.gamma_min = cfg.gamma_max = 1.0;
  cfg.f.kind = "constant";
  cfg.h1 = true;
  const auto rows = run_experiment(cfg);
  std::vector<double> h1;
  bool monotone = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    h1.push_back(*rows[i].h1_error);
    if (i > 0) monotone = monotone && h1[i] < h1[i - 1];
  }
  return {monotone, "A=1, f=1, relaxed, J=10: H1 errors L=2..6 " + join(h1) +
                        (monotone ? " decreasing" : " NOT strictly decreasing")};
}

Outcome block_algebra() {
  HierGrid g(1, 3);
  FineGrid fine(1, 6);
  HaarBasis basis(g);
  PipelineSettings ps;
  ps.k = ps.k_inverse = 2;
  const auto prod = sample_products(g, fine, basis, draw_sample(random_plan(4, 1), 0), ps);
  const Eigen::MatrixXd T = prod.T.to_dense(), R = prod.R.to_dense();
  const Eigen::MatrixXd dense = T * R * T.transpose();
  double worst = 0.0;
  bool pattern = true;
  for (int k = 0; k <= 3; ++k)
    for (int l = 0; l <= 3; ++l) {
      const bool keep = k + l <= 3;
      pattern = pattern && prod.Y.has(k, l) == keep;
      if (!keep) continue;
      const Eigen::MatrixXd ref = dense.block(prod.Y.offset(k), prod.Y.offset(l), prod.Y.level_size(k),
                                              prod.Y.level_size(l));
      const Eigen::MatrixXd got(prod.Y.block(k, l));
      worst = std::max(worst, (got - ref).cwiseAbs().maxCoeff());
    }
  const double rel = worst / dense.cwiseAbs().maxCoeff();
  return {rel <= 1e-12 && pattern, "max relative deviation on kept blocks " + sci(rel)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"haar-orthonormality", haar_orthonormality},
      {"exact-corrector-orthogonality", exact_orthogonality},
      {"exponential-decay", exponential_decay},
      {"localization-error", localization_error},
      {"riesz-conditioning", riesz_conditioning},
      {"deterministic-rate", deterministic_rate},
      {"random-rate-1d", [] { return random_rate(1, 10, 6, 7, -0.8, false); }},
      {"random-rate-2d", [] { return random_rate(2, 6, 4, 4, -0.35, true); }},
      {"truncation-accounting", truncation_accounting},
      {"postprocessing-h1", postprocessing},
      {"block-algebra-oracle", block_algebra},
  };
  int failures = 0;
  for (std::size_t n = 0; n < criteria.size(); ++n) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[n].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s %zu %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", n + 1, criteria[n].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
