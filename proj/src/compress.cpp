#include "expop/compress.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <thread>

#include "expop/fem.hpp"

namespace expop {

std::string to_string(CutoffMode m) { return m == CutoffMode::standard ? "standard" : "relaxed"; }

CutoffMode cutoff_from_string(const std::string& s) {
  if (s == "standard") return CutoffMode::standard;
  if (s == "relaxed") return CutoffMode::relaxed;
  throw std::invalid_argument("unknown cutoff mode '" + s + "' (expected standard or relaxed)");
}

int relaxed_slack(int L) {
  int c = 0;
  while ((1 << c) < L) ++c;
  return std::max(1, c);
}

bool keep_block(CutoffMode mode, int L, int l, int k) {
  const int bound = mode == CutoffMode::standard ? L : L + relaxed_slack(L);
  return l + k <= bound;
}

LevelPredicate cutoff_predicate(CutoffMode mode, int L) {
  return [mode, L](int l, int k) { return keep_block(mode, L, l, k); };
}

Accumulator::Accumulator(std::vector<std::int64_t> level_sizes) : sum_(std::move(level_sizes)) {}

void Accumulator::accumulate(const BlockMat& Y) {
  if (sum_.levels() == 0) sum_ = BlockMat(Y.level_sizes());
  if (Y.level_sizes() != sum_.level_sizes())
    throw std::invalid_argument("Accumulator: block structure mismatch");
  for (auto [k, l] : Y.stored()) {
    if (sum_.has(k, l))
      sum_.block(k, l) += Y.block(k, l);
    else
      sum_.set(k, l, Y.block(k, l));
  }
  ++count_;
}

void Accumulator::merge(const Accumulator& other) {
  if (other.count_ == 0) return;
  if (sum_.levels() == 0) sum_ = BlockMat(other.sum_.level_sizes());
  if (other.sum_.level_sizes() != sum_.level_sizes())
    throw std::invalid_argument("Accumulator: block structure mismatch");
  for (auto [k, l] : other.sum_.stored()) {
    if (sum_.has(k, l))
      sum_.block(k, l) += other.sum_.block(k, l);
    else
      sum_.set(k, l, other.sum_.block(k, l));
  }
  count_ += other.count_;
}

CompressedOperator finalize(const Accumulator& acc, CutoffMode mode, OperatorMeta meta) {
  if (acc.count() == 0) throw EmptyAccumulator("finalize: no samples accumulated");
  const auto& sum = acc.sum();
  CompressedOperator op;
  op.R = BlockMat(sum.level_sizes());
  const int L = sum.levels() - 1;
  const double inv = 1.0 / static_cast<double>(acc.count());
  for (auto [k, l] : sum.stored())
    if (keep_block(mode, L, k, l)) op.R.set(k, l, Block(sum.block(k, l) * inv));
  meta.L = L;
  meta.M = acc.count();
  meta.cutoff = mode;
  meta.nnz = op.R.nnz();
  op.meta = meta;
  return op;
}

Eigen::VectorXd operator_coefficients(const CompressedOperator& op, const HaarBasis& basis,
                                      const PiecewiseConstant& f) {
  if (basis.size() != op.R.size() || f.dim != basis.grid().dim())
    throw std::invalid_argument("apply: dimension mismatch between operator and input");
  return op.R.multiply(haar_analyze(f, basis));
}

PiecewiseConstant apply(const CompressedOperator& op, const HaarBasis& basis,
                        const PiecewiseConstant& f) {
  return haar_synthesize(operator_coefficients(op, basis, f), basis);
}

PiecewiseConstant apply(const CompressedOperator& op, const HaarBasis& basis, const FineGrid& fine,
                        const FineFunction& f) {
  return apply(op, basis, project_pc(fine, f, basis.grid().max_level()));
}

FineFunction synthesize_adapted(const Eigen::VectorXd& gamma, const LocalizedBasis& lbasis,
                                const BlockMat& T, double tol) {
  if (gamma.size() != T.size() || static_cast<std::int64_t>(lbasis.vectors.size()) != T.size())
    throw std::invalid_argument("synthesize_adapted: size mismatch");
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(T.size());
  for (int l = 0; l < T.levels(); ++l) {
    const auto off = T.offset(l);
    const auto n = T.level_size(l);
    Eigen::VectorXd rhs = gamma.segment(off, n);
    for (int j = 0; j < l; ++j)
      if (T.has(l, j)) rhs -= T.block(l, j) * alpha.segment(T.offset(j), T.level_size(j));
    if (rhs.squaredNorm() == 0.0) continue;
    if (!T.has(l, l)) throw IllConditionedBlock("synthesize_adapted: missing diagonal block", l);
    Eigen::BiCGSTAB<Block, Eigen::DiagonalPreconditioner<double>> solver;
    solver.setTolerance(tol);
    solver.setMaxIterations(static_cast<Eigen::Index>(std::max<std::int64_t>(100, 10 * n)));
    solver.compute(T.block(l, l));
    Eigen::VectorXd x = solver.solve(rhs);
    const double rel = (T.block(l, l) * x - rhs).norm() / rhs.norm();
    if (solver.info() != Eigen::Success || !(rel <= 100 * tol)) {
      std::ostringstream msg;
      msg << "synthesize_adapted: diagonal block of level " << l
          << " could not be solved (relative residual " << rel << ")";
      throw IllConditionedBlock(msg.str(), l);
    }
    alpha.segment(off, n) = x;
  }
  FineFunction u = FineFunction::Zero(lbasis.vectors.front().size());
  for (std::int64_t i = 0; i < alpha.size(); ++i)
    if (alpha[i] != 0.0) u += alpha[i] * lbasis.vectors[i];
  return u;
}

FineFunction postprocess_gradient(const CompressedOperator& op, const HaarBasis& basis,
                                  const PiecewiseConstant& f, const LocalizedBasis& lbasis,
                                  const BlockMat& Tlap) {
  return synthesize_adapted(operator_coefficients(op, basis, f), lbasis, Tlap);
}

namespace {

nlohmann::json meta_json(const OperatorMeta& m) {
  nlohmann::json j;
  j["L"] = m.L;
  j["d"] = m.dim;
  j["k"] = m.k;
  j["k_inverse"] = m.k_inverse;
  j["M"] = m.M;
  j["gamma_min"] = m.gamma_min;
  j["gamma_max"] = m.gamma_max;
  j["eps_level"] = m.eps_level;
  j["fine_level"] = m.fine_level;
  j["generator"] = to_string(m.generator.kind);
  j["seed"] = m.generator.seed;
  j["skip"] = m.generator.skip;
  j["cutoff"] = to_string(m.cutoff);
  j["nnz"] = m.nnz;
  return j;
}

OperatorMeta meta_from_json(const nlohmann::json& j) {
  OperatorMeta m;
  m.L = j.at("L").get<int>();
  m.dim = j.at("d").get<int>();
  m.k = j.at("k").get<int>();
  m.k_inverse = j.value("k_inverse", m.k);
  m.M = j.at("M").get<std::int64_t>();
  m.gamma_min = j.at("gamma_min").get<double>();
  m.gamma_max = j.at("gamma_max").get<double>();
  m.eps_level = j.at("eps_level").get<int>();
  m.fine_level = j.at("fine_level").get<int>();
  m.generator.kind = generator_from_string(j.at("generator").get<std::string>());
  m.generator.seed = j.value("seed", std::uint64_t{0});
  m.generator.skip = j.value("skip", std::uint64_t{0});
  m.cutoff = cutoff_from_string(j.at("cutoff").get<std::string>());
  m.nnz = j.at("nnz").get<std::int64_t>();
  return m;
}

}  // namespace

void save_operator(const CompressedOperator& op, const std::string& prefix) {
  std::ofstream mm(prefix + ".mtx");
  if (!mm) throw std::runtime_error("cannot write " + prefix + ".mtx");
  std::ostringstream layout;
  write_block_mat(mm, layout, op.R);
  auto j = nlohmann::json::parse(layout.str());
  j["meta"] = meta_json(op.meta);
  std::ofstream js(prefix + ".json");
  if (!js) throw std::runtime_error("cannot write " + prefix + ".json");
  js << j.dump(2) << '\n';
}

CompressedOperator load_operator(const std::string& prefix) {
  std::ifstream mm(prefix + ".mtx");
  if (!mm) throw std::runtime_error("cannot read " + prefix + ".mtx");
  std::ifstream js(prefix + ".json");
  if (!js) throw std::runtime_error("cannot read " + prefix + ".json");
  const auto j = nlohmann::json::parse(js);
  std::istringstream layout(j.dump());
  CompressedOperator op;
  op.R = read_block_mat(mm, layout);
  op.meta = meta_from_json(j.at("meta"));
  if (op.R.levels() != op.meta.L + 1)
    throw std::runtime_error("load_operator: level count does not match metadata");
  return op;
}

SampleProducts sample_products(const HierGrid& grid, const FineGrid& fine, const HaarBasis& basis,
                               const CoeffSample& sample, const PipelineSettings& settings) {
  SampleProducts out;
  const SparseMat K = assemble_stiffness(sample, fine);
  Corrector corrector(grid, fine, K);
  out.basis = build_localized_basis(corrector, basis, settings.k, sample.index);
  out.S = assemble_S_delta(out.basis, basis, K);
  out.R = invert_blocks_cg(out.S, settings.k_inverse);
  out.T = assemble_T_delta(out.basis, basis, fine);
  out.Y = per_sample_Y(out.T, out.R, cutoff_predicate(settings.cutoff, grid.max_level()));
  return out;
}

Accumulator accumulate_samples(const SamplePlan& plan, const HierGrid& grid, const FineGrid& fine,
                               const HaarBasis& basis, const PipelineSettings& settings,
                               int threads, std::int64_t chunk) {
  plan.validate();
  if (chunk < 1) throw std::invalid_argument("accumulate_samples: chunk must be positive");
  const std::int64_t nchunks = (plan.num_samples + chunk - 1) / chunk;
  std::vector<Accumulator> partial(static_cast<std::size_t>(nchunks),
                                   Accumulator(BlockMat::like(basis).level_sizes()));
  auto run_chunk = [&](std::int64_t c) {
    const auto end = std::min(plan.num_samples, (c + 1) * chunk);
    for (std::int64_t s = c * chunk; s < end; ++s) {
      const auto sample = draw_sample(plan, s);
      auto prod = sample_products(grid, fine, basis, sample, settings);
      partial[c].accumulate(prod.Y);
    }
  };
  threads = std::max(1, std::min<int>(threads, static_cast<int>(nchunks)));
  if (threads == 1) {
    for (std::int64_t c = 0; c < nchunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::int64_t c = t; c < nchunks; c += threads) run_chunk(c);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  Accumulator total(BlockMat::like(basis).level_sizes());
  for (const auto& p : partial) total.merge(p);
  return total;
}

LaplacianBasis laplacian_basis(const HierGrid& grid, const FineGrid& fine, const HaarBasis& basis,
                               int k) {
  const SparseMat K = assemble_stiffness(unit_sample(grid.dim()), fine);
  Corrector corrector(grid, fine, K);
  LaplacianBasis out;
  out.basis = build_localized_basis(corrector, basis, k);
  out.T = assemble_T_delta(out.basis, basis, fine);
  return out;
}

}  // namespace expop
