#include "expop/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <istream>
#include <ostream>
#include <sstream>

#include "expop/fem.hpp"

namespace expop {

namespace {

std::int64_t parse_count(const std::string& s, const char* what) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size() || v < 1) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("invalid ") + what + " '" + s + "'");
  }
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::int64_t ExperimentConfig::samples_for(int L) const {
  if (samples == "pow2") return std::int64_t{1} << L;
  return parse_count(samples, "samples rule");
}

std::int64_t ExperimentConfig::reference_count() const {
  if (gamma_min == gamma_max) return 1;
  if (reference_samples == "inv_h") return std::int64_t{1} << J;
  return parse_count(reference_samples, "reference_samples rule");
}

int ExperimentConfig::k_for(int L) const {
  if (k == "half") return std::max(1, (L + 1) / 2);
  return static_cast<int>(parse_count(k, "k rule"));
}

int ExperimentConfig::k_inverse_for(int L) const {
  if (k_inverse == "same") return k_for(L);
  return static_cast<int>(parse_count(k_inverse, "k_inverse rule"));
}

void ExperimentConfig::validate() const {
  if (dim < 1 || dim > 3) throw std::invalid_argument("config: d must be 1, 2 or 3");
  if (L_min < 0 || L_max < L_min) throw std::invalid_argument("config: invalid L range");
  if (E < 0) throw std::invalid_argument("config: E must be non-negative");
  if (J < std::max(L_max + 1, E))
    throw std::invalid_argument("config: J must satisfy J > L_max and J >= E");
  if (!(gamma_min > 0.0) || gamma_max < gamma_min)
    throw std::invalid_argument("config: need 0 < gamma_min <= gamma_max");
  if (f.kind != "indicator" && f.kind != "constant")
    throw std::invalid_argument("config: f.kind must be indicator or constant");
  if (f.kind == "indicator" &&
      (f.lo.size() < static_cast<std::size_t>(dim) || f.hi.size() < static_cast<std::size_t>(dim)))
    throw std::invalid_argument("config: f.lo/f.hi need d entries");
  if (threads < 1 || chunk < 1) throw std::invalid_argument("config: threads and chunk must be >= 1");
  for (int L = L_min; L <= L_max; ++L) {
    samples_for(L);
    k_for(L);
    k_inverse_for(L);
  }
  const auto mh = reference_count();
  if (generator.kind == GeneratorKind::sobol) {
    const auto first = generator.skip;
    const auto last = generator.skip + static_cast<std::uint64_t>(samples_for(L_max));
    const bool disjoint = reference_skip >= last || reference_skip + mh <= first;
    if (!disjoint)
      throw std::invalid_argument("config: reference and compression Sobol ranges overlap");
  } else if (reference_seed == generator.seed) {
    throw std::invalid_argument("config: reference_seed must differ from seed");
  }
}

ExperimentConfig default_config(int dim) {
  ExperimentConfig c;
  c.dim = dim;
  if (dim == 1) {
    c.J = 10;
    c.E = 6;
    c.L_min = 1;
    c.L_max = 8;
  } else if (dim == 2) {
    c.J = 6;
    c.E = 4;
    c.L_min = 1;
    c.L_max = 4;
  } else {
    c.J = 4;
    c.E = 2;
    c.L_min = 1;
    c.L_max = 2;
  }
  return c;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c = default_config(j.value("d", 1));
  auto get_rule = [&](const char* key, std::string& dst) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    dst = v.is_number() ? std::to_string(v.get<long long>()) : v.get<std::string>();
  };
  if (j.contains("L")) {
    const auto& l = j.at("L");
    if (l.is_array()) {
      c.L_min = l.at(0).get<int>();
      c.L_max = l.at(1).get<int>();
    } else {
      c.L_min = c.L_max = l.get<int>();
    }
  }
  c.L_min = j.value("L_min", c.L_min);
  c.L_max = j.value("L_max", c.L_max);
  c.J = j.value("J", c.J);
  c.E = j.value("E", c.E);
  c.gamma_min = j.value("gamma_min", c.gamma_min);
  c.gamma_max = j.value("gamma_max", c.gamma_max);
  if (j.contains("generator")) {
    const auto g = j.at("generator").get<std::string>();
    const bool fits = c.dim * c.E < 31 && (std::int64_t{1} << (c.dim * c.E)) <= sobol_max_dimension();
    c.generator.kind = g == "auto" ? (fits ? GeneratorKind::sobol : GeneratorKind::mc)
                                   : generator_from_string(g);
  }
  c.generator.seed = j.value("seed", c.generator.seed);
  c.generator.skip = j.value("skip", c.generator.skip);
  c.reference_skip = j.value("reference_skip", c.reference_skip);
  c.reference_seed = j.value("reference_seed", c.reference_seed);
  get_rule("samples", c.samples);
  get_rule("reference_samples", c.reference_samples);
  if (j.contains("cutoff")) c.cutoff = cutoff_from_string(j.at("cutoff"));
  get_rule("k", c.k);
  get_rule("k_inverse", c.k_inverse);
  if (j.contains("f")) {
    const auto& f = j.at("f");
    c.f.kind = f.value("kind", c.f.kind);
    if (f.contains("lo")) c.f.lo = f.at("lo").get<std::vector<double>>();
    if (f.contains("hi")) c.f.hi = f.at("hi").get<std::vector<double>>();
    c.f.value = f.value("value", c.f.value);
  }
  c.h1 = j.value("h1", c.h1);
  c.timing = j.value("timing", c.timing);
  c.threads = j.value("threads", c.threads);
  c.chunk = j.value("chunk", c.chunk);
  c.solver_tol = j.value("solver_tol", c.solver_tol);
  c.output = j.value("output", c.output);
  c.operator_dir = j.value("operator_dir", c.operator_dir);
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["d"] = c.dim;
  j["L_min"] = c.L_min;
  j["L_max"] = c.L_max;
  j["J"] = c.J;
  j["E"] = c.E;
  j["gamma_min"] = c.gamma_min;
  j["gamma_max"] = c.gamma_max;
  j["generator"] = to_string(c.generator.kind);
  j["seed"] = c.generator.seed;
  j["skip"] = c.generator.skip;
  j["reference_skip"] = c.reference_skip;
  j["reference_seed"] = c.reference_seed;
  j["samples"] = c.samples;
  j["reference_samples"] = c.reference_samples;
  j["cutoff"] = to_string(c.cutoff);
  j["k"] = c.k;
  j["k_inverse"] = c.k_inverse;
  j["f"] = {{"kind", c.f.kind}, {"lo", c.f.lo}, {"hi", c.f.hi}, {"value", c.f.value}};
  j["h1"] = c.h1;
  j["timing"] = c.timing;
  j["threads"] = c.threads;
  j["chunk"] = c.chunk;
  j["solver_tol"] = c.solver_tol;
  j["output"] = c.output;
  j["operator_dir"] = c.operator_dir;
  return j;
}

PiecewiseConstant source_function(const SourceSpec& f, int dim, int level) {
  HierGrid g(dim, level);
  PiecewiseConstant pc{dim, level, Eigen::VectorXd::Zero(g.count(level))};
  for (std::int64_t e = 0; e < g.count(level); ++e) {
    if (f.kind == "constant") {
      pc.values[e] = f.value;
      continue;
    }
    const auto x = g.midpoint(g.element(level, e));
    bool inside = true;
    for (int k = 0; k < dim; ++k) inside = inside && x[k] >= f.lo[k] && x[k] <= f.hi[k];
    pc.values[e] = inside ? f.value : 0.0;
  }
  return pc;
}

FineFunction reference_solution(const ExperimentConfig& cfg, const PiecewiseConstant& f) {
  const FineGrid fine(cfg.dim, cfg.J);
  SamplePlan plan;
  plan.dim = cfg.dim;
  plan.eps_level = cfg.E;
  plan.num_samples = cfg.reference_count();
  plan.gamma_min = cfg.gamma_min;
  plan.gamma_max = cfg.gamma_max;
  plan.generator.kind = cfg.generator.kind;
  plan.generator.skip = cfg.reference_skip;
  plan.generator.seed = cfg.reference_seed;
  const Eigen::VectorXd rhs = load_vector(fine, f);
  FineFunction mean = FineFunction::Zero(fine.num_dofs());
  for (std::int64_t s = 0; s < plan.num_samples; ++s) {
    const auto K = assemble_stiffness(draw_sample(plan, s), fine);
    const auto sol = solve_dirichlet(K, rhs, cfg.solver_tol);
    if (!sol.converged) {
      std::ostringstream msg;
      msg << "reference sample " << s << ": fine solve did not converge (relative residual "
          << sol.relative_residual << " after " << sol.iterations << " iterations)";
      throw FineSolveFailure(msg.str());
    }
    mean += sol.x;
  }
  return mean / static_cast<double>(plan.num_samples);
}

SamplePlan compression_plan(const ExperimentConfig& cfg, int L) {
  SamplePlan plan;
  plan.dim = cfg.dim;
  plan.eps_level = cfg.E;
  plan.num_samples = cfg.samples_for(L);
  plan.gamma_min = cfg.gamma_min;
  plan.gamma_max = cfg.gamma_max;
  plan.generator = cfg.generator;
  return plan;
}

std::pair<CompressedOperator, std::optional<CompressedOperator>> build_operator(
    const ExperimentConfig& cfg, int L, bool relaxed_too) {
  const HierGrid grid(cfg.dim, L);
  const FineGrid fine(cfg.dim, cfg.J);
  const HaarBasis basis(grid);
  PipelineSettings ps;
  ps.k = cfg.k_for(L);
  ps.k_inverse = cfg.k_inverse_for(L);
  ps.cutoff = relaxed_too ? CutoffMode::relaxed : cfg.cutoff;
  const auto plan = compression_plan(cfg, L);
  const auto acc = accumulate_samples(plan, grid, fine, basis, ps, cfg.threads, cfg.chunk);
  OperatorMeta meta;
  meta.dim = cfg.dim;
  meta.k = ps.k;
  meta.k_inverse = ps.k_inverse;
  meta.gamma_min = cfg.gamma_min;
  meta.gamma_max = cfg.gamma_max;
  meta.eps_level = cfg.E;
  meta.fine_level = cfg.J;
  meta.generator = cfg.generator;
  std::pair<CompressedOperator, std::optional<CompressedOperator>> out{
      finalize(acc, cfg.cutoff, meta), std::nullopt};
  if (relaxed_too) out.second = finalize(acc, CutoffMode::relaxed, meta);
  return out;
}

std::vector<ErrorRow> run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  const FineGrid fine(cfg.dim, cfg.J);
  const auto f = source_function(cfg.f, cfg.dim, cfg.J);
  const auto t_ref = std::chrono::steady_clock::now();
  const FineFunction ref = reference_solution(cfg, f);
  if (log)
    *log << "reference: M_h=" << cfg.reference_count() << " in "
         << std::chrono::duration<double>(std::chrono::steady_clock::now() - t_ref).count()
         << " s\n";
  if (!cfg.operator_dir.empty()) std::filesystem::create_directories(cfg.operator_dir);
  std::vector<ErrorRow> rows;
  for (int L = cfg.L_min; L <= cfg.L_max; ++L) {
    const auto t0 = std::chrono::steady_clock::now();
    const HierGrid grid(cfg.dim, L);
    const HaarBasis basis(grid);
    auto [op, relaxed] = build_operator(cfg, L, cfg.h1);
    const auto u = apply(op, basis, f);
    ErrorRow row;
    row.L = L;
    row.nnz = op.meta.nnz;
    row.M = op.meta.M;
    row.l2_error = l2_distance(fine, ref, u);
    if (cfg.h1) {
      const auto lap = laplacian_basis(grid, fine, basis, cfg.k_for(L));
      const FineFunction u1 = postprocess_gradient(*relaxed, basis, f, lap.basis, lap.T);
      row.h1_error = h1_seminorm(fine, u1 - ref);
    }
    if (!cfg.operator_dir.empty())
      save_operator(op, (std::filesystem::path(cfg.operator_dir) / ("R_L" + std::to_string(L))).string());
    row.seconds =
        cfg.timing ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                   : 0.0;
    if (log)
      *log << "L=" << L << " nnz=" << row.nnz << " l2=" << row.l2_error
           << (row.h1_error ? " h1=" + fmt(*row.h1_error) : std::string()) << " M=" << row.M
           << " t=" << row.seconds << " s\n";
    rows.push_back(row);
  }
  return rows;
}

void write_rows_csv(std::ostream& os, const std::vector<ErrorRow>& rows) {
  os << "L,nnz,l2_error,h1_error,seconds,M\n";
  for (const auto& r : rows) {
    char secs[32];
    std::snprintf(secs, sizeof secs, "%.3f", r.seconds);
    os << r.L << ',' << r.nnz << ',' << fmt(r.l2_error) << ','
       << (r.h1_error ? fmt(*r.h1_error) : std::string()) << ',' << secs << ',' << r.M << '\n';
  }
}

std::vector<ErrorRow> read_rows_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("L,nnz,l2_error,h1_error,seconds,M", 0) != 0)
    throw std::runtime_error("read_rows_csv: unexpected header");
  std::vector<ErrorRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() == 5) cells.emplace_back();
    if (cells.size() != 6) throw std::runtime_error("read_rows_csv: malformed row '" + line + "'");
    ErrorRow r;
    r.L = std::stoi(cells[0]);
    r.nnz = std::stoll(cells[1]);
    r.l2_error = std::stod(cells[2]);
    if (!cells[3].empty()) r.h1_error = std::stod(cells[3]);
    r.seconds = std::stod(cells[4]);
    r.M = std::stoll(cells[5]);
    rows.push_back(r);
  }
  return rows;
}

SlopeFit fit_slope(const std::vector<ErrorRow>& rows, int last, bool h1) {
  std::vector<std::pair<double, double>> pts;
  const std::size_t start =
      last > 0 && static_cast<std::size_t>(last) < rows.size() ? rows.size() - last : 0;
  for (std::size_t i = start; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const double e = h1 ? r.h1_error.value_or(0.0) : r.l2_error;
    if (r.nnz > 0 && e > 0.0) pts.emplace_back(std::log(static_cast<double>(r.nnz)), std::log(e));
  }
  if (pts.size() < 2) throw std::invalid_argument("fit_slope: need at least two usable rows");
  double mx = 0, my = 0;
  for (auto [x, y] : pts) {
    mx += x;
    my += y;
  }
  mx /= pts.size();
  my /= pts.size();
  double sxy = 0, sxx = 0;
  for (auto [x, y] : pts) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_slope: nnz values are all equal");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.rows_used = static_cast<int>(pts.size());
  return fit;
}

void report(std::ostream& os, const std::vector<ErrorRow>& rows, int dim, int last) {
  os << "  L        nnz      l2_error      h1_error   seconds       M\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%3d %10lld %13.6e %13s %9.3f %7lld\n", r.L,
                  static_cast<long long>(r.nnz), r.l2_error,
                  r.h1_error ? fmt(*r.h1_error).substr(0, 12).c_str() : "-", r.seconds,
                  static_cast<long long>(r.M));
    os << buf;
  }
  const double target = -1.0 / dim;
  auto line = [&](const char* name, bool h1) {
    try {
      const auto fit = fit_slope(rows, last, h1);
      char buf[200];
      std::snprintf(buf, sizeof buf, "%s slope vs nnz: %.4f over %d rows (target %.4f)%s%s\n", name,
                    fit.slope, fit.rows_used, target,
                    fit.rows_used < 3 ? " [fewer than 3 rows]" : "",
                    fit.slope <= target + 0.2 ? "" : " [slower than target]");
      os << buf;
    } catch (const std::invalid_argument& e) {
      os << name << " slope: unavailable (" << e.what() << ")\n";
    }
  };
  line("l2", false);
  bool any_h1 = false;
  for (const auto& r : rows) any_h1 = any_h1 || r.h1_error.has_value();
  if (any_h1) line("h1", true);
}

}  // namespace expop
