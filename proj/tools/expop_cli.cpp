#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "expop/fem.hpp"
#include "expop/harness.hpp"

using namespace expop;

namespace {

struct Overrides {
  std::string config;
  std::optional<int> d, L_min, L_max, J, E, threads;
  std::optional<double> gamma_min, gamma_max;
  std::optional<std::string> generator, samples, reference_samples, cutoff, k, k_inverse, output,
      operator_dir;
  std::optional<std::uint64_t> seed, skip, reference_skip;
  bool h1 = false;
  bool no_timing = false;

  void add_to(CLI::App* app) {
    app->add_option("-c,--config", config, "JSON config file")->check(CLI::ExistingFile);
    app->add_option("--d", d, "spatial dimension");
    app->add_option("--L-min", L_min, "coarsest level of the sweep");
    app->add_option("--L-max", L_max, "finest level of the sweep");
    app->add_option("--J", J, "fine mesh level");
    app->add_option("--E", E, "coefficient cell level");
    app->add_option("--gamma-min", gamma_min);
    app->add_option("--gamma-max", gamma_max);
    app->add_option("--generator", generator, "sobol or mc");
    app->add_option("--seed", seed, "mc seed");
    app->add_option("--skip", skip, "index of the first Sobol point");
    app->add_option("--reference-skip", reference_skip);
    app->add_option("--samples", samples, "pow2 or a fixed sample count");
    app->add_option("--reference-samples", reference_samples, "inv_h or a fixed sample count");
    app->add_option("--cutoff", cutoff, "standard or relaxed");
    app->add_option("--k", k, "half or a fixed number of corrector CG steps");
    app->add_option("--k-inverse", k_inverse, "same or a fixed number of block CG steps");
    app->add_option("--threads", threads);
    app->add_flag("--h1", h1, "also post-process and record H1 errors");
    app->add_flag("--no-timing", no_timing, "write 0 in the seconds column");
    app->add_option("-o,--output", output, "output path");
    app->add_option("--operator-dir", operator_dir, "directory for per-level operators");
  }

  ExperimentConfig resolve() const {
    nlohmann::json j = nlohmann::json::object();
    if (!config.empty()) {
      std::ifstream in(config);
      j = nlohmann::json::parse(in);
    }
    auto set = [&](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    set("d", d);
    set("L_min", L_min);
    set("L_max", L_max);
    set("J", J);
    set("E", E);
    set("gamma_min", gamma_min);
    set("gamma_max", gamma_max);
    set("generator", generator);
    set("seed", seed);
    set("skip", skip);
    set("reference_skip", reference_skip);
    set("samples", samples);
    set("reference_samples", reference_samples);
    set("cutoff", cutoff);
    set("k", k);
    set("k_inverse", k_inverse);
    set("threads", threads);
    set("output", output);
    set("operator_dir", operator_dir);
    if (h1) j["h1"] = true;
    if (no_timing) j["timing"] = false;
    return config_from_json(j);
  }
};

PiecewiseConstant read_input_function(const std::string& path, int dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  const Eigen::VectorXd v = read_vector_csv(in);
  int level = 0;
  while ((std::int64_t{1} << (dim * level)) < v.size()) ++level;
  if ((std::int64_t{1} << (dim * level)) != v.size())
    throw std::runtime_error(path + ": length " + std::to_string(v.size()) +
                             " is not 2^(d*level) for d=" + std::to_string(dim));
  return PiecewiseConstant{dim, level, v};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse compression of expected solution operators"};
  app.require_subcommand(1);

  Overrides compress_opts;
  int compress_L = -1;
  std::string compress_out = "operator";
  auto* compress = app.add_subcommand("compress", "build and serialize the operator for one level");
  compress_opts.add_to(compress);
  compress->add_option("--L", compress_L, "level")->required();
  compress->add_option("--out", compress_out, "output prefix (.mtx and .json)");

  std::string apply_op, apply_in, apply_out = "-";
  int apply_d_hint = 0;
  auto* applyc = app.add_subcommand("apply", "apply a stored operator to a piecewise-constant f");
  applyc->add_option("--operator", apply_op, "operator prefix")->required();
  applyc->add_option("--input", apply_in, "CSV of cell values of f (lexicographic)");
  applyc->add_option("--output", apply_out, "CSV of cell values on the finest operator level");
  applyc->add_option("--d", apply_d_hint, "dimension check");

  Overrides exp_opts;
  auto* experiment = app.add_subcommand("experiment", "full sweep over L, writes CSV");
  exp_opts.add_to(experiment);

  std::string report_in;
  int report_d = 1, report_last = 0;
  auto* reportc = app.add_subcommand("report", "summarize an experiment CSV");
  reportc->add_option("input", report_in, "experiment CSV")->required()->check(CLI::ExistingFile);
  reportc->add_option("--d", report_d, "spatial dimension for the target slope");
  reportc->add_option("--last", report_last, "fit over the last n rows (0: all)");

  Overrides print_opts;
  auto* printc = app.add_subcommand("config", "print the resolved config as JSON");
  print_opts.add_to(printc);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*compress) {
      auto cfg = compress_opts.resolve();
      cfg.L_min = cfg.L_max = compress_L;
      cfg.validate();
      auto op = build_operator(cfg, compress_L).first;
      save_operator(op, compress_out);
      std::cerr << "wrote " << compress_out << ".mtx/.json: L=" << op.meta.L
                << " nnz=" << op.meta.nnz << " M=" << op.meta.M << '\n';
    } else if (*applyc) {
      const auto op = load_operator(apply_op);
      if (apply_d_hint && apply_d_hint != op.meta.dim)
        throw std::runtime_error("operator dimension does not match --d");
      const HierGrid grid(op.meta.dim, op.meta.L);
      const HaarBasis basis(grid);
      const auto f = apply_in.empty()
                         ? source_function(SourceSpec{}, op.meta.dim, op.meta.L)
                         : read_input_function(apply_in, op.meta.dim);
      const auto u = apply(op, basis, f);
      if (apply_out == "-") {
        write_vector_csv(std::cout, u.values);
      } else {
        std::ofstream out(apply_out);
        write_vector_csv(out, u.values);
      }
    } else if (*experiment) {
      const auto cfg = exp_opts.resolve();
      const auto rows = run_experiment(cfg, &std::cerr);
      if (cfg.output == "-") {
        write_rows_csv(std::cout, rows);
      } else {
        std::ofstream out(cfg.output);
        if (!out) throw std::runtime_error("cannot write " + cfg.output);
        write_rows_csv(out, rows);
        std::cerr << "wrote " << cfg.output << '\n';
      }
      report(std::cerr, rows, cfg.dim);
    } else if (*reportc) {
      std::ifstream in(report_in);
      report(std::cout, read_rows_csv(in), report_d, report_last);
    } else if (*printc) {
      std::cout << config_to_json(print_opts.resolve()).dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
