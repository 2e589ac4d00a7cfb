#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "expop/compress.hpp"
#include "expop/randfield.hpp"

namespace expop {

/// Right-hand side: indicator of a box, or a constant.
struct SourceSpec {
  std::string kind = "indicator";  ///< "indicator" or "constant"
  std::vector<double> lo{0.5, 0.0, 0.0};
  std::vector<double> hi{1.0, 1.0, 1.0};
  double value = 1.0;
};

struct ExperimentConfig {
  int dim = 1;
  int L_min = 1;
  int L_max = 8;
  int J = 10;
  int E = 6;
  double gamma_min = 0.5;
  double gamma_max = 10.0;
  Generator generator;
  std::uint64_t reference_skip = std::uint64_t{1} << 20;
  std::uint64_t reference_seed = 0x5eed5eedULL;
  std::string samples = "pow2";  ///< "pow2" (M_L = 2^L) or a fixed integer
  std::string reference_samples = "inv_h";  ///< "inv_h" (M_h = 2^J) or a fixed integer
  CutoffMode cutoff = CutoffMode::standard;
  std::string k = "half";  ///< "half" (ceil(L/2)) or a fixed integer
  std::string k_inverse = "same";  ///< "same" or a fixed integer
  SourceSpec f;
  bool h1 = false;
  bool timing = true;
  int threads = 1;
  std::int64_t chunk = 8;
  double solver_tol = 1e-12;
  std::string output = "results.csv";
  std::string operator_dir;  ///< operators are written here when non-empty

  std::int64_t samples_for(int L) const;
  std::int64_t reference_count() const;
  int k_for(int L) const;
  int k_inverse_for(int L) const;
  void validate() const;
};

/// Desk-scale defaults: d=1 J=10 E=6 L=1..8; d=2 J=6 E=4 L=1..4.
ExperimentConfig default_config(int dim);
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

/// f as piecewise constant on the fine grid.
PiecewiseConstant source_function(const SourceSpec& f, int dim, int level);

class FineSolveFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean of fine Galerkin solutions over the reference sample stream.
FineFunction reference_solution(const ExperimentConfig& cfg, const PiecewiseConstant& f);

struct ErrorRow {
  int L = 0;
  std::int64_t nnz = 0;
  double l2_error = 0.0;
  std::optional<double> h1_error;
  double seconds = 0.0;
  std::int64_t M = 0;
};

SamplePlan compression_plan(const ExperimentConfig& cfg, int L);

/// Builds the operator for one level; the relaxed superset is accumulated
/// when relaxed_too is set and returned in second.
std::pair<CompressedOperator, std::optional<CompressedOperator>> build_operator(
    const ExperimentConfig& cfg, int L, bool relaxed_too = false);

std::vector<ErrorRow> run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

void write_rows_csv(std::ostream& os, const std::vector<ErrorRow>& rows);
std::vector<ErrorRow> read_rows_csv(std::istream& is);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  int rows_used = 0;
};

/// Least-squares fit of log(error) against log(nnz) over the last `last`
/// rows (all rows when last <= 0).
SlopeFit fit_slope(const std::vector<ErrorRow>& rows, int last = 0, bool h1 = false);

/// Text summary with the fitted slopes against the -1/d target.
void report(std::ostream& os, const std::vector<ErrorRow>& rows, int dim, int last = 0);

}  // namespace expop
