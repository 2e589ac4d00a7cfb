#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "expop/grid.hpp"

namespace expop {

enum class GeneratorKind { mc, sobol };

std::string to_string(GeneratorKind g);
GeneratorKind generator_from_string(const std::string& s);

struct Generator {
  GeneratorKind kind = GeneratorKind::sobol;
  std::uint64_t seed = 0;  ///< mc only
  std::uint64_t skip = 0;  ///< sobol only: index of the first point used
};

/// How the probability space is sampled: i.i.d. uniform cell values on the
/// epsilon-grid of width 2^-E.
struct SamplePlan {
  int dim = 1;
  int eps_level = 0;
  std::int64_t num_samples = 1;
  Generator generator;
  double gamma_min = 1.0;
  double gamma_max = 1.0;

  std::int64_t num_cells() const { return std::int64_t{1} << (dim * eps_level); }
  void validate() const;
};

/// One coefficient realization, constant on each epsilon-cell.
struct CoeffSample {
  int dim = 1;
  int eps_level = 0;
  Eigen::VectorXd values;  ///< one value per cell, lexicographic, first coordinate fastest
  std::int64_t index = 0;
  GeneratorKind generator = GeneratorKind::mc;
  double gamma_min = 1.0;
  double gamma_max = 1.0;
};

class SobolDimensionError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Largest dimension covered by the built-in direction numbers.
int sobol_max_dimension();

/// Unscrambled Sobol point `n` (Gray-code free, direct evaluation).
Eigen::VectorXd sobol_point(int dimension, std::uint64_t n);

/// Uniform [0,1)^dimension point from a counter-based stream keyed by (seed, n).
Eigen::VectorXd mc_point(int dimension, std::uint64_t seed, std::uint64_t n);

CoeffSample draw_sample(const SamplePlan& plan, std::int64_t k);
/// The sample with A = 1 everywhere.
CoeffSample unit_sample(int dim);

double coeff_at(const CoeffSample& s, const Point& x);
double coeff_on_fine_element(const CoeffSample& s, const FineGrid& fine, std::int64_t elem);

void write_sample_csv(std::ostream& os, const CoeffSample& s);
CoeffSample read_sample_csv(std::istream& is);

}  // namespace expop
