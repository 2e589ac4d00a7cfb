#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "expop/corrector.hpp"
#include "expop/haar.hpp"
#include "expop/operator.hpp"
#include "expop/randfield.hpp"

namespace expop {

enum class CutoffMode { standard, relaxed };

std::string to_string(CutoffMode m);
CutoffMode cutoff_from_string(const std::string& s);

/// max(1, ceil(log2 L)).
int relaxed_slack(int L);
/// Standard: l + k <= L. Relaxed: l + k <= L + relaxed_slack(L).
bool keep_block(CutoffMode mode, int L, int l, int k);
LevelPredicate cutoff_predicate(CutoffMode mode, int L);

/// Running block-wise sum of per-sample matrices.
class Accumulator {
 public:
  Accumulator() = default;
  explicit Accumulator(std::vector<std::int64_t> level_sizes);

  void accumulate(const BlockMat& Y);
  /// Adds the contributions of another accumulator (appended after this one).
  void merge(const Accumulator& other);

  std::int64_t count() const { return count_; }
  const BlockMat& sum() const { return sum_; }

 private:
  BlockMat sum_;
  std::int64_t count_ = 0;
};

class EmptyAccumulator : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OperatorMeta {
  int L = 0;
  int dim = 1;
  int k = 1;          ///< CG steps for correctors
  int k_inverse = 1;  ///< CG steps for block inverses
  std::int64_t M = 0;
  double gamma_min = 1.0;
  double gamma_max = 1.0;
  int eps_level = 0;
  int fine_level = 0;
  Generator generator;
  CutoffMode cutoff = CutoffMode::standard;
  std::int64_t nnz = 0;
};

struct CompressedOperator {
  BlockMat R;
  OperatorMeta meta;
};

/// Mean over the accumulated samples restricted to the kept blocks of mode.
CompressedOperator finalize(const Accumulator& acc, CutoffMode mode, OperatorMeta meta);

/// Coefficients gamma = R * Ftilde.
Eigen::VectorXd operator_coefficients(const CompressedOperator& op, const HaarBasis& basis,
                                      const PiecewiseConstant& f);
PiecewiseConstant apply(const CompressedOperator& op, const HaarBasis& basis,
                        const PiecewiseConstant& f);
PiecewiseConstant apply(const CompressedOperator& op, const HaarBasis& basis, const FineGrid& fine,
                        const FineFunction& f);

class IllConditionedBlock : public std::runtime_error {
 public:
  IllConditionedBlock(const std::string& what, int level)
      : std::runtime_error(what), level_(level) {}
  int level() const { return level_; }

 private:
  int level_;
};

/// Solves T alpha = gamma by forward block substitution and returns
/// sum_i alpha_i b_i with the normalized basis vectors.
FineFunction synthesize_adapted(const Eigen::VectorXd& gamma, const LocalizedBasis& lbasis,
                                const BlockMat& T, double tol = 1e-12);
FineFunction postprocess_gradient(const CompressedOperator& op, const HaarBasis& basis,
                                  const PiecewiseConstant& f, const LocalizedBasis& lbasis,
                                  const BlockMat& Tlap);

/// Writes <prefix>.mtx and <prefix>.json.
void save_operator(const CompressedOperator& op, const std::string& prefix);
CompressedOperator load_operator(const std::string& prefix);

struct PipelineSettings {
  int k = 1;
  int k_inverse = 1;
  CutoffMode cutoff = CutoffMode::standard;
};

/// All per-sample products for one coefficient sample.
struct SampleProducts {
  LocalizedBasis basis;
  BlockMat S;
  BlockMat R;
  BlockMat T;
  BlockMat Y;
};

SampleProducts sample_products(const HierGrid& grid, const FineGrid& fine, const HaarBasis& basis,
                               const CoeffSample& sample, const PipelineSettings& settings);

/// Accumulates Y over the samples of plan. Samples are grouped into fixed
/// chunks; chunks are summed in order, so the result does not depend on
/// the number of threads.
Accumulator accumulate_samples(const SamplePlan& plan, const HierGrid& grid, const FineGrid& fine,
                               const HaarBasis& basis, const PipelineSettings& settings,
                               int threads = 1, std::int64_t chunk = 8);

/// Laplacian-adapted basis and its transform, for post-processing.
struct LaplacianBasis {
  LocalizedBasis basis;
  BlockMat T;
};

LaplacianBasis laplacian_basis(const HierGrid& grid, const FineGrid& fine, const HaarBasis& basis,
                               int k);

}  // namespace expop
