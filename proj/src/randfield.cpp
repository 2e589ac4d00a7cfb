#include "expop/randfield.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "sobol_table.hpp"

namespace expop {

namespace {

constexpr int kSobolBits = 32;

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Direction numbers v[dim][bit], scaled to 32-bit integers.
const std::vector<std::array<std::uint32_t, kSobolBits>>& sobol_directions() {
  static const auto table = [] {
    std::vector<std::array<std::uint32_t, kSobolBits>> v(detail::kSobolMaxDim);
    for (int j = 0; j < kSobolBits; ++j) v[0][j] = 1u << (kSobolBits - 1 - j);
    for (int d = 1; d < detail::kSobolMaxDim; ++d) {
      const auto& entry = detail::kSobolTable[d];
      const std::uint32_t p = entry.poly;
      const int s = std::bit_width(p) - 1;
      std::array<std::uint64_t, kSobolBits> m{};
      for (int j = 0; j < s && j < kSobolBits; ++j) m[j] = entry.init[j];
      for (int j = s; j < kSobolBits; ++j) {
        std::uint64_t next = m[j - s];
        std::uint64_t pow2 = 1;
        for (int k = 0; k < s; ++k) {
          pow2 <<= 1;
          if ((p >> (s - 1 - k)) & 1u) next ^= pow2 * m[j - k - 1];
        }
        m[j] = next;
      }
      for (int j = 0; j < kSobolBits; ++j)
        v[d][j] = static_cast<std::uint32_t>(m[j] << (kSobolBits - 1 - j));
    }
    return v;
  }();
  return table;
}

}  // namespace

std::string to_string(GeneratorKind g) { return g == GeneratorKind::mc ? "mc" : "sobol"; }

GeneratorKind generator_from_string(const std::string& s) {
  if (s == "mc") return GeneratorKind::mc;
  if (s == "sobol") return GeneratorKind::sobol;
  throw std::invalid_argument("unknown generator '" + s + "'");
}

void SamplePlan::validate() const {
  if (dim < 1 || dim > kMaxDim) throw std::invalid_argument("SamplePlan: bad dimension");
  if (eps_level < 0) throw std::invalid_argument("SamplePlan: negative epsilon level");
  if (num_samples < 1) throw std::invalid_argument("SamplePlan: need at least one sample");
  if (!(gamma_min > 0.0) || gamma_max < gamma_min)
    throw std::invalid_argument("SamplePlan: need gamma_max >= gamma_min > 0");
}

int sobol_max_dimension() { return detail::kSobolMaxDim; }

Eigen::VectorXd sobol_point(int dimension, std::uint64_t n) {
  if (dimension > detail::kSobolMaxDim)
    throw SobolDimensionError("Sobol dimension " + std::to_string(dimension) +
                              " exceeds the direction-number table (" +
                              std::to_string(detail::kSobolMaxDim) + ")");
  if (n >> kSobolBits) throw std::out_of_range("Sobol index exceeds 2^32");
  const auto& v = sobol_directions();
  const std::uint64_t gray = n ^ (n >> 1);
  Eigen::VectorXd x(dimension);
  for (int d = 0; d < dimension; ++d) {
    std::uint32_t acc = 0;
    for (int j = 0; j < kSobolBits; ++j)
      if ((gray >> j) & 1u) acc ^= v[d][j];
    x[d] = std::ldexp(static_cast<double>(acc), -kSobolBits);
  }
  return x;
}

Eigen::VectorXd mc_point(int dimension, std::uint64_t seed, std::uint64_t n) {
  std::uint64_t key = seed;
  std::uint64_t state = splitmix64(key) ^ (n * 0xD1B54A32D192ED03ULL);
  Eigen::VectorXd x(dimension);
  for (int d = 0; d < dimension; ++d)
    x[d] = std::ldexp(static_cast<double>(splitmix64(state) >> 11), -53);
  return x;
}

CoeffSample draw_sample(const SamplePlan& plan, std::int64_t k) {
  plan.validate();
  if (k < 0 || k >= plan.num_samples) throw std::out_of_range("draw_sample: index out of range");
  const int cells = static_cast<int>(plan.num_cells());
  const Eigen::VectorXd u =
      plan.generator.kind == GeneratorKind::sobol
          ? sobol_point(cells, plan.generator.skip + static_cast<std::uint64_t>(k))
          : mc_point(cells, plan.generator.seed, static_cast<std::uint64_t>(k));
  CoeffSample s;
  s.dim = plan.dim;
  s.eps_level = plan.eps_level;
  s.values = (plan.gamma_min + (plan.gamma_max - plan.gamma_min) * u.array()).matrix();
  s.index = k;
  s.generator = plan.generator.kind;
  s.gamma_min = plan.gamma_min;
  s.gamma_max = plan.gamma_max;
  return s;
}

CoeffSample unit_sample(int dim) {
  CoeffSample s;
  s.dim = dim;
  s.eps_level = 0;
  s.values = Eigen::VectorXd::Ones(1);
  return s;
}

double coeff_at(const CoeffSample& s, const Point& x) {
  const int n = 1 << s.eps_level;
  std::int64_t idx = 0;
  for (int k = s.dim - 1; k >= 0; --k) {
    int c = static_cast<int>(std::floor(x[k] * n));
    c = std::clamp(c, 0, n - 1);
    idx = idx * n + c;
  }
  return s.values[idx];
}

double coeff_on_fine_element(const CoeffSample& s, const FineGrid& fine, std::int64_t elem) {
  if (fine.level() < s.eps_level)
    throw std::invalid_argument("coefficient cells are finer than the fine grid");
  if (fine.dim() != s.dim) throw std::invalid_argument("coefficient/grid dimension mismatch");
  return coeff_at(s, fine.element_midpoint(elem));
}

void write_sample_csv(std::ostream& os, const CoeffSample& s) {
  os << "d,E,gamma_min,gamma_max,k,generator\n";
  std::ostringstream head;
  head.precision(17);
  head << s.dim << ',' << s.eps_level << ',' << s.gamma_min << ',' << s.gamma_max << ','
       << s.index << ',' << to_string(s.generator) << '\n';
  os << head.str();
  std::ostringstream body;
  body.precision(17);
  for (Eigen::Index i = 0; i < s.values.size(); ++i) body << s.values[i] << '\n';
  os << body.str();
}

CoeffSample read_sample_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("d,E,", 0) != 0)
    throw std::runtime_error("sample csv: missing header");
  if (!std::getline(is, line)) throw std::runtime_error("sample csv: missing metadata row");
  CoeffSample s;
  {
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> f;
    while (std::getline(row, field, ',')) f.push_back(field);
    if (f.size() != 6) throw std::runtime_error("sample csv: bad metadata row");
    s.dim = std::stoi(f[0]);
    s.eps_level = std::stoi(f[1]);
    s.gamma_min = std::stod(f[2]);
    s.gamma_max = std::stod(f[3]);
    s.index = std::stoll(f[4]);
    s.generator = generator_from_string(f[5]);
  }
  const std::int64_t n = std::int64_t{1} << (s.dim * s.eps_level);
  s.values.resize(n);
  for (std::int64_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw std::runtime_error("sample csv: too few values");
    s.values[i] = std::stod(line);
  }
  return s;
}

}  // namespace expop
