#pragma once

#include <array>
#include <cstdint>

namespace expop::detail {

inline constexpr int kSobolMaxDim = 1024;

struct SobolDirection {
  std::uint32_t poly;                  ///< primitive polynomial incl. leading and trailing bit
  std::array<std::uint32_t, 18> init;  ///< initial direction numbers m_1..m_s
};

extern const std::array<SobolDirection, kSobolMaxDim> kSobolTable;

}  // namespace expop::detail
