#pragma once

#include <cstdint>
#include <string_view>

namespace cellsense {

// Derives an independent seed for a named sub-stream ("world", "route",
// "noise", ...) so one user-facing seed can drive every random component
// without the components sharing a generator.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) noexcept;

}  // namespace cellsense
