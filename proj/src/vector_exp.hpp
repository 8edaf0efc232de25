#pragma once

#include <cstddef>

namespace kwnr::detail {

/// values[i] = exp(values[i]), vectorised. Arguments must be finite.
void exp_inplace(double *values, std::size_t count) noexcept;

} // namespace kwnr::detail
