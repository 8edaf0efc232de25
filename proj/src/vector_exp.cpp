#include "vector_exp.hpp"

#include <cmath>

// Compiled with -ffast-math so the loop maps onto the glibc vector math library.
namespace kwnr::detail {

__attribute__((target_clones("avx2", "default"))) void exp_inplace(double *__restrict values,
                                                                   std::size_t count) noexcept {
#pragma omp simd
    for (std::size_t i = 0; i < count; ++i) {
        values[i] = std::exp(values[i]);
    }
}

} // namespace kwnr::detail
