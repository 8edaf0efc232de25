#pragma once

#include <cmath>
#include <span>

namespace kwnr {

/// Neumaier compensated accumulator.
class CompensatedSum {
public:
    void add(double value) noexcept {
        const double t = sum_ + value;
        if (std::abs(sum_) >= std::abs(value)) {
            comp_ += (sum_ - t) + value;
        } else {
            comp_ += (value - t) + sum_;
        }
        sum_ = t;
    }
    CompensatedSum &operator+=(double value) noexcept {
        add(value);
        return *this;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> values) noexcept {
    CompensatedSum acc;
    for (double v : values) {
        acc.add(v);
    }
    return acc.value();
}

} // namespace kwnr
