#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace kwnr::testing {

double oracle_log_likelihood(const Eigen::MatrixXd &x, const std::vector<double> &y, const std::vector<double> &w,
                             const Eigen::VectorXd &beta) {
    long double total = 0.0L;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double t = x.row(i).dot(beta);
        const double p = 1.0 / (1.0 + std::exp(-t));
        const auto k = static_cast<std::size_t>(i);
        total += w[k] * (y[k] * std::log(p) + (1.0 - y[k]) * std::log(1.0 - p));
    }
    return static_cast<double>(total);
}

Eigen::Vector2d grid_search_mle(const Eigen::MatrixXd &x, const std::vector<double> &y, const std::vector<double> &w) {
    Eigen::Vector2d center(0.0, 0.0);
    double half_width = 8.0;
    const int points = 41;
    while (half_width > 1e-7) {
        double best = -std::numeric_limits<double>::infinity();
        Eigen::Vector2d best_at = center;
        for (int a = 0; a < points; ++a) {
            for (int b = 0; b < points; ++b) {
                Eigen::Vector2d beta(center(0) - half_width + 2.0 * half_width * a / (points - 1),
                                     center(1) - half_width + 2.0 * half_width * b / (points - 1));
                const double ll = oracle_log_likelihood(x, y, w, beta);
                if (ll > best) {
                    best = ll;
                    best_at = beta;
                }
            }
        }
        center = best_at;
        half_width *= 0.25;
    }
    return center;
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd &)> &f, const Eigen::VectorXd &at,
                            double step) {
    Eigen::VectorXd g(at.size());
    for (Eigen::Index k = 0; k < at.size(); ++k) {
        Eigen::VectorXd up = at;
        Eigen::VectorXd down = at;
        up(k) += step;
        down(k) -= step;
        g(k) = (f(up) - f(down)) / (2.0 * step);
    }
    return g;
}

Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd &)> &f, const Eigen::VectorXd &at,
                           double step) {
    const Eigen::Index p = at.size();
    Eigen::MatrixXd h(p, p);
    for (Eigen::Index a = 0; a < p; ++a) {
        for (Eigen::Index b = 0; b < p; ++b) {
            auto eval = [&](double sa, double sb) {
                Eigen::VectorXd v = at;
                v(a) += sa;
                v(b) += sb;
                return f(v);
            };
            h(a, b) = (eval(step, step) - eval(step, -step) - eval(-step, step) + eval(-step, -step)) /
                      (4.0 * step * step);
        }
    }
    return h;
}

std::vector<double> brute_force_kw(const std::vector<double> &scores_c, const std::vector<double> &scores_s,
                                   const std::vector<double> &d, KernelType kernel, double h) {
    auto k = [kernel](double u) {
        switch (kernel) {
        case KernelType::GaussianDensity:
            return std::exp(-u * u / 2.0) / std::sqrt(2.0 * std::numbers::pi);
        case KernelType::Epanechnikov:
            return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
        case KernelType::Triweight:
            return std::abs(u) < 1.0 ? 35.0 / 32.0 * std::pow(1.0 - u * u, 3) : 0.0;
        }
        return 0.0;
    };
    std::vector<double> out(scores_c.size(), 0.0);
    for (std::size_t i = 0; i < scores_s.size(); ++i) {
        double row = 0.0;
        for (double bl : scores_c) {
            row += k((scores_s[i] - bl) / h);
        }
        for (std::size_t j = 0; j < scores_c.size(); ++j) {
            out[j] += d[i] * k((scores_s[i] - scores_c[j]) / h) / row;
        }
    }
    return out;
}

double relaxed_kwnr_mean(const std::vector<double> &indicator, const std::vector<double> &y,
                         const std::vector<double> &kw, const DesignMatrix &z) {
    FitOptions tight;
    tight.tolerance = 1e-14;
    tight.max_iterations = 100;
    const auto fit = fit_weighted_logistic(z, indicator, kw, tight);
    long double num = 0.0L;
    long double den = 0.0L;
    for (std::size_t i = 0; i < indicator.size(); ++i) {
        const double w = kw[i] / fit.fitted[i] * indicator[i];
        num += w * y[i];
        den += w;
    }
    return static_cast<double>(num / den);
}

std::vector<double> fd_response_derivatives(const CohortSample &cohort, const std::vector<double> &kw,
                                            const DesignMatrix &z, double step) {
    const std::size_t n = cohort.size();
    std::vector<double> indicator(n);
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        indicator[i] = cohort.responded(i) ? 1.0 : 0.0;
        if (cohort.responded(i)) {
            y[i] = cohort.outcome()[i];
        }
    }
    std::vector<double> out(n, std::numeric_limits<double>::quiet_NaN());
    const double f0 = relaxed_kwnr_mean(indicator, y, kw, z);
    for (std::size_t l = 0; l < n; ++l) {
        if (!cohort.responded(l)) {
            continue;
        }
        auto at = [&](double shift) {
            auto v = indicator;
            v[l] -= shift;
            return relaxed_kwnr_mean(v, y, kw, z);
        };
        out[l] = (3.0 * f0 - 4.0 * at(step) + at(2.0 * step)) / (2.0 * step);
    }
    return out;
}

} // namespace kwnr::testing
