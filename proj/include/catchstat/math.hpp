#ifndef CATCHSTAT_MATH_HPP
#define CATCHSTAT_MATH_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace catchstat {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // log(2*pi)
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;

/// Log density of N(mean, sigma^2) at x.
inline double normal_logpdf(double x, double mean, double sigma) {
    const double z = (x - mean) / sigma;
    return -kLogSqrt2Pi - std::log(sigma) - 0.5 * z * z;
}

namespace detail {

// Asymptotic expansion of log Phi(z) for z << 0, via the Mills ratio
// Phi(z) = phi(z)/(-z) * (1 - 1/z^2 + 3/z^4 - 15/z^6 + 105/z^8 - ...).
inline double log_phi_tail(double z) {
    const double z2 = z * z;
    const double s = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2) +
                     105.0 / (z2 * z2 * z2 * z2);
    return -0.5 * z2 - kLogSqrt2Pi - std::log(-z) + std::log(s);
}

}  // namespace detail

/// Log of the standard normal CDF, stable over the whole real line.
/// Uses the complementary (erfc) form in the lower tail and a Mills-ratio
/// expansion once erfc itself underflows.
inline double normal_logcdf(double z) {
    if (z > 8.0) {
        // Phi(z) = 1 - Phi(-z); avoid log(1) rounding to 0 prematurely.
        return std::log1p(-0.5 * std::erfc(z / M_SQRT2));
    }
    if (z > -37.0) {
        return std::log(0.5 * std::erfc(-z / M_SQRT2));
    }
    return detail::log_phi_tail(z);
}

/// Log CDF of N(mean, sigma^2) at x.
inline double normal_logcdf(double x, double mean, double sigma) {
    return normal_logcdf((x - mean) / sigma);
}

/// Hazard of the lower tail: phi(z)/Phi(z). Stable for very negative z.
inline double normal_hazard(double z) {
    const double lp = -kLogSqrt2Pi - 0.5 * z * z;
    return std::exp(lp - normal_logcdf(z));
}

/// log(sum(exp(x))) over a span; -inf for an empty span.
inline double logsumexp(std::span<const double> xs) {
    if (xs.empty()) return -std::numeric_limits<double>::infinity();
    double m = xs[0];
    for (double x : xs) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

/// Pairwise-tree summation: deterministic reduction order independent of any
/// chunking, and better rounding than a running sum.
inline double pairwise_sum(std::span<const double> xs) {
    const std::size_t n = xs.size();
    if (n == 0) return 0.0;
    if (n <= 8) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(xs.subspan(0, half)) + pairwise_sum(xs.subspan(half));
}

/// Nodes and weights for n-point Gauss-Hermite quadrature
/// (weight function exp(-t^2)), by the Golub-Welsch eigenvalue method.
struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;
};

inline GaussHermite gauss_hermite(int n) {
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        const double b = std::sqrt(i / 2.0);
        jacobi(i, i - 1) = b;
        jacobi(i - 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    GaussHermite gh;
    gh.nodes.resize(n);
    gh.weights.resize(n);
    const double sqrt_pi = std::sqrt(M_PI);
    for (int i = 0; i < n; ++i) {
        gh.nodes[i] = es.eigenvalues()(i);
        const double v0 = es.eigenvectors()(0, i);
        gh.weights[i] = sqrt_pi * v0 * v0;
    }
    return gh;
}

/// Squared Pearson correlation of two equal-length series.
inline double pearson_r2(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) { mx += x[i]; my += y[i]; }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return 0.0;
    return (sxy * sxy) / (sxx * syy);
}

}  // namespace catchstat

#endif  // CATCHSTAT_MATH_HPP
