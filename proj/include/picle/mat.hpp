#pragma once

// Small dense matrix helpers: Cholesky factorization and solves for the
// Gaussian input models (k x k, k <= 20) and the GP kernel matrices
// (n x n, n <= ~20). Row-major doubles throughout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace picle {

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
};

inline std::vector<double> matvec(const Mat& m, std::span<const double> x) {
    if (static_cast<int>(x.size()) != m.cols) throw std::invalid_argument("matvec: dimension mismatch");
    std::vector<double> y(static_cast<std::size_t>(m.rows), 0.0);
    for (int r = 0; r < m.rows; ++r) {
        double acc = 0.0;
        const double* row = m.a.data() + static_cast<std::size_t>(r) * m.cols;
        for (int c = 0; c < m.cols; ++c) acc += row[c] * x[c];
        y[static_cast<std::size_t>(r)] = acc;
    }
    return y;
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
/// Throws std::runtime_error if the matrix is not positive definite.
inline Mat cholesky(const Mat& m) {
    if (m.rows != m.cols) throw std::invalid_argument("cholesky: matrix not square");
    const int n = m.rows;
    Mat l(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double acc = m.at(i, j);
            for (int k = 0; k < j; ++k) acc -= l.at(i, k) * l.at(j, k);
            if (i == j) {
                if (acc <= 0.0) throw std::runtime_error("cholesky: matrix not positive definite");
                l.at(i, i) = std::sqrt(acc);
            } else {
                l.at(i, j) = acc / l.at(j, j);
            }
        }
    }
    return l;
}

/// Solves (L L^T) x = b given the lower Cholesky factor L.
inline std::vector<double> cholesky_solve(const Mat& l, std::span<const double> b) {
    const int n = l.rows;
    if (static_cast<int>(b.size()) != n) throw std::invalid_argument("cholesky_solve: dimension mismatch");
    std::vector<double> y(b.begin(), b.end());
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < i; ++k) y[i] -= l.at(i, k) * y[k];
        y[i] /= l.at(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
        for (int k = i + 1; k < n; ++k) y[i] -= l.at(k, i) * y[k];
        y[i] /= l.at(i, i);
    }
    return y;
}

inline double log_det_from_cholesky(const Mat& l) {
    double acc = 0.0;
    for (int i = 0; i < l.rows; ++i) acc += std::log(l.at(i, i));
    return 2.0 * acc;
}

inline double logsumexp(std::span<const double> xs) {
    if (xs.empty()) throw std::invalid_argument("logsumexp: empty input");
    const double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) return m;
    double acc = 0.0;
    for (double x : xs) acc += std::exp(x - m);
    return m + std::log(acc);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double median(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("median: empty input");
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return (n % 2 == 1) ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace picle
