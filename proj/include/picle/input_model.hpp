#pragma once

// Random-projection Gaussian model of a module's training input distribution:
// samples are projected to k dimensions with a seeded Gaussian matrix and a
// full-covariance Gaussian is fit to the projections.

#include <cstdint>
#include <span>
#include <vector>

#include "picle/mat.hpp"

namespace picle {

struct InputModel {
    int k = 0;  // projected dimension
    int v = 0;  // original dimension
    std::vector<double> projection;  // k x v, row-major
    std::vector<double> mean;        // k
    std::vector<double> cov;         // k x k, regularized SPD

    // Derived, rebuilt by finalize(); not serialized.
    Mat chol;
    double log_norm = 0.0;  // -(k/2) log(2*pi) - (1/2) log det cov

    void finalize();

    bool same_values(const InputModel& o) const {
        return k == o.k && v == o.v && projection == o.projection && mean == o.mean && cov == o.cov;
    }
};

/// Fits mean and sample covariance of the projected samples; the projection is
/// drawn i.i.d. standard normal from `seed_key`. Requires >= 2 samples and
/// k <= v. The covariance gets a trace-scaled ridge so Cholesky always
/// succeeds, with a 1e-8 floor for degenerate samples.
InputModel fit_input_model(const std::vector<std::vector<double>>& samples, int k, std::uint64_t seed_key);

/// log N(P x; mean, cov).
double log_density(const InputModel& model, std::span<const double> x);

/// Density of the projected point itself (k-dimensional).
double log_density_projected(const InputModel& model, std::span<const double> y);

}  // namespace picle
