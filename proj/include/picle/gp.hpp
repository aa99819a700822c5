#pragma once

// Zero-mean Gaussian-process regression over a fixed candidate set with a
// precomputed pairwise distance matrix, plus the UCB/EI machinery used by the
// suffix Bayesian optimization.

#include <functional>
#include <utility>
#include <vector>

#include "picle/mat.hpp"

namespace picle {

/// Squared-exponential kernel value for a distance d.
double se_kernel(double d, double sigma, double gamma);

struct GpState {
    const Mat* distances = nullptr;  // full candidate-by-candidate distance matrix
    std::vector<int> observed;       // candidate indices
    std::vector<double> f;           // observed performances
    double sigma = 0.5;
    double gamma = 1.0;
    double jitter = 1e-6;

    std::size_t size() const { return observed.size(); }
    void add(int candidate, double value) {
        observed.push_back(candidate);
        f.push_back(value);
    }
};

/// Log marginal likelihood of the observed data under (sigma, gamma).
double gp_log_marginal(const GpState& state, double sigma, double gamma);

/// Deterministic grid search for the kernel hyperparameters: sigma over
/// [0.05, 1], gamma over [0.1, 10] x median pairwise distance, both
/// log-spaced with 8 points.
void gp_fit(GpState& state);

/// Posterior (mean, variance) at a candidate; the prior (0, sigma^2) when
/// nothing has been observed. Variance is clamped at zero.
std::pair<double, double> gp_predict(const GpState& state, int candidate);

double ucb(double mu, double variance, double beta);

/// Expected improvement over f_best; max(mu - f_best, 0) when the variance
/// vanishes.
double expected_improvement(double mu, double variance, double f_best);

struct BoConfig {
    int budget = 0;
    double beta = 2.0;
    double ei_threshold = 1e-3;
    double jitter = 1e-6;
};

struct BoStep {
    int candidate = -1;
    double value = 0.0;
};

struct BoResult {
    std::vector<BoStep> steps;
    int best_step = -1;
    bool early_stopped = false;
};

/// UCB-driven sequential maximization over a candidate set. The first two
/// evaluations are the two candidates with the lowest average distance to the
/// others; afterwards the argmax-UCB unevaluated candidate is either evaluated
/// or, if its expected improvement falls below the threshold, the loop stops.
/// Early stopping never fires before the seeded pair has been evaluated.
BoResult bo_maximize(const Mat& distances, const std::function<double(int)>& evaluate, const BoConfig& cfg);

}  // namespace picle
