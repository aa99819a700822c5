#include "picle/input_model.hpp"

#include <cmath>
#include <stdexcept>

#include "picle/rng.hpp"

namespace picle {

void InputModel::finalize() {
    Mat sigma(k, k);
    sigma.a = cov;
    chol = cholesky(sigma);
    log_norm = -0.5 * (k * std::log(2.0 * M_PI) + log_det_from_cholesky(chol));
}

InputModel fit_input_model(const std::vector<std::vector<double>>& samples, int k, std::uint64_t seed_key) {
    const std::size_t n = samples.size();
    if (n < 2) throw std::invalid_argument("fit_input_model: need at least 2 samples");
    const int v = static_cast<int>(samples.front().size());
    if (k <= 0 || k > v) throw std::invalid_argument("fit_input_model: need 0 < k <= v");

    InputModel m;
    m.k = k;
    m.v = v;
    m.projection.resize(static_cast<std::size_t>(k) * v);
    Rng rng(derive_seed(seed_key, "projection"));
    // Unit-length rows in expectation, so projecting a standard normal gives
    // an identity-scale covariance regardless of v.
    const double scale = 1.0 / std::sqrt(static_cast<double>(v));
    for (double& p : m.projection) p = rng.normal() * scale;

    // Project all samples.
    std::vector<double> proj(n * static_cast<std::size_t>(k), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<int>(samples[i].size()) != v) throw std::invalid_argument("fit_input_model: ragged samples");
        for (int r = 0; r < k; ++r) {
            const double* prow = m.projection.data() + static_cast<std::size_t>(r) * v;
            double acc = 0.0;
            for (int c = 0; c < v; ++c) acc += prow[c] * samples[i][static_cast<std::size_t>(c)];
            proj[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(r)] = acc;
        }
    }

    m.mean.assign(static_cast<std::size_t>(k), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (int r = 0; r < k; ++r) m.mean[static_cast<std::size_t>(r)] += proj[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(r)];
    for (double& x : m.mean) x /= static_cast<double>(n);

    m.cov.assign(static_cast<std::size_t>(k) * k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = proj.data() + i * static_cast<std::size_t>(k);
        for (int r = 0; r < k; ++r) {
            const double dr = row[r] - m.mean[static_cast<std::size_t>(r)];
            for (int c = r; c < k; ++c) {
                m.cov[static_cast<std::size_t>(r) * k + c] += dr * (row[c] - m.mean[static_cast<std::size_t>(c)]);
            }
        }
    }
    const double denom = static_cast<double>(n - 1);
    for (int r = 0; r < k; ++r)
        for (int c = r; c < k; ++c) {
            const double val = m.cov[static_cast<std::size_t>(r) * k + c] / denom;
            m.cov[static_cast<std::size_t>(r) * k + c] = val;
            m.cov[static_cast<std::size_t>(c) * k + r] = val;
        }

    double trace = 0.0;
    for (int r = 0; r < k; ++r) trace += m.cov[static_cast<std::size_t>(r) * k + r];
    const double ridge = std::max(1e-8, 1e-6 * trace / static_cast<double>(k));
    for (int r = 0; r < k; ++r) m.cov[static_cast<std::size_t>(r) * k + r] += ridge;

    m.finalize();
    return m;
}

double log_density_projected(const InputModel& model, std::span<const double> y) {
    if (static_cast<int>(y.size()) != model.k) throw std::invalid_argument("log_density_projected: dimension mismatch");
    std::vector<double> diff(y.begin(), y.end());
    for (int r = 0; r < model.k; ++r) diff[static_cast<std::size_t>(r)] -= model.mean[static_cast<std::size_t>(r)];
    const std::vector<double> alpha = cholesky_solve(model.chol, diff);
    return model.log_norm - 0.5 * dot(diff, alpha);
}

double log_density(const InputModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.v) throw std::invalid_argument("log_density: dimension mismatch");
    std::vector<double> y(static_cast<std::size_t>(model.k), 0.0);
    for (int r = 0; r < model.k; ++r) {
        const double* prow = model.projection.data() + static_cast<std::size_t>(r) * model.v;
        double acc = 0.0;
        for (int c = 0; c < model.v; ++c) acc += prow[c] * x[static_cast<std::size_t>(c)];
        y[static_cast<std::size_t>(r)] = acc;
    }
    return log_density_projected(model, y);
}

}  // namespace picle
