#include "picle/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace picle {

double se_kernel(double d, double sigma, double gamma) {
    if (!(sigma > 0.0) || !(gamma > 0.0)) throw std::invalid_argument("se_kernel: sigma and gamma must be positive");
    return sigma * sigma * std::exp(-d * d / (2.0 * gamma * gamma));
}

namespace {

Mat observed_kernel(const GpState& s, double sigma, double gamma) {
    const int n = static_cast<int>(s.size());
    Mat k(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double d = s.distances->at(s.observed[static_cast<std::size_t>(i)], s.observed[static_cast<std::size_t>(j)]);
            k.at(i, j) = se_kernel(d, sigma, gamma);
        }
        k.at(i, i) += s.jitter;
    }
    return k;
}

double median_pairwise_distance(const Mat& d) {
    std::vector<double> vals;
    for (int i = 0; i < d.rows; ++i)
        for (int j = i + 1; j < d.cols; ++j) vals.push_back(d.at(i, j));
    if (vals.empty()) return 1.0;
    return std::max(median(std::move(vals)), 1e-9);
}

std::vector<double> log_space(double lo, double hi, int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    const double ratio = std::log(hi / lo);
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo * std::exp(ratio * i / (n - 1));
    return out;
}

double std_normal_pdf(double u) { return std::exp(-0.5 * u * u) / std::sqrt(2.0 * M_PI); }
double std_normal_cdf(double u) { return 0.5 * std::erfc(-u / std::sqrt(2.0)); }

}  // namespace

double gp_log_marginal(const GpState& state, double sigma, double gamma) {
    if (state.size() == 0) throw std::invalid_argument("gp_log_marginal: no observations");
    const Mat k = observed_kernel(state, sigma, gamma);
    const Mat l = cholesky(k);
    const std::vector<double> alpha = cholesky_solve(l, state.f);
    const double n = static_cast<double>(state.size());
    return -0.5 * dot(state.f, alpha) - 0.5 * log_det_from_cholesky(l) - 0.5 * n * std::log(2.0 * M_PI);
}

void gp_fit(GpState& state) {
    if (!state.distances) throw std::invalid_argument("gp_fit: missing distance matrix");
    if (state.size() == 0) return;  // keep the prior hyperparameters
    const double dbar = median_pairwise_distance(*state.distances);
    const auto sigmas = log_space(0.05, 1.0, 8);
    const auto gammas = log_space(0.1 * dbar, 10.0 * dbar, 8);
    double best = -std::numeric_limits<double>::infinity();
    for (double s : sigmas) {
        for (double g : gammas) {
            const double lml = gp_log_marginal(state, s, g);
            if (lml > best) {
                best = lml;
                state.sigma = s;
                state.gamma = g;
            }
        }
    }
}

std::pair<double, double> gp_predict(const GpState& state, int candidate) {
    const double prior_var = state.sigma * state.sigma;
    if (state.size() == 0) return {0.0, prior_var};
    const int n = static_cast<int>(state.size());
    const Mat k = observed_kernel(state, state.sigma, state.gamma);
    const Mat l = cholesky(k);
    std::vector<double> kv(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        kv[static_cast<std::size_t>(i)] =
            se_kernel(state.distances->at(state.observed[static_cast<std::size_t>(i)], candidate), state.sigma, state.gamma);
    const std::vector<double> alpha = cholesky_solve(l, state.f);
    const std::vector<double> beta = cholesky_solve(l, kv);
    const double mu = dot(kv, alpha);
    const double var = std::max(0.0, prior_var - dot(kv, beta));
    return {mu, var};
}

double ucb(double mu, double variance, double beta) {
    if (variance < 0.0) throw std::invalid_argument("ucb: negative variance");
    return mu + beta * std::sqrt(variance);
}

double expected_improvement(double mu, double variance, double f_best) {
    if (variance < 0.0) throw std::invalid_argument("expected_improvement: negative variance");
    const double s = std::sqrt(variance);
    if (s == 0.0) return std::max(mu - f_best, 0.0);
    const double u = (mu - f_best) / s;
    return (mu - f_best) * std_normal_cdf(u) + s * std_normal_pdf(u);
}

BoResult bo_maximize(const Mat& distances, const std::function<double(int)>& evaluate, const BoConfig& cfg) {
    const int n = distances.rows;
    if (n <= 0) throw std::invalid_argument("bo_maximize: no candidates");
    if (cfg.budget <= 0) throw std::invalid_argument("bo_maximize: budget must be positive");
    const int budget = std::min(cfg.budget, n);

    BoResult result;
    GpState gp;
    gp.distances = &distances;
    gp.jitter = cfg.jitter;

    std::vector<char> evaluated(static_cast<std::size_t>(n), 0);
    auto run = [&](int candidate) {
        const double value = evaluate(candidate);
        evaluated[static_cast<std::size_t>(candidate)] = 1;
        gp.add(candidate, value);
        result.steps.push_back(BoStep{candidate, value});
    };

    // Seed with the two most central candidates: lowest average distance to
    // the rest, ties resolved toward the lower index.
    std::vector<std::pair<double, int>> centrality;
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) sum += distances.at(i, j);
        centrality.emplace_back(n > 1 ? sum / (n - 1) : 0.0, i);
    }
    std::sort(centrality.begin(), centrality.end());
    for (int s = 0; s < std::min(2, budget) && s < n; ++s) run(centrality[static_cast<std::size_t>(s)].second);

    while (static_cast<int>(result.steps.size()) < budget) {
        gp_fit(gp);
        int pick = -1;
        double pick_ucb = -std::numeric_limits<double>::infinity();
        double pick_mu = 0.0, pick_var = 0.0;
        for (int i = 0; i < n; ++i) {
            if (evaluated[static_cast<std::size_t>(i)]) continue;
            const auto [mu, var] = gp_predict(gp, i);
            const double u = ucb(mu, var, cfg.beta);
            if (u > pick_ucb) {
                pick_ucb = u;
                pick = i;
                pick_mu = mu;
                pick_var = var;
            }
        }
        if (pick < 0) break;
        const double f_best = *std::max_element(gp.f.begin(), gp.f.end());
        if (expected_improvement(pick_mu, pick_var, f_best) < cfg.ei_threshold) {
            result.early_stopped = true;
            break;
        }
        run(pick);
    }

    for (std::size_t i = 0; i < result.steps.size(); ++i)
        if (result.best_step < 0 || result.steps[i].value > result.steps[static_cast<std::size_t>(result.best_step)].value)
            result.best_step = static_cast<int>(i);
    return result;
}

}  // namespace picle
