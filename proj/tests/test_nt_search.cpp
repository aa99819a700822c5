#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "picle/library.hpp"
#include "picle/nn.hpp"
#include "picle/nt_search.hpp"
#include "picle/rng.hpp"

using namespace picle;

namespace {

ArchTemplate chain_template(int layers, int dim) {
    ArchTemplate t;
    for (int i = 1; i <= layers; ++i)
        t.layers.push_back({i, dim, i == layers ? 1 : dim, i == layers ? Activation::sigmoid : Activation::relu, true});
    t.shared_depth = layers;
    t.validate();
    return t;
}

std::vector<std::vector<double>> random_probe(int n, int dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<double>> z(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(dim)));
    for (auto& row : z)
        for (double& v : row) v = rng.normal();
    return z;
}

// Adds a full-depth solution; `suffix_reuse_from` optionally reuses the last
// two modules of an earlier problem's solution.
void add_solution(Library& lib, const ArchTemplate& tmpl, const std::string& pid, std::uint64_t seed,
                  const std::string& suffix_reuse_from = "") {
    const int L = tmpl.num_layers();
    Library::Update u;
    u.problem_id = pid;
    u.trained_path = all_new_path(tmpl);
    u.specs = tmpl.layers;
    for (const LayerSpec& s : tmpl.layers) u.modules.push_back(init_module(s, seed));
    if (!suffix_reuse_from.empty()) {
        for (int i = L - 2; i < L; ++i) {
            const std::string id = suffix_reuse_from + "_l" + std::to_string(i + 1);
            u.trained_path.slots[static_cast<std::size_t>(i)] = PathSlot::reuse(id);
            u.modules[static_cast<std::size_t>(i)] = lib.module(id).params;
        }
    }
    u.eval.trained_path = u.trained_path;
    u.probe_samples[L - 1] = random_probe(10, tmpl.layers[static_cast<std::size_t>(L - 2)].input_dim, seed + 5);
    lib.update(u);
}

ModuleParams const_module(int in, int out, float weight, float bias) {
    ModuleParams m;
    m.input_dim = in;
    m.output_dim = out;
    m.weights.assign(static_cast<std::size_t>(in) * out, weight);
    m.biases.assign(static_cast<std::size_t>(out), bias);
    m.frozen = true;
    return m;
}

}  // namespace

TEST_CASE("function distance of a suffix with itself is zero") {
    const ArchTemplate tmpl = chain_template(4, 3);
    Library lib(4);
    add_solution(lib, tmpl, "p01", 11);
    const auto z = random_probe(20, 3, 3);
    const std::vector<std::string> suffix{"p01_l3", "p01_l4"};
    CHECK(function_distance(lib, suffix, suffix, z) == 0.0);
}

TEST_CASE("constant scalar suffixes at zero and one are distance one") {
    ArchTemplate tmpl = chain_template(2, 3);
    Library lib(2);
    Library::Update u;
    u.problem_id = "pa";
    u.trained_path = all_new_path(tmpl);
    u.specs = tmpl.layers;
    u.modules = {const_module(3, 3, 0.0f, 0.0f), const_module(3, 1, 0.0f, 0.0f)};
    u.eval.trained_path = u.trained_path;
    lib.update(u);
    Library::Update v;
    v.problem_id = "pb";
    v.trained_path = all_new_path(tmpl);
    v.specs = tmpl.layers;
    v.modules = {const_module(3, 3, 0.0f, 0.0f), const_module(3, 1, 0.0f, 1.0f)};
    v.eval.trained_path = v.trained_path;
    lib.update(v);

    const auto z = random_probe(7, 3, 9);
    CHECK(function_distance(lib, {"pa_l2"}, {"pb_l2"}, z) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(function_distance(lib, {"pa_l2"}, {"pb_l2"}, {}), std::invalid_argument);
}

TEST_CASE("function distance is symmetric and satisfies the triangle inequality") {
    const ArchTemplate tmpl = chain_template(4, 3);
    Library lib(4);
    for (int p = 0; p < 5; ++p) add_solution(lib, tmpl, "p0" + std::to_string(p + 1), 100 + static_cast<std::uint64_t>(p));
    const auto z = random_probe(25, 3, 77);
    std::vector<std::vector<std::string>> suffixes;
    for (int p = 0; p < 5; ++p)
        suffixes.push_back({"p0" + std::to_string(p + 1) + "_l3", "p0" + std::to_string(p + 1) + "_l4"});
    for (std::size_t a = 0; a < suffixes.size(); ++a)
        for (std::size_t b = 0; b < suffixes.size(); ++b) {
            const double dab = function_distance(lib, suffixes[a], suffixes[b], z);
            const double dba = function_distance(lib, suffixes[b], suffixes[a], z);
            CHECK(dab == doctest::Approx(dba).epsilon(1e-9));
            for (std::size_t c = 0; c < suffixes.size(); ++c) {
                const double dac = function_distance(lib, suffixes[a], suffixes[c], z);
                const double dcb = function_distance(lib, suffixes[c], suffixes[b], z);
                CHECK(dab <= dac + dcb + 1e-9);
            }
        }
}

TEST_CASE("squared exponential kernel arithmetic") {
    CHECK(se_kernel(0.0, 0.7, 2.0) == doctest::Approx(0.49).epsilon(1e-12));
    CHECK(se_kernel(1.0, 1.0, 1.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    double prev = se_kernel(0.0, 1.0, 1.0);
    for (double d = 0.25; d < 3.0; d += 0.25) {
        const double k = se_kernel(d, 1.0, 1.0);
        CHECK(k < prev);
        prev = k;
    }
    CHECK_THROWS_AS(se_kernel(1.0, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("gp prior prediction and zero-target behavior") {
    Mat d(3, 3);
    d.at(0, 1) = d.at(1, 0) = 1.0;
    d.at(0, 2) = d.at(2, 0) = 2.0;
    d.at(1, 2) = d.at(2, 1) = 1.0;
    GpState gp;
    gp.distances = &d;
    gp.sigma = 0.8;
    const auto [mu0, var0] = gp_predict(gp, 1);
    CHECK(mu0 == 0.0);
    CHECK(var0 == doctest::Approx(0.64).epsilon(1e-12));

    gp.add(0, 0.0);
    gp.add(2, 0.0);
    gp_fit(gp);
    const auto [mu1, var1] = gp_predict(gp, 1);
    CHECK(mu1 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(var1 >= 0.0);
}

TEST_CASE("single observation shrinks toward the value by the jitter ratio") {
    Mat d(1, 1);
    GpState gp;
    gp.distances = &d;
    gp.sigma = 0.5;
    gp.gamma = 1.0;
    gp.jitter = 1e-6;
    gp.add(0, 0.8);
    const auto [mu, var] = gp_predict(gp, 0);
    const double s2 = 0.25;
    CHECK(mu == doctest::Approx(0.8 * s2 / (s2 + 1e-6)).epsilon(1e-12));
    CHECK(var <= 1e-6 * s2 / (s2 + 1e-6) + 1e-12);  // posterior variance at an observed point
}

TEST_CASE("two-point posterior matches a hand-solved 2x2 system") {
    Mat d(3, 3);
    d.at(0, 1) = d.at(1, 0) = 1.5;
    d.at(0, 2) = d.at(2, 0) = 0.6;
    d.at(1, 2) = d.at(2, 1) = 0.9;
    GpState gp;
    gp.distances = &d;
    gp.sigma = 0.9;
    gp.gamma = 1.2;
    gp.jitter = 1e-4;
    gp.add(0, 0.7);
    gp.add(1, 0.4);

    const double s2 = 0.81;
    const double k01 = s2 * std::exp(-1.5 * 1.5 / (2.0 * 1.44));
    const double a = s2 + 1e-4, bq = k01;
    const double det = a * a - bq * bq;
    const double k0 = s2 * std::exp(-0.6 * 0.6 / (2.0 * 1.44));
    const double k1 = s2 * std::exp(-0.9 * 0.9 / (2.0 * 1.44));
    // K^{-1} f and K^{-1} k by explicit 2x2 inverse.
    const double if0 = (a * 0.7 - bq * 0.4) / det;
    const double if1 = (-bq * 0.7 + a * 0.4) / det;
    const double ik0 = (a * k0 - bq * k1) / det;
    const double ik1 = (-bq * k0 + a * k1) / det;
    const double mu_expected = k0 * if0 + k1 * if1;
    const double var_expected = s2 - (k0 * ik0 + k1 * ik1);

    const auto [mu, var] = gp_predict(gp, 2);
    CHECK(mu == doctest::Approx(mu_expected).epsilon(1e-10));
    CHECK(var == doctest::Approx(var_expected).epsilon(1e-10));
}

TEST_CASE("three-point posterior matches a dense solve") {
    // Distances between four points on a line at 0.0, 0.7, 1.6, 1.1.
    const std::vector<double> pos{0.0, 0.7, 1.6, 1.1};
    Mat d(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) d.at(i, j) = std::abs(pos[static_cast<std::size_t>(i)] - pos[static_cast<std::size_t>(j)]);
    GpState gp;
    gp.distances = &d;
    gp.sigma = 0.6;
    gp.gamma = 0.8;
    gp.jitter = 1e-5;
    gp.add(0, 0.55);
    gp.add(1, 0.72);
    gp.add(2, 0.61);

    // Gauss-Jordan inverse of the 3x3 kernel matrix.
    auto kf = [&](int i, int j) { return se_kernel(d.at(i, j), gp.sigma, gp.gamma) + (i == j ? gp.jitter : 0.0); };
    double a[3][6] = {};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) a[i][j] = kf(i, j);
        a[i][3 + i] = 1.0;
    }
    for (int col = 0; col < 3; ++col) {
        const double piv = a[col][col];
        for (int j = 0; j < 6; ++j) a[col][j] /= piv;
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double f = a[r][col];
            for (int j = 0; j < 6; ++j) a[r][j] -= f * a[col][j];
        }
    }
    const double fv[3] = {0.55, 0.72, 0.61};
    double kv[3];
    for (int i = 0; i < 3; ++i) kv[i] = se_kernel(d.at(i, 3), gp.sigma, gp.gamma);
    double mu_ref = 0.0, var_ref = gp.sigma * gp.sigma;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            mu_ref += kv[i] * a[i][3 + j] * fv[j];
            var_ref -= kv[i] * a[i][3 + j] * kv[j];
        }
    const auto [mu, var] = gp_predict(gp, 3);
    CHECK(mu == doctest::Approx(mu_ref).epsilon(1e-10));
    CHECK(var == doctest::Approx(var_ref).epsilon(1e-10));

    // Posterior variance at the observed points stays within the jitter bound.
    const double s2 = gp.sigma * gp.sigma;
    for (int i = 0; i < 3; ++i) {
        const auto [mo, vo] = gp_predict(gp, i);
        (void)mo;
        CHECK(vo <= gp.jitter * s2 / (s2 + gp.jitter) + 1e-12);
    }
}

TEST_CASE("ucb arithmetic and monotonicity") {
    CHECK(ucb(0.3, 0.0, 2.0) == doctest::Approx(0.3));
    CHECK(ucb(0.5, 0.04, 2.0) == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(ucb(0.6, 0.04, 2.0) > ucb(0.5, 0.04, 2.0));
    CHECK(ucb(0.5, 0.09, 2.0) > ucb(0.5, 0.04, 2.0));
}

TEST_CASE("expected improvement closed form") {
    CHECK(expected_improvement(0.4, 0.0, 0.5) == 0.0);
    CHECK(expected_improvement(0.7, 0.0, 0.5) == doctest::Approx(0.2).epsilon(1e-12));
    const double phi0 = 1.0 / std::sqrt(2.0 * M_PI);
    CHECK(expected_improvement(0.5, 1.0, 0.5) == doctest::Approx(phi0).epsilon(1e-12));
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const double mu = rng.uniform(-1.0, 1.0);
        const double var = rng.uniform(0.0, 2.0);
        const double fb = rng.uniform(-1.0, 1.0);
        CHECK(expected_improvement(mu, var, fb) >= std::max(mu - fb, 0.0) - 1e-12);
    }
}

TEST_CASE("bo seeds with the two most central candidates and respects the budget") {
    // Points on a line at 0, 1, 2, 9: the central pair is {1, 2}.
    const std::vector<double> pos{0.0, 1.0, 2.0, 9.0};
    Mat d(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) d.at(i, j) = std::abs(pos[static_cast<std::size_t>(i)] - pos[static_cast<std::size_t>(j)]);
    std::vector<int> order;
    BoConfig cfg;
    cfg.budget = 3;
    cfg.ei_threshold = 0.0;  // never stop early
    const BoResult res = bo_maximize(
        d,
        [&](int i) {
            order.push_back(i);
            return 1.0 - 0.05 * std::abs(pos[static_cast<std::size_t>(i)] - 2.0);
        },
        cfg);
    REQUIRE(order.size() == 3u);
    CHECK(order[0] == 1);
    CHECK(order[1] == 2);
    CHECK_FALSE(res.early_stopped);
    CHECK(res.steps[static_cast<std::size_t>(res.best_step)].candidate == 2);
}

TEST_CASE("ei stopping cannot fire before the seeded pair") {
    Mat d(5, 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) d.at(i, j) = i == j ? 0.0 : 1.0;
    int evals = 0;
    BoConfig cfg;
    cfg.budget = 5;
    cfg.ei_threshold = 1e9;  // stop at the first opportunity
    const BoResult res = bo_maximize(
        d, [&](int) { return 0.5 + 0.01 * static_cast<double>(evals++); }, cfg);
    CHECK(evals == 2);
    CHECK(res.early_stopped);
}

TEST_CASE("nt search counts, dedup, and the suffix sweep") {
    const ArchTemplate tmpl = chain_template(4, 3);
    Library lib(4);
    add_solution(lib, tmpl, "p01", 21);
    add_solution(lib, tmpl, "p02", 22);
    add_solution(lib, tmpl, "p03", 23);
    add_solution(lib, tmpl, "p04", 24, /*suffix_reuse_from=*/"p01");  // duplicate suffix

    const auto cands = suffix_candidates(lib, 4, 2);
    CHECK(cands.size() == 3u);  // dedup folded p04 into p01
    CHECK(cands[0].source_solution == 0);

    DataBundle bundle;
    bundle.problem_id = "new";
    bundle.kind = ProblemKind::compositional;
    bundle.input_dim = 3;

    NtConfig cfg;
    cfg.l_min = 2;
    cfg.ei_threshold = 0.0;  // exhaust the budget

    int trainings = 0;
    auto fake_trainer = [&](const Path& p) {
        ++trainings;
        TrainOutcome out;
        out.eval.trained_path = p;
        bool uses_p02 = false;
        for (const PathSlot& s : p.slots)
            uses_p02 = uses_p02 || (s.kind == PathSlot::Kind::Reuse && s.module_id.starts_with("p02"));
        out.eval.val_accuracy = uses_p02 ? 0.9 : 0.6;
        return out;
    };
    const NtSearchResult res = find_best_nt_path(lib, bundle, tmpl, cfg, fake_trainer);
    REQUIRE(res.found);
    CHECK(res.stage1_evaluations == 3);                 // min(c, candidates)
    CHECK(trainings == 3 + (4 - 1 - 2));                // stage 1 + sweep
    CHECK(res.best_eval.val_accuracy == doctest::Approx(0.9));
    CHECK(res.best_path.reused_suffix_len() == 2);
    bool from_p02 = res.best_path.slots[3].module_id.starts_with("p02");
    CHECK(from_p02);
    // Budget invariant from the config defaults.
    CHECK(res.stage1_evaluations <= std::min(cfg.c, 3));
}

TEST_CASE("nt search reports no candidate without full-depth solutions") {
    const ArchTemplate tmpl = chain_template(4, 3);
    Library lib(4);
    DataBundle bundle;
    bundle.problem_id = "first";
    const NtSearchResult res = find_best_nt_path(lib, bundle, tmpl, NtConfig{},
                                                 [](const Path&) -> TrainOutcome { throw std::logic_error("no"); });
    CHECK_FALSE(res.found);
}

TEST_CASE("single previous solution trains one stage-1 path plus the sweep") {
    const ArchTemplate tmpl = chain_template(4, 3);
    Library lib(4);
    add_solution(lib, tmpl, "p01", 31);
    DataBundle bundle;
    bundle.problem_id = "second";
    NtConfig cfg;
    cfg.l_min = 2;
    int trainings = 0;
    auto fake_trainer = [&](const Path& p) {
        ++trainings;
        TrainOutcome out;
        out.eval.trained_path = p;
        out.eval.val_accuracy = 0.5;
        return out;
    };
    const NtSearchResult res = find_best_nt_path(lib, bundle, tmpl, cfg, fake_trainer);
    REQUIRE(res.found);
    CHECK(res.stage1_evaluations == 1);
    CHECK(trainings == 1 + (4 - 1 - 2));
}
