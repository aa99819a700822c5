#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "picle/mat.hpp"
#include "picle/rng.hpp"

using namespace picle;

TEST_CASE("rng is deterministic per seed") {
    Rng a(42), b(42), c(43);
    bool all_equal = true, any_diff = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        all_equal = all_equal && x == b.next_u64();
        any_diff = any_diff || x != c.next_u64();
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("uniform_int stays in range and covers values") {
    Rng rng(7);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 5000; ++i) {
        const int v = rng.uniform_int(5);
        REQUIRE(v >= 0);
        REQUIRE(v < 5);
        ++counts[static_cast<std::size_t>(v)];
    }
    for (int c : counts) CHECK(c > 800);
}

TEST_CASE("normal moments are roughly standard") {
    Rng rng(11);
    double sum = 0.0, sum2 = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sum2 += x * x;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sum2 / n - 1.0) < 0.05);
}

TEST_CASE("derive_seed separates streams") {
    const auto s = derive_seed(123, "init");
    CHECK(s == derive_seed(123, "init"));
    CHECK(s != derive_seed(123, "shuffle"));
    CHECK(s != derive_seed(124, "init"));
}

TEST_CASE("cholesky solve matches a hand-solved system") {
    Mat m(2, 2);
    m.at(0, 0) = 4.0;
    m.at(0, 1) = 2.0;
    m.at(1, 0) = 2.0;
    m.at(1, 1) = 3.0;
    const Mat l = cholesky(m);
    CHECK(l.at(0, 0) == doctest::Approx(2.0));
    const std::vector<double> b{2.0, 1.0};
    const auto x = cholesky_solve(l, b);
    // Solve 4x + 2y = 2; 2x + 3y = 1 -> x = 0.5, y = 0.
    CHECK(x[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(x[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(log_det_from_cholesky(l) == doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("cholesky rejects indefinite matrices") {
    Mat m(2, 2);
    m.at(0, 0) = 1.0;
    m.at(0, 1) = 2.0;
    m.at(1, 0) = 2.0;
    m.at(1, 1) = 1.0;
    CHECK_THROWS_AS(cholesky(m), std::runtime_error);
}

TEST_CASE("logsumexp is stable and exact on small cases") {
    const std::vector<double> xs{std::log(1.0), std::log(2.0), std::log(3.0)};
    CHECK(logsumexp(xs) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
    const std::vector<double> big{1000.0, 1000.0};
    CHECK(logsumexp(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("median of even and odd counts") {
    CHECK(median({3.0, 1.0, 2.0}) == doctest::Approx(2.0));
    CHECK(median({4.0, 1.0, 3.0, 2.0}) == doctest::Approx(2.5));
}
