#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "shiftmmd/errors.hpp"
#include "shiftmmd/kmm.hpp"
#include "shiftmmd/rng.hpp"

using namespace shiftmmd;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
    }
    return m;
}

// Squared distance between the weighted train mean embedding and the test
// mean embedding, written directly from Gram matrices.
double weighted_mean_discrepancy(const Matrix& x, const Matrix& y, const KernelSpec& spec,
                                 const std::vector<double>& beta) {
    const int n = x.rows(), m = y.rows();
    const Matrix kxx = gram_mixture(x, x, spec);
    const Matrix kxy = gram_mixture(x, y, spec);
    const Matrix kyy = gram_mixture(y, y, spec);
    double quad = 0.0, cross = 0.0, yy = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) quad += beta[i] * beta[j] * kxx(i, j);
        for (int j = 0; j < m; ++j) cross += beta[i] * kxy(i, j);
    }
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) yy += kyy(i, j);
    }
    return quad / (static_cast<double>(n) * n) - 2.0 * cross / (static_cast<double>(n) * m) +
           yy / (static_cast<double>(m) * m);
}

} // namespace

TEST_CASE("project_feasible: identity on feasible input") {
    KmmConfig cfg;
    cfg.slack = 0.5;
    std::vector<double> beta{1.0, 1.0, 1.0, 1.0};
    CHECK(project_feasible(beta, cfg) == beta);
}

TEST_CASE("project_feasible: all-zero vector is shifted onto the slab floor") {
    KmmConfig cfg;
    cfg.slack = 0.5;
    std::vector<double> beta(4, 0.0);
    auto projected = project_feasible(beta, cfg);
    double sum = 0.0;
    for (double b : projected) {
        CHECK(b == doctest::Approx(0.5));
        sum += b;
    }
    CHECK(sum == doctest::Approx(2.0));
}

TEST_CASE("project_feasible: box clamp precedes the sum adjustment") {
    KmmConfig cfg;
    cfg.slack = 1.0;   // slab [0, 2n]: no shift needed after clamping
    std::vector<double> beta{-5.0, 1.0, 1.0, 1.0};
    auto projected = project_feasible(beta, cfg);
    CHECK(projected[0] == 0.0);
    CHECK(projected[1] == 1.0);
}

TEST_CASE("project_feasible: infeasible box/slab combination is a config error") {
    KmmConfig cfg;
    cfg.upper_bound = 0.3;
    cfg.slack = 0.5;
    std::vector<double> beta(4, 1.0);
    CHECK_THROWS_AS(project_feasible(beta, cfg), ConfigError);
}

TEST_CASE("identical train and test: uniform weights already optimal") {
    Rng rng(5);
    Matrix x = random_matrix(25, 3, rng);
    KmmConfig cfg;
    cfg.max_iters = 500;
    KmmResult res = solve_kmm(x, x, cfg);
    CHECK(res.objective <= res.uniform_objective + 1e-6);
    for (double b : res.beta) CHECK(b == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("two-point toy concentrates weight on the matching point") {
    Matrix x(2, 1);
    x(0, 0) = 0.0;
    x(1, 0) = 10.0;
    Matrix y(5, 1, 0.0);   // test set is {0} repeated
    KmmConfig cfg;
    cfg.kernel.bandwidths = {1.0};
    cfg.max_iters = 2000;
    KmmResult res = solve_kmm(x, y, cfg);
    CHECK(res.beta[0] > 5.0 * res.beta[1]);

    // Grid-search oracle over the feasible square.
    const Matrix gram = gram_mixture(x, x, cfg.kernel);
    const Matrix cross = gram_mixture(x, y, cfg.kernel);
    std::vector<double> kappa(2, 0.0);
    for (int i = 0; i < 2; ++i) {
        double acc = 0.0;
        for (int j = 0; j < 5; ++j) acc += cross(i, j);
        kappa[i] = 2.0 / 5.0 * acc;
    }
    const double eps = cfg.effective_slack(2);
    double best = 1e100, best0 = 0.0, best1 = 0.0;
    for (int i = 0; i <= 4000; ++i) {
        for (int j = 0; j <= 4000; ++j) {
            const double b0 = i * 0.001, b1 = j * 0.001;
            if (std::fabs(b0 + b1 - 2.0) > 2.0 * eps) continue;
            const double obj = kmm_objective(gram, kappa, {b0, b1});
            if (obj < best) {
                best = obj;
                best0 = b0;
                best1 = b1;
            }
        }
    }
    CHECK(best0 > 5.0 * best1);
    CHECK(res.objective <= best + 1e-4);
    CHECK(res.beta[0] == doctest::Approx(best0).epsilon(0.01));
}

TEST_CASE("short run lands within 1e-4 of a 100x longer reference run") {
    Rng rng(11);
    Matrix x = random_matrix(30, 2, rng);
    Matrix y = random_matrix(25, 2, rng, -1.0, 3.0);
    KmmConfig quick;
    quick.max_iters = 2000;
    quick.tolerance = 1e-10;
    KmmConfig longrun = quick;
    longrun.max_iters = 200000;
    longrun.tolerance = 1e-14;
    KmmResult a = solve_kmm(x, y, quick);
    KmmResult b = solve_kmm(x, y, longrun);
    CHECK(a.objective <= b.objective + 1e-4);
}

TEST_CASE("constraints and weighted-discrepancy improvement on random instances") {
    Rng rng(13);
    for (int rep = 0; rep < 5; ++rep) {
        const int n = 20 + rep;
        Matrix x = random_matrix(n, 2, rng);
        Matrix y = random_matrix(15, 2, rng, -1.0, 2.5);
        KmmConfig cfg;
        cfg.max_iters = 1000;
        KmmResult res = solve_kmm(x, y, cfg);

        CHECK(res.box_violation <= 0.0);
        CHECK(res.slab_violation <= 1e-9);
        CHECK(res.objective <= res.uniform_objective + cfg.tolerance);

        const std::vector<double> uniform(static_cast<std::size_t>(n), 1.0);
        const double weighted = weighted_mean_discrepancy(x, y, cfg.kernel, res.beta);
        const double unweighted = weighted_mean_discrepancy(x, y, cfg.kernel, uniform);
        CHECK(weighted <= unweighted + cfg.tolerance);
    }
}

TEST_CASE("empty sample sets are rejected") {
    KmmConfig cfg;
    Matrix empty(0, 2);
    Matrix x(3, 2, 1.0);
    CHECK_THROWS_AS(solve_kmm(empty, x, cfg), ArgumentError);
    CHECK_THROWS_AS(solve_kmm(x, empty, cfg), ArgumentError);
}
