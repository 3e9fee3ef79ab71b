#include "oracles.hpp"
#include "riskctl/error.hpp"
#include "riskctl/model.hpp"
#include "riskctl/sturm.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace riskctl;

namespace {

ModelSpec bm111() { return ModelSpec::bm_quadratic({1.0, 1.0, 1.0}); }
ModelSpec ou2() { return ModelSpec::ou_quadratic({2.0, 0.2, 1.0, 1.0, 1.0}); }

// Weighted norm int 2 theta q / sigma^2 phi^2 by Simpson on the (uniform, odd) grid.
double weighted_norm(const ModelSpec& m, const EigenSolution& s) {
    const std::size_t n = s.grid.size();
    const double dx = (s.beta - s.alpha) / static_cast<double>(n - 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = s.grid[i];
        const double f = 2.0 * s.theta * scale_density(m, x) / m.at(x).sigma2() * s.phi[i] * s.phi[i];
        const double w = (i == 0 || i == n - 1) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * f;
    }
    return acc * dx / 3.0;
}

void check_invariants(const ModelSpec& m, const EigenSolution& s) {
    REQUIRE(s.grid.size() == s.phi.size());
    CHECK(s.grid.front() == s.alpha);
    CHECK(s.grid.back() == s.beta);
    for (std::size_t i = 1; i < s.grid.size(); ++i) CHECK(s.grid[i] > s.grid[i - 1]);
    for (double v : s.phi) CHECK(v > 0.0);
    CHECK(weighted_norm(m, s) == doctest::Approx(1.0).epsilon(1e-8));
    const auto ca = m.at(s.alpha), cb = m.at(s.beta);
    const double scale = std::max({1.0, std::abs(s.phi.front()), std::abs(s.phi.back())});
    CHECK(std::abs(s.theta * ca.kp * s.phi.front() + s.phi_deriv.front()) <= 1e-8 * scale);
    CHECK(std::abs(s.theta * cb.km * s.phi.back() - s.phi_deriv.back()) <= 1e-8 * scale);
}

}  // namespace

TEST_SUITE("sturm") {
    TEST_CASE("Neumann limit with constant running cost") {
        CustomPoly p;
        p.drift.coeffs = {0.3, -1.0};
        p.volatility.coeffs = {1.0, 0.1};
        p.running_cost.coeffs = {0.7};
        p.push_cost_up.coeffs = {0.0};
        p.push_cost_down.coeffs = {0.0};
        const auto m = ModelSpec::custom_poly(p, 10.0, 10.0);
        const double a = -1.2, b = 0.9, th = 1.4;
        const auto s = principal_eigenpair(m, a, b, RiskParam(th));
        CHECK(s.lambda0 == doctest::Approx(0.7).epsilon(1e-9));
        const double mass = oracle::simpson(
            [&](double y) { return 2.0 * th * scale_density(m, y) / m.at(y).sigma2(); }, a, b, 4000);
        const double level = 1.0 / std::sqrt(mass);
        for (std::size_t i = 0; i < s.phi.size(); i += 100) {
            CHECK(s.phi[i] == doctest::Approx(level).epsilon(1e-7));
            CHECK(std::abs(s.phi_deriv[i]) < 1e-7);
        }
        CHECK(rayleigh_quotient(m, s) == doctest::Approx(0.7).epsilon(1e-8));
    }

    TEST_CASE("BM-quadratic on [-1, 1] against the Richardson matrix oracle") {
        const auto s = principal_eigenpair(bm111(), -1.0, 1.0, RiskParam(1.0));
        const double ref = oracle::richardson_eigenvalue(oracle::bm(1, 1, 1), -1.0, 1.0, 1.0, 2000);
        CHECK(std::abs(s.lambda0 - ref) < 1e-5);
        CHECK(std::abs(rayleigh_quotient(bm111(), s) - s.lambda0) < 1e-6);
        check_invariants(bm111(), s);
    }

    TEST_CASE("OU-quadratic against the Richardson matrix oracle") {
        for (double th : {0.5, 1.0, 2.0}) {
            const auto s = principal_eigenpair(ou2(), -2.5, 2.0, RiskParam(th));
            const double ref = oracle::richardson_eigenvalue(oracle::ou(2, 0.2, 1, 1, 1), -2.5, 2.0, th, 2000);
            CHECK(std::abs(s.lambda0 - ref) < 1e-5);
            check_invariants(ou2(), s);
        }
    }

    TEST_CASE("eigenfunction matches the oracle eigenvector") {
        const auto s = principal_eigenpair(bm111(), -1.0, 1.0, RiskParam(1.0));
        const auto ev = oracle::top_eigenvector(oracle::bm(1, 1, 1), -1.0, 1.0, 1.0, 2000);
        REQUIRE(ev.x.size() == s.grid.size());
        double worst = 0.0, top = 0.0;
        for (std::size_t i = 0; i < s.grid.size(); ++i) {
            worst = std::max(worst, std::abs(s.phi[i] - ev.u[i]));
            top = std::max(top, s.phi[i]);
        }
        CHECK(worst <= 1e-4 * top);
    }

    TEST_CASE("Rayleigh quotient of the oracle eigenvector reproduces the oracle eigenvalue") {
        const auto ev = oracle::top_eigenvector(oracle::bm(1, 1, 1), -1.0, 1.0, 1.0, 2000);
        EigenSolution s;
        s.alpha = -1.0;
        s.beta = 1.0;
        s.theta = 1.0;
        s.grid = ev.x;
        s.phi = ev.u;
        const std::size_t n = ev.x.size();
        const double dx = ev.x[1] - ev.x[0];
        s.phi_deriv.resize(n);
        for (std::size_t i = 1; i + 1 < n; ++i) s.phi_deriv[i] = (ev.u[i + 1] - ev.u[i - 1]) / (2.0 * dx);
        s.phi_deriv[0] = (-3.0 * ev.u[0] + 4.0 * ev.u[1] - ev.u[2]) / (2.0 * dx);
        s.phi_deriv[n - 1] = (3.0 * ev.u[n - 1] - 4.0 * ev.u[n - 2] + ev.u[n - 3]) / (2.0 * dx);
        CHECK(std::abs(rayleigh_quotient(bm111(), s) - ev.lambda) < 1e-5);
    }

    TEST_CASE("property: principal eigenvalue dominates the oracle spectrum") {
        struct Case {
            ModelSpec m;
            oracle::Model o;
            double a, b, th;
        };
        const Case cases[] = {{bm111(), oracle::bm(1, 1, 1), -1.0, 1.0, 1.0},
                              {bm111(), oracle::bm(1, 1, 1), -0.5, 1.5, 0.3},
                              {ou2(), oracle::ou(2, 0.2, 1, 1, 1), -2.0, 1.5, 2.0}};
        for (const auto& c : cases) {
            const double lam = principal_eigenpair(c.m, c.a, c.b, RiskParam(c.th)).lambda0;
            const auto coarse = oracle::spectrum(c.o, c.a, c.b, c.th, 200);
            const auto fine = oracle::spectrum(c.o, c.a, c.b, c.th, 400);
            const double first = (4.0 * fine[0] - coarse[0]) / 3.0;
            const double second = (4.0 * fine[1] - coarse[1]) / 3.0;
            CHECK(std::abs(lam - first) < 1e-5);
            CHECK(lam > second);
            CHECK(first - second > 0.0);
        }
    }

    TEST_CASE("property: finite-volume bracket converges at second order") {
        const double l250 = fd_principal_eigenvalue(bm111(), -1.0, 1.0, RiskParam(1.0), 250);
        const double l500 = fd_principal_eigenvalue(bm111(), -1.0, 1.0, RiskParam(1.0), 500);
        const double l1000 = fd_principal_eigenvalue(bm111(), -1.0, 1.0, RiskParam(1.0), 1000);
        const double l2000 = fd_principal_eigenvalue(bm111(), -1.0, 1.0, RiskParam(1.0), 2000);
        const double d1 = std::abs(l250 - l500), d2 = std::abs(l500 - l1000), d3 = std::abs(l1000 - l2000);
        CHECK(std::log2(d1 / d2) >= 1.9);
        CHECK(std::log2(d2 / d3) >= 1.9);
    }

    TEST_CASE("property: ODE residual on the output grid") {
        for (const auto& [m, a, b, th] : {std::tuple{bm111(), -1.0, 1.0, 1.0}, std::tuple{ou2(), -2.2, 1.7, 0.6}}) {
            const auto s = principal_eigenpair(m, a, b, RiskParam(th));
            const std::size_t n = s.grid.size();
            const double dx = s.grid[1] - s.grid[0];
            std::vector<double> flux(n), zero(n);
            double scale = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double x = s.grid[i];
                const double q = scale_density(m, x);
                flux[i] = q * s.phi_deriv[i];
                zero[i] = 2.0 * th / m.at(x).sigma2() * (m.at(x).h - s.lambda0) * q * s.phi[i];
                scale = std::max(scale, std::abs(zero[i]));
            }
            double worst = 0.0;
            for (std::size_t i = 2; i + 2 < n; ++i) {
                const double dflux = (-flux[i + 2] + 8.0 * flux[i + 1] - 8.0 * flux[i - 1] + flux[i - 2]) / (12.0 * dx);
                worst = std::max(worst, std::abs(dflux + zero[i]));
            }
            CHECK(worst <= 1e-6 * std::max(1.0, scale));
        }
    }

    TEST_CASE("property: invariants over random intervals and parameters") {
        std::mt19937 rng(11);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        for (int trial = 0; trial < 8; ++trial) {
            const double s = 0.5 + U(rng), c = 0.5 + U(rng), K = 0.5 + U(rng), g = 0.5 + 2.0 * U(rng);
            const auto m = trial % 2 ? ModelSpec::bm_quadratic({s, c, K}) : ModelSpec::ou_quadratic({g, 0.1, s, c, K});
            const double a = -0.2 - 2.0 * U(rng), b = 0.2 + 2.0 * U(rng), th = 0.1 + 3.0 * U(rng);
            const auto sol = principal_eigenpair(m, a, b, RiskParam(th));
            check_invariants(m, sol);
            CHECK(std::abs(rayleigh_quotient(m, sol) - sol.lambda0) < 1e-6 * std::max(1.0, sol.lambda0));
        }
    }

    TEST_CASE("analytic partials match central finite differences") {
        const double step = 1e-4;
        struct Case {
            ModelSpec m;
            double a, b, th;
        };
        const Case cases[] = {{bm111(), -1.0, 1.0, 1.0},      {bm111(), -0.8, 1.3, 0.5}, {bm111(), -1.5, 0.6, 2.0},
                              {ou2(), -2.5, 2.0, 1.0},        {ou2(), -1.8, 1.2, 0.4},   {ou2(), -2.0, 2.5, 2.5}};
        for (const auto& c : cases) {
            const auto lam = [&](double a, double b, double th) {
                return principal_eigenpair(c.m, a, b, RiskParam(th)).lambda0;
            };
            const auto p = lambda_partials(c.m, c.a, c.b, RiskParam(c.th));
            const double fa = (lam(c.a + step, c.b, c.th) - lam(c.a - step, c.b, c.th)) / (2 * step);
            const double fb = (lam(c.a, c.b + step, c.th) - lam(c.a, c.b - step, c.th)) / (2 * step);
            const double ft = (lam(c.a, c.b, c.th + step) - lam(c.a, c.b, c.th - step)) / (2 * step);
            CHECK(p.d_alpha == doctest::Approx(fa).epsilon(1e-4));
            CHECK(p.d_beta == doctest::Approx(fb).epsilon(1e-4));
            CHECK(p.d_theta == doctest::Approx(ft).epsilon(1e-4));
            CHECK(p.d_theta > 0.0);
        }
    }

    TEST_CASE("symmetric interval gives antisymmetric end partials") {
        for (double beta : {0.5, 1.0, 1.7}) {
            const auto p = lambda_partials(bm111(), -beta, beta, RiskParam(0.9));
            CHECK(p.d_alpha == doctest::Approx(-p.d_beta).epsilon(1e-8));
        }
    }

    TEST_CASE("argument and convergence errors") {
        CHECK_THROWS_AS(principal_eigenpair(bm111(), 1.0, -1.0, RiskParam(1.0)), ArgumentError);
        CHECK_THROWS_AS(principal_eigenpair(bm111(), 0.0, 0.0, RiskParam(1.0)), ArgumentError);
        CHECK_THROWS_AS(principal_eigenpair(bm111(), 0.0, 5e-9, RiskParam(1.0)), ArgumentError);
        EigenOptions tight;
        tight.max_iterations = 1;
        tight.rtol = 1e-13;
        try {
            principal_eigenpair(bm111(), -1.0, 1.0, RiskParam(1.0), tight);
            FAIL("expected NumericalError");
        } catch (const NumericalError& e) {
            CHECK(e.bracket_lower() <= e.bracket_upper());
        }
    }

    TEST_CASE("integrate_samples") {
        std::vector<double> x(101), f(101);
        for (int i = 0; i <= 100; ++i) {
            x[i] = -1.0 + 0.03 * i;
            f[i] = x[i] * x[i] * x[i] - 2.0 * x[i] + 1.0;
        }
        const auto F = [](double t) { return t * t * t * t / 4.0 - t * t + t; };
        CHECK(integrate_samples(x, f) == doctest::Approx(F(2.0) - F(-1.0)).epsilon(1e-13));
        x.pop_back();
        f.pop_back();
        CHECK(integrate_samples(x, f) == doctest::Approx(F(1.97) - F(-1.0)).epsilon(1e-3));
    }
}
