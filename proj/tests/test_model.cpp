#include "oracles.hpp"
#include "riskctl/error.hpp"
#include "riskctl/model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace riskctl;

namespace {

ModelSpec bm111() { return ModelSpec::bm_quadratic({1.0, 1.0, 1.0}); }
ModelSpec ou(double g, double mu) { return ModelSpec::ou_quadratic({g, mu, 1.0, 1.0, 1.0}); }

ModelSpec custom_smooth() {
    CustomPoly p;
    p.drift.coeffs = {0.3, -1.0, 0.0, -0.2};
    p.volatility.coeffs = {1.0, 0.05, 0.02};
    p.running_cost.coeffs = {0.2, 0.0, 1.0};
    p.push_cost_up.coeffs = {1.0, 0.1, 0.02};
    p.push_cost_down.coeffs = {0.8, -0.05, 0.03};
    return ModelSpec::custom_poly(p, 10.0, 10.0);
}

double rel(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_SUITE("model") {
    TEST_CASE("switching function closed forms") {
        CHECK(eval_H(bm111(), RiskParam(1.0), 2.0, Side::Minus) == doctest::Approx(4.5).epsilon(1e-15));
        CHECK(eval_H(bm111(), RiskParam(1.0), 2.0, Side::Plus) == doctest::Approx(4.5).epsilon(1e-15));
        CHECK(eval_H(ou(2.0, 0.0), RiskParam(1.0), -1.0, Side::Minus) == doctest::Approx(-0.5).epsilon(1e-15));
    }

    TEST_CASE("eval_H equals direct assembly from the coefficient fields") {
        const auto m = custom_smooth();
        for (double x = -3.0; x <= 3.0; x += 0.37) {
            const auto c = m.at(x);
            const double s2 = c.sigma * c.sigma;
            const double minus = 0.5 * 0.7 * s2 * c.kp * c.kp - 0.5 * s2 * c.dkp - c.b * c.kp + c.h;
            const double plus = 0.5 * 0.7 * s2 * c.km * c.km + 0.5 * s2 * c.dkm + c.b * c.km + c.h;
            CHECK(eval_H(m, RiskParam(0.7), x, Side::Minus) == doctest::Approx(minus).epsilon(1e-15));
            CHECK(eval_H(m, RiskParam(0.7), x, Side::Plus) == doctest::Approx(plus).epsilon(1e-15));
        }
    }

    TEST_CASE("eval_H agrees with the independent oracle on the presets") {
        const auto lib = ou(2.0, 0.2);
        const auto ref = oracle::ou(2.0, 0.2, 1.0, 1.0, 1.0);
        for (double th : {0.25, 1.0, 3.0})
            for (double x = -4.0; x <= 4.0; x += 0.25) {
                CHECK(rel(eval_H(lib, RiskParam(th), x, Side::Minus), oracle::H_minus(ref, th, x)) < 1e-13);
                CHECK(rel(eval_H(lib, RiskParam(th), x, Side::Plus), oracle::H_plus(ref, th, x)) < 1e-13);
            }
    }

    TEST_CASE("property: H- minus H+ identity") {
        for (const auto& m : {bm111(), ou(2.0, 0.2), ou(0.5, -0.4), custom_smooth()}) {
            for (double th : {0.3, 1.0, 2.5}) {
                for (double x = -3.0; x <= 3.0; x += 0.1) {
                    const auto c = m.at(x);
                    const double s2 = c.sigma2();
                    const double expect = -s2 * (c.dkp + c.dkm) / 2.0 + th * s2 * (c.kp * c.kp - c.km * c.km) / 2.0 -
                                          c.b * (c.kp + c.km);
                    const double got = eval_H(m, RiskParam(th), x, Side::Minus) - eval_H(m, RiskParam(th), x, Side::Plus);
                    const double scale = std::max({1.0, std::abs(eval_H(m, RiskParam(th), x, Side::Minus)),
                                                   std::abs(eval_H(m, RiskParam(th), x, Side::Plus))});
                    CHECK(std::abs(got - expect) <= 1e-12 * scale);
                }
            }
        }
    }

    TEST_CASE("property: derivatives match central finite differences") {
        const double eps = 1e-5;
        for (const auto& m : {bm111(), ou(2.0, 0.2), custom_smooth()}) {
            for (double x = -2.5; x <= 2.5; x += 0.31) {
                const auto c = m.at(x), cp = m.at(x + eps), cm = m.at(x - eps);
                const auto fd = [&](double hi, double lo) { return (hi - lo) / (2.0 * eps); };
                const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(b)); };
                CHECK(close(c.db, fd(cp.b, cm.b)));
                CHECK(close(c.dsigma, fd(cp.sigma, cm.sigma)));
                CHECK(close(c.dh, fd(cp.h, cm.h)));
                CHECK(close(c.dkp, fd(cp.kp, cm.kp)));
                CHECK(close(c.d2kp, fd(cp.dkp, cm.dkp)));
                CHECK(close(c.dkm, fd(cp.km, cm.km)));
                CHECK(close(c.d2km, fd(cp.dkm, cm.dkm)));
                for (Side side : {Side::Minus, Side::Plus}) {
                    const double d = fd(eval_H(m, RiskParam(1.3), x + eps, side), eval_H(m, RiskParam(1.3), x - eps, side));
                    CHECK(close(eval_H_deriv(m, RiskParam(1.3), x, side), d));
                }
            }
        }
    }

    TEST_CASE("polynomial evaluation") {
        const Polynomial p{{1.0, -2.0, 0.5, 3.0}};
        CHECK(p.value(2.0) == doctest::Approx(1.0 - 4.0 + 2.0 + 24.0));
        CHECK(p.derivative(2.0) == doctest::Approx(-2.0 + 2.0 + 36.0));
        CHECK(p.second_derivative(2.0) == doctest::Approx(1.0 + 36.0));
        CHECK(Polynomial{}.value(5.0) == 0.0);
    }

    TEST_CASE("turning points: BM-quadratic has coincident minimisers at 0") {
        const auto tp = find_turning_points(bm111(), RiskParam(1.0));
        CHECK(std::abs(tp.alpha_minus) < 1e-8);
        CHECK(std::abs(tp.alpha_plus) < 1e-8);
        CHECK(std::abs(tp.beta_minus) < 1e-8);
        CHECK(std::abs(tp.beta_plus) < 1e-8);
    }

    TEST_CASE("turning points: OU-quadratic closed forms") {
        const auto tp = find_turning_points(ou(2.0, 0.0), RiskParam(1.0));
        const double r = std::sqrt(0.5);
        CHECK(std::abs(tp.alpha_minus - (-1.0 - r)) < 1e-8);
        CHECK(std::abs(tp.alpha_plus - (-1.0 + r)) < 1e-8);
        CHECK(std::abs(tp.beta_minus - (1.0 - r)) < 1e-8);
        CHECK(std::abs(tp.beta_plus - (1.0 + r)) < 1e-8);
    }

    TEST_CASE("turning points: OU-quadratic with mu != 0 against the quadratic formula") {
        // H-(x) = c (x + gK/2c)^2 + th s^2 K^2/2 - g^2K^2/4c - g mu K, H+ mirrored with vertex +gK/2c.
        const double g = 1.5, mu = 0.1, th = 0.8;
        const auto tp = find_turning_points(ou(g, mu), RiskParam(th));
        const double vm = -g / 2.0, vp = g / 2.0;
        const double dm = g * g / 4.0 + g * mu - th / 2.0;
        const double dp = g * g / 4.0 - g * mu - th / 2.0;
        REQUIRE(dm > 0.0);
        REQUIRE(dp > 0.0);
        CHECK(std::abs(tp.alpha_minus - (vm - std::sqrt(dm))) < 1e-8);
        CHECK(std::abs(tp.alpha_plus - (vm + std::sqrt(dm))) < 1e-8);
        CHECK(std::abs(tp.beta_minus - (vp - std::sqrt(dp))) < 1e-8);
        CHECK(std::abs(tp.beta_plus - (vp + std::sqrt(dp))) < 1e-8);

        // mu = 0.3 keeps H+ positive: both beta points sit at its vertex.
        const auto coincident = find_turning_points(ou(g, 0.3), RiskParam(th));
        CHECK(std::abs(coincident.beta_minus - vp) < 1e-7);
        CHECK(std::abs(coincident.beta_plus - vp) < 1e-7);
        CHECK(coincident.alpha_minus < coincident.alpha_plus);
    }

    TEST_CASE("turning points: mirror symmetry for even models") {
        CustomPoly p;
        p.drift.coeffs = {0.0};
        p.volatility.coeffs = {1.2};
        p.running_cost.coeffs = {0.1, 0.0, 1.0, 0.0, 0.3};
        p.push_cost_up.coeffs = {0.7};
        p.push_cost_down.coeffs = {0.7};
        const auto even = ModelSpec::custom_poly(p, 4.0, 2.0);
        for (const auto& m : {even, ModelSpec::bm_quadratic({0.6, 2.0, 1.5})}) {
            const auto tp = find_turning_points(m, RiskParam(1.7));
            CHECK(std::abs(tp.beta_minus + tp.alpha_plus) < 1e-8);
            CHECK(std::abs(tp.beta_plus + tp.alpha_minus) < 1e-8);
        }
    }

    TEST_CASE("property: sign structure around the turning points") {
        std::mt19937 rng(7);
        std::uniform_real_distribution<double> U(0.0, 1.0);
        for (int trial = 0; trial < 12; ++trial) {
            const double g = 0.3 + 2.5 * U(rng), mu = -0.5 + U(rng), s = 0.5 + U(rng), c = 0.5 + U(rng),
                         K = 0.5 + U(rng), th = 0.2 + 2.0 * U(rng);
            const auto m = trial % 3 == 0 ? ModelSpec::bm_quadratic({s, c, K}) : ModelSpec::ou_quadratic({g, mu, s, c, K});
            const RiskParam theta(th);
            const auto tp = find_turning_points(m, theta);
            CHECK(tp.alpha_minus <= tp.alpha_plus);
            CHECK(tp.beta_minus <= tp.beta_plus);
            const double lo = tp.alpha_minus - 5.0, hi = tp.beta_plus + 5.0;
            for (int i = 0; i < 1000; ++i) {
                const double x = lo + (hi - lo) * i / 999.0;
                const double hm = eval_H(m, theta, x, Side::Minus);
                const double hp = eval_H(m, theta, x, Side::Plus);
                const double tol = 1e-9;
                if (x < tp.alpha_minus - tol || x > tp.alpha_plus + tol) CHECK(hm > -1e-12);
                if (x > tp.alpha_minus + tol && x < tp.alpha_plus - tol) CHECK(hm < 0.0);
                if (x < tp.beta_minus - tol || x > tp.beta_plus + tol) CHECK(hp > -1e-12);
                if (x > tp.beta_minus + tol && x < tp.beta_plus - tol) CHECK(hp < 0.0);
            }
        }
    }

    TEST_CASE("turning points: structure violations raise assumption errors") {
        CustomPoly p;
        p.volatility.coeffs = {1.0};
        p.push_cost_up.coeffs = {1.0};
        p.push_cost_down.coeffs = {1.0};
        SUBCASE("two negative intervals of H-") {
            // H- = x^4 - 2 x^2 + 0.5 with unit data.
            p.drift.coeffs = {0.0, 0.0, 2.0};
            p.running_cost.coeffs = {0.0, 0.0, 0.0, 0.0, 1.0};
            const auto m = ModelSpec::custom_poly(p, 2.0, 2.0);
            try {
                find_turning_points(m, RiskParam(1.0));
                FAIL("expected an assumption error");
            } catch (const AssumptionError& e) {
                CHECK(e.condition() == "h-ass1");
            }
        }
        SUBCASE("H- unbounded below") {
            p.drift.coeffs = {0.0, 0.0, 0.0, 1.0};
            p.running_cost.coeffs = {0.0, 0.0, 1.0};
            const auto m = ModelSpec::custom_poly(p, 2.0, 2.0);
            CHECK_THROWS_AS(find_turning_points(m, RiskParam(1.0)), AssumptionError);
        }
    }

    TEST_CASE("invalid models and parameters") {
        CustomPoly p;
        p.drift.coeffs = {0.0};
        p.volatility.coeffs = {0.0, 1.0};  // sigma vanishes at 0
        p.running_cost.coeffs = {1.0};
        p.push_cost_up.coeffs = {1.0};
        p.push_cost_down.coeffs = {1.0};
        const auto degenerate = ModelSpec::custom_poly(p, 100.0, 2.0);
        CHECK_THROWS_AS(eval_H(degenerate, RiskParam(1.0), 0.0, Side::Minus), InvalidModelError);
        CHECK_NOTHROW(eval_H(degenerate, RiskParam(1.0), 0.5, Side::Minus));

        p.volatility.coeffs = {1.0};
        p.push_cost_up.coeffs = {0.5, 1.0};  // k+ <= 0 for x <= -0.5
        const auto bad_k = ModelSpec::custom_poly(p, 2.0, 5.0);
        try {
            eval_H(bad_k, RiskParam(1.0), -1.0, Side::Minus);
            FAIL("expected InvalidModelError");
        } catch (const InvalidModelError& e) {
            CHECK(e.where() == -1.0);
        }
        p.push_cost_up.coeffs = {1.0};
        CHECK_THROWS_AS(eval_H(ModelSpec::custom_poly(p, 0.5, 2.0), RiskParam(1.0), 0.0, Side::Plus),
                        InvalidModelError);  // sigma^2 above its bound

        CHECK_THROWS_AS(RiskParam(0.0), ArgumentError);
        CHECK_THROWS_AS(RiskParam(-1.0), ArgumentError);
        CHECK_THROWS_AS(RiskParam(std::nan("")), ArgumentError);
        CHECK_THROWS_AS(ModelSpec::bm_quadratic({0.0, 1.0, 1.0}), ArgumentError);
        CHECK_THROWS_AS(ModelSpec::ou_quadratic({-1.0, 0.0, 1.0, 1.0, 1.0}), ArgumentError);
    }

    TEST_CASE("scale density") {
        CHECK(scale_density(ou(2.0, 0.2), 0.0) == 1.0);
        CHECK(scale_density(bm111(), 3.7) == 1.0);
        CHECK(scale_density(bm111(), -2.0) == 1.0);
        CHECK(scale_density(ModelSpec::ou_quadratic({1.0, 0.0, 1.0, 1.0, 1.0}), 2.0) ==
              doctest::Approx(std::exp(-4.0)).epsilon(1e-12));
        const auto ref = oracle::ou(2.0, 0.2, 1.0, 1.0, 1.0);
        for (double x : {-2.0, -0.5, 0.7, 1.9})
            CHECK(log_scale_density(ou(2.0, 0.2), x) == doctest::Approx(ref.log_q(x)).epsilon(1e-12));
    }

    TEST_CASE("scale density with non-constant volatility against Simpson") {
        const auto m = custom_smooth();
        for (double x : {-1.5, 0.4, 2.0}) {
            const double ref = oracle::simpson(
                [&](double y) {
                    const auto c = m.at(y);
                    return 2.0 * c.b / c.sigma2();
                },
                0.0, x, 4000);
            CHECK(log_scale_density(m, x) == doctest::Approx(ref).epsilon(1e-10));
        }
    }

    TEST_CASE("property: scale density is positive and multiplicative") {
        for (const auto& m : {ou(2.0, 0.2), custom_smooth()}) {
            for (double x : {-2.0, -0.3, 0.8, 2.2}) {
                for (double mid : {-1.0, 0.5, 1.5}) {
                    const double direct = scale_density(m, x);
                    const double split =
                        std::exp(log_scale_density(m, mid) + (log_scale_density(m, x) - log_scale_density(m, mid)));
                    CHECK(direct > 0.0);
                    CHECK(direct == doctest::Approx(split).epsilon(1e-10));
                }
            }
        }
        const auto m = custom_smooth();
        const std::vector<double> grid{-2.0, -1.1, -0.2, 0.0, 0.6, 1.7, 2.4};
        const auto lq = log_scale_density_on_grid(m, grid);
        for (std::size_t i = 0; i < grid.size(); ++i)
            CHECK(lq[i] == doctest::Approx(log_scale_density(m, grid[i])).epsilon(1e-10));
    }

    TEST_CASE("model equality") {
        CHECK(bm111() == bm111());
        CHECK(!(bm111() == ou(2.0, 0.0)));
        CHECK(custom_smooth().form_name() == "custom_poly");
        CHECK(bm111().sigma2_bound() == 2.0);
        CHECK(bm111().push_cost_bound() == 2.0);
    }
}
