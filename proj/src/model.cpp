#include "riskctl/model.hpp"

#include "riskctl/error.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace riskctl {

double Polynomial::value(double x) const {
    double acc = 0.0;
    for (auto it = coeffs.rbegin(); it != coeffs.rend(); ++it) acc = acc * x + *it;
    return acc;
}

double Polynomial::derivative(double x) const {
    double acc = 0.0;
    for (std::size_t i = coeffs.size(); i-- > 1;) acc = acc * x + static_cast<double>(i) * coeffs[i];
    return acc;
}

double Polynomial::second_derivative(double x) const {
    double acc = 0.0;
    for (std::size_t i = coeffs.size(); i-- > 2;)
        acc = acc * x + static_cast<double>(i * (i - 1)) * coeffs[i];
    return acc;
}

ModelSpec::ModelSpec(ModelForm form, double sigma2_bound, double push_cost_bound)
    : form_(std::move(form)), sigma2_bound_(sigma2_bound), push_cost_bound_(push_cost_bound) {
    if (!(sigma2_bound_ > 0.0) || !(push_cost_bound_ > 0.0))
        throw ArgumentError("model bounds must be positive");
}

ModelSpec ModelSpec::ou_quadratic(const OuQuadratic& p) {
    if (!(p.gamma > 0.0) || !(p.sigma > 0.0) || !(p.c > 0.0) || !(p.K > 0.0))
        throw ArgumentError("ou_quadratic requires gamma, sigma, c, K > 0");
    return ModelSpec(p, 2.0 * p.sigma * p.sigma, 2.0 * p.K);
}

ModelSpec ModelSpec::bm_quadratic(const BmQuadratic& p) {
    if (!(p.sigma > 0.0) || !(p.c > 0.0) || !(p.K > 0.0))
        throw ArgumentError("bm_quadratic requires sigma, c, K > 0");
    return ModelSpec(p, 2.0 * p.sigma * p.sigma, 2.0 * p.K);
}

ModelSpec ModelSpec::custom_poly(CustomPoly p, double sigma2_bound, double push_cost_bound) {
    if (p.volatility.coeffs.empty()) throw ArgumentError("custom_poly requires a volatility polynomial");
    return ModelSpec(std::move(p), sigma2_bound, push_cost_bound);
}

namespace {

struct Evaluator {
    double x;

    PointCoefficients operator()(const OuQuadratic& p) const {
        return {p.gamma * (p.mu - x), -p.gamma, p.sigma, 0.0, p.c * x * x, 2.0 * p.c * x,
                p.K, 0.0, 0.0, p.K, 0.0, 0.0};
    }
    PointCoefficients operator()(const BmQuadratic& p) const {
        return {0.0, 0.0, p.sigma, 0.0, p.c * x * x, 2.0 * p.c * x, p.K, 0.0, 0.0, p.K, 0.0, 0.0};
    }
    PointCoefficients operator()(const CustomPoly& p) const {
        return {p.drift.value(x),
                p.drift.derivative(x),
                p.volatility.value(x),
                p.volatility.derivative(x),
                p.running_cost.value(x),
                p.running_cost.derivative(x),
                p.push_cost_up.value(x),
                p.push_cost_up.derivative(x),
                p.push_cost_up.second_derivative(x),
                p.push_cost_down.value(x),
                p.push_cost_down.derivative(x),
                p.push_cost_down.second_derivative(x)};
    }
};

}  // namespace

PointCoefficients ModelSpec::at(double x) const { return std::visit(Evaluator{x}, form_); }

void ModelSpec::check_assumptions_at(double x) const {
    const auto c = at(x);
    const double s2 = c.sigma2();
    if (!(s2 > 0.0)) throw InvalidModelError("sigma^2 must be positive", x);
    if (!(s2 < sigma2_bound_)) throw InvalidModelError("sigma^2 exceeds its declared bound", x);
    if (!(c.h >= 0.0)) throw InvalidModelError("running cost h must be non-negative", x);
    if (!(c.kp > 0.0) || !(c.kp < push_cost_bound_))
        throw InvalidModelError("push cost k+ outside (0, K)", x);
    if (!(c.km > 0.0) || !(c.km < push_cost_bound_))
        throw InvalidModelError("push cost k- outside (0, K)", x);
}

std::string ModelSpec::form_name() const {
    struct Name {
        std::string operator()(const OuQuadratic&) const { return "ou_quadratic"; }
        std::string operator()(const BmQuadratic&) const { return "bm_quadratic"; }
        std::string operator()(const CustomPoly&) const { return "custom_poly"; }
    };
    return std::visit(Name{}, form_);
}

RiskParam::RiskParam(double theta) : theta_(theta) {
    if (!(theta > 0.0) || !std::isfinite(theta)) throw ArgumentError("theta must be positive and finite");
}

double eval_H(const ModelSpec& model, RiskParam theta, double x, Side side) {
    model.check_assumptions_at(x);
    const auto c = model.at(x);
    const double s2 = c.sigma2();
    const double th = theta.value();
    if (side == Side::Minus) return 0.5 * th * s2 * c.kp * c.kp - 0.5 * s2 * c.dkp - c.b * c.kp + c.h;
    return 0.5 * th * s2 * c.km * c.km + 0.5 * s2 * c.dkm + c.b * c.km + c.h;
}

double eval_H_deriv(const ModelSpec& model, RiskParam theta, double x, Side side) {
    model.check_assumptions_at(x);
    const auto c = model.at(x);
    const double s2 = c.sigma2();
    const double ds2 = 2.0 * c.sigma * c.dsigma;
    const double th = theta.value();
    if (side == Side::Minus) {
        return 0.5 * th * (ds2 * c.kp * c.kp + 2.0 * s2 * c.kp * c.dkp) -
               0.5 * (ds2 * c.dkp + s2 * c.d2kp) - (c.db * c.kp + c.b * c.dkp) + c.dh;
    }
    return 0.5 * th * (ds2 * c.km * c.km + 2.0 * s2 * c.km * c.dkm) + 0.5 * (ds2 * c.dkm + s2 * c.d2km) +
           (c.db * c.km + c.b * c.dkm) + c.dh;
}

namespace {

template <class F>
double bisect_sign_change(F&& f, double lo, double hi) {
    // f(lo) and f(hi) have opposite signs; runs to floating-point resolution.
    const bool lo_negative = f(lo) < 0.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= std::min(lo, hi) || mid >= std::max(lo, hi)) break;
        if ((f(mid) < 0.0) == lo_negative) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

template <class F>
double golden_section_min(F&& f, double a, double b) {
    constexpr double invphi = 0.6180339887498949;
    double c = b - invphi * (b - a);
    double d = a + invphi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < 200 && (b - a) > 1e-14 * std::max(1.0, std::abs(a) + std::abs(b)); ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

struct SideSearch {
    double lower;
    double upper;
};

SideSearch locate_side(const ModelSpec& model, RiskParam theta, Side side, const TurningPointOptions& opts) {
    const std::string cond = side == Side::Minus ? "h-ass1" : "h-ass2";
    const auto H = [&](double x) { return eval_H(model, theta, x, side); };
    const auto dH = [&](double x) { return eval_H_deriv(model, theta, x, side); };
    const std::size_t n = std::max<std::size_t>(opts.structure_samples, 11);

    // Scan a symmetric window, doubling it until the sampled minimum is interior.
    double half = 1.0;
    std::vector<double> xs(n), hs(n);
    std::size_t imin = 0;
    for (;;) {
        for (std::size_t i = 0; i < n; ++i) {
            xs[i] = -half + 2.0 * half * static_cast<double>(i) / static_cast<double>(n - 1);
            hs[i] = H(xs[i]);
        }
        imin = static_cast<std::size_t>(std::min_element(hs.begin(), hs.end()) - hs.begin());
        if (imin > 0 && imin + 1 < n) break;
        half *= 2.0;
        if (half > opts.search_horizon)
            throw AssumptionError(cond, "H has no interior minimiser within the search horizon");
    }

    double m = golden_section_min(H, xs[imin - 1], xs[imin + 1]);
    if (dH(xs[imin - 1]) < 0.0 && dH(xs[imin + 1]) > 0.0) m = bisect_sign_change(dH, xs[imin - 1], xs[imin + 1]);
    const double hmin = H(m);

    // The relevant infinity: -inf for H-, +inf for H+.
    const double dir = side == Side::Minus ? -1.0 : 1.0;
    for (double step = 1.0;; step *= 2.0) {
        const double x = m + dir * step;
        if (std::abs(x) > opts.search_horizon)
            throw AssumptionError("Hpm-lims", "H does not diverge at infinity within the search horizon");
        if (H(x) > hmin + opts.divergence_margin) break;
    }

    SideSearch out{m, m};
    if (hmin < 0.0) {
        const auto positive_point = [&](double sgn) {
            for (double step = 1.0;; step *= 2.0) {
                const double x = m + sgn * step;
                if (std::abs(x) > opts.search_horizon)
                    throw AssumptionError(cond, "H stays negative up to the search horizon");
                if (H(x) > 0.0) return x;
            }
        };
        out.lower = bisect_sign_change(H, positive_point(-1.0), m);
        out.upper = bisect_sign_change(H, m, positive_point(1.0));
    }

    // Sign-structure check: positive and strictly monotone outside
    // [lower, upper], negative inside.
    const double span = std::max({5.0, out.upper - out.lower, half});
    const double a = out.lower - span;
    const double b = out.upper + span;
    const double edge = 1e-9 * std::max(1.0, std::abs(out.lower) + std::abs(out.upper));
    double prev_x = 0.0, prev_h = 0.0;
    bool have_prev = false;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
        const double h = H(x);
        const double tol = 1e-12 * std::max(1.0, std::abs(h));
        if (x < out.lower - edge || x > out.upper + edge) {
            if (!(h > 0.0)) {
                std::ostringstream os;
                os << "H is not positive at x = " << x << " outside the turning points";
                throw AssumptionError(cond, os.str());
            }
            if (have_prev && x < out.lower - edge && !(h < prev_h + tol))
                throw AssumptionError(cond, "H is not decreasing to the left of its negative region");
            if (have_prev && x > out.upper + edge && prev_x > out.upper + edge && !(h > prev_h - tol))
                throw AssumptionError(cond, "H is not increasing to the right of its negative region");
        } else if (x > out.lower + edge && x < out.upper - edge && !(h < 0.0)) {
            throw AssumptionError(cond, "more than one negative interval detected");
        }
        prev_x = x;
        prev_h = h;
        have_prev = true;
    }
    return out;
}

}  // namespace

TurningPoints find_turning_points(const ModelSpec& model, RiskParam theta, const TurningPointOptions& opts) {
    const auto minus = locate_side(model, theta, Side::Minus, opts);
    const auto plus = locate_side(model, theta, Side::Plus, opts);
    return {minus.lower, minus.upper, plus.lower, plus.upper};
}

double log_scale_density(const ModelSpec& model, double x) {
    if (x == 0.0) return 0.0;
    const auto integrand = [&](double y) {
        const auto c = model.at(y);
        return 2.0 * c.b / c.sigma2();
    };
    double err = 0.0;
    const double lo = std::min(0.0, x), hi = std::max(0.0, x);
    const double value =
        boost::math::quadrature::gauss_kronrod<double, 15>::integrate(integrand, lo, hi, 15, 1e-14, &err);
    if (!std::isfinite(value) || err > 1e-10 * std::max(1.0, std::abs(value))) {
        std::ostringstream os;
        os << "scale density quadrature did not converge (achieved error " << err << ")";
        throw NumericalError(os.str());
    }
    return x > 0.0 ? value : -value;
}

double scale_density(const ModelSpec& model, double x) { return std::exp(log_scale_density(model, x)); }

std::vector<double> log_scale_density_on_grid(const ModelSpec& model, std::span<const double> grid) {
    std::vector<double> out(grid.size());
    if (grid.empty()) return out;
    const auto integrand = [&](double y) {
        const auto c = model.at(y);
        return 2.0 * c.b / c.sigma2();
    };
    out[0] = log_scale_density(model, grid[0]);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        double err = 0.0;
        const double cell = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
            integrand, grid[i - 1], grid[i], 6, 1e-14, &err);
        out[i] = out[i - 1] + cell;
    }
    return out;
}

}  // namespace riskctl
