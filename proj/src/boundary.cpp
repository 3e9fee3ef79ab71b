#include "riskctl/boundary.hpp"

#include "parallel.hpp"
#include "riskctl/error.hpp"
#include "riskctl/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace riskctl {

namespace {

// Runs to floating-point resolution; f(lo) and f(hi) must differ in sign.
template <class F>
double bisect(F&& f, double lo, double hi) {
    const bool lo_negative = f(lo) < 0.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= std::min(lo, hi) || mid >= std::max(lo, hi)) break;
        if ((f(mid) < 0.0) == lo_negative) lo = mid;
        else hi = mid;
    }
    return 0.5 * (lo + hi);
}

double level_tolerance(double level) { return 1e-9 * std::max(1.0, std::abs(level)); }

// Smallest beta >= beta_plus at which H+ reaches the level H-(alpha_minus).
double gamma_domain_start(const ModelSpec& model, RiskParam theta, const TurningPoints& tp, double horizon) {
    const double level = eval_H(model, theta, tp.alpha_minus, Side::Minus);
    const auto excess = [&](double b) { return eval_H(model, theta, b, Side::Plus) - level; };
    if (excess(tp.beta_plus) >= -level_tolerance(level)) return tp.beta_plus;
    double inner = tp.beta_plus;
    for (double step = 1.0;; step *= 2.0) {
        const double b = tp.beta_plus + step;
        if (step > horizon) throw AssumptionError("Hpm-lims", "H+ never reaches the minimum level of H-");
        if (excess(b) >= 0.0) return bisect(excess, inner, b);
        inner = b;
    }
}

struct Node {
    double w;   // w_x
    double dw;  // w_xx from the log-derivative ODE
};

Node interior_node(const BoundarySolution& sol, const ModelSpec& model, std::size_t i) {
    const auto& e = sol.eigen;
    const double x = e.grid[i];
    const auto c = model.at(x);
    const double w = e.phi_deriv[i] / (sol.theta * e.phi[i]);
    const double dw = 2.0 / c.sigma2() * (e.lambda0 - c.h - c.b * w) - sol.theta * w * w;
    return {w, dw};
}

std::size_t cell_index(const std::vector<double>& grid, double x) {
    auto it = std::upper_bound(grid.begin(), grid.end(), x);
    std::size_t i = static_cast<std::size_t>(it - grid.begin());
    i = i == 0 ? 0 : i - 1;
    return std::min(i, grid.size() - 2);
}

struct Hermite {
    double value;
    double slope;
};

// Cubic Hermite interpolant of w_x on the eigen grid, and its derivative.
Hermite hermite_gradient(const BoundarySolution& sol, const ModelSpec& model, double x) {
    const auto& g = sol.eigen.grid;
    const std::size_t i = cell_index(g, x);
    const Node a = interior_node(sol, model, i);
    const Node b = interior_node(sol, model, i + 1);
    const double h = g[i + 1] - g[i];
    const double t = (x - g[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    const double value = (2 * t3 - 3 * t2 + 1) * a.w + (t3 - 2 * t2 + t) * h * a.dw + (-2 * t3 + 3 * t2) * b.w +
                         (t3 - t2) * h * b.dw;
    const double slope = ((6 * t2 - 6 * t) * a.w + (-6 * t2 + 6 * t) * b.w) / h + (3 * t2 - 4 * t + 1) * a.dw +
                         (3 * t2 - 2 * t) * b.dw;
    return {value, slope};
}

}  // namespace

double gamma_map(const ModelSpec& model, RiskParam theta, const TurningPoints& tp, double beta,
                 double search_horizon) {
    if (beta < tp.beta_plus) throw ArgumentError("Gamma is defined for beta >= beta_plus only");
    const double target = eval_H(model, theta, beta, Side::Plus);
    const double floor_level = eval_H(model, theta, tp.alpha_minus, Side::Minus);
    if (target <= floor_level) {
        if (floor_level - target <= level_tolerance(target)) return tp.alpha_minus;
        throw ArgumentError("H+(beta) lies below the minimum level of H-; beta is outside the domain of Gamma");
    }
    const auto excess = [&](double x) { return eval_H(model, theta, x, Side::Minus) - target; };
    double inner = tp.alpha_minus;
    for (double step = 1.0;; step *= 2.0) {
        const double x = tp.alpha_minus - step;
        if (std::abs(x) > search_horizon)
            throw AssumptionError("Hpm-lims", "H- does not reach H+(beta) within the search horizon");
        if (excess(x) >= 0.0) return bisect(excess, x, inner);
        inner = x;
    }
}

double root_function(const ModelSpec& model, RiskParam theta, const TurningPoints& tp, double beta,
                     const BoundaryOptions& opts) {
    const double alpha = gamma_map(model, theta, tp, beta, opts.search_horizon);
    const double lambda = principal_eigenpair(model, alpha, beta, theta, opts.eigen).lambda0;
    return lambda - eval_H(model, theta, beta, Side::Plus);
}

BoundarySolution solve_boundaries(const ModelSpec& model, RiskParam theta, const BoundaryOptions& opts) {
    const TurningPoints tp = find_turning_points(model, theta, opts.turning);
    const double start = gamma_domain_start(model, theta, tp, opts.search_horizon);

    int evaluations = 0;
    const auto g = [&](double beta) {
        if (++evaluations > opts.max_iterations)
            throw NumericalError("free-boundary root search exceeded its iteration budget");
        return root_function(model, theta, tp, beta, opts);
    };

    // g is positive just above the start of Gamma's domain; find a positive point first.
    double step = opts.initial_step;
    double lo = start + step;
    while (!(g(lo) > 0.0)) {
        step *= 0.5;
        lo = start + step;
        if (step < 1e-12 * std::max(1.0, std::abs(start)))
            throw AssumptionError("Hpm-lims", "root function is not positive next to beta_plus");
    }
    // Expand by doubling steps until g changes sign.
    double hi = lo + step;
    while (g(hi) > 0.0) {
        lo = hi;
        step *= 2.0;
        hi = lo + step;
        if (hi - tp.beta_plus > opts.search_horizon)
            throw AssumptionError("Hpm-lims", "root function has no sign change within the search horizon");
    }
    while (hi - lo > opts.root_tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (g(mid) > 0.0) lo = mid;
        else hi = mid;
    }

    BoundarySolution sol;
    sol.theta = theta.value();
    sol.turning_points = tp;
    sol.beta_star = 0.5 * (lo + hi);
    sol.alpha_star = gamma_map(model, theta, tp, sol.beta_star, opts.search_horizon);
    sol.eigen = principal_eigenpair(model, sol.alpha_star, sol.beta_star, theta, opts.eigen);
    sol.lambda_star = sol.eigen.lambda0;
    sol.residuals.alpha_residual = std::abs(eval_H(model, theta, sol.alpha_star, Side::Minus) - sol.lambda_star);
    sol.residuals.beta_residual = std::abs(eval_H(model, theta, sol.beta_star, Side::Plus) - sol.lambda_star);
    sol.residuals.iterations = evaluations;

    if (!(sol.alpha_star < tp.alpha_minus) || !(sol.beta_star > tp.beta_plus))
        throw NumericalError("free boundaries do not enclose the turning points", sol.alpha_star, sol.beta_star);
    if (!(sol.lambda_star > 0.0)) throw NumericalError("optimal growth rate is not positive");
    return sol;
}

BoundarySolution boundary_solution_at(const ModelSpec& model, RiskParam theta, double alpha, double beta,
                                      double lambda_star, const EigenOptions& opts) {
    BoundarySolution sol;
    sol.theta = theta.value();
    sol.alpha_star = alpha;
    sol.beta_star = beta;
    sol.lambda_star = lambda_star;
    sol.turning_points = find_turning_points(model, theta);
    sol.eigen = principal_eigenpair(model, alpha, beta, theta, opts);
    sol.residuals.alpha_residual = std::abs(eval_H(model, theta, alpha, Side::Minus) - lambda_star);
    sol.residuals.beta_residual = std::abs(eval_H(model, theta, beta, Side::Plus) - lambda_star);
    return sol;
}

double value_gradient(const BoundarySolution& sol, const ModelSpec& model, double x) {
    if (x <= sol.alpha_star) return -model.at(x).kp;
    if (x >= sol.beta_star) return model.at(x).km;
    return hermite_gradient(sol, model, x).value;
}

double value_gradient_deriv(const BoundarySolution& sol, const ModelSpec& model, double x) {
    if (x <= sol.alpha_star) return -model.at(x).dkp;
    if (x >= sol.beta_star) return model.at(x).dkm;
    const double w = value_gradient(sol, model, x);
    const auto c = model.at(x);
    return 2.0 / c.sigma2() * (sol.eigen.lambda0 - c.h - c.b * w) - sol.theta * w * w;
}

HjbReport verify_hjb(const BoundarySolution& sol, const ModelSpec& model, const HjbProbe& probe) {
    HjbReport r;
    r.tolerance = probe.tolerance;
    r.probe_points = std::max<std::size_t>(probe.points, 2);
    const RiskParam theta(sol.theta);
    const double inf = std::numeric_limits<double>::infinity();
    r.outer_left_margin = r.outer_right_margin = r.band_lower_margin = r.band_upper_margin = inf;

    const double width = sol.beta_star - sol.alpha_star;
    const double a = sol.alpha_star - probe.extent * width;
    const double b = sol.beta_star + probe.extent * width;
    for (std::size_t i = 0; i < r.probe_points; ++i) {
        const double x = a + (b - a) * static_cast<double>(i) / static_cast<double>(r.probe_points - 1);
        if (x < sol.alpha_star) {
            r.outer_left_margin = std::min(r.outer_left_margin, eval_H(model, theta, x, Side::Minus) - sol.lambda_star);
        } else if (x > sol.beta_star) {
            r.outer_right_margin = std::min(r.outer_right_margin, eval_H(model, theta, x, Side::Plus) - sol.lambda_star);
        } else {
            const auto c = model.at(x);
            const Hermite w = hermite_gradient(sol, model, x);
            r.band_lower_margin = std::min(r.band_lower_margin, w.value + c.kp);
            r.band_upper_margin = std::min(r.band_upper_margin, c.km - w.value);
            const double s2 = c.sigma2();
            const double residual = 0.5 * s2 * w.slope + 0.5 * sol.theta * s2 * w.value * w.value + c.b * w.value +
                                    c.h - sol.lambda_star;
            r.riccati_residual = std::max(r.riccati_residual, std::abs(residual));
        }
    }

    const std::size_t last = sol.eigen.grid.size() - 1;
    const Node na = interior_node(sol, model, 0);
    const Node nb = interior_node(sol, model, last);
    const auto ca = model.at(sol.alpha_star);
    const auto cb = model.at(sol.beta_star);
    r.pasting_alpha_wx = std::abs(na.w + ca.kp);
    r.pasting_alpha_wxx = std::abs(na.dw + ca.dkp);
    r.pasting_beta_wx = std::abs(nb.w - cb.km);
    r.pasting_beta_wxx = std::abs(nb.dw - cb.dkm);

    // Node values bound the band as well as the probe points.
    for (std::size_t i = 0; i <= last; ++i) {
        const auto c = model.at(sol.eigen.grid[i]);
        const double w = interior_node(sol, model, i).w;
        r.band_lower_margin = std::min(r.band_lower_margin, w + c.kp);
        r.band_upper_margin = std::min(r.band_upper_margin, c.km - w);
    }

    const double tol = probe.tolerance;
    r.pass = r.outer_left_margin >= -tol && r.outer_right_margin >= -tol && r.band_lower_margin >= -tol &&
             r.band_upper_margin >= -tol && r.riccati_residual <= tol && r.pasting_alpha_wx <= tol &&
             r.pasting_alpha_wxx <= tol && r.pasting_beta_wx <= tol && r.pasting_beta_wxx <= tol;
    return r;
}

SweepTable theta_sweep(const ModelSpec& model, std::span<const double> thetas, const BoundaryOptions& opts,
                       unsigned threads) {
    if (thetas.empty()) throw ArgumentError("theta sweep needs at least one theta");
    for (std::size_t i = 0; i < thetas.size(); ++i) {
        if (!(thetas[i] > 0.0)) throw ArgumentError("sweep thetas must be positive");
        if (i > 0 && !(thetas[i] > thetas[i - 1])) throw ArgumentError("sweep thetas must be strictly increasing");
    }
    SweepTable table(thetas.size());
    detail::parallel_for(thetas.size(), threads, [&](std::size_t i) {
        SweepRow& row = table[i];
        row.theta = thetas[i];
        try {
            const RiskParam theta(thetas[i]);
            const auto sol = solve_boundaries(model, theta, opts);
            row.alpha_star = sol.alpha_star;
            row.beta_star = sol.beta_star;
            row.lambda_star = sol.lambda_star;
            row.dlambda_dtheta = lambda_partials(model, sol.eigen).d_theta;
            row.ok = true;
            row.status = "ok";
        } catch (const Error& e) {
            row.ok = false;
            row.status = std::string("failed: ") + e.what();
        }
    });
    return table;
}

std::string sweep_to_csv(const SweepTable& table) {
    std::ostringstream os;
    os << "theta,alpha_star,beta_star,lambda_star,dlambda_dtheta,status\n";
    for (const auto& r : table) {
        std::string status = r.status;
        std::replace(status.begin(), status.end(), ',', ';');
        std::replace(status.begin(), status.end(), '\n', ' ');
        os << format_double(r.theta) << ',' << format_double(r.alpha_star) << ',' << format_double(r.beta_star)
           << ',' << format_double(r.lambda_star) << ',' << format_double(r.dlambda_dtheta) << ',' << status
           << '\n';
    }
    return os.str();
}

}  // namespace riskctl
