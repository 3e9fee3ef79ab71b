#include "riskctl/sturm.hpp"

#include "riskctl/error.hpp"

#include <boost/math/tools/toms748_solve.hpp>
#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace riskctl {

namespace {

namespace odeint = boost::numeric::odeint;

// (u, q u', ln q)
using State = std::array<double, 3>;

constexpr double kRescaleThreshold = 1e100;
constexpr double kRescaleFactor = 1e-100;

struct Shot {
    double residual;  // beta-side Robin residual, scaled by max(|u|, |u'|)
    int zeros;        // sign changes of u inside (alpha, beta)
};

struct Recording {
    std::span<const double> grid;
    std::vector<double> u, p, log_q, log_scale;
};

class Shooter {
public:
    Shooter(const ModelSpec& model, double alpha, double beta, double theta, const EigenOptions& opts)
        : model_(model), alpha_(alpha), beta_(beta), theta_(theta), opts_(opts),
          log_q_alpha_(log_scale_density(model, alpha)) {}

    Shot shoot(double lambda, Recording* rec = nullptr) const {
        const auto rhs = [&](const State& y, State& dy, double x) {
            const auto c = model_.at(x);
            const double s2 = c.sigma2();
            const double q = std::exp(y[2]);
            dy[0] = y[1] / q;
            dy[1] = -(2.0 * theta_ / s2) * (c.h - lambda) * q * y[0];
            dy[2] = 2.0 * c.b / s2;
        };

        const auto ca = model_.at(alpha_);
        State y{1.0, -theta_ * ca.kp * std::exp(log_q_alpha_), log_q_alpha_};
        const double width = beta_ - alpha_;
        auto stepper = odeint::make_dense_output(opts_.atol, opts_.rtol, odeint::runge_kutta_dopri5<State>());
        stepper.initialize(y, alpha_, width / 64.0);

        double log_scale = 0.0;
        std::size_t next = 0;
        if (rec) {
            const std::size_t n = rec->grid.size();
            rec->u.assign(n, 0.0);
            rec->p.assign(n, 0.0);
            rec->log_q.assign(n, 0.0);
            rec->log_scale.assign(n, 0.0);
            record(*rec, next++, y, log_scale);
        }

        int zeros = 0;
        double prev_u = y[0];
        const double t_end_slack = 1e-14 * std::max(1.0, std::abs(beta_));
        while (stepper.current_time() < beta_ - t_end_slack) {
            const double t = stepper.current_time();
            if (t + stepper.current_time_step() > beta_)
                stepper.initialize(stepper.current_state(), t, beta_ - t);
            const auto [t0, t1] = stepper.do_step(rhs);
            (void)t0;

            if (rec) {
                State ys{};
                while (next < rec->grid.size() && rec->grid[next] <= t1) {
                    stepper.calc_state(rec->grid[next], ys);
                    record(*rec, next++, ys, log_scale);
                }
            }

            State cur = stepper.current_state();
            if ((cur[0] < 0.0) != (prev_u < 0.0) || cur[0] == 0.0) ++zeros;
            prev_u = cur[0];

            if (std::max(std::abs(cur[0]), std::abs(cur[1])) > kRescaleThreshold) {
                cur[0] *= kRescaleFactor;
                cur[1] *= kRescaleFactor;
                prev_u *= kRescaleFactor;
                log_scale -= std::log(kRescaleFactor);
                stepper.initialize(cur, stepper.current_time(), stepper.current_time_step());
            }
        }

        const State end = stepper.current_state();
        if (rec) {
            // Grid points that fell into the end slack, including beta itself.
            while (next < rec->grid.size()) record(*rec, next++, end, log_scale);
        }
        const auto cb = model_.at(beta_);
        const double du = end[1] * std::exp(-end[2]);
        const double scale = std::max({std::abs(end[0]), std::abs(du), std::numeric_limits<double>::min()});
        // A zero exactly at beta is counted as interior: u(beta) = 0 lies past the first zero.
        if (end[0] == 0.0 && zeros == 0) zeros = 1;
        return {(theta_ * cb.km * end[0] - du) / scale, zeros};
    }

private:
    static void record(Recording& rec, std::size_t i, const State& y, double log_scale) {
        rec.u[i] = y[0];
        rec.p[i] = y[1];
        rec.log_q[i] = y[2];
        rec.log_scale[i] = log_scale;
    }

    const ModelSpec& model_;
    double alpha_, beta_, theta_;
    EigenOptions opts_;
    double log_q_alpha_;
};

void validate_interval(double alpha, double beta, double min_interval) {
    if (!std::isfinite(alpha) || !std::isfinite(beta)) throw ArgumentError("interval end points must be finite");
    if (!(alpha < beta)) throw ArgumentError("alpha must be strictly less than beta");
    if (beta - alpha < min_interval) throw ArgumentError("interval is shorter than the minimum length");
}

std::vector<double> uniform_grid(double a, double b, std::size_t n) {
    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i)
        g[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    g.front() = a;
    g.back() = b;
    return g;
}

}  // namespace

double integrate_samples(std::span<const double> grid, std::span<const double> values) {
    const std::size_t n = grid.size();
    if (n != values.size()) throw ArgumentError("grid and values differ in length");
    if (n < 2) return 0.0;
    const double h0 = grid[1] - grid[0];
    bool uniform = n % 2 == 1;
    for (std::size_t i = 1; uniform && i < n; ++i)
        uniform = std::abs((grid[i] - grid[i - 1]) - h0) <= 1e-9 * std::abs(h0);
    if (uniform && n >= 3) {
        double odd = 0.0, even = 0.0;
        for (std::size_t i = 1; i + 1 < n; ++i) (i % 2 ? odd : even) += values[i];
        return (grid[n - 1] - grid[0]) / static_cast<double>(n - 1) / 3.0 *
               (values[0] + values[n - 1] + 4.0 * odd + 2.0 * even);
    }
    double acc = 0.0;
    for (std::size_t i = 1; i < n; ++i) acc += 0.5 * (grid[i] - grid[i - 1]) * (values[i] + values[i - 1]);
    return acc;
}

double fd_principal_eigenvalue(const ModelSpec& model, double alpha, double beta, RiskParam theta,
                               std::size_t cells) {
    validate_interval(alpha, beta, 0.0);
    if (cells < 2) throw ArgumentError("finite-difference bracket needs at least two cells");
    const double th = theta.value();
    const std::size_t n = cells + 1;
    const double dx = (beta - alpha) / static_cast<double>(cells);

    // ln q at nodes (even indices) and cell midpoints (odd indices).
    const auto fine = uniform_grid(alpha, beta, 2 * cells + 1);
    const auto log_q = log_scale_density_on_grid(model, fine);

    std::vector<double> diag(n), mass(n), off(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = model.at(fine[2 * i]);
        const double q = std::exp(log_q[2 * i]);
        const double w = 2.0 * th * q / c.sigma2();
        const double vol = (i == 0 || i == n - 1) ? 0.5 * dx : dx;
        double a = vol * w * c.h;
        if (i > 0) a -= std::exp(log_q[2 * i - 1]) / dx;
        if (i + 1 < n) a -= std::exp(log_q[2 * i + 1]) / dx;
        if (i == 0) a += th * c.kp * q;
        if (i == n - 1) a += th * c.km * q;
        diag[i] = a;
        mass[i] = vol * w;
    }
    for (std::size_t i = 0; i + 1 < n; ++i) off[i] = std::exp(log_q[2 * i + 1]) / dx;

    // Symmetrise: C = M^{-1/2} A M^{-1/2}.
    for (std::size_t i = 0; i < n; ++i) diag[i] /= mass[i];
    for (std::size_t i = 0; i + 1 < n; ++i) off[i] /= std::sqrt(mass[i] * mass[i + 1]);

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < n; ++i) {
        double r = 0.0;
        if (i > 0) r += std::abs(off[i - 1]);
        if (i + 1 < n) r += std::abs(off[i]);
        lo = std::min(lo, diag[i] - r);
        hi = std::max(hi, diag[i] + r);
    }

    // Sturm count: number of eigenvalues below x.
    const auto count_below = [&](double x) {
        std::size_t count = 0;
        double pivot = diag[0] - x;
        for (std::size_t i = 0;; ++i) {
            if (pivot == 0.0) pivot = -std::numeric_limits<double>::epsilon() * (std::abs(x) + 1.0);
            if (pivot < 0.0) ++count;
            if (i + 1 == n) break;
            pivot = diag[i + 1] - x - off[i] * off[i] / pivot;
        }
        return count;
    };
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (count_below(mid) == n) hi = mid;
        else lo = mid;
    }
    return 0.5 * (lo + hi);
}

EigenSolution principal_eigenpair(const ModelSpec& model, double alpha, double beta, RiskParam theta,
                                  const EigenOptions& opts) {
    validate_interval(alpha, beta, opts.min_interval);
    if (opts.grid_size < 3) throw ArgumentError("eigenfunction grid needs at least three points");
    const double th = theta.value();

    auto grid = uniform_grid(alpha, beta, opts.grid_size);
    for (const double x : grid)
        if (!(model.at(x).sigma2() > 0.0)) throw InvalidModelError("sigma^2 must be positive", x);

    const Shooter shooter(model, alpha, beta, th, opts);
    int evaluations = 0;
    const auto shoot = [&](double lambda) {
        ++evaluations;
        return shooter.shoot(lambda);
    };
    // lambda > lambda0 exactly when the shot is zero-free with a negative residual.
    const auto above = [](const Shot& s) { return s.zeros == 0 && s.residual < 0.0; };

    const double guess = fd_principal_eigenvalue(model, alpha, beta, theta, opts.bracket_cells);
    double delta = 1e-3 * std::max(1.0, std::abs(guess));
    double lo = guess - delta, hi = guess + delta;

    Shot shot_hi = shoot(hi);
    while (!above(shot_hi)) {
        if (evaluations > opts.max_iterations) throw NumericalError("eigenvalue bracket expansion failed", lo, hi);
        lo = hi;
        hi += delta;
        delta *= 2.0;
        shot_hi = shoot(hi);
    }
    Shot shot_lo = shoot(lo);
    while (above(shot_lo)) {
        if (evaluations > opts.max_iterations) throw NumericalError("eigenvalue bracket expansion failed", lo, hi);
        hi = lo;
        shot_hi = shot_lo;
        lo -= delta;
        delta *= 2.0;
        shot_lo = shoot(lo);
    }
    // Move the lower end into the zero-free region, where the residual is continuous in lambda.
    while (shot_lo.zeros > 0) {
        if (evaluations > opts.max_iterations) throw NumericalError("eigenvalue bisection stalled", lo, hi);
        const double mid = 0.5 * (lo + hi);
        const Shot s = shoot(mid);
        if (above(s)) {
            hi = mid;
            shot_hi = s;
        } else {
            lo = mid;
            shot_lo = s;
        }
    }

    double lambda0 = lo;
    if (shot_lo.residual != 0.0) {
        boost::uintmax_t iters = static_cast<boost::uintmax_t>(std::max(1, opts.max_iterations - evaluations));
        const auto residual = [&](double lambda) { return shoot(lambda).residual; };
        const auto [a, b] = boost::math::tools::toms748_solve(residual, lo, hi, shot_lo.residual, shot_hi.residual,
                                                              boost::math::tools::eps_tolerance<double>(50), iters);
        if (b - a > 1e-9 * std::max(1.0, std::abs(lambda0)))
            throw NumericalError("eigenvalue refinement did not converge", a, b);
        lambda0 = 0.5 * (a + b);
    }

    Recording rec;
    rec.grid = grid;
    const Shot final_shot = shooter.shoot(lambda0, &rec);
    if (final_shot.zeros != 0) throw NumericalError("principal eigenfunction changed sign", lambda0, lambda0);

    const std::size_t n = grid.size();
    const double final_scale = rec.log_scale.back();
    EigenSolution sol;
    sol.alpha = alpha;
    sol.beta = beta;
    sol.theta = th;
    sol.lambda0 = lambda0;
    sol.iterations = evaluations;
    sol.phi.resize(n);
    sol.phi_deriv.resize(n);
    sol.log_q = rec.log_q;
    std::vector<double> weight(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double rescale = std::exp(rec.log_scale[i] - final_scale);
        sol.phi[i] = rec.u[i] * rescale;
        sol.phi_deriv[i] = rec.p[i] * rescale * std::exp(-rec.log_q[i]);
        weight[i] = 2.0 * th * std::exp(rec.log_q[i]) / model.at(grid[i]).sigma2() * sol.phi[i] * sol.phi[i];
    }
    const double norm = std::sqrt(integrate_samples(grid, weight));
    for (std::size_t i = 0; i < n; ++i) {
        sol.phi[i] /= norm;
        sol.phi_deriv[i] /= norm;
        if (!(sol.phi[i] > 0.0)) throw NumericalError("principal eigenfunction is not positive", lambda0, lambda0);
    }
    sol.grid = std::move(grid);
    return sol;
}

double rayleigh_quotient(const ModelSpec& model, const EigenSolution& sol) {
    const std::size_t n = sol.grid.size();
    if (n < 2 || sol.phi.size() != n || sol.phi_deriv.size() != n)
        throw ArgumentError("eigen solution arrays are inconsistent");
    const auto log_q = sol.log_q.size() == n ? sol.log_q : log_scale_density_on_grid(model, sol.grid);
    const double th = sol.theta;
    std::vector<double> bulk(n), mass(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = model.at(sol.grid[i]);
        const double q = std::exp(log_q[i]);
        const double w = 2.0 * th * q / c.sigma2();
        bulk[i] = w * c.h * sol.phi[i] * sol.phi[i] - q * sol.phi_deriv[i] * sol.phi_deriv[i];
        mass[i] = w * sol.phi[i] * sol.phi[i];
    }
    const auto ca = model.at(sol.grid.front());
    const auto cb = model.at(sol.grid.back());
    const double ends = th * (std::exp(log_q.front()) * ca.kp * sol.phi.front() * sol.phi.front() +
                              std::exp(log_q.back()) * cb.km * sol.phi.back() * sol.phi.back());
    return (ends + integrate_samples(sol.grid, bulk)) / integrate_samples(sol.grid, mass);
}

LambdaPartials lambda_partials(const ModelSpec& model, const EigenSolution& sol) {
    const std::size_t n = sol.grid.size();
    if (n < 2 || sol.phi.size() != n || sol.phi_deriv.size() != n || sol.log_q.size() != n)
        throw ArgumentError("eigen solution arrays are inconsistent");
    const RiskParam theta(sol.theta);
    const double th = sol.theta;
    const auto ca = model.at(sol.alpha);
    const auto cb = model.at(sol.beta);
    const double qa = std::exp(sol.log_q.front()), qb = std::exp(sol.log_q.back());
    const double pa = sol.phi.front(), pb = sol.phi.back();

    std::vector<double> energy(n);
    for (std::size_t i = 0; i < n; ++i) energy[i] = std::exp(sol.log_q[i]) * sol.phi_deriv[i] * sol.phi_deriv[i];

    LambdaPartials out{};
    out.d_alpha = 2.0 * th * qa / ca.sigma2() * pa * pa * (sol.lambda0 - eval_H(model, theta, sol.alpha, Side::Minus));
    out.d_beta = -2.0 * th * qb / cb.sigma2() * pb * pb * (sol.lambda0 - eval_H(model, theta, sol.beta, Side::Plus));
    out.d_theta = integrate_samples(sol.grid, energy) / th;
    return out;
}

LambdaPartials lambda_partials(const ModelSpec& model, double alpha, double beta, RiskParam theta,
                               const EigenOptions& opts) {
    return lambda_partials(model, principal_eigenpair(model, alpha, beta, theta, opts));
}

}  // namespace riskctl
