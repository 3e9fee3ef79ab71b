#include "riskctl/sim.hpp"

#include "parallel.hpp"
#include "riskctl/error.hpp"
#include "riskctl/io.hpp"
#include "riskctl/philox.hpp"
#include "riskctl/sturm.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace riskctl {

void PathConfig::validate() const {
    if (!std::isfinite(x0)) throw ArgumentError("x0 must be finite");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ArgumentError("dt must be positive");
    if (!(horizon >= dt) || !std::isfinite(horizon)) throw ArgumentError("horizon must be at least dt");
    if (n_paths < 1) throw ArgumentError("n_paths must be at least 1");
    if (!(alpha < beta) || !std::isfinite(alpha) || !std::isfinite(beta))
        throw ArgumentError("barriers must satisfy alpha < beta");
    if (!(burn_in >= 0.0) || !(burn_in < horizon)) throw ArgumentError("burn_in must lie in [0, horizon)");
    if (!(checkpoint_every >= 0.0)) throw ArgumentError("checkpoint_every must be non-negative");
}

std::size_t PathConfig::steps() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }

double initial_jump_cost(const ModelSpec& model, double x0, double alpha, double beta) {
    using boost::math::quadrature::gauss_kronrod;
    double error = 0.0;
    if (x0 < alpha) {
        const auto k = [&](double y) { return model.at(y).kp; };
        const double v = gauss_kronrod<double, 15>::integrate(k, x0, alpha, 15, 1e-14, &error);
        if (error > 1e-10 * std::max(1.0, std::abs(v))) throw NumericalError("jump-cost quadrature", x0, alpha);
        return v;
    }
    if (x0 > beta) {
        const auto k = [&](double y) { return model.at(y).km; };
        const double v = gauss_kronrod<double, 15>::integrate(k, beta, x0, 15, 1e-14, &error);
        if (error > 1e-10 * std::max(1.0, std::abs(v))) throw NumericalError("jump-cost quadrature", beta, x0);
        return v;
    }
    return 0.0;
}

namespace {

struct PathState {
    double x;
    double cost;
    double up;
    double down;
    std::size_t hits;
};

// One projected Euler step with local-time costs charged at the barrier.
struct Stepper {
    const ModelSpec& model;
    double dt, sqrt_dt, alpha, beta, kp_alpha, km_beta;

    void advance(PathState& st, double z) const {
        const auto c = model.at(st.x);
        st.cost += c.h * dt;
        const double y = st.x + c.b * dt + c.sigma * sqrt_dt * z;
        if (y < alpha) {
            st.up += alpha - y;
            st.cost += kp_alpha * (alpha - y);
            st.x = alpha;
            ++st.hits;
        } else if (y > beta) {
            st.down += y - beta;
            st.cost += km_beta * (y - beta);
            st.x = beta;
            ++st.hits;
        } else {
            st.x = y;
        }
    }
};

}  // namespace

PathBatchResult reflected_cost_paths(const ModelSpec& model, RiskParam theta, const PathConfig& cfg,
                                     unsigned threads) {
    cfg.validate();
    model.check_assumptions_at(cfg.alpha);
    model.check_assumptions_at(cfg.beta);

    const std::size_t n = cfg.n_paths;
    const std::size_t steps = cfg.steps();
    const std::size_t burn_steps = static_cast<std::size_t>(std::llround(cfg.burn_in / cfg.dt));
    const std::size_t cp_stride =
        cfg.checkpoint_every > 0.0 ? std::max<std::size_t>(1, std::llround(cfg.checkpoint_every / cfg.dt)) : 0;
    const std::size_t n_cp = cp_stride ? steps / cp_stride : 0;

    const double dt = cfg.dt;
    const double sqrt_dt = std::sqrt(dt);
    const double a = cfg.alpha, b = cfg.beta;
    const double kp_a = model.at(a).kp;
    const double km_b = model.at(b).km;
    const double jump_cost = initial_jump_cost(model, cfg.x0, a, b);
    const double jump_up = std::max(0.0, a - cfg.x0);
    const double jump_down = std::max(0.0, cfg.x0 - b);
    const double start = std::clamp(cfg.x0, a, b);

    PathBatchResult out;
    out.config = cfg;
    out.theta = theta.value();
    out.initial_jump_cost = jump_cost;
    out.cost.assign(n, 0.0);
    out.xi_plus.assign(n, 0.0);
    out.xi_minus.assign(n, 0.0);
    std::vector<std::size_t> projected(n, 0);
    std::vector<double> cp_values(n * n_cp * 3, 0.0);

    const Stepper stepper{model, dt, sqrt_dt, a, b, kp_a, km_b};
    detail::parallel_for(n, threads, [&](std::size_t p) {
        NormalStream normals(cfg.seed, p);
        PathState st{start, jump_cost, jump_up, jump_down, 0};
        double cost_at_burn = burn_steps == 0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
        for (std::size_t s = 0; s < steps; ++s) {
            stepper.advance(st, normals.next());
            if (s + 1 == burn_steps) cost_at_burn = st.cost;
            if (cp_stride && (s + 1) % cp_stride == 0) {
                const std::size_t k = (s + 1) / cp_stride - 1;
                double* slot = &cp_values[(p * n_cp + k) * 3];
                slot[0] = st.up;
                slot[1] = st.down;
                slot[2] = st.cost;
            }
        }
        out.cost[p] = st.cost - cost_at_burn;
        out.xi_plus[p] = st.up;
        out.xi_minus[p] = st.down;
        projected[p] = st.hits;
    });

    double hit_total = 0.0;
    for (std::size_t p = 0; p < n; ++p) hit_total += static_cast<double>(projected[p]);
    out.barrier_fraction = hit_total / (static_cast<double>(n) * static_cast<double>(steps));

    out.checkpoints.resize(n_cp);
    for (std::size_t k = 0; k < n_cp; ++k) {
        Checkpoint& cp = out.checkpoints[k];
        cp.time = static_cast<double>((k + 1) * cp_stride) * dt;
        for (std::size_t p = 0; p < n; ++p) {
            const double* slot = &cp_values[(p * n_cp + k) * 3];
            cp.mean_xi_plus += slot[0];
            cp.mean_xi_minus += slot[1];
            cp.mean_cost += slot[2];
        }
        cp.mean_xi_plus /= static_cast<double>(n);
        cp.mean_xi_minus /= static_cast<double>(n);
        cp.mean_cost /= static_cast<double>(n);
    }

    const double effective_horizon = static_cast<double>(steps - burn_steps) * dt;
    out.estimate = risk_sensitive_rate(out.cost, theta, effective_horizon);
    return out;
}

PathTrace sample_path(const ModelSpec& model, const PathConfig& cfg, std::size_t path) {
    cfg.validate();
    model.check_assumptions_at(cfg.alpha);
    model.check_assumptions_at(cfg.beta);
    const std::size_t steps = cfg.steps();
    const Stepper stepper{model, cfg.dt, std::sqrt(cfg.dt), cfg.alpha, cfg.beta, model.at(cfg.alpha).kp,
                          model.at(cfg.beta).km};
    PathState st{std::clamp(cfg.x0, cfg.alpha, cfg.beta), initial_jump_cost(model, cfg.x0, cfg.alpha, cfg.beta),
                 std::max(0.0, cfg.alpha - cfg.x0), std::max(0.0, cfg.x0 - cfg.beta), 0};
    PathTrace tr;
    const auto record = [&](double t) {
        tr.time.push_back(t);
        tr.state.push_back(st.x);
        tr.cost.push_back(st.cost);
        tr.xi_plus.push_back(st.up);
        tr.xi_minus.push_back(st.down);
    };
    record(0.0);
    NormalStream normals(cfg.seed, path);
    for (std::size_t s = 0; s < steps; ++s) {
        stepper.advance(st, normals.next());
        record(static_cast<double>(s + 1) * cfg.dt);
    }
    return tr;
}

RateEstimate risk_sensitive_rate(std::span<const double> costs, RiskParam theta, double horizon) {
    if (costs.empty()) throw ArgumentError("risk_sensitive_rate needs at least one path");
    if (!(horizon > 0.0)) throw ArgumentError("horizon must be positive");
    const double th = theta.value();
    const double n = static_cast<double>(costs.size());
    double top = -std::numeric_limits<double>::infinity();
    for (double c : costs) top = std::max(top, th * c);

    double sum = 0.0, sum_sq = 0.0;
    for (double c : costs) {
        const double w = std::exp(th * c - top);
        sum += w;
        sum_sq += w * w;
    }
    const double mean = sum / n;
    RateEstimate est;
    est.rate = (top + std::log(mean)) / (th * horizon);
    est.ess = sum * sum / sum_sq;
    est.degenerate = est.ess < 10.0;
    if (costs.size() > 1) {
        const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
        est.ci_halfwidth = 1.959963984540054 * std::sqrt(var / n) / mean / (th * horizon);
    }
    return est;
}

std::vector<ProbeRow> optimality_probe(const ModelSpec& model, RiskParam theta, const BoundarySolution& sol,
                                       std::span<const std::pair<double, double>> offsets, const PathConfig& cfg,
                                       unsigned threads, const EigenOptions& eigen) {
    std::vector<ProbeRow> rows;
    rows.reserve(offsets.size());
    for (const auto& [da, db] : offsets) {
        ProbeRow row;
        row.d_alpha = da;
        row.d_beta = db;
        row.alpha = sol.alpha_star + da;
        row.beta = sol.beta_star + db;
        if (!(row.alpha < row.beta)) throw ArgumentError("probe offset collapses the interval");
        row.eigen_lambda = principal_eigenpair(model, row.alpha, row.beta, theta, eigen).lambda0;
        PathConfig c = cfg;
        c.alpha = row.alpha;
        c.beta = row.beta;
        row.estimate = reflected_cost_paths(model, theta, c, threads).estimate;
        row.rate_minus_lambda_star = row.estimate.rate - sol.lambda_star;
        rows.push_back(row);
    }
    return rows;
}

std::string paths_to_csv(const PathBatchResult& batch) {
    std::ostringstream os;
    os << "path_id,I_T,xi_plus,xi_minus\n";
    for (std::size_t i = 0; i < batch.cost.size(); ++i)
        os << i << ',' << format_double(batch.cost[i]) << ',' << format_double(batch.xi_plus[i]) << ','
           << format_double(batch.xi_minus[i]) << '\n';
    return os.str();
}

std::string probe_to_csv(const std::vector<ProbeRow>& rows) {
    std::ostringstream os;
    os << "d_alpha,d_beta,alpha,beta,eigen_lambda,rate,ci_halfwidth,ess,degenerate,rate_minus_lambda_star\n";
    for (const auto& r : rows)
        os << format_double(r.d_alpha) << ',' << format_double(r.d_beta) << ',' << format_double(r.alpha) << ','
           << format_double(r.beta) << ',' << format_double(r.eigen_lambda) << ',' << format_double(r.estimate.rate)
           << ',' << format_double(r.estimate.ci_halfwidth) << ',' << format_double(r.estimate.ess) << ','
           << (r.estimate.degenerate ? 1 : 0) << ',' << format_double(r.rate_minus_lambda_star) << '\n';
    return os.str();
}

std::string checkpoints_to_csv(const PathBatchResult& batch) {
    std::ostringstream os;
    os << "time,mean_xi_plus,mean_xi_minus,mean_cost\n";
    for (const auto& c : batch.checkpoints)
        os << format_double(c.time) << ',' << format_double(c.mean_xi_plus) << ','
           << format_double(c.mean_xi_minus) << ',' << format_double(c.mean_cost) << '\n';
    return os.str();
}

}  // namespace riskctl
