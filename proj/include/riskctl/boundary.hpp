#pragma once

#include "riskctl/model.hpp"
#include "riskctl/sturm.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace riskctl {

struct BoundaryOptions {
    EigenOptions eigen;
    TurningPointOptions turning;
    /// Bisection stops once the beta bracket is narrower than this.
    double root_tol = 1e-10;
    /// First offset from beta_plus tried when bracketing the root function.
    double initial_step = 0.25;
    /// The root search gives up beyond beta_plus + search_horizon.
    double search_horizon = 1e6;
    int max_iterations = 400;
};

struct BoundaryResiduals {
    double alpha_residual = 0.0;  // |H-(alpha*) - lambda*|
    double beta_residual = 0.0;   // |H+(beta*) - lambda*|
    int iterations = 0;           // root-function evaluations
};

/// Optimal reflection boundaries and growth rate for one theta.
struct BoundarySolution {
    double theta = 0.0;
    double alpha_star = 0.0;
    double beta_star = 0.0;
    double lambda_star = 0.0;
    TurningPoints turning_points{};
    EigenSolution eigen;
    BoundaryResiduals residuals;
};

/// Gamma(beta): the point x <= alpha_minus with H-(x) = H+(beta).
///
/// Its domain starts where H+ reaches the level H-(alpha_minus); for models
/// where both minima vanish that is beta_plus itself and Gamma(beta_plus) = alpha_minus.
double gamma_map(const ModelSpec& model, RiskParam theta, const TurningPoints& tp, double beta,
                 double search_horizon = 1e6);

/// g(beta) = lambda(Gamma(beta), beta, theta) - H+(beta). Its unique zero is beta*.
double root_function(const ModelSpec& model, RiskParam theta, const TurningPoints& tp, double beta,
                     const BoundaryOptions& opts = {});

BoundarySolution solve_boundaries(const ModelSpec& model, RiskParam theta, const BoundaryOptions& opts = {});

/// Assembles a BoundarySolution for given end points, as if they were optimal.
/// lambda_star is taken from the caller; the eigenpair is solved on [alpha, beta].
BoundarySolution boundary_solution_at(const ModelSpec& model, RiskParam theta, double alpha, double beta,
                                      double lambda_star, const EigenOptions& opts = {});

/// w_x: -k+(x) left of alpha*, (1/theta) phi'/phi inside, k-(x) right of beta*.
/// Inside, w_x is cubic-Hermite interpolated between eigen grid nodes.
double value_gradient(const BoundarySolution& sol, const ModelSpec& model, double x);

/// w_xx: -k+'(x) and k-'(x) outside; inside it follows from the log-derivative
/// form of the eigen ODE, 2/sigma^2 (lambda0 - h - b w_x) - theta w_x^2.
double value_gradient_deriv(const BoundarySolution& sol, const ModelSpec& model, double x);

struct HjbProbe {
    std::size_t points = 10000;
    /// Probe grid spans extent interval-widths beyond each boundary.
    double extent = 5.0;
    double tolerance = 1e-6;
};

struct HjbReport {
    double outer_left_margin = 0.0;   // min_{x < alpha*} H-(x) - lambda*
    double outer_right_margin = 0.0;  // min_{x > beta*}  H+(x) - lambda*
    double band_lower_margin = 0.0;   // min_{[alpha*, beta*]} w_x + k+
    double band_upper_margin = 0.0;   // min_{[alpha*, beta*]} k- - w_x
    double riccati_residual = 0.0;    // sup of |1/2 s^2 w_xx + 1/2 theta (s w_x)^2 + b w_x + h - lambda*|
    double pasting_alpha_wx = 0.0;
    double pasting_alpha_wxx = 0.0;
    double pasting_beta_wx = 0.0;
    double pasting_beta_wxx = 0.0;
    std::size_t probe_points = 0;
    double tolerance = 1e-6;
    bool pass = false;
};

/// Evaluates every branch of the HJB equation on a probe grid. Failures are
/// reported through `pass`, never thrown.
HjbReport verify_hjb(const BoundarySolution& sol, const ModelSpec& model, const HjbProbe& probe = {});

struct SweepRow {
    double theta = 0.0;
    double alpha_star = 0.0;
    double beta_star = 0.0;
    double lambda_star = 0.0;
    double dlambda_dtheta = 0.0;
    bool ok = false;
    std::string status;
};

using SweepTable = std::vector<SweepRow>;

/// Solves every theta (strictly increasing, positive). A failed row is marked
/// and the sweep continues. Rows may be solved on `threads` workers
/// (0 = hardware concurrency); the table is identical for any thread count.
SweepTable theta_sweep(const ModelSpec& model, std::span<const double> thetas, const BoundaryOptions& opts = {},
                       unsigned threads = 1);

/// CSV with columns theta, alpha_star, beta_star, lambda_star, dlambda_dtheta, status.
std::string sweep_to_csv(const SweepTable& table);

}  // namespace riskctl
