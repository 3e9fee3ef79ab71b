#pragma once

#include "riskctl/model.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace riskctl {

struct EigenOptions {
    /// Uniform output grid size (points, including both end points).
    std::size_t grid_size = 2001;
    /// Cells of the finite-difference discretisation used to bracket lambda0.
    std::size_t bracket_cells = 200;
    /// Tolerances of the adaptive shooting integrator.
    double rtol = 1e-10;
    double atol = 1e-14;
    int max_iterations = 200;
    /// Intervals shorter than this are rejected.
    double min_interval = 1e-8;
};

/// Principal eigenpair of
///   (q u')' + (2 theta / sigma^2) (h - lambda) q u = 0   on [alpha, beta],
///   theta k+(alpha) u(alpha) + u'(alpha) = 0,  theta k-(beta) u(beta) - u'(beta) = 0.
///
/// phi is positive on the whole grid and normalised so that
/// int (2 theta q / sigma^2) phi^2 dy = 1.
struct EigenSolution {
    double alpha = 0.0;
    double beta = 0.0;
    double theta = 0.0;
    double lambda0 = 0.0;
    std::vector<double> grid;
    std::vector<double> phi;
    std::vector<double> phi_deriv;
    /// ln q on grid; may be left empty by callers assembling a solution by hand.
    std::vector<double> log_q;
    /// Shooting evaluations spent refining lambda0.
    int iterations = 0;
};

EigenSolution principal_eigenpair(const ModelSpec& model, double alpha, double beta, RiskParam theta,
                                  const EigenOptions& opts = {});

/// Largest eigenvalue of the symmetric finite-volume discretisation with
/// `cells` uniform cells and Robin end rows (second order in the cell width).
/// This is the bracketing stage of principal_eigenpair.
double fd_principal_eigenvalue(const ModelSpec& model, double alpha, double beta, RiskParam theta,
                               std::size_t cells);

/// Rayleigh quotient in its boundary-substituted form, evaluated by quadrature
/// on sol.grid and divided by the weighted norm of sol.phi.
double rayleigh_quotient(const ModelSpec& model, const EigenSolution& sol);

struct LambdaPartials {
    double d_alpha;
    double d_beta;
    double d_theta;
};

/// Closed-form partial derivatives of lambda0 with respect to alpha, beta, theta.
LambdaPartials lambda_partials(const ModelSpec& model, const EigenSolution& sol);
LambdaPartials lambda_partials(const ModelSpec& model, double alpha, double beta, RiskParam theta,
                               const EigenOptions& opts = {});

/// Composite Simpson rule on a uniform grid with an odd number of points,
/// trapezoid rule otherwise.
double integrate_samples(std::span<const double> grid, std::span<const double> values);

}  // namespace riskctl
