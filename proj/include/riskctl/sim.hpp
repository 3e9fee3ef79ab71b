#pragma once

#include "riskctl/boundary.hpp"
#include "riskctl/model.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace riskctl {

struct PathConfig {
    double x0 = 0.0;
    double alpha = -1.0;
    double beta = 1.0;
    double horizon = 200.0;
    double dt = 1e-3;
    std::size_t n_paths = 10000;
    std::uint64_t seed = 1;
    /// Costs accrued before this time are dropped; the rate divides by horizon - burn_in.
    double burn_in = 0.0;
    /// When positive, batch means of xi+, xi- and cost are recorded every this many time units.
    double checkpoint_every = 0.0;

    /// Throws ArgumentError unless dt > 0, horizon >= dt, n_paths >= 1,
    /// alpha < beta and 0 <= burn_in < horizon.
    void validate() const;
    /// Number of Euler steps, round(horizon / dt).
    std::size_t steps() const;
};

struct RateEstimate {
    double rate = 0.0;
    double ci_halfwidth = 0.0;  // 95 %, delta method on the log-mean-exp
    double ess = 0.0;           // effective sample size of the exponential weights
    bool degenerate = false;    // ess < 10
};

struct Checkpoint {
    double time = 0.0;
    double mean_xi_plus = 0.0;
    double mean_xi_minus = 0.0;
    double mean_cost = 0.0;
};

struct PathBatchResult {
    PathConfig config;
    double theta = 0.0;
    std::vector<double> cost;      // I_T per path (after burn-in)
    std::vector<double> xi_plus;   // total upward push per path, including the initial jump
    std::vector<double> xi_minus;  // total downward push per path, including the initial jump
    double initial_jump_cost = 0.0;
    double barrier_fraction = 0.0;  // share of Euler steps that were projected
    std::vector<Checkpoint> checkpoints;
    RateEstimate estimate;
};

/// Cost of moving instantly from x0 into [alpha, beta]: the integral of k+
/// (or k-) along the jump.
double initial_jump_cost(const ModelSpec& model, double x0, double alpha, double beta);

/// Projected Euler simulation of the reflected diffusion and its cost.
/// Path i draws its normals from the counter stream (seed, i), so results do
/// not depend on `threads` (0 = hardware concurrency).
PathBatchResult reflected_cost_paths(const ModelSpec& model, RiskParam theta, const PathConfig& cfg,
                                     unsigned threads = 1);

struct PathTrace {
    std::vector<double> time;  // 0, dt, 2 dt, ...; entry 0 is just after the initial jump
    std::vector<double> state;
    std::vector<double> cost;
    std::vector<double> xi_plus;
    std::vector<double> xi_minus;
};

/// Full trajectory of path `path` of a batch with configuration cfg; burn_in is ignored.
PathTrace sample_path(const ModelSpec& model, const PathConfig& cfg, std::size_t path);

/// (1/(theta T)) ln mean exp(theta I) with max subtraction.
RateEstimate risk_sensitive_rate(std::span<const double> costs, RiskParam theta, double horizon);

struct ProbeRow {
    double d_alpha = 0.0;
    double d_beta = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double eigen_lambda = 0.0;  // principal eigenvalue on the perturbed interval
    RateEstimate estimate;
    double rate_minus_lambda_star = 0.0;
};

/// Simulates the reflection strategy at each perturbed boundary pair with a
/// common seed; cfg.alpha and cfg.beta are ignored.
std::vector<ProbeRow> optimality_probe(const ModelSpec& model, RiskParam theta, const BoundarySolution& sol,
                                       std::span<const std::pair<double, double>> offsets, const PathConfig& cfg,
                                       unsigned threads = 1, const EigenOptions& eigen = {});

/// path_id,I_T,xi_plus,xi_minus
std::string paths_to_csv(const PathBatchResult& batch);
/// d_alpha,d_beta,alpha,beta,eigen_lambda,rate,ci_halfwidth,ess,degenerate,rate_minus_lambda_star
std::string probe_to_csv(const std::vector<ProbeRow>& rows);
/// time,mean_xi_plus,mean_xi_minus,mean_cost
std::string checkpoints_to_csv(const PathBatchResult& batch);

}  // namespace riskctl
