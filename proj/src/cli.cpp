#include "riskctl/cli.hpp"

#include "riskctl/boundary.hpp"
#include "riskctl/config.hpp"
#include "riskctl/error.hpp"
#include "riskctl/io.hpp"
#include "riskctl/sim.hpp"
#include "riskctl/sturm.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>

namespace riskctl::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
    auto logger = std::make_shared<spdlog::logger>("riskctl", sink);
    logger->set_pattern("[%l] %v");
    logger->set_level(spdlog::level::warn);
    if (const char* env = std::getenv("ERGODIC_RISKCTL_LOG")) {
        const std::string name = env;
        for (int lvl = spdlog::level::trace; lvl < spdlog::level::n_levels; ++lvl) {
            const auto l = static_cast<spdlog::level::level_enum>(lvl);
            if (spdlog::level::to_string_view(l) == name) logger->set_level(l);
        }
        if (name == "warn" || name == "warning") logger->set_level(spdlog::level::warn);
    }
    return logger;
}

BoundaryOptions boundary_options(const RunConfig& cfg) {
    BoundaryOptions o;
    o.eigen.grid_size = cfg.solver.grid_size;
    o.eigen.rtol = cfg.solver.eigen_rtol;
    o.root_tol = cfg.solver.root_tol;
    return o;
}

PathConfig path_config(const RunConfig& cfg, double alpha, double beta) {
    const auto& s = cfg.simulation;
    PathConfig p;
    p.x0 = s.x0;
    p.alpha = alpha;
    p.beta = beta;
    p.horizon = s.horizon;
    p.dt = s.dt;
    p.n_paths = s.n_paths;
    p.seed = s.seed;
    p.burn_in = s.burn_in;
    p.checkpoint_every = s.checkpoint_every;
    return p;
}

std::string fmt(double v) { return format_double(v); }

class Runner {
public:
    Runner(const RunConfig& cfg, std::ostream& out, spdlog::logger& log)
        : cfg_(cfg), out_(out), log_(log), dir_(cfg.output_dir), theta_(cfg.theta) {}

    int dispatch() {
        fs::create_directories(dir_);
        write_meta();
        if (cfg_.command == "solve") return solve();
        if (cfg_.command == "verify") return verify();
        if (cfg_.command == "sweep") return sweep();
        if (cfg_.command == "simulate") return simulate();
        return probe();
    }

private:
    void write(const std::string& name, const std::string& content) {
        write_file_atomic(dir_ / name, content);
        log_.info("wrote {}", (dir_ / name).string());
    }

    void write_meta() {
        const json meta = {{"library", "riskctl"},
                           {"version", RISKCTL_VERSION},
                           {"command", cfg_.command},
                           {"config", json::parse(serialize_config(cfg_))}};
        write("run_meta.json", meta.dump(2) + "\n");
    }

    const BoundarySolution& solved() {
        if (!solution_) {
            log_.info("solving free boundaries at theta = {}", cfg_.theta);
            solution_ = solve_boundaries(cfg_.model, theta_, boundary_options(cfg_));
            log_.debug("alpha* = {}, beta* = {}, lambda* = {}", solution_->alpha_star, solution_->beta_star,
                       solution_->lambda_star);
        }
        return *solution_;
    }

    int solve() {
        const auto& s = solved();
        std::ostringstream bs;
        bs << "theta,alpha_star,beta_star,lambda_star,alpha_residual,beta_residual,iterations\n"
           << fmt(s.theta) << ',' << fmt(s.alpha_star) << ',' << fmt(s.beta_star) << ',' << fmt(s.lambda_star) << ','
           << fmt(s.residuals.alpha_residual) << ',' << fmt(s.residuals.beta_residual) << ','
           << s.residuals.iterations << '\n';
        write("boundary_solution.csv", bs.str());

        std::ostringstream es;
        es << "x,phi,phi_deriv,w_x\n";
        for (std::size_t i = 0; i < s.eigen.grid.size(); ++i) {
            const double x = s.eigen.grid[i];
            es << fmt(x) << ',' << fmt(s.eigen.phi[i]) << ',' << fmt(s.eigen.phi_deriv[i]) << ','
               << fmt(value_gradient(s, cfg_.model, x)) << '\n';
        }
        write("eigenfunction.csv", es.str());

        out_ << std::setprecision(12) << "theta        " << s.theta << "\nalpha_star   " << s.alpha_star
             << "\nbeta_star    " << s.beta_star << "\nlambda_star  " << s.lambda_star << "\nresiduals    "
             << std::setprecision(3) << s.residuals.alpha_residual << ' ' << s.residuals.beta_residual << '\n';
        return kOk;
    }

    int verify() {
        BoundarySolution s = solved();
        if (cfg_.verify.boundary_offset != 0.0) {
            const double a = s.alpha_star - cfg_.verify.boundary_offset;
            const double b = s.beta_star + cfg_.verify.boundary_offset;
            log_.warn("verifying boundaries moved outward by {}", cfg_.verify.boundary_offset);
            EigenOptions eo = boundary_options(cfg_).eigen;
            s = boundary_solution_at(cfg_.model, theta_, a, b, eval_H(cfg_.model, theta_, b, Side::Plus), eo);
        }
        HjbProbe probe;
        probe.points = cfg_.verify.probe_points;
        probe.extent = cfg_.verify.extent;
        probe.tolerance = cfg_.verify.tolerance;
        const auto r = verify_hjb(s, cfg_.model, probe);

        const std::pair<const char*, double> rows[] = {
            {"alpha_star", s.alpha_star},
            {"beta_star", s.beta_star},
            {"lambda_star", s.lambda_star},
            {"outer_left_margin", r.outer_left_margin},
            {"outer_right_margin", r.outer_right_margin},
            {"band_lower_margin", r.band_lower_margin},
            {"band_upper_margin", r.band_upper_margin},
            {"riccati_residual", r.riccati_residual},
            {"pasting_alpha_wx", r.pasting_alpha_wx},
            {"pasting_alpha_wxx", r.pasting_alpha_wxx},
            {"pasting_beta_wx", r.pasting_beta_wx},
            {"pasting_beta_wxx", r.pasting_beta_wxx},
            {"tolerance", r.tolerance},
        };
        std::ostringstream os;
        os << "metric,value\n";
        out_ << std::setprecision(6);
        for (const auto& [name, v] : rows) {
            os << name << ',' << fmt(v) << '\n';
            out_ << std::left << std::setw(20) << name << v << '\n';
        }
        os << "probe_points," << r.probe_points << '\n' << "verdict," << (r.pass ? "PASS" : "FAIL") << '\n';
        write("hjb_report.csv", os.str());
        out_ << (r.pass ? "PASS" : "FAIL") << '\n';
        return r.pass ? kOk : kVerdictFail;
    }

    int sweep() {
        if (cfg_.thetas.empty()) throw ConfigError("command 'sweep' needs a non-empty 'thetas' list", 0, 0);
        const auto table = theta_sweep(cfg_.model, cfg_.thetas, boundary_options(cfg_), cfg_.threads);
        write("sweep.csv", sweep_to_csv(table));
        bool all_ok = true;
        out_ << std::setprecision(10) << "theta        alpha_star       beta_star        lambda_star      status\n";
        for (const auto& row : table) {
            all_ok = all_ok && row.ok;
            out_ << std::left << std::setw(13) << row.theta << std::setw(17) << row.alpha_star << std::setw(17)
                 << row.beta_star << std::setw(17) << row.lambda_star << row.status << '\n';
        }
        return all_ok ? kOk : kNumericalFailure;
    }

    int simulate() {
        double alpha = 0.0, beta = 0.0;
        if (cfg_.simulation.alpha && cfg_.simulation.beta) {
            alpha = *cfg_.simulation.alpha;
            beta = *cfg_.simulation.beta;
        } else {
            const auto& s = solved();
            alpha = cfg_.simulation.alpha.value_or(s.alpha_star);
            beta = cfg_.simulation.beta.value_or(s.beta_star);
        }
        const auto pc = path_config(cfg_, alpha, beta);
        log_.info("simulating {} paths, {} steps each", pc.n_paths, pc.steps());
        const auto batch = reflected_cost_paths(cfg_.model, theta_, pc, cfg_.threads);
        const double eigen_lambda =
            principal_eigenpair(cfg_.model, alpha, beta, theta_, boundary_options(cfg_).eigen).lambda0;
        if (batch.estimate.degenerate)
            log_.warn("effective sample size {:.1f} < 10: the rate estimate is unreliable", batch.estimate.ess);

        write("paths.csv", paths_to_csv(batch));
        if (!batch.checkpoints.empty()) write("checkpoints.csv", checkpoints_to_csv(batch));
        const json summary = {{"rate", batch.estimate.rate},
                              {"ci_halfwidth", batch.estimate.ci_halfwidth},
                              {"ess", batch.estimate.ess},
                              {"degenerate", batch.estimate.degenerate},
                              {"eigen_lambda", eigen_lambda},
                              {"barrier_fraction", batch.barrier_fraction},
                              {"initial_jump_cost", batch.initial_jump_cost},
                              {"theta", cfg_.theta},
                              {"alpha", alpha},
                              {"beta", beta},
                              {"x0", pc.x0},
                              {"horizon", pc.horizon},
                              {"dt", pc.dt},
                              {"n_paths", pc.n_paths},
                              {"seed", pc.seed},
                              {"burn_in", pc.burn_in}};
        write("sim_summary.json", summary.dump(2) + "\n");

        out_ << std::setprecision(8) << "barriers      [" << alpha << ", " << beta << "]\nrate          "
             << batch.estimate.rate << " +- " << batch.estimate.ci_halfwidth << "\neigen lambda  " << eigen_lambda
             << "\ness           " << batch.estimate.ess << (batch.estimate.degenerate ? "  (degenerate)" : "")
             << '\n';
        return kOk;
    }

    int probe() {
        const auto& s = solved();
        const auto pc = path_config(cfg_, s.alpha_star, s.beta_star);
        const auto rows = optimality_probe(cfg_.model, theta_, s, cfg_.probe.offsets, pc, cfg_.threads,
                                           boundary_options(cfg_).eigen);
        write("probe.csv", probe_to_csv(rows));
        bool pass = true;
        const double slack = 1e-9 * std::max(1.0, std::abs(s.lambda_star));
        out_ << std::setprecision(6) << "lambda_star " << s.lambda_star << '\n'
             << "d_alpha   d_beta    eigen_lambda  rate          ci          ess\n";
        for (const auto& r : rows) {
            pass = pass && r.eigen_lambda >= s.lambda_star - slack &&
                   r.estimate.rate >= s.lambda_star - r.estimate.ci_halfwidth;
            out_ << std::left << std::setw(10) << r.d_alpha << std::setw(10) << r.d_beta << std::setw(14)
                 << r.eigen_lambda << std::setw(14) << r.estimate.rate << std::setw(12) << r.estimate.ci_halfwidth
                 << r.estimate.ess << (r.estimate.degenerate ? " (degenerate)" : "") << '\n';
        }
        out_ << (pass ? "PASS" : "FAIL") << '\n';
        return pass ? kOk : kVerdictFail;
    }

    const RunConfig& cfg_;
    std::ostream& out_;
    spdlog::logger& log_;
    fs::path dir_;
    RiskParam theta_;
    std::optional<BoundarySolution> solution_;
};

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    auto log = make_logger(err);

    CLI::App app{"Risk-sensitive ergodic singular control solver", "riskctl"};
    app.set_version_flag("--version", std::string(RISKCTL_VERSION));
    std::string config_path;
    std::optional<std::string> command;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    app.add_option("--config", config_path, "JSON run configuration")->required();
    app.add_option("--command", command, "solve | verify | sweep | simulate | probe (overrides the config)");
    app.add_option("--out", out_dir, "output directory (overrides the config)");
    app.add_option("--seed", seed, "simulation seed (overrides the config)");
    app.add_option("--threads", threads, "worker threads, 0 = all cores (overrides the config)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << RISKCTL_VERSION << '\n';
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    }

    try {
        RunConfig cfg = load_config(config_path);
        if (command) {
            if (std::find(std::begin(kCommands), std::end(kCommands), *command) == std::end(kCommands))
                throw ConfigError("unknown command '" + *command + "'", 0, 0);
            cfg.command = *command;
        }
        if (out_dir) cfg.output_dir = *out_dir;
        if (seed) cfg.simulation.seed = *seed;
        if (threads) cfg.threads = *threads;
        Runner runner(cfg, out, *log);
        return runner.dispatch();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ArgumentError& e) {
        err << "error: invalid argument: " << e.what() << '\n';
        return kConfigError;
    } catch (const AssumptionError& e) {
        err << "error: " << e.what() << '\n';
        return kNumericalFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kNumericalFailure;
    }
}

}  // namespace riskctl::cli
