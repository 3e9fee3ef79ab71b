#pragma once

#include "riskctl/error.hpp"
#include "riskctl/model.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace riskctl {

/// Config problem with a 1-based source position (0 when unknown).
class ConfigError : public Error {
public:
    ConfigError(const std::string& message, std::size_t line, std::size_t column);
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

struct SolverSettings {
    std::size_t grid_size = 2001;
    double eigen_rtol = 1e-10;
    double root_tol = 1e-10;
    bool operator==(const SolverSettings&) const = default;
};

struct VerifySettings {
    std::size_t probe_points = 10000;
    double extent = 5.0;
    double tolerance = 1e-6;
    /// Moves both boundaries outward by this much before verifying (fault injection).
    double boundary_offset = 0.0;
    bool operator==(const VerifySettings&) const = default;
};

struct SimulationSettings {
    double x0 = 0.0;
    double horizon = 200.0;
    double dt = 1e-3;
    std::size_t n_paths = 10000;
    std::uint64_t seed = 1;
    double burn_in = 0.0;
    double checkpoint_every = 0.0;
    /// Barriers; the solved boundaries are used when absent.
    std::optional<double> alpha;
    std::optional<double> beta;
    bool operator==(const SimulationSettings&) const = default;
};

struct ProbeSettings {
    std::vector<std::pair<double, double>> offsets = {{0.0, 0.0},    {0.25, 0.0},   {-0.25, 0.0},
                                                      {0.0, 0.25},   {0.0, -0.25},  {0.25, 0.25},
                                                      {0.25, -0.25}, {-0.25, 0.25}, {-0.25, -0.25}};
    bool operator==(const ProbeSettings&) const = default;
};

inline constexpr std::string_view kCommands[] = {"solve", "verify", "sweep", "simulate", "probe"};

struct RunConfig {
    std::string command = "solve";
    ModelSpec model = ModelSpec::bm_quadratic({});
    double theta = 1.0;
    std::vector<double> thetas;
    SolverSettings solver;
    VerifySettings verify;
    SimulationSettings simulation;
    ProbeSettings probe;
    std::string output_dir = "out";
    unsigned threads = 1;

    bool operator==(const RunConfig&) const = default;
};

/// Parses a JSON config. Unknown keys, wrong types and out-of-range values
/// raise ConfigError pointing at the offending text.
RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);

/// Normalized JSON with every field present; parse_config inverts it exactly.
std::string serialize_config(const RunConfig& cfg);

}  // namespace riskctl
