#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace riskctl {

/// Polynomial in ascending powers: c[0] + c[1] x + c[2] x^2 + ...
struct Polynomial {
    std::vector<double> coeffs;

    double value(double x) const;
    double derivative(double x) const;
    double second_derivative(double x) const;

    bool operator==(const Polynomial&) const = default;
};

/// dX = gamma (mu - X) dt + sigma dW, h(x) = c x^2, k+ = k- = K.
struct OuQuadratic {
    double gamma = 1.0;
    double mu = 0.0;
    double sigma = 1.0;
    double c = 1.0;
    double K = 1.0;

    bool operator==(const OuQuadratic&) const = default;
};

/// dX = sigma dW, h(x) = c x^2, k+ = k- = K.
struct BmQuadratic {
    double sigma = 1.0;
    double c = 1.0;
    double K = 1.0;

    bool operator==(const BmQuadratic&) const = default;
};

/// Every field given as a polynomial; derivatives are taken symbolically.
struct CustomPoly {
    Polynomial drift;
    Polynomial volatility;
    Polynomial running_cost;
    Polynomial push_cost_up;
    Polynomial push_cost_down;

    bool operator==(const CustomPoly&) const = default;
};

using ModelForm = std::variant<OuQuadratic, BmQuadratic, CustomPoly>;

/// All coefficient values (and the derivatives the theory needs) at one point.
struct PointCoefficients {
    double b, db;
    double sigma, dsigma;
    double h, dh;
    double kp, dkp, d2kp;
    double km, dkm, d2km;

    double sigma2() const { return sigma * sigma; }
};

/// Problem data: drift b, volatility sigma, running cost h and the
/// proportional push costs k+ (upward control) and k- (downward control).
///
/// The declared bounds play the role of the constants C and K of the model
/// assumptions: every validated evaluation must satisfy
/// 0 < sigma^2 < sigma2_bound, h >= 0 and 0 < k+- < push_cost_bound.
class ModelSpec {
public:
    /// Presets declare sigma2_bound = 2 sigma^2 and push_cost_bound = 2 K.
    static ModelSpec ou_quadratic(const OuQuadratic& p);
    static ModelSpec bm_quadratic(const BmQuadratic& p);
    static ModelSpec custom_poly(CustomPoly p, double sigma2_bound, double push_cost_bound);

    const ModelForm& form() const noexcept { return form_; }
    double sigma2_bound() const noexcept { return sigma2_bound_; }
    double push_cost_bound() const noexcept { return push_cost_bound_; }

    /// Raw evaluation, no invariant checks.
    PointCoefficients at(double x) const;

    /// Throws InvalidModelError if an assumption-level pointwise invariant fails at x.
    void check_assumptions_at(double x) const;

    /// Name of the form ("ou_quadratic", "bm_quadratic", "custom_poly").
    std::string form_name() const;

    bool operator==(const ModelSpec&) const = default;

private:
    ModelSpec(ModelForm form, double sigma2_bound, double push_cost_bound);

    ModelForm form_;
    double sigma2_bound_;
    double push_cost_bound_;
};

/// Risk-sensitivity parameter theta > 0.
class RiskParam {
public:
    explicit RiskParam(double theta);
    double value() const noexcept { return theta_; }

private:
    double theta_;
};

enum class Side { Minus, Plus };

/// Switching functions
///   H-(x) = 1/2 theta sigma^2 k+^2 - 1/2 sigma^2 k+' - b k+ + h
///   H+(x) = 1/2 theta sigma^2 k-^2 + 1/2 sigma^2 k-' + b k- + h
/// Throws InvalidModelError when the model invariants fail at x.
double eval_H(const ModelSpec& model, RiskParam theta, double x, Side side);

/// Analytic x-derivative of eval_H.
double eval_H_deriv(const ModelSpec& model, RiskParam theta, double x, Side side);

/// End points of the regions where H- (alpha) and H+ (beta) are negative.
struct TurningPoints {
    double alpha_minus;
    double alpha_plus;
    double beta_minus;
    double beta_plus;
};

struct TurningPointOptions {
    /// |x| limit for every outward search.
    double search_horizon = 1e6;
    /// H must climb this far above its minimum before the horizon.
    double divergence_margin = 1e6;
    /// Samples used to verify the sign structure.
    std::size_t structure_samples = 2001;
};

/// Locates the turning points of H- and H+. When H never goes negative on a
/// side both points coincide at the minimiser of H on that side.
/// Throws AssumptionError ("h-ass1", "h-ass2" or "Hpm-lims") when the
/// unimodal sign structure or the divergence at infinity cannot be confirmed.
TurningPoints find_turning_points(const ModelSpec& model, RiskParam theta,
                                  const TurningPointOptions& opts = {});

/// ln q(x) = int_0^x 2 b / sigma^2 dy by adaptive Gauss-Kronrod quadrature.
double log_scale_density(const ModelSpec& model, double x);

/// q(x) = exp(int_0^x 2 b / sigma^2 dy); q(0) = 1.
double scale_density(const ModelSpec& model, double x);

/// ln q on every abscissa of an increasing grid, accumulated cell by cell.
std::vector<double> log_scale_density_on_grid(const ModelSpec& model,
                                              std::span<const double> grid);

}  // namespace riskctl
