#pragma once

// Recovery of blinking parameters (P_ISC, tau_T) from a measured Q(T) curve
// or from G2(lag), by Levenberg-Marquardt in log-parameters.

#include "photonstat/statistics.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>

namespace photonstat::fit {

struct FitResult {
    std::string method;          // "mandel" or "g2"
    double p_isc = 0.0;          // p * tau_rep
    double tau_triplet = 0.0;    // s, 1/q
    double eta = 0.0;            // efficiency used (fixed, or fitted in free-eta mode)
    bool eta_free = false;
    double eta_std_error = 0.0;  // free-eta mode only
    double residual_norm = 0.0;  // weighted, Euclidean
    double gradient_norm = 0.0;  // |J^T r| in log-parameters at the solution
    // Covariance of (p_isc, tau_triplet).
    std::array<std::array<double, 2>, 2> covariance{};
    bool converged = false;
    int n_iterations = 0;
    std::int64_t n_points = 0;
    bool weighted = false;       // 1/std_error^2 weights were used

    double p_isc_std_error() const;
    double tau_triplet_std_error() const;
};

struct FitOptions {
    int max_iterations = 500;
    double step_tolerance = 1e-8;      // relative parameter step
    double gradient_tolerance = 1e-10;
    bool use_weights = true;           // 1/std_error^2 when every point has one
    bool free_eta = false;             // diagnostic three-parameter Mandel fit
    // Starting point (p_isc, tau_triplet); a coarse grid search otherwise.
    std::optional<std::array<double, 2>> init;
};

// Model: Q(M) = eta * Q_perfect(p, q; M). Needs >= 5 points spanning two
// decades in M. DegenerateCurve for a curve without a blinking signature,
// NonConvergence when the solver stalls.
FitResult fit_mandel(const stats::MandelCurve& curve, double eta, double tau_rep, const FitOptions& options = {});

// Model: G2 = 1 + A exp(-lag/lag0), A = p/q and 1/lag0 = (p+q) tau_rep.
// Needs >= 10 lags. NegativeContrast when the best contrast is not positive.
FitResult fit_g2(const stats::G2Curve& curve, double tau_rep, const FitOptions& options = {});

}  // namespace photonstat::fit
