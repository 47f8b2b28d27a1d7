#include "photonstat/detection_model.hpp"

#include "photonstat/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace photonstat::detection {

namespace {

constexpr double kNormTolerance = 1e-12;

// C(m,n) eta^n (1-eta)^(m-n), exact at the eta = 0 and eta = 1 endpoints.
double binomial_term(std::size_t m, std::size_t n, double eta) {
    if (eta == 0.0) return n == 0 ? 1.0 : 0.0;
    if (eta == 1.0) return n == m ? 1.0 : 0.0;
    const double md = static_cast<double>(m);
    const double nd = static_cast<double>(n);
    const double log_choose = std::lgamma(md + 1.0) - std::lgamma(nd + 1.0) - std::lgamma(md - nd + 1.0);
    return std::exp(log_choose + nd * std::log(eta) + (md - nd) * std::log1p(-eta));
}

struct SpsTerms {
    double p1, p2;
    double dp1_deta, dp1_dg;
    double dp2_deta, dp2_dg;
};

SpsTerms sps_terms(double eta, double g) {
    const double e1 = std::exp(-0.5 * g);
    const double e2 = std::exp(-g);
    const double e1_minus_e2 = e2 * std::expm1(0.5 * g);
    const double one_minus_e1 = -std::expm1(-0.5 * g);
    SpsTerms t{};
    t.p1 = 2.0 * e1_minus_e2 + eta * (2.0 * e2 - e1);
    t.p2 = one_minus_e1 * one_minus_e1 + eta * e1_minus_e2;
    t.dp1_deta = 2.0 * e2 - e1;
    t.dp1_dg = 2.0 * (e2 - 0.5 * e1) + eta * (0.5 * e1 - 2.0 * e2);
    t.dp2_deta = e1_minus_e2;
    t.dp2_dg = one_minus_e1 * e1 + eta * (e2 - 0.5 * e1);
    return t;
}

}  // namespace

CountDistribution::CountDistribution(std::vector<double> pmf) : pmf_(std::move(pmf)) {
    require(!pmf_.empty(), "distribution needs at least one entry");
    double total = 0.0;
    for (std::size_t n = 0; n < pmf_.size(); ++n) {
        require(std::isfinite(pmf_[n]) && pmf_[n] >= 0.0, "probabilities must be non-negative");
        total += pmf_[n];
        mean_ += static_cast<double>(n) * pmf_[n];
    }
    require(std::abs(total - 1.0) <= kNormTolerance,
            "probabilities must sum to 1 (got " + std::to_string(total) + ")");
}

CountDistribution CountDistribution::poisson(double mean) {
    require(std::isfinite(mean) && mean >= 0.0, "Poisson mean must be non-negative");
    if (mean == 0.0) return point_mass(0);
    std::vector<double> pmf;
    double term = std::exp(-mean);
    double cumulative = 0.0;
    for (std::size_t n = 0;; ++n) {
        if (n > 0) term *= mean / static_cast<double>(n);
        pmf.push_back(term);
        cumulative += term;
        // Past the mode the tail is bounded by a geometric series in mean/(n+1).
        const double ratio = mean / static_cast<double>(n + 2);
        if (static_cast<double>(n) > mean && ratio < 1.0 &&
            term * ratio / (1.0 - ratio) < 1e-15)
            break;
        if (1.0 - cumulative < 1e-15 && static_cast<double>(n) > mean) break;
    }
    for (double& p : pmf) p /= cumulative;
    return CountDistribution(std::move(pmf));
}

CountDistribution CountDistribution::point_mass(std::size_t n) {
    std::vector<double> pmf(n + 1, 0.0);
    pmf[n] = 1.0;
    return CountDistribution(std::move(pmf));
}

double SourceComposition::gamma() const noexcept {
    if (eta_gamma == 0.0) return 0.0;
    if (eta <= 0.0) return std::numeric_limits<double>::infinity();
    return eta_gamma / eta;
}

double SourceComposition::signal_to_background() const noexcept {
    if (eta_gamma <= 0.0) return std::numeric_limits<double>::infinity();
    return eta / eta_gamma;
}

SourceComposition composition_from_detected(double eta, double eta_gamma) {
    require(eta >= 0.0 && eta <= 1.0, "efficiency must lie in [0,1]");
    require(std::isfinite(eta_gamma) && eta_gamma >= 0.0, "background level must be non-negative");
    return {eta, eta_gamma};
}

SourceComposition make_composition(double eta, double gamma) {
    require(std::isfinite(gamma) && gamma >= 0.0, "background level must be non-negative");
    return composition_from_detected(eta, eta * gamma);
}

CountDistribution attenuate(const CountDistribution& dist, double eta) {
    require(eta >= 0.0 && eta <= 1.0, "efficiency must lie in [0,1]");
    const auto in = dist.pmf();
    std::vector<double> out(in.size(), 0.0);
    for (std::size_t m = 0; m < in.size(); ++m) {
        if (in[m] == 0.0) continue;
        for (std::size_t n = 0; n <= m; ++n) out[n] += binomial_term(m, n, eta) * in[m];
    }
    return CountDistribution(std::move(out));
}

CountDistribution single_apd_counts(const CountDistribution& incoming) {
    const auto in = incoming.pmf();
    const double click = std::accumulate(in.begin() + 1, in.end(), 0.0);
    return CountDistribution({in[0], click});
}

CountDistribution hbt_counts(const CountDistribution& incoming) {
    const auto in = incoming.pmf();
    std::array<double, 3> out{in[0], 0.0, 0.0};
    for (std::size_t n = 1; n < in.size(); ++n) {
        // All n photons exit the same port with probability 2^(1-n).
        const double same_side = std::ldexp(1.0, 1 - static_cast<int>(std::min<std::size_t>(n, 1100)));
        out[1] += in[n] * same_side;
        out[2] += in[n] * (1.0 - same_side);
    }
    return CountDistribution({out.begin(), out.end()});
}

CountDistribution coherent_counts(double eta_alpha) {
    require(std::isfinite(eta_alpha) && eta_alpha >= 0.0, "mean photon number must be non-negative");
    const double e = std::exp(-0.5 * eta_alpha);
    const double one_minus_e = -std::expm1(-0.5 * eta_alpha);
    return CountDistribution({e * e, 2.0 * e * one_minus_e, one_minus_e * one_minus_e});
}

CountDistribution sps_counts(const SourceComposition& comp) {
    const SourceComposition c = composition_from_detected(comp.eta, comp.eta_gamma);
    const double g = c.eta_gamma;
    const SpsTerms t = sps_terms(c.eta, g);
    const double p0 = std::exp(-g) * (1.0 - c.eta);
    return CountDistribution({p0, t.p1, t.p2});
}

SourceComposition infer_composition(double p1, double p2) {
    require(p1 > 0.0 && p1 < 1.0, "P(1) must lie in (0,1)");
    require(p2 >= 0.0 && p2 < p1, "P(2) must lie in [0, P(1))");
    if (p2 == 0.0) return {p1, 0.0};

    // Seed from the small-background expansion: P2 ~ g^2/4 + eta g/2, P1 ~ eta.
    double eta = std::min(p1 + 2.0 * p2, 1.0);
    double g = std::max(-eta + std::sqrt(eta * eta + 4.0 * p2), 1e-300);

    auto residual_norm = [&](double e, double gg) {
        const SpsTerms t = sps_terms(e, gg);
        return std::hypot((t.p1 - p1) / p1, (t.p2 - p2) / p2);
    };

    double norm = residual_norm(eta, g);
    for (int iter = 0; iter < 200 && norm > 1e-15; ++iter) {
        const SpsTerms t = sps_terms(eta, g);
        const double r1 = (t.p1 - p1) / p1;
        const double r2 = (t.p2 - p2) / p2;
        const double a = t.dp1_deta / p1, b = t.dp1_dg / p1;
        const double c = t.dp2_deta / p2, d = t.dp2_dg / p2;
        const double det = a * d - b * c;
        if (!std::isfinite(det) || det == 0.0) break;
        const double step_eta = (d * r1 - b * r2) / det;
        const double step_g = (a * r2 - c * r1) / det;

        double lambda = 1.0;
        bool improved = false;
        for (int k = 0; k < 60; ++k, lambda *= 0.5) {
            const double e_try = eta - lambda * step_eta;
            const double g_try = g - lambda * step_g;
            if (e_try < 0.0 || e_try > 1.0 || g_try <= 0.0) continue;
            const double n_try = residual_norm(e_try, g_try);
            if (n_try < norm) {
                eta = e_try;
                g = g_try;
                norm = n_try;
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }

    const SpsTerms t = sps_terms(eta, g);
    if (!(std::abs(t.p1 - p1) <= 1e-9 && std::abs(t.p2 - p2) <= 1e-9 && norm < 1e-8) || eta <= 0.0)
        throw Error(ErrorKind::NoSolution, "click probabilities (" + std::to_string(p1) + ", " +
                                               std::to_string(p2) +
                                               ") are not reachable by SPS + Poisson background");
    return {eta, g};
}

double mandel_q(const CountDistribution& dist) {
    const auto pmf = dist.pmf();
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t n = 0; n < pmf.size(); ++n) {
        const double nd = static_cast<double>(n);
        m1 += nd * pmf[n];
        m2 += nd * nd * pmf[n];
    }
    if (m1 <= 0.0) throw Error(ErrorKind::UndefinedMean, "Mandel parameter undefined at zero mean");
    return (m2 - m1 * m1) / m1 - 1.0;
}

double mandel_from_counts(const CountDistribution& dist) {
    for (std::size_t n = 3; n <= dist.n_max(); ++n)
        require(dist[n] == 0.0, "two-click formula needs support in {0,1,2}");
    const double mean = dist[1] + 2.0 * dist[2];
    if (mean <= 0.0) throw Error(ErrorKind::UndefinedMean, "Mandel parameter undefined at zero mean");
    return mean * (2.0 * dist[2] / (mean * mean) - 1.0);
}

double coherent_mandel(double mean_detected) {
    require(std::isfinite(mean_detected) && mean_detected >= 0.0, "mean must be non-negative");
    return -0.5 * mean_detected;
}

double coherent_eta_alpha_for_mean(double mean_detected) {
    require(mean_detected >= 0.0 && mean_detected < 2.0, "two-click mean must lie in [0,2)");
    return -2.0 * std::log1p(-0.5 * mean_detected);
}

}  // namespace photonstat::detection
