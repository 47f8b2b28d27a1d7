#pragma once

// Photocount algebra of a lossy two-detector (HBT) chain.
//
// Script-P distributions describe photons, plain P distributions describe
// clicks. A linear loss eta is binomial thinning; each ideal APD clicks at
// most once per pulse, so two channels behind a 50/50 splitter saturate at 2.

#include <cstddef>
#include <span>
#include <vector>

namespace photonstat::detection {

// Probability mass over n = 0..n_max. Construction checks non-negativity and
// normalization to 1e-12; the mean is always recomputed from the pmf.
class CountDistribution {
public:
    explicit CountDistribution(std::vector<double> pmf);

    // Poisson(mean) truncated once the residual tail mass drops below 1e-15,
    // then renormalized.
    static CountDistribution poisson(double mean);
    static CountDistribution point_mass(std::size_t n);

    std::span<const double> pmf() const noexcept { return pmf_; }
    std::size_t n_max() const noexcept { return pmf_.size() - 1; }
    double mean() const noexcept { return mean_; }
    double operator[](std::size_t n) const noexcept { return n < pmf_.size() ? pmf_[n] : 0.0; }

private:
    std::vector<double> pmf_;
    double mean_ = 0.0;
};

// Stored as (eta, eta*gamma) so a zero-efficiency source can still carry
// detected background.
struct SourceComposition {
    double eta = 0.0;        // overall detection efficiency
    double eta_gamma = 0.0;  // detected background photons per pulse

    // Background referred to the source; infinite when eta == 0.
    double gamma() const noexcept;
    // 1/gamma; infinite for a background-free source.
    double signal_to_background() const noexcept;
};

SourceComposition make_composition(double eta, double gamma);
SourceComposition composition_from_detected(double eta, double eta_gamma);

CountDistribution attenuate(const CountDistribution& dist, double eta);
CountDistribution single_apd_counts(const CountDistribution& incoming);
CountDistribution hbt_counts(const CountDistribution& incoming);

// Clicks of the HBT pair for Poisson light with eta*alpha detected photons.
CountDistribution coherent_counts(double eta_alpha);

// Clicks for a perfect lossy SPS superposed on Poisson background.
CountDistribution sps_counts(const SourceComposition& comp);

// Solve sps_counts(comp) == (.., p1, p2). NoSolution outside the reachable set.
SourceComposition infer_composition(double p1, double p2);

// Generic (Var - mean)/mean - 1 over the pmf; UndefinedMean at zero mean.
double mandel_q(const CountDistribution& dist);

// Two-click closed form [P1 + 2P2] * {2P2/[P1 + 2P2]^2 - 1}.
double mandel_from_counts(const CountDistribution& dist);

// Q_C = -<n>_C / 2 for deadtime-saturated coherent light.
double coherent_mandel(double mean_detected);

// eta*alpha giving a coherent reference with the requested mean click count.
double coherent_eta_alpha_for_mean(double mean_detected);

}  // namespace photonstat::detection
