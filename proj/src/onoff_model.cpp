#include "photonstat/onoff_model.hpp"

#include "photonstat/error.hpp"

#include <cmath>
#include <string>

namespace photonstat::onoff {

OnOffRates::OnOffRates(double p_rate, double q_rate, double tau_rep)
    : p_(p_rate), q_(q_rate), tau_rep_(tau_rep) {
    require(std::isfinite(p_rate) && p_rate > 0.0, "ON->OFF rate must be positive");
    require(std::isfinite(q_rate) && q_rate > 0.0, "OFF->ON rate must be positive");
    require(std::isfinite(tau_rep) && tau_rep > 0.0, "repetition period must be positive");
    require(beta() < 1.0, "(p+q)*tau_rep must be < 1 for the discrete chain, got " +
                              std::to_string(beta()));
}

OnOffRates OnOffRates::from_isc(double p_isc, double tau_triplet, double tau_rep) {
    require(tau_rep > 0.0 && tau_triplet > 0.0, "periods must be positive");
    return OnOffRates(p_isc / tau_rep, 1.0 / tau_triplet, tau_rep);
}

StationaryProbabilities stationary_probabilities(const OnOffRates& rates) {
    const double sum = rates.p_rate() + rates.q_rate();
    return {rates.q_rate() / sum, rates.p_rate() / sum};
}

double on_probability(double u0, const OnOffRates& rates, std::int64_t k) {
    require(u0 >= 0.0 && u0 <= 1.0, "u0 must be a probability");
    require(k >= 0, "pulse index must be non-negative");
    const double p_on = stationary_probabilities(rates).on;
    const double decay = std::exp(static_cast<double>(k) * std::log1p(-rates.beta()));
    return (u0 - p_on) * decay + p_on;
}

double correlation_function(const OnOffRates& rates, std::int64_t lag) {
    require(lag >= 0, "lag must be non-negative");
    const auto [on, off] = stationary_probabilities(rates);
    return on * off * std::exp(static_cast<double>(lag) * std::log1p(-rates.beta()));
}

ModelQ mandel_exact(const OnOffRates& rates, std::int64_t m_pulses) {
    require(m_pulses >= 1, "window must contain at least one pulse");
    const double q = detail::perfect_mandel(rates.p_per_pulse(), rates.q_per_pulse(), m_pulses);
    return {m_pulses, static_cast<double>(m_pulses) * rates.tau_rep(), q};
}

ModelQ mandel_simplified(const OnOffRates& rates, std::int64_t m_pulses) {
    require(m_pulses >= 1, "window must contain at least one pulse");
    const double beta = rates.beta();
    const double m = static_cast<double>(m_pulses);
    // 1 - (1 - alpha^M)/(M beta) == window_excess / (M beta)
    const double bracket = detail::window_excess(beta, m_pulses) / (m * beta);
    const double q = 2.0 * rates.p_per_pulse() / (beta * beta) * bracket - 1.0;
    return {m_pulses, m * rates.tau_rep(), q};
}

ModelQ mandel_detected(const OnOffRates& rates, std::int64_t m_pulses, double eta) {
    require(eta >= 0.0 && eta <= 1.0, "efficiency must lie in [0,1]");
    ModelQ out = mandel_exact(rates, m_pulses);
    out.q_value *= eta;
    return out;
}

double g2_model(const OnOffRates& rates, std::int64_t lag, bool include_baseline) {
    require(lag >= 1, "g2 lag must be >= 1");
    const double contrast = rates.p_rate() / rates.q_rate() *
                            std::exp(-rates.beta() * static_cast<double>(lag));
    return include_baseline ? 1.0 + contrast : contrast;
}

}  // namespace photonstat::onoff
