#pragma once

// Discrete-time ON-OFF model of an intermittent pulsed single-photon source.
//
// The emitter is ON or OFF at each excitation pulse k. Between consecutive
// pulses it leaves ON with probability p*tau_rep and leaves OFF with
// probability q*tau_rep. With beta = (p+q)*tau_rep and alpha = 1 - beta, the
// state indicator r_k is a stationary two-state Markov chain with
//
//   P_on = q/(p+q),   C(l) = Cov(r_k, r_{k+l}) = p*q/(p+q)^2 * alpha^l.
//
// Everything below is closed form in (p*tau_rep, q*tau_rep, M); the real-time
// scale only enters through tau_rep.

#include <cmath>
#include <cstdint>
#include <type_traits>
#include <utility>

namespace photonstat::onoff {

class OnOffRates {
public:
    // p_rate, q_rate in 1/s; tau_rep in s. Throws InvalidArgument unless all
    // are positive and beta < 1.
    OnOffRates(double p_rate, double q_rate, double tau_rep);

    // From per-pulse intersystem-crossing probability and triplet lifetime.
    static OnOffRates from_isc(double p_isc, double tau_triplet, double tau_rep);

    double p_rate() const noexcept { return p_; }
    double q_rate() const noexcept { return q_; }
    double tau_rep() const noexcept { return tau_rep_; }

    double p_per_pulse() const noexcept { return p_ * tau_rep_; }  // P_ISC
    double q_per_pulse() const noexcept { return q_ * tau_rep_; }
    double beta() const noexcept { return (p_ + q_) * tau_rep_; }
    double alpha() const noexcept { return 1.0 - beta(); }
    double tau_on() const noexcept { return 1.0 / p_; }
    // tau_off = tau_T = tau_rep / (q*tau_rep); exact inverse of the discrete rate.
    double tau_off() const noexcept { return tau_rep_ / q_per_pulse(); }
    double p_isc() const noexcept { return p_per_pulse(); }

private:
    double p_;
    double q_;
    double tau_rep_;
};

struct ModelQ {
    std::int64_t m_pulses = 1;
    double window_seconds = 0.0;  // T = M * tau_rep
    double q_value = 0.0;
};

struct StationaryProbabilities {
    double on = 0.0;
    double off = 0.0;
};

StationaryProbabilities stationary_probabilities(const OnOffRates& rates);

// u_k given u_0; throws InvalidArgument for u0 outside [0,1] or k < 0.
double on_probability(double u0, const OnOffRates& rates, std::int64_t k);

double correlation_function(const OnOffRates& rates, std::int64_t lag);

// Mandel parameter of window sums of r_k over M consecutive pulses (exact).
ModelQ mandel_exact(const OnOffRates& rates, std::int64_t m_pulses);

// Small-beta form: 2p*tau/beta^2 * [1 - (1 - alpha^M)/(M beta)] - 1.
// Differs from mandel_exact by exactly P_off * (2u - 1), u = (1 - alpha^M)/(M beta).
ModelQ mandel_simplified(const OnOffRates& rates, std::int64_t m_pulses);

// eta * mandel_exact: binomial loss scales Q linearly.
ModelQ mandel_detected(const OnOffRates& rates, std::int64_t m_pulses, double eta);

// 1 + (p/q) exp(-(p+q) lag tau_rep), or without the leading 1 when
// include_baseline is false.
double g2_model(const OnOffRates& rates, std::int64_t lag, bool include_baseline = true);

namespace detail {

// Plain value of a scalar or of an automatic-differentiation scalar.
template <class T>
double value_of(const T& x) {
    if constexpr (std::is_arithmetic_v<T>) return static_cast<double>(x);
    else return x.value();
}

// alpha^M - 1 + M*beta, accurate when M*beta is small.
template <class T>
T window_excess(const T& beta, std::int64_t m) {
    using std::exp;
    using std::log;
    const double md = static_cast<double>(m);
    const double b = value_of(beta);

    // log1p(-beta) + beta = -sum_{n>=2} beta^n / n
    T log_excess;
    if (b < 0.25) {
        T power = beta * beta;
        T sum = power * 0.5;
        for (int n = 3; n < 200; ++n) {
            power = power * beta;
            T term = power * (1.0 / n);
            sum = sum + term;
            if (std::abs(value_of(term)) <= 1e-18 * std::abs(value_of(sum))) break;
        }
        log_excess = -sum;
    } else {
        log_excess = log(1.0 - beta) + beta;
    }
    T big_l = log_excess * md - beta * md;  // M * log1p(-beta)

    // expm1(L) - L = sum_{n>=2} L^n / n!
    T exp_excess;
    if (std::abs(value_of(big_l)) < 0.25) {
        T term = big_l * big_l * 0.5;
        T sum = term;
        for (int n = 3; n < 200; ++n) {
            term = term * big_l * (1.0 / n);
            sum = sum + term;
            if (std::abs(value_of(term)) <= 1e-18 * std::abs(value_of(sum))) break;
        }
        exp_excess = sum;
    } else {
        exp_excess = exp(big_l) - 1.0 - big_l;  // |L| >= 0.25: no cancellation
    }
    return exp_excess + log_excess * md;
}

// Q of window sums for a perfect intermittent source, in per-pulse rates.
// Q = P_off * (1 + 2S) - 1 with S = (alpha/beta) * window_excess / (M beta).
template <class T>
T perfect_mandel(const T& p_tau, const T& q_tau, std::int64_t m) {
    T beta = p_tau + q_tau;
    T p_off = p_tau / beta;
    T alpha = 1.0 - beta;
    T s = alpha / beta * window_excess(beta, m) / (beta * static_cast<double>(m));
    return p_off * (1.0 + 2.0 * s) - 1.0;
}

}  // namespace detail

}  // namespace photonstat::onoff
