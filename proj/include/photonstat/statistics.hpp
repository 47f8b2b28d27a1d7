#pragma once

// Estimators on per-pulse photocount series: single-pulse pmf, windowed
// Mandel Q(T) and the discrete intensity correlation G2(lag).
//
// Error bars come from a moving-block bootstrap: the series is cut into
// contiguous super-blocks which are resampled with replacement, so slow
// blinking correlations inside a super-block are preserved.

#include "photonstat/detection_model.hpp"
#include "photonstat/synchronizer.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace photonstat::stats {

struct BootstrapOptions {
    int resamples = 200;
    int super_blocks = 100;
    std::uint64_t seed = 1;
};

// Pmf over {0, .., max count}; InsufficientData for an empty series.
detection::CountDistribution empirical_pmf(std::span<const std::uint8_t> counts);
detection::CountDistribution empirical_pmf(const sync::PhotocountSeries& series);

struct WindowQ {
    double q_value = 0.0;
    double std_error = 0.0;
    std::int64_t n_samples = 0;  // disjoint windows used
};

// Q of disjoint m-pulse window sums with population variance; trailing pulses
// that do not fill a window are dropped.
WindowQ mandel_window(std::span<const std::uint8_t> counts, std::int64_t m_pulses,
                      const BootstrapOptions& boot = {});

struct MandelPoint {
    std::int64_t m_pulses = 0;
    double t_seconds = 0.0;  // m * tau_rep, 0 when the period is unknown
    double q_value = 0.0;
    double std_error = 0.0;
    std::int64_t n_samples = 0;
};

struct SkippedPoint {
    std::int64_t m_pulses = 0;
    std::string reason;
};

struct MandelCurve {
    std::vector<MandelPoint> points;
    std::vector<SkippedPoint> skipped;
};

// About ten points per decade from 1 to n_pulses/10, rounded and deduplicated.
std::vector<std::int64_t> default_m_grid(std::int64_t n_pulses);

// Empty grid means the default grid. Points that cannot be evaluated are
// listed in `skipped` rather than thrown.
MandelCurve mandel_sweep(const sync::PhotocountSeries& series, std::vector<std::int64_t> m_grid = {},
                         const BootstrapOptions& boot = {});

struct G2Point {
    std::int64_t lag = 0;
    double g2_value = 0.0;
    double std_error = 0.0;
};

struct G2Curve {
    std::vector<G2Point> points;
};

// G2(d) = mean(n_i n_{i+d}) / mean(n)^2 for d = 1..max_lag.
G2Curve g2_empirical(std::span<const std::uint8_t> counts, std::int64_t max_lag,
                     const BootstrapOptions& boot = {});
G2Curve g2_empirical(const sync::PhotocountSeries& series, std::int64_t max_lag,
                     const BootstrapOptions& boot = {});

}  // namespace photonstat::stats
