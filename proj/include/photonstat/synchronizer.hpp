#pragma once

// Post-synchronization of raw timestamps on the excitation time base.
//
// Under a trial clock (t_start, tau) every timestamp has a delay
// t - t_start mod tau. Fluorescence delays are one-sided, so the lower edge of
// the delays traces a straight baseline whose slope is the period error; when
// the error is large the baseline wraps into a saw-tooth. estimate_clock fits
// that baseline on the longest wrap-free stretch, corrects the period, and
// repeats until the whole record is wrap-free and flat.

#include "photonstat/simulator.hpp"

#include <cstdint>
#include <vector>

namespace photonstat::sync {

struct ClockEstimate {
    std::int64_t t_start_ps = 0;
    double tau_rep = 0.0;          // s
    double residual_slope = 0.0;   // s per pulse, last measured baseline drift
    int iterations = 0;
    double used_fraction = 0.0;    // share of baseline points in the final fit
};

struct ClockOptions {
    double max_relative_error = 1e-3;  // assumed bound on |tau_guess/tau - 1|
    double slope_tolerance = 1e-9;     // relative, per pulse
    int max_iterations = 50;
    int max_block = 32;                // events per baseline point in the final fit
    double edge_fraction = 0.75;       // share of a block the edge interval must hold
    double guard = 1e-9;               // s; t_start sits this far before the baseline
    std::size_t min_events = 100;
};

// Delay in [0, tau_clock), both in picoseconds.
double delay_of(long double t_ps, long double t_start_ps, long double tau_clock_ps);

ClockEstimate estimate_clock(const sim::TimestampRecord& record, double tau_guess,
                             const ClockOptions& options = {});

struct PulseAssignment {
    std::vector<std::int64_t> pulse_index;
    std::vector<double> delay_ps;
    std::vector<std::uint8_t> before_start;  // 1 for events earlier than t_start
    std::int64_t n_before_start = 0;
    double tau_rep = 0.0;  // s, from the clock used
};

// Events before t_start are put in pulse 0, flagged, and ignored by gating.
PulseAssignment assign_pulses(const sim::TimestampRecord& record, const ClockEstimate& clock);

struct PhotocountSeries {
    std::vector<std::uint8_t> counts;  // n_p in {0,1,2}
    std::int64_t n_pulses = 0;
    double window = 0.0;               // s
    double tau_rep = 0.0;              // s, 0 when unknown
    std::int64_t total() const;
};

struct GateSummary {
    std::int64_t in_window = 0;      // events with delay <= window and 0 <= p < n_pulses
    std::int64_t retained = 0;       // after capping each pulse at 2
    std::int64_t outside_window = 0;
    std::int64_t out_of_range = 0;   // pulse index >= n_pulses, or before t_start
};

PhotocountSeries gate_counts(const PulseAssignment& assignment, std::int64_t n_pulses, double window,
                             GateSummary* summary = nullptr);

// Number of pulses spanned from t_start through the last event.
std::int64_t pulses_spanned(const PulseAssignment& assignment);

}  // namespace photonstat::sync
