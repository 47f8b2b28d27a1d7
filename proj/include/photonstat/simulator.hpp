#pragma once

// Synthetic photodetection records for a pulsed, blinking single emitter
// observed through two deadtime-limited APDs behind a 50/50 splitter.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace photonstat::sim {

enum class Channel : std::uint8_t { A = 0, B = 1 };

struct Event {
    std::int64_t time_ps = 0;
    Channel channel = Channel::A;

    friend bool operator==(const Event&, const Event&) = default;
};

struct SourceParams {
    double tau_rep_true = 488e-9;      // s
    double t_start_true = 0.0;         // s
    std::int64_t n_pulses = 325313;
    double p_isc = 2.1e-4;             // ON->OFF probability per pulse
    double tau_triplet = 250e-6;       // s
    double eta = 0.04456;
    double gamma = 2.02e-3 / 0.04456;  // background photons per pulse before loss
    double lifetime = 2.5e-9;          // s
    double deadtime = 280e-9;          // s, per channel
    double dark_rate = 100.0;          // counts/s, per channel
    std::uint64_t seed = 1;
    // Refuse runs whose expected event count exceeds this.
    std::int64_t max_events = 200'000'000;

    friend bool operator==(const SourceParams&, const SourceParams&) = default;
};

// Throws InvalidArgument on a violated invariant; returns non-fatal warnings.
std::vector<std::string> validate(const SourceParams& params);

struct TimestampRecord {
    std::vector<Event> events;               // sorted by (time, channel)
    std::optional<SourceParams> metadata;    // absent for ingested data
};

// Same record plus, per event, the generating pulse index (-1 for dark counts).
struct LabeledRecord {
    TimestampRecord record;
    std::vector<std::int64_t> pulse;
};

TimestampRecord simulate(const SourceParams& params);
LabeledRecord simulate_labeled(const SourceParams& params);

// r_k for k = 0..n_pulses-1 (1 = ON); the same chain simulate() uses.
std::vector<std::uint8_t> state_trace(const SourceParams& params);

// Mean detected events per pulse before deadtime, dark counts included.
double expected_events_per_pulse(const SourceParams& params);

}  // namespace photonstat::sim
