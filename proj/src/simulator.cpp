#include "photonstat/simulator.hpp"

#include "photonstat/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <tuple>

namespace photonstat::sim {

namespace {

using Engine = std::mt19937_64;

// Independent streams so the chain realization does not depend on photon draws.
enum class Stream : std::uint64_t { Chain = 1, Photons = 2, DarkA = 3, DarkB = 4 };

Engine make_engine(std::uint64_t seed, Stream stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    return Engine(seq);
}

double on_to_off(const SourceParams& p) { return p.p_isc; }
double off_to_on(const SourceParams& p) { return p.tau_rep_true / p.tau_triplet; }

double stationary_on(const SourceParams& p) {
    const double sum = on_to_off(p) + off_to_on(p);
    return off_to_on(p) / sum;
}

// Failures before the first success of a per-pulse Bernoulli(prob) trial;
// "never" for prob == 0.
std::int64_t geometric_gap(Engine& rng, double prob) {
    constexpr auto never = std::numeric_limits<std::int64_t>::max() / 4;
    if (prob <= 0.0) return never;
    if (prob >= 1.0) return 0;
    std::geometric_distribution<std::int64_t> dist(prob);
    return std::min(dist(rng), never);
}

struct Run {
    std::int64_t begin, end;
    bool on;
};

std::vector<Run> chain_runs(const SourceParams& p) {
    std::vector<Run> runs;
    if (p.n_pulses == 0) return runs;
    Engine rng = make_engine(p.seed, Stream::Chain);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    bool on = uni(rng) < stationary_on(p);
    std::int64_t k = 0;
    while (k < p.n_pulses) {
        const double leave = on ? on_to_off(p) : off_to_on(p);
        const std::int64_t length = 1 + geometric_gap(rng, leave);
        const std::int64_t end = length >= p.n_pulses - k ? p.n_pulses : k + length;
        runs.push_back({k, end, on});
        k = end;
        on = !on;
    }
    return runs;
}

struct RawEvent {
    std::int64_t time_ps;
    std::uint8_t channel;
    std::int64_t pulse;
};

class PhotonEmitter {
public:
    PhotonEmitter(const SourceParams& p, std::vector<RawEvent>& out)
        : p_(p), out_(out), rng_(make_engine(p.seed, Stream::Photons)), delay_(1.0 / p.lifetime) {}

    Engine& rng() { return rng_; }

    void emit(std::int64_t pulse) {
        const long double t = static_cast<long double>(p_.t_start_true) +
                              static_cast<long double>(pulse) * p_.tau_rep_true + delay_(rng_);
        const auto ps = static_cast<std::int64_t>(std::floor(t * 1e12L));
        out_.push_back({ps, static_cast<std::uint8_t>(coin_(rng_)), pulse});
    }

private:
    const SourceParams& p_;
    std::vector<RawEvent>& out_;
    Engine rng_;
    std::exponential_distribution<double> delay_;
    std::bernoulli_distribution coin_{0.5};
};

// Poisson(lambda) conditioned on at least one photon, by inversion.
int zero_truncated_poisson(Engine& rng, double lambda) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double target = uni(rng) * -std::expm1(-lambda);
    double term = lambda * std::exp(-lambda);
    double cumulative = term;
    int n = 1;
    while (cumulative < target && n < 10000) {
        ++n;
        term *= lambda / n;
        cumulative += term;
    }
    return n;
}

void add_signal(const SourceParams& p, const std::vector<Run>& runs, PhotonEmitter& emitter) {
    if (p.eta <= 0.0) return;
    for (const Run& run : runs) {
        if (!run.on) continue;
        for (std::int64_t k = run.begin + geometric_gap(emitter.rng(), p.eta); k < run.end;
             k += 1 + geometric_gap(emitter.rng(), p.eta))
            emitter.emit(k);
    }
}

void add_background(const SourceParams& p, PhotonEmitter& emitter) {
    const double lambda = p.eta * p.gamma;
    if (lambda <= 0.0) return;
    if (lambda > 0.5) {
        std::poisson_distribution<int> count(lambda);
        for (std::int64_t k = 0; k < p.n_pulses; ++k)
            for (int n = count(emitter.rng()); n > 0; --n) emitter.emit(k);
        return;
    }
    const double any = -std::expm1(-lambda);
    for (std::int64_t k = geometric_gap(emitter.rng(), any); k < p.n_pulses;
         k += 1 + geometric_gap(emitter.rng(), any)) {
        for (int n = zero_truncated_poisson(emitter.rng(), lambda); n > 0; --n) emitter.emit(k);
    }
}

void add_dark(const SourceParams& p, std::uint8_t channel, std::vector<RawEvent>& out) {
    if (p.dark_rate <= 0.0 || p.n_pulses == 0) return;
    Engine rng = make_engine(p.seed, channel == 0 ? Stream::DarkA : Stream::DarkB);
    std::exponential_distribution<double> gap(p.dark_rate);
    const long double start = p.t_start_true;
    const long double stop = start + static_cast<long double>(p.n_pulses) * p.tau_rep_true;
    for (long double t = start + gap(rng); t < stop; t += gap(rng))
        out.push_back({static_cast<std::int64_t>(std::floor(t * 1e12L)), channel, -1});
}

}  // namespace

std::vector<std::string> validate(const SourceParams& p) {
    auto positive = [](double x) { return std::isfinite(x) && x > 0.0; };
    require(positive(p.tau_rep_true), "tau_rep must be positive");
    require(std::isfinite(p.t_start_true) && p.t_start_true >= 0.0, "t_start must be >= 0");
    require(p.n_pulses >= 0, "n_pulses must be >= 0");
    require(p.p_isc >= 0.0 && p.p_isc <= 1.0, "p_isc must lie in [0,1]");
    require(positive(p.tau_triplet), "tau_triplet must be positive");
    require(p.tau_rep_true <= p.tau_triplet, "tau_rep/tau_triplet must be <= 1");
    require(p.eta >= 0.0 && p.eta <= 1.0, "eta must lie in [0,1]");
    require(std::isfinite(p.gamma) && p.gamma >= 0.0, "gamma must be >= 0");
    require(positive(p.lifetime), "lifetime must be positive");
    require(positive(p.deadtime), "deadtime must be positive");
    require(p.deadtime < p.tau_rep_true, "deadtime must be shorter than tau_rep");
    require(std::llround(p.deadtime * 1e12) >= 1, "deadtime must be at least 1 ps");
    require(std::isfinite(p.dark_rate) && p.dark_rate >= 0.0, "dark_rate must be >= 0");
    require(p.max_events > 0, "max_events must be positive");
    const long double end_ps =
        (static_cast<long double>(p.t_start_true) +
         static_cast<long double>(p.n_pulses + 1) * p.tau_rep_true + 1000.0L * p.lifetime) * 1e12L;
    require(end_ps < 9.0e18L, "record does not fit 64-bit picoseconds");

    std::vector<std::string> warnings;
    if (p.lifetime > p.tau_rep_true / 10.0)
        warnings.emplace_back("lifetime exceeds tau_rep/10; photons may leak into the next period");
    return warnings;
}

double expected_events_per_pulse(const SourceParams& p) {
    return p.eta * stationary_on(p) + p.eta * p.gamma + 2.0 * p.dark_rate * p.tau_rep_true;
}

std::vector<std::uint8_t> state_trace(const SourceParams& params) {
    validate(params);
    std::vector<std::uint8_t> r(static_cast<std::size_t>(params.n_pulses), 0);
    for (const Run& run : chain_runs(params))
        if (run.on) std::fill(r.begin() + run.begin, r.begin() + run.end, std::uint8_t{1});
    return r;
}

LabeledRecord simulate_labeled(const SourceParams& params) {
    validate(params);
    const double expected = expected_events_per_pulse(params) * static_cast<double>(params.n_pulses);
    if (expected > static_cast<double>(params.max_events))
        throw Error(ErrorKind::Capacity, "expected " + std::to_string(expected) +
                                             " events exceeds budget of " +
                                             std::to_string(params.max_events));

    std::vector<RawEvent> raw;
    raw.reserve(static_cast<std::size_t>(expected * 1.1) + 16);
    {
        const std::vector<Run> runs = chain_runs(params);
        PhotonEmitter emitter(params, raw);
        add_signal(params, runs, emitter);
        add_background(params, emitter);
    }
    add_dark(params, 0, raw);
    add_dark(params, 1, raw);

    std::sort(raw.begin(), raw.end(), [](const RawEvent& a, const RawEvent& b) {
        return std::tie(a.time_ps, a.channel, a.pulse) < std::tie(b.time_ps, b.channel, b.pulse);
    });

    const std::int64_t dead_ps = std::llround(params.deadtime * 1e12);
    std::int64_t last[2] = {std::numeric_limits<std::int64_t>::min() / 2,
                            std::numeric_limits<std::int64_t>::min() / 2};
    LabeledRecord out;
    out.record.metadata = params;
    for (const RawEvent& e : raw) {
        if (e.time_ps - last[e.channel] < dead_ps) continue;
        last[e.channel] = e.time_ps;
        out.record.events.push_back({e.time_ps, static_cast<Channel>(e.channel)});
        out.pulse.push_back(e.pulse);
    }
    return out;
}

TimestampRecord simulate(const SourceParams& params) { return simulate_labeled(params).record; }

}  // namespace photonstat::sim
