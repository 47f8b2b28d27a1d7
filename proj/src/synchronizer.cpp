#include "photonstat/synchronizer.hpp"

#include "photonstat/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace photonstat::sync {

namespace {

using Real = long double;

constexpr Real kSettledSlope = 1e-14L;
// Sub-femtosecond remainders at the wrap point come from rounding tau to ps.
constexpr Real kWrapSlackPs = 1e-6L;

struct Clock {
    Real t0;   // ps
    Real tau;  // ps
};

struct EdgePoint {
    Real k;  // pulse index under the working clock
    Real d;  // delay, ps
};

struct Baseline {
    std::vector<EdgePoint> points;

    std::size_t ambiguous_blocks = 0;
    std::size_t blocks = 0;
};

// One point per block of `block` consecutive events: the event opening the
// shortest delay interval that holds `edge_fraction` of the block, i.e. the
// leading edge of the fluorescence decay with stray dark counts ignored.
// The choice is made on a clock rounded to 1/64 ps in exact integer
// arithmetic, ties going to the earlier delay, so it does not flicker under
// sub-femtosecond clock changes.
Baseline baseline_points(const std::vector<sim::Event>& events, const Clock& clock, std::size_t block,
                         double edge_fraction) {
    constexpr Real kQuantum = 64;
    const Real tau_q = std::max<Real>(1, std::round(clock.tau * kQuantum));
    const Real t0_q = std::round(clock.t0 * kQuantum);
    const auto span = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(edge_fraction * block)), 2, block);

    struct Candidate {
        Real d_q;
        std::size_t index;
    };
    Baseline out;
    std::vector<Candidate> buf(block);
    for (std::size_t start = 0; start + block <= events.size(); start += block) {
        for (std::size_t i = 0; i < block; ++i) {
            const Real x = static_cast<Real>(events[start + i].time_ps) * kQuantum - t0_q;
            const Real k = std::floor(x / tau_q);
            buf[i] = {x - k * tau_q, start + i};
        }
        std::sort(buf.begin(), buf.end(), [](const Candidate& a, const Candidate& b) {
            return a.d_q < b.d_q || (a.d_q == b.d_q && a.index < b.index);
        });
        std::size_t best = 0;
        for (std::size_t i = 1; i + span <= block; ++i)
            if (buf[i + span - 1].d_q - buf[i].d_q < buf[best + span - 1].d_q - buf[best].d_q) best = i;
        ++out.blocks;
        if (buf[best + span - 1].d_q - buf[best].d_q > tau_q / 4) {
            ++out.ambiguous_blocks;
            continue;
        }
        const Real t = static_cast<Real>(events[buf[best].index].time_ps) - clock.t0;
        const Real k = std::floor(t / clock.tau);
        out.points.push_back({k, t - k * clock.tau});
    }
    return out;
}

// Drop isolated points that disagree with both neighbours while the
// neighbours agree with each other.
std::vector<EdgePoint> drop_spikes(const std::vector<EdgePoint>& pts, Real jump) {
    std::vector<EdgePoint> out;
    out.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i > 0 && i + 1 < pts.size()) {
            const bool off_prev = std::abs(pts[i].d - pts[i - 1].d) > jump;
            const bool off_next = std::abs(pts[i].d - pts[i + 1].d) > jump;
            const bool neighbours_agree = std::abs(pts[i + 1].d - pts[i - 1].d) <= jump;
            if (off_prev && off_next && neighbours_agree) continue;
        }
        out.push_back(pts[i]);
    }
    return out;
}

struct Segment {
    std::size_t begin = 0, end = 0;
    std::size_t size() const { return end - begin; }
};

Segment longest_jump_free(const std::vector<EdgePoint>& pts, Real jump) {
    Segment best, cur;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i > 0 && std::abs(pts[i].d - pts[i - 1].d) > jump) cur.begin = i;
        cur.end = i + 1;
        if (cur.size() > best.size()) best = cur;
    }
    return best;
}

Real median_of(std::vector<Real>& v) {
    const std::size_t n = v.size();
    auto mid = v.begin() + n / 2;
    std::nth_element(v.begin(), mid, v.end());
    if (n % 2 == 1) return *mid;
    const Real upper = *mid;
    const Real lower = *std::max_element(v.begin(), mid);
    return 0.5L * (lower + upper);
}

struct Line {
    Real a, b;  // d = a + b * x
};

// Least absolute deviations. For a given slope the best intercept is a
// median, and the remaining one-dimensional objective is convex in the slope.
class LadFit {
public:
    LadFit(std::vector<Real> x, std::vector<Real> y) : x_(std::move(x)), y_(std::move(y)), r_(x_.size()) {}

    Line solve(Real lo, Real hi) {
        constexpr Real inv_phi = 0.6180339887498948482L;
        Real m1 = hi - inv_phi * (hi - lo), m2 = lo + inv_phi * (hi - lo);
        Real f1 = cost(m1), f2 = cost(m2);
        for (int it = 0; it < 400 && (hi - lo) > 1e-18L * (1.0L + std::abs(m1)); ++it) {
            if (std::abs(f1 - f2) <= 1e-15L * std::max(f1, f2)) {
                // Flat stretch: the minimum set contains [m1, m2]. Shrinking
                // symmetrically keeps the answer independent of the bracket.
                lo = m1;
                hi = m2;
                m1 = hi - inv_phi * (hi - lo);
                m2 = lo + inv_phi * (hi - lo);
                f1 = cost(m1);
                f2 = cost(m2);
            } else if (f1 < f2) {
                hi = m2;
                m2 = m1;
                f2 = f1;
                m1 = hi - inv_phi * (hi - lo);
                f1 = cost(m1);
            } else {
                lo = m1;
                m1 = m2;
                f1 = f2;
                m2 = lo + inv_phi * (hi - lo);
                f2 = cost(m2);
            }
        }
        Real b = f1 <= f2 ? m1 : m2;
        b = snap_to_vertex(b);
        return {intercept(b), b};
    }

private:
    Real intercept(Real b) {
        for (std::size_t i = 0; i < x_.size(); ++i) r_[i] = y_[i] - b * x_[i];
        return median_of(r_);
    }

    Real cost(Real b) {
        const Real a = intercept(b);
        Real s = 0;
        for (std::size_t i = 0; i < x_.size(); ++i) s += std::abs(y_[i] - a - b * x_[i]);
        return s;
    }

    // The optimum passes through two data points; try the slopes through the
    // point nearest the current line and keep the best.
    Real snap_to_vertex(Real b) {
        const Real a = intercept(b);
        std::size_t pivot = 0;
        Real best_res = std::abs(y_[0] - a - b * x_[0]);
        for (std::size_t i = 1; i < x_.size(); ++i) {
            const Real res = std::abs(y_[i] - a - b * x_[i]);
            if (res < best_res) best_res = res, pivot = i;
        }
        std::vector<Real> candidates;
        for (std::size_t i = 0; i < x_.size(); ++i)
            if (x_[i] != x_[pivot]) candidates.push_back((y_[i] - y_[pivot]) / (x_[i] - x_[pivot]));
        std::sort(candidates.begin(), candidates.end(),
                  [b](Real u, Real v) { return std::abs(u - b) < std::abs(v - b); });
        Real best = b, best_cost = cost(b);
        for (std::size_t i = 0; i < std::min<std::size_t>(candidates.size(), 8); ++i) {
            const Real c = cost(candidates[i]);
            if (c < best_cost * (1 - 1e-15L)) best_cost = c, best = candidates[i];
        }
        return best;
    }

    std::vector<Real> x_, y_, r_;
};

Line fit_segment(const std::vector<EdgePoint>& pts, Segment seg, Real tau, Real* centre) {
    const Real k_lo = pts[seg.begin].k, k_hi = pts[seg.end - 1].k;
    const Real kc = 0.5L * (k_lo + k_hi);
    std::vector<Real> x, y;
    x.reserve(seg.size());
    y.reserve(seg.size());
    for (std::size_t i = seg.begin; i < seg.end; ++i) {
        x.push_back(pts[i].k - kc);
        y.push_back(pts[i].d);
    }

    // A wrap-free stretch of span S pulses cannot drift more than ~tau over S.
    // Centring on the least-squares slope makes the search shift with the data
    // when the trial clock changes.
    const Real span = std::max<Real>(1.0L, k_hi - k_lo);
    const Real bound = 4.0L * tau / span;
    Real mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= x.size();
    my /= y.size();
    Real sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
    const Real b0 = sxx > 0 ? sxy / sxx : 0;
    *centre = kc;
    return LadFit(std::move(x), std::move(y)).solve(b0 - bound, b0 + bound);
}

}  // namespace

double delay_of(long double t_ps, long double t_start_ps, long double tau_clock_ps) {
    require(tau_clock_ps > 0, "clock period must be positive");
    const long double x = t_ps - t_start_ps;
    long double d = x - std::floor(x / tau_clock_ps) * tau_clock_ps;
    if (d >= tau_clock_ps - kWrapSlackPs || d < 0) d = 0;
    return static_cast<double>(d);
}

ClockEstimate estimate_clock(const sim::TimestampRecord& record, double tau_guess, const ClockOptions& opt) {
    const auto& ev = record.events;
    require(std::isfinite(tau_guess) && tau_guess > 0.0, "tau guess must be positive");
    require(ev.size() >= opt.min_events, "clock recovery needs at least " + std::to_string(opt.min_events) +
                                             " timestamps, got " + std::to_string(ev.size()));
    require(opt.max_block >= 3 && opt.max_iterations >= 1, "invalid clock options");
    require(opt.edge_fraction > 0.0 && opt.edge_fraction <= 1.0, "edge_fraction must lie in (0,1]");

    Clock clock{0, static_cast<Real>(tau_guess) * 1e12L};
    // First event sits mid-period, leaving room for drift either way.
    clock.t0 = static_cast<Real>(ev.front().time_ps) - clock.tau / 2;

    const Real span_pulses = (static_cast<Real>(ev.back().time_ps - ev.front().time_ps)) / clock.tau + 1;
    const double density = static_cast<double>(ev.size()) / static_cast<double>(span_pulses);
    // Start fine: an already locked clock (e.g. a re-run) never goes through
    // the coarse stage. If the probe sees wraps, fall back to the stated bound.
    double eps = opt.slope_tolerance;
    bool probing = true;

    ClockEstimate est;
    int settle_budget = 5;
    for (int iter = 1; iter <= opt.max_iterations; ++iter) {
        const double ideal = std::floor(density / (8.0 * eps));
        const auto block = static_cast<std::size_t>(std::clamp(ideal, 3.0, static_cast<double>(opt.max_block)));
        const Real jump = clock.tau / 2;

        const Baseline base = baseline_points(ev, clock, block, opt.edge_fraction);
        if (probing) {
            probing = false;
            const std::vector<EdgePoint> pts = drop_spikes(base.points, jump);
            if (base.ambiguous_blocks > 0 || pts.size() < 4 || longest_jump_free(pts, jump).size() != pts.size()) {
                eps = opt.max_relative_error;
                continue;
            }
        }
        if (base.blocks == 0 || 2 * base.ambiguous_blocks > base.blocks)
            throw Error(ErrorKind::AmbiguousClock,
                        "delay baseline not identifiable (" + std::to_string(base.ambiguous_blocks) + " of " +
                            std::to_string(base.blocks) + " blocks have no sharp edge)");
        const std::vector<EdgePoint> pts = drop_spikes(base.points, jump);
        const Segment seg = longest_jump_free(pts, jump);
        if (seg.size() < 4)
            throw Error(ErrorKind::AmbiguousClock, "no wrap-free stretch of the delay baseline");

        Real kc = 0;
        const Line line = fit_segment(pts, seg, clock.tau, &kc);

        // Baseline time at pulse k is t0 + a + b (k - kc) + k tau.
        const Real new_tau = clock.tau + line.b;
        const Real baseline_t0 = clock.t0 + line.a - line.b * kc;
        clock = {baseline_t0 - new_tau / 2, new_tau};

        est.iterations = iter;
        est.residual_slope = static_cast<double>(line.b * 1e-12L);
        est.used_fraction = static_cast<double>(seg.size() * block) / static_cast<double>(ev.size());

        const bool whole = seg.size() == pts.size();
        const bool flat = std::abs(line.b) < opt.slope_tolerance * clock.tau;
        // Once within tolerance, keep going until the chosen baseline events
        // reproduce their own fit; this makes the result a fixed point.
        const bool settled = std::abs(line.b) < kSettledSlope * clock.tau || settle_budget-- <= 0;
        if (whole && flat && block == static_cast<std::size_t>(opt.max_block) && settled) {
            Real t_start = baseline_t0 - static_cast<Real>(opt.guard) * 1e12L;
            // Shift by whole periods so the first event falls in pulse 0.
            t_start += std::floor((static_cast<Real>(ev.front().time_ps) - t_start) / new_tau) * new_tau;
            est.t_start_ps = static_cast<std::int64_t>(std::floor(t_start));
            est.tau_rep = static_cast<double>(new_tau * 1e-12L);
            return est;
        }
        eps = std::max(2.0 * std::abs(static_cast<double>(line.b / clock.tau)), opt.slope_tolerance);
    }
    throw Error(ErrorKind::NonConvergence,
                "clock recovery did not converge in " + std::to_string(opt.max_iterations) +
                    " iterations (last drift " + std::to_string(est.residual_slope) + " s/pulse)");
}

PulseAssignment assign_pulses(const sim::TimestampRecord& record, const ClockEstimate& clock) {
    require(clock.tau_rep > 0.0, "clock period must be positive");
    const Real tau = static_cast<Real>(clock.tau_rep) * 1e12L;
    const Real t0 = static_cast<Real>(clock.t_start_ps);
    PulseAssignment out;
    out.tau_rep = clock.tau_rep;
    const std::size_t n = record.events.size();
    out.pulse_index.resize(n);
    out.delay_ps.resize(n);
    out.before_start.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const Real t = static_cast<Real>(record.events[i].time_ps);
        if (t < t0) {
            out.pulse_index[i] = 0;
            out.delay_ps[i] = 0.0;
            out.before_start[i] = 1;
            ++out.n_before_start;
            continue;
        }
        auto p = static_cast<std::int64_t>(std::floor((t - t0) / tau));
        Real d = t - t0 - static_cast<Real>(p) * tau;
        if (d < 0) d += tau, --p;
        if (d >= tau - kWrapSlackPs) d = std::max<Real>(0, d - tau), ++p;
        out.pulse_index[i] = p;
        out.delay_ps[i] = static_cast<double>(d);
    }
    return out;
}

std::int64_t PhotocountSeries::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

PhotocountSeries gate_counts(const PulseAssignment& a, std::int64_t n_pulses, double window, GateSummary* summary) {
    require(n_pulses >= 0, "n_pulses must be >= 0");
    require(window > 0.0, "gate window must be positive");
    if (a.tau_rep > 0.0) require(window < a.tau_rep, "gate window must be shorter than tau_rep");
    PhotocountSeries s;
    s.n_pulses = n_pulses;
    s.window = window;
    s.tau_rep = a.tau_rep;
    s.counts.assign(static_cast<std::size_t>(n_pulses), 0);
    GateSummary g;
    const double window_ps = window * 1e12;
    for (std::size_t i = 0; i < a.pulse_index.size(); ++i) {
        const std::int64_t p = a.pulse_index[i];
        if (a.before_start[i] || p < 0 || p >= n_pulses) {
            ++g.out_of_range;
            continue;
        }
        if (a.delay_ps[i] > window_ps) {
            ++g.outside_window;
            continue;
        }
        ++g.in_window;
        auto& c = s.counts[static_cast<std::size_t>(p)];
        if (c < 2) ++c, ++g.retained;
    }
    if (summary) *summary = g;
    return s;
}

std::int64_t pulses_spanned(const PulseAssignment& a) {
    std::int64_t last = -1;
    for (std::size_t i = 0; i < a.pulse_index.size(); ++i)
        if (!a.before_start[i]) last = std::max(last, a.pulse_index[i]);
    return last + 1;
}

}  // namespace photonstat::sync
