#include <catch2/catch_amalgamated.hpp>

#include "photonstat/detection_model.hpp"
#include "photonstat/error.hpp"
#include "photonstat/onoff_model.hpp"
#include "photonstat/simulator.hpp"
#include "photonstat/statistics.hpp"
#include "photonstat/synchronizer.hpp"

#include <cmath>
#include <numeric>
#include <random>

using namespace photonstat;
using namespace photonstat::stats;
using Catch::Approx;

namespace {

std::vector<std::uint8_t> reference_series() {
    std::vector<std::uint8_t> s;
    s.insert(s.end(), 310190, 0);
    s.insert(s.end(), 15108, 1);
    s.insert(s.end(), 15, 2);
    std::shuffle(s.begin(), s.end(), std::mt19937_64(1));
    return s;
}

std::vector<std::uint8_t> bernoulli_series(std::int64_t n, double p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution b(p);
    std::vector<std::uint8_t> s(n);
    for (auto& x : s) x = b(rng) ? 1 : 0;
    return s;
}

// Per-pulse counts straight from the generating pulse labels, capped at 2.
sync::PhotocountSeries labeled_series(const sim::SourceParams& p) {
    const auto truth = sim::simulate_labeled(p);
    sync::PhotocountSeries s;
    s.counts.assign(p.n_pulses, 0);
    for (std::int64_t k : truth.pulse)
        if (k >= 0 && s.counts[k] < 2) ++s.counts[k];
    s.n_pulses = p.n_pulses;
    s.tau_rep = p.tau_rep_true;
    s.window = p.tau_rep_true;
    return s;
}

// Mandel parameter of window sums from exact integer moments:
// Q + 1 = (n*S2 - S1^2) / (n*S1).
double direct_window_q(const std::vector<std::uint8_t>& s, std::int64_t m) {
    const std::int64_t n = s.size() / m;
    std::int64_t s1 = 0, s2 = 0;
    for (std::int64_t w = 0; w < n; ++w) {
        std::int64_t sum = 0;
        for (std::int64_t i = 0; i < m; ++i) sum += s[w * m + i];
        s1 += sum;
        s2 += sum * sum;
    }
    const std::int64_t num = n * s2 - s1 * s1;
    return static_cast<double>(num) / static_cast<double>(n * s1) - 1.0;
}

}  // namespace

TEST_CASE("empirical pmf", "[stats]") {
    const auto s = reference_series();
    const auto pmf = empirical_pmf(s);
    CHECK(pmf[0] == Approx(0.95351).margin(1e-5));
    CHECK(pmf[1] == Approx(0.04644).margin(1e-5));
    CHECK(pmf[2] == Approx(4.6e-5).margin(1e-6));
    CHECK(pmf.mean() == Approx(0.04653).margin(1e-5));

    const std::vector<std::uint8_t> zeros(50, 0);
    CHECK(empirical_pmf(zeros)[0] == 1.0);
    const std::vector<std::uint8_t> alt{0, 1, 0, 1, 0, 1};
    CHECK(empirical_pmf(alt)[1] == 0.5);
    CHECK(empirical_pmf(alt).mean() == 0.5);
    CHECK_THROWS_AS(empirical_pmf(std::vector<std::uint8_t>{}), Error);
}

TEST_CASE("single-window Mandel parameter", "[stats]") {
    const auto s = reference_series();
    const WindowQ w = mandel_window(s, 1);
    CHECK(w.q_value == Approx(-0.04455).margin(2e-5));
    CHECK(w.n_samples == 325313);
    CHECK(w.std_error > 0.0);

    SECTION("equals the two-click closed form on the pmf") {
        CHECK(std::abs(w.q_value - detection::mandel_from_counts(empirical_pmf(s))) < 1e-12);
        std::mt19937_64 rng(4);
        for (int trial = 0; trial < 20; ++trial) {
            std::uniform_int_distribution<int> c(0, 2);
            std::vector<std::uint8_t> r(1000 + trial * 37);
            for (auto& x : r) x = static_cast<std::uint8_t>(c(rng));
            REQUIRE(std::abs(mandel_window(r, 1).q_value - detection::mandel_from_counts(empirical_pmf(r))) < 1e-12);
        }
    }
    SECTION("matches exact integer moments at every window") {
        for (std::int64_t m : {1, 3, 10, 77, 1000})
            CHECK(mandel_window(s, m).q_value == Approx(direct_window_q(s, m)).epsilon(1e-12).margin(1e-13));
    }
}

TEST_CASE("Mandel window edge cases", "[stats]") {
    const std::vector<std::uint8_t> ones(1000, 1);
    for (std::int64_t m : {1, 7, 100, 500}) CHECK(mandel_window(ones, m).q_value == -1.0);

    const std::vector<std::uint8_t> zeros(1000, 0);
    try {
        mandel_window(zeros, 10);
        FAIL("expected UndefinedMean");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UndefinedMean);
    }
    try {
        mandel_window(ones, 501);
        FAIL("expected InsufficientData");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InsufficientData);
    }
    CHECK_THROWS_AS(mandel_window(ones, 0), Error);
}

TEST_CASE("independent Bernoulli counts give Q = -p", "[stats]") {
    const auto s = bernoulli_series(1'000'000, 0.05, 8);
    const WindowQ w = mandel_window(s, 100);
    INFO(w.q_value << " +- " << w.std_error);
    CHECK(std::abs(w.q_value + 0.05) < 3 * w.std_error);

    SECTION("bootstrap error tracks the replica spread") {
        std::vector<double> qs;
        double se = 0;
        for (std::uint64_t seed = 100; seed < 140; ++seed) {
            const WindowQ r = mandel_window(bernoulli_series(100'000, 0.05, seed), 10);
            qs.push_back(r.q_value);
            se += r.std_error / 40;
        }
        const double mean = std::accumulate(qs.begin(), qs.end(), 0.0) / qs.size();
        double var = 0;
        for (double q : qs) var += (q - mean) * (q - mean);
        const double sd = std::sqrt(var / (qs.size() - 1));
        CHECK(se == Approx(sd).epsilon(0.3));
    }
    SECTION("deterministic under a fixed seed") {
        BootstrapOptions b;
        b.seed = 77;
        CHECK(mandel_window(s, 100, b).std_error == mandel_window(s, 100, b).std_error);
        b.resamples = 0;
        CHECK(std::isnan(mandel_window(s, 100, b).std_error));
    }
}

TEST_CASE("window sums of a thinned chain follow eta * Q_exact", "[stats]") {
    sim::SourceParams p;
    p.n_pulses = 4'000'000;
    p.eta = 0.3;
    p.gamma = 0.0;
    p.dark_rate = 0.0;
    p.p_isc = 1e-3;
    p.tau_triplet = p.tau_rep_true / 3e-3;
    p.seed = 3;
    const auto s = labeled_series(p);
    const auto rates = onoff::OnOffRates::from_isc(p.p_isc, p.tau_triplet, p.tau_rep_true);
    for (std::int64_t m : {1, 10, 100, 1000, 10000}) {
        const WindowQ w = mandel_window(s.counts, m);
        const double model = onoff::mandel_detected(rates, m, p.eta).q_value;
        INFO("M=" << m << ": " << w.q_value << " +- " << w.std_error << " vs " << model);
        CHECK(std::abs(w.q_value - model) < 3 * w.std_error);
    }
}

TEST_CASE("Mandel sweep", "[stats]") {
    SECTION("default grid") {
        const auto g = default_m_grid(325313);
        CHECK(g.front() == 1);
        CHECK(g.back() <= 32531);
        CHECK(g.back() > 20000);
        CHECK(std::adjacent_find(g.begin(), g.end(), std::greater_equal<>()) == g.end());
        CHECK(default_m_grid(5) == std::vector<std::int64_t>{1});
    }
    SECTION("grid validation and skipped points") {
        sync::PhotocountSeries s;
        s.counts = bernoulli_series(1000, 0.1, 1);
        s.tau_rep = 1e-6;
        CHECK_THROWS_AS(mandel_sweep(s, {10, 5}), Error);
        CHECK_THROWS_AS(mandel_sweep(s, {0, 5}), Error);
        const auto c = mandel_sweep(s, {1, 10, 400, 600});
        REQUIRE(c.points.size() == 3);
        CHECK(c.points[1].t_seconds == Approx(10e-6));
        CHECK(c.points[2].n_samples == 2);
        REQUIRE(c.skipped.size() == 1);
        CHECK(c.skipped[0].m_pulses == 600);
        CHECK_FALSE(c.skipped[0].reason.empty());
    }
    SECTION("perfect source stays flat at -eta") {
        sim::SourceParams p;
        p.p_isc = 0.0;
        p.gamma = 0.0;
        p.dark_rate = 0.0;
        const auto c = mandel_sweep(labeled_series(p), {1, 10, 100, 1000});
        for (const auto& pt : c.points) {
            INFO("M=" << pt.m_pulses);
            CHECK(std::abs(pt.q_value + p.eta) < 3 * pt.std_error);
        }
    }
    SECTION("shuffling removes the window dependence") {
        sim::SourceParams p;
        p.seed = 8;
        auto s = labeled_series(p);
        const double single = mandel_window(s.counts, 1).q_value;
        std::shuffle(s.counts.begin(), s.counts.end(), std::mt19937_64(2));
        for (const auto& pt : mandel_sweep(s, {10, 100, 1000}).points) {
            INFO("M=" << pt.m_pulses);
            CHECK(std::abs(pt.q_value - single) < 3 * pt.std_error);
        }
    }
    SECTION("nominal-parameter run turns from sub- to super-Poissonian") {
        sim::SourceParams p;
        p.seed = 12;
        const auto c = mandel_sweep(labeled_series(p), {1, 2, 4, 8, 205, 1000});
        for (const auto& pt : c.points) {
            INFO("M=" << pt.m_pulses << " Q=" << pt.q_value << " +- " << pt.std_error);
            if (pt.m_pulses <= 8) CHECK(pt.q_value < 0.0);
            if (pt.t_seconds >= 10e-6) CHECK(pt.q_value > 0.0);
        }
    }
}

TEST_CASE("statistics ignore which channel clicked", "[stats]") {
    sim::SourceParams p;
    p.seed = 6;
    const auto rec = sim::simulate(p);
    auto swapped = rec;
    for (auto& e : swapped.events) e.channel = e.channel == sim::Channel::A ? sim::Channel::B : sim::Channel::A;

    auto series = [&](const sim::TimestampRecord& r) {
        const auto est = sync::estimate_clock(r, p.tau_rep_true);
        const auto a = sync::assign_pulses(r, est);
        return sync::gate_counts(a, sync::pulses_spanned(a), 30e-9);
    };
    const auto s1 = series(rec), s2 = series(swapped);
    CHECK(s1.counts == s2.counts);
    for (std::int64_t m : {1, 10, 100})
        CHECK(mandel_window(s1.counts, m).q_value == mandel_window(s2.counts, m).q_value);
}

TEST_CASE("G2 estimator", "[stats]") {
    SECTION("constant series") {
        const std::vector<std::uint8_t> c(5000, 2);
        for (const auto& pt : g2_empirical(c, 20).points) CHECK(pt.g2_value == 1.0);
    }
    SECTION("errors") {
        const std::vector<std::uint8_t> zeros(5000, 0);
        try {
            g2_empirical(zeros, 10);
            FAIL("expected UndefinedMean");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::UndefinedMean);
        }
        try {
            g2_empirical(bernoulli_series(1000, 0.5, 1), 100);
            FAIL("expected InsufficientData");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::InsufficientData);
        }
        CHECK_THROWS_AS(g2_empirical(bernoulli_series(1000, 0.5, 1), 0), Error);
    }
    SECTION("matches a dense evaluation") {
        const auto s = bernoulli_series(20000, 0.2, 5);
        const auto curve = g2_empirical(s, 30);
        const double mean = std::accumulate(s.begin(), s.end(), 0.0) / s.size();
        for (const auto& pt : curve.points) {
            double acc = 0;
            for (std::size_t i = 0; i + pt.lag < s.size(); ++i) acc += s[i] * s[i + pt.lag];
            CHECK(pt.g2_value == Approx(acc / (s.size() - pt.lag) / (mean * mean)).epsilon(1e-12));
        }
    }
    SECTION("independent counts sit on the shot-noise line") {
        const auto curve = g2_empirical(bernoulli_series(2'000'000, 0.05, 9), 50);
        int outside = 0;
        for (const auto& pt : curve.points) outside += std::abs(pt.g2_value - 1.0) > 3 * pt.std_error;
        CHECK(outside <= 2);
    }
}

TEST_CASE("G2 of an ON-OFF state trace", "[stats]") {
    sim::SourceParams p;
    p.n_pulses = 4'000'000;
    p.p_isc = 2e-3;
    p.tau_triplet = p.tau_rep_true / 4e-3;
    p.seed = 11;
    const auto r = sim::state_trace(p);
    const auto rates = onoff::OnOffRates::from_isc(p.p_isc, p.tau_triplet, p.tau_rep_true);
    const auto curve = g2_empirical(r, 300);
    const double ratio = rates.p_per_pulse() / rates.q_per_pulse();
    for (std::int64_t lag : {1, 10, 100, 300}) {
        const auto& pt = curve.points[lag - 1];
        const double model = 1.0 + ratio * std::pow(rates.alpha(), static_cast<double>(lag));
        INFO("lag " << lag << ": " << pt.g2_value << " +- " << pt.std_error << " vs " << model);
        CHECK(std::abs(pt.g2_value - model) < 3 * pt.std_error);
    }
}

TEST_CASE("nominal-parameter G2 at lag one", "[stats]") {
    sim::SourceParams p;
    p.seed = 13;
    const auto s = labeled_series(p);
    const auto pt = g2_empirical(s.counts, 100).points[0];
    const auto rates = onoff::OnOffRates::from_isc(p.p_isc, p.tau_triplet, p.tau_rep_true);
    // Uncorrelated background dilutes the contrast by the squared signal share.
    const double signal = p.eta * onoff::stationary_probabilities(rates).on;
    const double share = signal / (signal + p.eta * p.gamma + 2 * p.dark_rate * p.tau_rep_true);
    const double model = 1.0 + share * share * (onoff::g2_model(rates, 1) - 1.0);
    INFO(pt.g2_value << " +- " << pt.std_error << " vs " << model);
    CHECK(std::abs(pt.g2_value - model) < 3 * pt.std_error);
    CHECK(onoff::g2_model(rates, 1) == Approx(1.108).margin(1e-3));
}

TEST_CASE("G2 is noisier than Q at matching scales", "[stats]") {
    for (std::uint64_t seed = 30; seed < 40; ++seed) {
        sim::SourceParams p;
        p.seed = seed;
        const auto s = labeled_series(p);
        const auto g2 = g2_empirical(s.counts, 8);
        for (std::int64_t d : {1, 2, 4, 8}) {
            const WindowQ q = mandel_window(s.counts, d);
            INFO("seed " << seed << " lag " << d);
            CHECK(g2.points[d - 1].std_error > q.std_error);
        }
    }
}
