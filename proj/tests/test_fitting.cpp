#include <catch2/catch_amalgamated.hpp>

#include "photonstat/error.hpp"
#include "photonstat/fitting.hpp"
#include "photonstat/onoff_model.hpp"
#include "photonstat/simulator.hpp"
#include "photonstat/statistics.hpp"

#include <cmath>

using namespace photonstat;
using namespace photonstat::fit;
using Catch::Approx;

namespace {

constexpr double kTau = 488e-9;

stats::MandelCurve model_mandel(double p_isc, double tau_t, double eta, double tau_rep = kTau) {
    const auto rates = onoff::OnOffRates::from_isc(p_isc, tau_t, tau_rep);
    stats::MandelCurve c;
    for (std::int64_t m : stats::default_m_grid(325313)) {
        const double q = onoff::mandel_detected(rates, m, eta).q_value;
        c.points.push_back({m, m * tau_rep, q, 0.0, 325313 / m});
    }
    return c;
}

stats::G2Curve model_g2(double p_isc, double tau_t, std::int64_t max_lag = 1000) {
    const auto rates = onoff::OnOffRates::from_isc(p_isc, tau_t, kTau);
    stats::G2Curve c;
    for (std::int64_t d = 1; d <= max_lag; ++d) c.points.push_back({d, onoff::g2_model(rates, d), 0.0});
    return c;
}

void check_psd(const FitResult& r) {
    const auto& c = r.covariance;
    CHECK(c[0][1] == c[1][0]);
    CHECK(c[0][0] >= 0.0);
    CHECK(c[1][1] >= 0.0);
    CHECK(c[0][0] * c[1][1] - c[0][1] * c[1][0] >= -1e-12 * std::abs(c[0][0] * c[1][1]));
}

template <class F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::Io;
}

sync::PhotocountSeries labeled_series(const sim::SourceParams& p) {
    const auto truth = sim::simulate_labeled(p);
    sync::PhotocountSeries s;
    s.counts.assign(p.n_pulses, 0);
    for (std::int64_t k : truth.pulse)
        if (k >= 0 && s.counts[k] < 2) ++s.counts[k];
    s.n_pulses = p.n_pulses;
    s.tau_rep = p.tau_rep_true;
    return s;
}

}  // namespace

TEST_CASE("Mandel fit on noiseless model data", "[fit]") {
    const auto curve = model_mandel(2.1e-4, 250e-6, 0.04456);
    const FitResult r = fit_mandel(curve, 0.04456, kTau);
    CHECK(r.converged);
    CHECK(r.method == "mandel");
    CHECK_FALSE(r.weighted);
    CHECK(r.p_isc == Approx(2.1e-4).epsilon(1e-6));
    CHECK(r.tau_triplet == Approx(250e-6).epsilon(1e-6));
    CHECK(r.residual_norm < 1e-10);
    CHECK(r.eta == 0.04456);
    check_psd(r);

    SECTION("any starting point an order of magnitude off") {
        int recovered = 0;
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j) {
                FitOptions opt;
                opt.init = std::array<double, 2>{2.1e-4 * std::pow(10.0, -1.0 + i * 2.0 / 9),
                                                 250e-6 * std::pow(10.0, -1.0 + j * 2.0 / 9)};
                const FitResult s = fit_mandel(curve, 0.04456, kTau, opt);
                recovered += std::abs(s.p_isc / 2.1e-4 - 1) < 1e-6 && std::abs(s.tau_triplet / 250e-6 - 1) < 1e-6;
            }
        CHECK(recovered == 100);
    }
    SECTION("free efficiency") {
        FitOptions opt;
        opt.free_eta = true;
        const FitResult s = fit_mandel(curve, 0.03, kTau, opt);
        CHECK(s.eta_free);
        CHECK(s.eta == Approx(0.04456).epsilon(1e-6));
        CHECK(s.p_isc == Approx(2.1e-4).epsilon(1e-6));
        CHECK(s.tau_triplet == Approx(250e-6).epsilon(1e-6));
    }
}

TEST_CASE("fits are equivariant under a change of time scale", "[fit]") {
    for (double k : {0.1, 3.0, 50.0}) {
        const auto curve = model_mandel(2.1e-4, 250e-6 * k, 0.04456, kTau * k);
        const FitResult r = fit_mandel(curve, 0.04456, kTau * k);
        CHECK(r.p_isc == Approx(2.1e-4).epsilon(1e-8));
        CHECK(r.tau_triplet / (kTau * k) == Approx(250e-6 / kTau).epsilon(1e-8));
    }
    const auto base = fit_g2(model_g2(1.6e-4, 180e-6), kTau);
    const auto scaled = fit_g2(model_g2(1.6e-4, 180e-6), kTau * 7);
    CHECK(scaled.p_isc == Approx(base.p_isc).epsilon(1e-10));
    CHECK(scaled.tau_triplet / (kTau * 7) == Approx(base.tau_triplet / kTau).epsilon(1e-10));
}

TEST_CASE("Mandel fit refuses unusable curves", "[fit]") {
    auto flat = model_mandel(2.1e-4, 250e-6, 0.04456);
    for (auto& p : flat.points) p.q_value = -0.04456;
    CHECK(kind_of([&] { fit_mandel(flat, 0.04456, kTau); }) == ErrorKind::DegenerateCurve);

    auto few = model_mandel(2.1e-4, 250e-6, 0.04456);
    few.points.resize(4);
    CHECK(kind_of([&] { fit_mandel(few, 0.04456, kTau); }) == ErrorKind::InsufficientData);

    auto narrow = model_mandel(2.1e-4, 250e-6, 0.04456);
    narrow.points.resize(15);  // M = 1..25
    CHECK(kind_of([&] { fit_mandel(narrow, 0.04456, kTau); }) == ErrorKind::InsufficientData);

    CHECK_THROWS_AS(fit_mandel(flat, 0.0, kTau), Error);
    CHECK_THROWS_AS(fit_mandel(flat, 0.04456, -1.0), Error);

    SECTION("noisy curve of a source that does not blink") {
        sim::SourceParams p;
        p.p_isc = 0.0;
        p.seed = 4;
        const auto curve = stats::mandel_sweep(labeled_series(p));
        CHECK(kind_of([&] { fit_mandel(curve, p.eta, kTau); }) == ErrorKind::DegenerateCurve);
    }
}

TEST_CASE("G2 fit on noiseless model data", "[fit]") {
    const auto curve = model_g2(1.6e-4, 180e-6);
    const FitResult r = fit_g2(curve, kTau);
    CHECK(r.converged);
    CHECK(r.method == "g2");
    CHECK(r.p_isc == Approx(1.6e-4).epsilon(1e-6));
    CHECK(r.tau_triplet == Approx(180e-6).epsilon(1e-6));
    CHECK(r.residual_norm < 1e-10);
    check_psd(r);

    int recovered = 0;
    for (int i = 0; i < 10; ++i)
        for (int j = 0; j < 10; ++j) {
            FitOptions opt;
            opt.init = std::array<double, 2>{1.6e-4 * std::pow(10.0, -1.0 + i * 2.0 / 9),
                                             180e-6 * std::pow(10.0, -1.0 + j * 2.0 / 9)};
            const FitResult s = fit_g2(curve, kTau, opt);
            recovered += std::abs(s.p_isc / 1.6e-4 - 1) < 1e-6 && std::abs(s.tau_triplet / 180e-6 - 1) < 1e-6;
        }
    CHECK(recovered == 100);
}

TEST_CASE("G2 fit refuses curves without positive contrast", "[fit]") {
    stats::G2Curve flat;
    for (std::int64_t d = 1; d <= 100; ++d) flat.points.push_back({d, 1.0, 0.01});
    CHECK(kind_of([&] { fit_g2(flat, kTau); }) == ErrorKind::NegativeContrast);

    stats::G2Curve dip;
    for (std::int64_t d = 1; d <= 100; ++d) dip.points.push_back({d, 1.0 - 0.2 * std::exp(-d / 30.0), 0.0});
    CHECK(kind_of([&] { fit_g2(dip, kTau); }) == ErrorKind::NegativeContrast);

    stats::G2Curve short_curve;
    for (std::int64_t d = 1; d <= 9; ++d) short_curve.points.push_back({d, 1.1, 0.0});
    CHECK(kind_of([&] { fit_g2(short_curve, kTau); }) == ErrorKind::InsufficientData);
}

TEST_CASE("fits on a simulated record", "[fit]") {
    sim::SourceParams p;
    p.n_pulses = 3'000'000;
    p.seed = 5;
    const auto s = labeled_series(p);
    const FitResult m = fit_mandel(stats::mandel_sweep(s), p.eta, p.tau_rep_true);
    const FitResult g = fit_g2(stats::g2_empirical(s, 1000), p.tau_rep_true);
    INFO("mandel " << m.p_isc << " " << m.tau_triplet << "; g2 " << g.p_isc << " " << g.tau_triplet);
    CHECK(m.weighted);
    CHECK(g.weighted);
    CHECK(std::abs(m.p_isc / p.p_isc - 1) < 0.25);
    CHECK(std::abs(m.tau_triplet / p.tau_triplet - 1) < 0.25);
    CHECK(std::abs(g.p_isc / p.p_isc - 1) < 0.25);
    CHECK(std::abs(g.tau_triplet / p.tau_triplet - 1) < 0.25);
    check_psd(m);
    check_psd(g);
}
