#include "photonstat/cli.hpp"

#include "photonstat/detection_model.hpp"
#include "photonstat/fitting.hpp"
#include "photonstat/io.hpp"
#include "photonstat/simulator.hpp"
#include "photonstat/statistics.hpp"
#include "photonstat/synchronizer.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>

namespace photonstat::cli {

namespace {

namespace fs = std::filesystem;
using io::format_double;
using io::Report;

std::string fixed12(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

std::uint32_t digest_of(const Report& settings) {
    std::string text;
    for (const auto& [k, v] : settings) text += k + "=" + v + "\n";
    return io::fnv1a(text);
}

io::Provenance provenance(const Report& settings, std::uint32_t input_digest) {
    io::Provenance p;
    p.config_digest = digest_of(settings);
    p.input_digest = input_digest;
    return p;
}

void print(std::ostream& out, const Report& lines) {
    for (const auto& [k, v] : lines) out << k << '=' << v << '\n';
}

std::string str(std::int64_t x) { return std::to_string(x); }

// ---- simulate

struct SimulateCmd {
    std::string out_path;
    bool binary = false;
    sim::SourceParams p;

    void attach(CLI::App& app) {
        app.add_option("--out", out_path, "Timestamp file to write")->required();
        app.add_flag("--binary", binary, "Binary event records instead of text");
        app.add_option("--tau-rep", p.tau_rep_true, "Repetition period, s");
        app.add_option("--t-start", p.t_start_true, "Time of the first pulse, s");
        app.add_option("--n-pulses", p.n_pulses, "Number of excitation pulses");
        app.add_option("--p-isc", p.p_isc, "Intersystem-crossing probability per pulse");
        app.add_option("--tau-triplet", p.tau_triplet, "Triplet (OFF) lifetime, s");
        app.add_option("--eta", p.eta, "Overall detection efficiency");
        app.add_option("--gamma", p.gamma, "Background photons per pulse relative to eta");
        app.add_option("--lifetime", p.lifetime, "Fluorescence lifetime, s");
        app.add_option("--deadtime", p.deadtime, "Detector deadtime, s");
        app.add_option("--dark-rate", p.dark_rate, "Dark counts per second per detector");
        app.add_option("--seed", p.seed, "Random seed");
        app.add_option("--max-events", p.max_events, "Refuse runs expecting more events");
    }

    Report settings() const {
        return {{"binary", binary ? "true" : "false"},
                {"tau_rep", format_double(p.tau_rep_true)},
                {"t_start", format_double(p.t_start_true)},
                {"n_pulses", str(p.n_pulses)},
                {"p_isc", format_double(p.p_isc)},
                {"tau_triplet", format_double(p.tau_triplet)},
                {"eta", format_double(p.eta)},
                {"gamma", format_double(p.gamma)},
                {"lifetime", format_double(p.lifetime)},
                {"deadtime", format_double(p.deadtime)},
                {"dark_rate", format_double(p.dark_rate)},
                {"seed", std::to_string(p.seed)},
                {"max_events", str(p.max_events)}};
    }

    int run(std::ostream& out, std::ostream& err) const {
        for (const auto& w : sim::validate(p)) err << "warning: " << w << '\n';
        const auto record = sim::simulate(p);
        io::write_file(out_path, binary, [&](std::ostream& os) {
            io::write_timestamps(os, record, binary ? io::TimestampMode::Binary : io::TimestampMode::Text,
                                 provenance(settings(), 0));
        });
        std::int64_t a = 0;
        for (const auto& e : record.events) a += e.channel == sim::Channel::A;
        print(out, {{"events", str(static_cast<std::int64_t>(record.events.size()))},
                    {"events_a", str(a)},
                    {"events_b", str(static_cast<std::int64_t>(record.events.size()) - a)},
                    {"n_pulses", str(p.n_pulses)},
                    {"expected_events", fixed12(sim::expected_events_per_pulse(p) * static_cast<double>(p.n_pulses))},
                    {"output", out_path}});
        return kOk;
    }
};

// ---- sync

struct SyncCmd {
    std::string in_path, out_path;
    double tau_guess = 488e-9;
    double window = 30e-9;
    std::int64_t n_pulses = 0;
    sync::ClockOptions clock;

    void attach(CLI::App& app) {
        app.add_option("--in", in_path, "Timestamp file")->required();
        app.add_option("--out", out_path, "Photocount series file to write")->required();
        app.add_option("--tau-guess", tau_guess, "Nominal repetition period, s");
        app.add_option("--window", window, "Gate width after each pulse, s");
        app.add_option("--n-pulses", n_pulses, "Series length; 0 spans t_start to the last event");
        app.add_option("--max-relative-error", clock.max_relative_error, "Bound on |guess/tau - 1|");
        app.add_option("--slope-tolerance", clock.slope_tolerance, "Residual drift per pulse, relative");
        app.add_option("--max-iterations", clock.max_iterations, "Clock refinement cap");
        app.add_option("--max-block", clock.max_block, "Events per baseline point");
        app.add_option("--edge-fraction", clock.edge_fraction, "Share of a block in the edge interval");
        app.add_option("--guard", clock.guard, "Offset of t_start before the delay edge, s");
    }

    Report settings() const {
        return {{"tau_guess", format_double(tau_guess)},
                {"window", format_double(window)},
                {"n_pulses", str(n_pulses)},
                {"max_relative_error", format_double(clock.max_relative_error)},
                {"slope_tolerance", format_double(clock.slope_tolerance)},
                {"max_iterations", std::to_string(clock.max_iterations)},
                {"max_block", std::to_string(clock.max_block)},
                {"edge_fraction", format_double(clock.edge_fraction)},
                {"guard", format_double(clock.guard)}};
    }

    int run(std::ostream& out, std::ostream&) const {
        require(n_pulses >= 0, "n-pulses must be >= 0");
        const std::uint32_t input = io::file_digest(in_path);
        auto in = io::open_input(in_path, true);
        const auto file = io::read_timestamps(in);
        const auto clock_est = sync::estimate_clock(file.record, tau_guess, clock);
        const auto assignment = sync::assign_pulses(file.record, clock_est);
        const std::int64_t n = n_pulses > 0 ? n_pulses : sync::pulses_spanned(assignment);
        sync::GateSummary gate;
        const auto series = sync::gate_counts(assignment, n, window, &gate);
        io::write_file(out_path, false,
                       [&](std::ostream& os) { io::write_series(os, series, provenance(settings(), input)); });
        const double total = static_cast<double>(file.record.events.size());
        print(out, {{"tau_rep", fixed12(clock_est.tau_rep)},
                    {"t_start_ps", str(clock_est.t_start_ps)},
                    {"iterations", std::to_string(clock_est.iterations)},
                    {"used_fraction", fixed12(clock_est.used_fraction)},
                    {"events", str(static_cast<std::int64_t>(total))},
                    {"n_pulses", str(n)},
                    {"in_window", str(gate.in_window)},
                    {"retained", str(gate.retained)},
                    {"retained_fraction", fixed12(total > 0 ? gate.retained / total : 0.0)},
                    {"before_start", str(assignment.n_before_start)},
                    {"out_of_range", str(gate.out_of_range)},
                    {"output", out_path}});
        return kOk;
    }
};

// ---- stats

std::vector<std::int64_t> parse_grid(const std::string& text) {
    std::vector<std::int64_t> grid;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t next = text.find(',', pos);
        if (next == std::string::npos) next = text.size();
        const std::string item = text.substr(pos, next - pos);
        std::int64_t v = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        require(ec == std::errc() && ptr == item.data() + item.size(), "bad m-grid entry '" + item + "'");
        grid.push_back(v);
        pos = next + 1;
    }
    return grid;
}

Report pmf_entries(const detection::CountDistribution& pmf, const std::string& prefix) {
    Report r;
    for (std::size_t k = 0; k <= pmf.n_max(); ++k) r.emplace_back(prefix + "p" + std::to_string(k), format_double(pmf[k]));
    r.emplace_back(prefix + "mean", format_double(pmf.mean()));
    return r;
}

struct StatsCmd {
    std::string in_path, prefix, m_grid;
    std::int64_t max_lag = 1000;
    stats::BootstrapOptions boot;

    void attach(CLI::App& app) {
        app.add_option("--in", in_path, "Photocount series file")->required();
        app.add_option("--out-prefix", prefix, "Writes <prefix>.report, .mandel.tsv, .g2.tsv")->required();
        app.add_option("--m-grid", m_grid, "Comma-separated window lengths; default log grid to N/10");
        app.add_option("--max-lag", max_lag, "Largest G2 lag (capped below N/10)");
        app.add_option("--resamples", boot.resamples, "Bootstrap resamples");
        app.add_option("--super-blocks", boot.super_blocks, "Bootstrap super-blocks");
        app.add_option("--seed", boot.seed, "Bootstrap seed");
    }

    Report settings() const {
        return {{"m_grid", m_grid.empty() ? "default" : m_grid},
                {"max_lag", str(max_lag)},
                {"resamples", std::to_string(boot.resamples)},
                {"super_blocks", std::to_string(boot.super_blocks)},
                {"seed", std::to_string(boot.seed)}};
    }

    int run(std::ostream& out, std::ostream& err) const {
        require(max_lag >= 1, "max-lag must be >= 1");
        const std::uint32_t input = io::file_digest(in_path);
        auto in = io::open_input(in_path, false);
        const auto series = io::read_series(in).series;
        const auto prov = provenance(settings(), input);

        const auto pmf = stats::empirical_pmf(series);
        const auto q1 = stats::mandel_window(series.counts, 1, boot);
        const double q_c = detection::coherent_mandel(pmf.mean());
        const auto curve = stats::mandel_sweep(series, parse_grid(m_grid), boot);

        const auto n = static_cast<std::int64_t>(series.counts.size());
        const std::int64_t lag = std::min(max_lag, (n - 1) / 10);
        stats::G2Curve g2;
        if (lag >= 1) g2 = stats::g2_empirical(series, lag, boot);
        else err << "warning: series too short for G2\n";

        Report report = settings();
        report.emplace_back("n_pulses", str(n));
        report.emplace_back("tau_rep", format_double(series.tau_rep));
        report.emplace_back("window", format_double(series.window));
        report.emplace_back("total_counts", str(series.total()));
        for (auto& e : pmf_entries(pmf, "")) report.push_back(e);
        report.emplace_back("q", format_double(q1.q_value));
        report.emplace_back("q_std_error", format_double(q1.std_error));
        report.emplace_back("q_coherent", format_double(q_c));
        report.emplace_back("mandel_points", str(static_cast<std::int64_t>(curve.points.size())));
        report.emplace_back("mandel_skipped", str(static_cast<std::int64_t>(curve.skipped.size())));
        report.emplace_back("g2_max_lag", str(lag >= 1 ? lag : 0));

        io::write_file(prefix + ".mandel.tsv", false,
                       [&](std::ostream& os) { io::write_mandel_curve(os, curve, series.tau_rep, prov); });
        io::write_file(prefix + ".g2.tsv", false,
                       [&](std::ostream& os) { io::write_g2_curve(os, g2, series.tau_rep, n, prov); });
        io::write_file(prefix + ".report", false, [&](std::ostream& os) { io::write_report(os, "stats", report, prov); });

        char line[160];
        std::snprintf(line, sizeof line, "%-4s %12s %12s %12s\n", "", "<n>", "Q", "Q_C");
        out << line;
        std::snprintf(line, sizeof line, "%-4s %12.5f %12.5f %12.5f\n", "S", pmf.mean(), q1.q_value, q_c);
        out << line;
        print(out, {{"mandel_points", str(static_cast<std::int64_t>(curve.points.size()))},
                    {"g2_max_lag", str(lag >= 1 ? lag : 0)},
                    {"output", prefix + ".report"}});
        return kOk;
    }
};

// ---- fit

struct FitCmd {
    std::string mandel_path, g2_path, out_path;
    double eta = 0.0;
    double tau_rep = 0.0;
    double init_p_isc = 0.0, init_tau_triplet = 0.0;
    std::int64_t m_min = 1, m_max = 0, lag_min = 1, lag_max = 0;
    fit::FitOptions opt;

    void attach(CLI::App& app) {
        app.add_option("--mandel", mandel_path, "Q(T) curve file");
        app.add_option("--g2", g2_path, "G2 curve file");
        app.add_option("--out", out_path, "Fit report to write")->required();
        app.add_option("--eta", eta, "Detection efficiency held fixed in the Q(T) fit");
        app.add_option("--tau-rep", tau_rep, "Repetition period, s; default from the curve header");
        app.add_flag("--free-eta", opt.free_eta, "Fit eta as well (diagnostic)");
        app.add_option("--init-p-isc", init_p_isc, "Starting P_ISC (with --init-tau-triplet)");
        app.add_option("--init-tau-triplet", init_tau_triplet, "Starting tau_T, s");
        app.add_option("--m-min", m_min, "Smallest window used in the Q(T) fit");
        app.add_option("--m-max", m_max, "Largest window used; 0 for all");
        app.add_option("--lag-min", lag_min, "Smallest G2 lag used");
        app.add_option("--lag-max", lag_max, "Largest G2 lag used; 0 for all");
        app.add_option("--use-weights", opt.use_weights, "Weight points by 1/std_error^2");
        app.add_option("--max-iterations", opt.max_iterations, "Solver iteration cap");
    }

    Report settings() const {
        return {{"eta", format_double(eta)},
                {"tau_rep", format_double(tau_rep)},
                {"free_eta", opt.free_eta ? "true" : "false"},
                {"init_p_isc", format_double(init_p_isc)},
                {"init_tau_triplet", format_double(init_tau_triplet)},
                {"m_min", str(m_min)},
                {"m_max", str(m_max)},
                {"lag_min", str(lag_min)},
                {"lag_max", str(lag_max)},
                {"use_weights", opt.use_weights ? "true" : "false"},
                {"max_iterations", std::to_string(opt.max_iterations)}};
    }

    static void add_result(Report& r, const std::string& prefix, const fit::FitResult& f) {
        r.emplace_back(prefix + "status", "ok");
        r.emplace_back(prefix + "p_isc", format_double(f.p_isc));
        r.emplace_back(prefix + "p_isc_std_error", format_double(f.p_isc_std_error()));
        r.emplace_back(prefix + "tau_triplet", format_double(f.tau_triplet));
        r.emplace_back(prefix + "tau_triplet_std_error", format_double(f.tau_triplet_std_error()));
        r.emplace_back(prefix + "covariance", format_double(f.covariance[0][1]));
        r.emplace_back(prefix + "eta", format_double(f.eta));
        if (f.eta_free) r.emplace_back(prefix + "eta_std_error", format_double(f.eta_std_error));
        r.emplace_back(prefix + "residual_norm", format_double(f.residual_norm));
        r.emplace_back(prefix + "iterations", std::to_string(f.n_iterations));
        r.emplace_back(prefix + "points", str(f.n_points));
        r.emplace_back(prefix + "weighted", f.weighted ? "true" : "false");
    }

    int run(std::ostream& out, std::ostream& err) const {
        require(!mandel_path.empty() || !g2_path.empty(), "give --mandel and/or --g2");
        fit::FitOptions o = opt;
        require((init_p_isc > 0.0) == (init_tau_triplet > 0.0), "give both initial values or neither");
        if (init_p_isc > 0.0) o.init = std::array<double, 2>{init_p_isc, init_tau_triplet};

        std::uint32_t input = 2166136261u;
        Report report = settings();
        int code = kOk;
        auto attempt = [&](const std::string& prefix, const std::function<fit::FitResult()>& body) {
            try {
                add_result(report, prefix, body());
            } catch (const Error& e) {
                report.emplace_back(prefix + "status", std::string(to_string(e.kind())));
                err << "error: " << prefix.substr(0, prefix.size() - 1) << " fit: " << e.what() << '\n';
                const int c = exit_code_for(e.kind());
                if (c == kIo) throw;
                code = std::max(code, c);
            }
        };

        std::optional<fit::FitResult> fm, fg;
        if (!mandel_path.empty()) {
            require(eta > 0.0 && eta <= 1.0, "the Q(T) fit needs --eta in (0,1]");
            input = io::fnv1a(io::hex8(io::file_digest(mandel_path)), input);
            auto in = io::open_input(mandel_path, false);
            const auto file = io::read_mandel_curve(in);
            const double tau = tau_rep > 0.0 ? tau_rep : file.tau_rep;
            stats::MandelCurve curve;
            for (const auto& p : file.curve.points)
                if (p.m_pulses >= m_min && (m_max == 0 || p.m_pulses <= m_max)) curve.points.push_back(p);
            report.emplace_back("mandel.tau_rep", format_double(tau));
            attempt("mandel.", [&] { return *(fm = fit::fit_mandel(curve, eta, tau, o)); });
        }
        if (!g2_path.empty()) {
            input = io::fnv1a(io::hex8(io::file_digest(g2_path)), input);
            auto in = io::open_input(g2_path, false);
            const auto file = io::read_g2_curve(in);
            const double tau = tau_rep > 0.0 ? tau_rep : file.tau_rep;
            stats::G2Curve curve;
            for (const auto& p : file.curve.points)
                if (p.lag >= lag_min && (lag_max == 0 || p.lag <= lag_max)) curve.points.push_back(p);
            fit::FitOptions og = o;
            og.free_eta = false;
            report.emplace_back("g2.tau_rep", format_double(tau));
            attempt("g2.", [&] { return *(fg = fit::fit_g2(curve, tau, og)); });
        }
        if (fm && fg) {
            auto z = [](double a, double sa, double b, double sb) { return (a - b) / std::sqrt(sa * sa + sb * sb); };
            report.emplace_back("agreement.p_isc_z",
                                format_double(z(fm->p_isc, fm->p_isc_std_error(), fg->p_isc, fg->p_isc_std_error())));
            report.emplace_back("agreement.tau_triplet_z",
                                format_double(z(fm->tau_triplet, fm->tau_triplet_std_error(), fg->tau_triplet,
                                                fg->tau_triplet_std_error())));
        }
        io::write_file(out_path, false,
                       [&](std::ostream& os) { io::write_report(os, "fit", report, provenance(settings(), input)); });

        char line[200];
        std::snprintf(line, sizeof line, "%-8s %14s %14s %14s %14s\n", "method", "P_ISC", "+-", "tau_T [s]", "+-");
        out << line;
        for (const auto& [name, f] : {std::pair{"mandel", fm}, std::pair{"g2", fg}}) {
            if (!f) continue;
            std::snprintf(line, sizeof line, "%-8s %14.6g %14.2g %14.6g %14.2g\n", name, f->p_isc,
                          f->p_isc_std_error(), f->tau_triplet, f->tau_triplet_std_error());
            out << line;
        }
        out << "output=" << out_path << '\n';
        return code;
    }
};

// ---- calibrate

struct CalibrateCmd {
    std::string in_path, out_path;

    void attach(CLI::App& app) {
        app.add_option("--in", in_path, "Photocount series file")->required();
        app.add_option("--out", out_path, "Calibration report to write")->required();
    }

    Report settings() const { return {}; }

    int run(std::ostream& out, std::ostream& err) const {
        const std::uint32_t input = io::file_digest(in_path);
        auto in = io::open_input(in_path, false);
        const auto series = io::read_series(in).series;
        const auto pmf = stats::empirical_pmf(series);
        require(pmf.n_max() <= 2, "calibration expects at most two clicks per pulse");
        const double n = static_cast<double>(series.counts.size());
        const double p1 = pmf[1], p2 = pmf[2];
        const double q_s = detection::mandel_from_counts(pmf);
        const double eta_alpha = detection::coherent_eta_alpha_for_mean(pmf.mean());
        const auto coh = detection::coherent_counts(eta_alpha);
        const double q_c = detection::mandel_q(coh);
        auto ratio = [](double one, double two) { return one > 0 ? two / (one * one) : NAN; };
        const double r_s = ratio(p1, p2);

        Report report;
        report.emplace_back("n_pulses", str(static_cast<std::int64_t>(n)));
        for (auto& e : pmf_entries(pmf, "S.")) report.push_back(e);
        report.emplace_back("S.q", format_double(q_s));
        report.emplace_back("S.p2_over_p1_sq", format_double(r_s));
        report.emplace_back("S.p2_over_p1_sq_std_error",
                            format_double(r_s * std::sqrt((p2 > 0 ? (1 - p2) / (n * p2) : 0) + 4 * (1 - p1) / (n * p1))));
        report.emplace_back("C.eta_alpha", format_double(eta_alpha));
        for (auto& e : pmf_entries(coh, "C.")) report.push_back(e);
        report.emplace_back("C.q", format_double(q_c));
        report.emplace_back("C.p2_over_p1_sq", format_double(ratio(coh[1], coh[2])));

        // (P1, P2) outside the reachable set still leaves a useful S/C table,
        // so the report is written before the error is returned.
        std::optional<detection::SourceComposition> comp;
        std::string failure;
        try {
            comp = detection::infer_composition(p1, p2);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::NoSolution) throw;
            failure = e.what();
        }
        if (comp) {
            // Delta-method errors from the multinomial covariance of (P1, P2).
            auto shifted = [&](double dp1, double dp2) {
                try {
                    const auto c = detection::infer_composition(p1 + dp1, p2 + dp2);
                    return std::array<double, 2>{c.eta, c.eta_gamma};
                } catch (const Error&) {
                    const auto c = detection::infer_composition(p1 - dp1, p2 - dp2);
                    return std::array<double, 2>{2 * comp->eta - c.eta, 2 * comp->eta_gamma - c.eta_gamma};
                }
            };
            const double h1 = 1e-6 * p1, h2 = std::max(1e-6 * p2, 1e-12);
            const auto a = shifted(h1, 0.0), b = shifted(0.0, h2);
            const double d_eta[2] = {(a[0] - comp->eta) / h1, (b[0] - comp->eta) / h2};
            const double d_eg[2] = {(a[1] - comp->eta_gamma) / h1, (b[1] - comp->eta_gamma) / h2};
            const double v11 = p1 * (1 - p1) / n, v22 = p2 * (1 - p2) / n, v12 = -p1 * p2 / n;
            auto var = [&](const double* g) { return g[0] * g[0] * v11 + 2 * g[0] * g[1] * v12 + g[1] * g[1] * v22; };
            report.emplace_back("composition", "ok");
            report.emplace_back("eta", format_double(comp->eta));
            report.emplace_back("eta_std_error", format_double(std::sqrt(var(d_eta))));
            report.emplace_back("eta_gamma", format_double(comp->eta_gamma));
            report.emplace_back("eta_gamma_std_error", format_double(std::sqrt(var(d_eg))));
            report.emplace_back("gamma", format_double(comp->gamma()));
            report.emplace_back("signal_to_background", format_double(comp->signal_to_background()));
        } else {
            report.emplace_back("composition", std::string(to_string(ErrorKind::NoSolution)));
        }
        io::write_file(out_path, false,
                       [&](std::ostream& os) { io::write_report(os, "calibrate", report, provenance(settings(), input)); });

        char line[200];
        std::snprintf(line, sizeof line, "%-3s %10s %10s %10s %10s %10s\n", "", "P(0)", "P(1)", "P(2)", "<n>", "Q");
        out << line;
        std::snprintf(line, sizeof line, "%-3s %10.5f %10.5f %10.3e %10.5f %10.5f\n", "S", pmf[0], p1, p2, pmf.mean(), q_s);
        out << line;
        std::snprintf(line, sizeof line, "%-3s %10.5f %10.5f %10.3e %10.5f %10.5f\n", "C", coh[0], coh[1], coh[2],
                      coh.mean(), q_c);
        out << line;
        if (!comp) {
            err << "error: " << failure << '\n';
            out << "output=" << out_path << '\n';
            return kValidation;
        }
        print(out, {{"eta", fixed12(comp->eta)},
                    {"eta_gamma", fixed12(comp->eta_gamma)},
                    {"signal_to_background", fixed12(comp->signal_to_background())},
                    {"output", out_path}});
        return kOk;
    }
};

// Expands "--config FILE" into leading --key=value arguments of the chosen
// subcommand so that explicit flags, which come later, take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
        else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
    }
    if (path.empty() || args.empty()) return args;
    if (!fs::exists(path)) throw Error(ErrorKind::Io, "cannot open config " + path);

    std::vector<std::string> injected;
    for (const CLI::ConfigItem& item : CLI::ConfigINI().from_file(path)) {
        if (item.name == "++" || item.name == "--") continue;
        if (!item.parents.empty()) throw Error(ErrorKind::InvalidArgument, "config sections are not supported");
        std::string key = item.name, value;
        for (char& c : key)
            if (c == '_') c = '-';
        for (std::size_t i = 0; i < item.inputs.size(); ++i) value += (i ? "," : "") + item.inputs[i];
        injected.push_back("--" + key + "=" + value);
    }
    std::vector<std::string> out{args.front()};
    out.insert(out.end(), injected.begin(), injected.end());
    out.insert(out.end(), args.begin() + 1, args.end());
    return out;
}

}  // namespace

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::NonConvergence:
    case ErrorKind::AmbiguousClock:
        return kConvergence;
    case ErrorKind::Io:
        return kIo;
    default:
        return kValidation;
    }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Photon-counting statistics of triggered single-photon sources", "photonstat"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(io::kToolVersion));

    SimulateCmd simulate;
    SyncCmd sync_cmd;
    StatsCmd stats_cmd;
    FitCmd fit_cmd;
    CalibrateCmd calibrate;
    std::string config_path;
    std::function<int()> action;

    auto add = [&](const char* name, const char* help, auto& cmd) {
        CLI::App* sub = app.add_subcommand(name, help);
        cmd.attach(*sub);
        sub->add_option("--config", config_path, "Flat key=value file with option defaults");
        sub->callback([&] { action = [&] { return cmd.run(out, err); }; });
    };
    add("simulate", "Simulate a timestamp record", simulate);
    add("sync", "Recover the pulse clock and gate counts per pulse", sync_cmd);
    add("stats", "Photocount pmf, Q(T) sweep and G2", stats_cmd);
    add("fit", "Fit blinking parameters to Q(T) and/or G2 curves", fit_cmd);
    add("calibrate", "Infer efficiency and background from a series", calibrate);

    try {
        std::vector<std::string> argv = expand_config(args);
        std::reverse(argv.begin(), argv.end());  // CLI11 consumes from the back
        app.parse(argv);
        return action ? action() : kValidation;
    } catch (const CLI::FileError& e) {
        err << "error: " << e.what() << '\n';
        return kIo;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kValidation;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kIo;
    }
}

}  // namespace photonstat::cli
