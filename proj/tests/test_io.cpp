#include <catch2/catch_amalgamated.hpp>

#include "photonstat/error.hpp"
#include "photonstat/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

using namespace photonstat;
namespace fs = std::filesystem;

namespace {

sim::TimestampRecord small_record() {
    sim::SourceParams p;
    p.n_pulses = 20000;
    p.eta = 0.3;
    p.seed = 11;
    return sim::simulate(p);
}

io::Provenance prov() {
    io::Provenance p;
    p.config_digest = 0xdeadbeef;
    p.input_digest = 0x01234567;
    return p;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / "photonstat_test_io";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("fnv1a matches published vectors") {
    CHECK(io::fnv1a("") == 0x811c9dc5u);
    CHECK(io::fnv1a("a") == 0xe40c292cu);
    CHECK(io::fnv1a("foobar") == 0xbf9cf968u);
    CHECK(io::hex8(0xbf9cf968u) == "bf9cf968");
    CHECK(io::hex8(0x5u) == "00000005");
}

TEST_CASE("format_double round-trips") {
    for (double x : {0.0, -0.0, 1.0, 0.1, 1e-300, 4.88e-7, -0.04455, 123456789.125,
                     std::numeric_limits<double>::denorm_min(), std::numeric_limits<double>::max()}) {
        const std::string s = io::format_double(x);
        double back = 1.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        CHECK(back == x);
        CHECK(std::signbit(back) == std::signbit(x));
    }
}

TEST_CASE("timestamp files round-trip in both modes") {
    const auto record = small_record();
    REQUIRE(record.events.size() > 100);
    for (auto mode : {io::TimestampMode::Text, io::TimestampMode::Binary}) {
        std::stringstream ss;
        io::write_timestamps(ss, record, mode, prov());
        const std::string bytes = ss.str();
        CHECK(bytes.size() >= 64);
        CHECK(bytes[63] == '\n');
        CHECK(bytes.rfind("#photonstat-ts v1 " + std::to_string(record.events.size()) + " ", 0) == 0);
        if (mode == io::TimestampMode::Binary) CHECK(bytes.size() == 64 + 9 * record.events.size());

        const auto back = io::read_timestamps(ss);
        CHECK(back.mode == mode);
        CHECK(back.record.events == record.events);
        CHECK(back.provenance.config_digest == 0xdeadbeef);
        CHECK(back.provenance.input_digest == 0x01234567);
        CHECK(back.provenance.tool == io::kToolVersion);
    }
}

TEST_CASE("binary records are little-endian u64 plus channel byte") {
    sim::TimestampRecord r;
    r.events = {{0x0102030405060708LL, sim::Channel::B}};
    std::stringstream ss;
    io::write_timestamps(ss, r, io::TimestampMode::Binary, prov());
    const std::string b = ss.str().substr(64);
    REQUIRE(b.size() == 9);
    for (int i = 0; i < 8; ++i) CHECK(static_cast<unsigned char>(b[i]) == 8 - i);
    CHECK(b[8] == 1);
}

TEST_CASE("empty timestamp file keeps a valid header") {
    std::stringstream ss;
    io::write_timestamps(ss, sim::TimestampRecord{}, io::TimestampMode::Text, prov());
    CHECK(ss.str().size() == 64);
    CHECK(io::read_timestamps(ss).record.events.empty());
}

TEST_CASE("malformed timestamp files are Io errors") {
    auto expect_io = [](const std::string& text) {
        std::stringstream ss(text);
        try {
            io::read_timestamps(ss);
            FAIL("accepted: " << text);
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Io);
        }
    };
    std::stringstream good;
    sim::TimestampRecord r;
    r.events = {{5, sim::Channel::A}, {9, sim::Channel::B}};
    io::write_timestamps(good, r, io::TimestampMode::Text, prov());
    const std::string g = good.str();
    const std::string header = g.substr(0, 64);

    expect_io("");
    expect_io("hello\n");
    expect_io(header);                              // events missing
    expect_io(header + "5 A\n");                    // short
    expect_io(header + "9 A\n5 B\n");               // out of order
    expect_io(header + "5 C\n9 B\n");               // bad channel
    expect_io(header + "5 A\nx B\n");               // bad time
    expect_io(header + "5 A\n9 B\n10 A\n");         // trailing event
    std::string v2 = g;
    v2.replace(15, 2, "v2");
    expect_io(v2);
}

TEST_CASE("series files are sparse and round-trip") {
    sync::PhotocountSeries s;
    s.counts.assign(1000, 0);
    s.counts[3] = 1;
    s.counts[500] = 2;
    s.counts[999] = 1;
    s.n_pulses = 1000;
    s.tau_rep = 4.8800000005e-7;
    s.window = 30e-9;
    std::stringstream ss;
    io::write_series(ss, s, prov());

    std::string line;
    int data_lines = 0;
    std::stringstream copy(ss.str());
    while (std::getline(copy, line))
        if (!line.empty() && line[0] != '#') ++data_lines;
    CHECK(data_lines == 3);

    const auto back = io::read_series(ss);
    CHECK(back.series.counts == s.counts);
    CHECK(back.series.n_pulses == 1000);
    CHECK(back.series.tau_rep == s.tau_rep);
    CHECK(back.series.window == s.window);
    CHECK(back.provenance.input_digest == 0x01234567);
}

TEST_CASE("series reader rejects bad indices and counts") {
    sync::PhotocountSeries s;
    s.counts.assign(10, 0);
    s.n_pulses = 10;
    std::stringstream ss;
    io::write_series(ss, s, prov());
    const std::string header = ss.str();
    for (const std::string body : {"10 1\n", "3 0\n", "3 1\n3 1\n", "4 1\n3 1\n", "-1 1\n", "2 x\n"}) {
        std::stringstream in(header + body);
        CHECK_THROWS_AS(io::read_series(in), Error);
    }
}

TEST_CASE("curve files round-trip, including skipped points and NaN errors") {
    stats::MandelCurve m;
    m.points = {{1, 4.88e-7, -0.04455, 3.1e-4, 325313},
                {205, 1.0004e-4, 0.0123456789, std::numeric_limits<double>::quiet_NaN(), 1586}};
    m.skipped = {{100000, "fewer than 2 windows"}};
    std::stringstream ss;
    io::write_mandel_curve(ss, m, 4.88e-7, prov());
    const auto back = io::read_mandel_curve(ss);
    REQUIRE(back.curve.points.size() == 2);
    CHECK(back.tau_rep == 4.88e-7);
    CHECK(back.curve.points[0].q_value == -0.04455);
    CHECK(back.curve.points[0].std_error == 3.1e-4);
    CHECK(back.curve.points[1].m_pulses == 205);
    CHECK(back.curve.points[1].n_samples == 1586);
    CHECK(std::isnan(back.curve.points[1].std_error));
    REQUIRE(back.curve.skipped.size() == 1);
    CHECK(back.curve.skipped[0].m_pulses == 100000);
    CHECK(back.curve.skipped[0].reason == "fewer than 2 windows");

    stats::G2Curve g;
    g.points = {{1, 1.0875, 0.01}, {2, 0.99, 0.02}};
    std::stringstream gs;
    io::write_g2_curve(gs, g, 4.88e-7, 325313, prov());
    const auto gb = io::read_g2_curve(gs);
    REQUIRE(gb.curve.points.size() == 2);
    CHECK(gb.n_pulses == 325313);
    CHECK(gb.curve.points[0].g2_value == 1.0875);
    CHECK(gb.curve.points[1].lag == 2);
    CHECK(gb.curve.points[1].std_error == 0.02);

    std::stringstream wrong(gs.str());
    CHECK_THROWS_AS(io::read_mandel_curve(wrong), Error);
}

TEST_CASE("reports keep order and reject multi-line values") {
    io::Report r{{"b", "2"}, {"a", "x y"}, {"c", ""}};
    std::stringstream ss;
    io::write_report(ss, "fit", r, prov());
    const auto back = io::read_report(ss);
    CHECK(back.kind == "fit");
    CHECK(back.entries == r);
    std::stringstream bad;
    CHECK_THROWS_AS(io::write_report(bad, "fit", {{"k", "a\nb"}}, prov()), Error);
}

TEST_CASE("write_file is atomic") {
    const auto path = scratch("atomic.txt");
    fs::remove(path);
    io::write_file(path, false, [](std::ostream& os) { os << "first\n"; });
    CHECK(fs::file_size(path) == 6);

    CHECK_THROWS(io::write_file(path, false, [](std::ostream& os) {
        os << "partial";
        throw std::runtime_error("boom");
    }));
    CHECK(fs::file_size(path) == 6);  // old content intact
    fs::path partial = path;
    partial += ".partial";
    CHECK_FALSE(fs::exists(partial));

    const auto fresh = scratch("never.txt");
    fs::remove(fresh);
    CHECK_THROWS(io::write_file(fresh, false, [](std::ostream&) { throw std::runtime_error("boom"); }));
    CHECK_FALSE(fs::exists(fresh));

    try {
        io::write_file(scratch("no_such_dir") / "x" / "y.txt", false, [](std::ostream& os) { os << 1; });
        FAIL("wrote into a missing directory");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
    }
    try {
        io::open_input(scratch("does_not_exist"), false);
        FAIL("opened a missing file");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
    }
}
