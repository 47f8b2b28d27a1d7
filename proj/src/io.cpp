#include "photonstat/io.hpp"

#include "photonstat/error.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <system_error>

namespace photonstat::io {

namespace {

constexpr std::size_t kTsHeaderBytes = 64;

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorKind::Io, what); }

template <class T>
T parse_number(std::string_view text, std::string_view what) {
    T value{};
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) fail("bad " + std::string(what) + ": '" + std::string(text) + "'");
    return value;
}

std::uint32_t parse_hex8(std::string_view text) {
    std::uint32_t value = 0;
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value, 16);
    if (text.size() != 8 || ec != std::errc() || ptr != end) fail("bad digest '" + std::string(text) + "'");
    return value;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (pos <= line.size()) {
        std::size_t next = line.find(sep, pos);
        if (next == std::string_view::npos) next = line.size();
        if (next > pos) out.push_back(line.substr(pos, next - pos));
        pos = next + 1;
    }
    return out;
}

// "#photonstat-<kind> v1 k=v k=v ..." -> map; checks the magic token.
std::map<std::string, std::string> parse_header(std::istream& in, std::string_view kind) {
    std::string line;
    if (!std::getline(in, line)) fail("missing header");
    const auto tokens = split(line, ' ');
    if (tokens.size() < 2 || tokens[0] != "#photonstat-" + std::string(kind))
        fail("not a photonstat " + std::string(kind) + " file");
    if (tokens[1] != "v1") fail("unsupported " + std::string(kind) + " version " + std::string(tokens[1]));
    std::map<std::string, std::string> fields;
    for (std::size_t i = 2; i < tokens.size(); ++i) {
        const auto eq = tokens[i].find('=');
        if (eq == std::string_view::npos) fail("bad header field '" + std::string(tokens[i]) + "'");
        fields.emplace(std::string(tokens[i].substr(0, eq)), std::string(tokens[i].substr(eq + 1)));
    }
    return fields;
}

const std::string& field(const std::map<std::string, std::string>& fields, const std::string& key) {
    const auto it = fields.find(key);
    if (it == fields.end()) fail("header lacks " + key);
    return it->second;
}

Provenance provenance_of(const std::map<std::string, std::string>& fields) {
    return {field(fields, "tool"), parse_hex8(field(fields, "config")), parse_hex8(field(fields, "input"))};
}

std::string provenance_fields(const Provenance& prov) {
    return "tool=" + prov.tool + " config=" + hex8(prov.config_digest) + " input=" + hex8(prov.input_digest);
}

void check_token(const std::string& value, std::string_view what) {
    if (value.empty() || value.find_first_of(" \t\n=") != std::string::npos)
        throw Error(ErrorKind::InvalidArgument, std::string(what) + " must be a non-empty token");
}

void check_stream(const std::ostream& out) {
    if (!out) fail("write failed");
}

}  // namespace

std::uint32_t fnv1a(std::string_view bytes, std::uint32_t hash) {
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 16777619u;
    }
    return hash;
}

std::uint32_t file_digest(const std::filesystem::path& path) {
    std::ifstream in = open_input(path, true);
    std::uint32_t hash = 2166136261u;
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        hash = fnv1a(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), hash);
    }
    return hash;
}

std::string hex8(std::uint32_t value) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", value);
    return buf;
}

std::string format_double(double x) {
    std::array<char, 32> buf;
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    return std::string(buf.data(), ptr);
}

std::ifstream open_input(const std::filesystem::path& path, bool binary) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) fail("cannot open " + path.string());
    return in;
}

void write_file(const std::filesystem::path& path, bool binary, const std::function<void(std::ostream&)>& body) {
    std::filesystem::path tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
        if (!out) fail("cannot create " + path.string());
        try {
            body(out);
            out.flush();
            check_stream(out);
        } catch (...) {
            out.close();
            std::error_code ignored;
            std::filesystem::remove(tmp, ignored);
            throw;
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail("cannot write " + path.string());
    }
}

// ---- timestamps

void write_timestamps(std::ostream& out, const sim::TimestampRecord& record, TimestampMode mode,
                      const Provenance& prov) {
    check_token(prov.tool, "tool version");
    std::string header = "#photonstat-ts v1 " + std::to_string(record.events.size()) + " " +
                         (mode == TimestampMode::Text ? "text" : "bin") + " " + prov.tool +
                         " c=" + hex8(prov.config_digest) + " i=" + hex8(prov.input_digest);
    if (header.size() > kTsHeaderBytes - 1) fail("timestamp header does not fit 64 bytes");
    header.resize(kTsHeaderBytes - 1, ' ');
    header += '\n';
    out << header;

    if (mode == TimestampMode::Text) {
        std::string line;
        for (const sim::Event& e : record.events) {
            line = std::to_string(e.time_ps);
            line += e.channel == sim::Channel::A ? " A\n" : " B\n";
            out << line;
        }
    } else {
        std::array<char, 9> rec;
        for (const sim::Event& e : record.events) {
            const auto t = static_cast<std::uint64_t>(e.time_ps);
            for (int b = 0; b < 8; ++b) rec[b] = static_cast<char>((t >> (8 * b)) & 0xffu);
            rec[8] = static_cast<char>(e.channel);
            out.write(rec.data(), rec.size());
        }
    }
    check_stream(out);
}

TimestampFile read_timestamps(std::istream& in) {
    std::string header(kTsHeaderBytes, '\0');
    if (!in.read(header.data(), kTsHeaderBytes) || header.back() != '\n') fail("missing 64-byte timestamp header");
    header.pop_back();
    const auto tokens = split(header, ' ');
    if (tokens.size() < 7 || tokens[0] != "#photonstat-ts") fail("not a photonstat timestamp file");
    if (tokens[1] != "v1") fail("unsupported timestamp version " + std::string(tokens[1]));
    const auto n = parse_number<std::int64_t>(tokens[2], "event count");
    if (n < 0) fail("negative event count");

    TimestampFile file;
    if (tokens[3] == "text") file.mode = TimestampMode::Text;
    else if (tokens[3] == "bin") file.mode = TimestampMode::Binary;
    else fail("unknown timestamp mode '" + std::string(tokens[3]) + "'");
    file.provenance.tool = std::string(tokens[4]);
    if (tokens[5].substr(0, 2) != "c=" || tokens[6].substr(0, 2) != "i=") fail("bad timestamp header digests");
    file.provenance.config_digest = parse_hex8(tokens[5].substr(2));
    file.provenance.input_digest = parse_hex8(tokens[6].substr(2));

    auto& events = file.record.events;
    events.reserve(static_cast<std::size_t>(std::min<std::int64_t>(n, 1 << 24)));
    auto push = [&](std::uint64_t t, int channel, std::int64_t index) {
        if (t > static_cast<std::uint64_t>(INT64_MAX)) fail("timestamp out of range at event " + std::to_string(index));
        if (!events.empty() && static_cast<std::int64_t>(t) < events.back().time_ps)
            fail("timestamps not in time order at event " + std::to_string(index));
        events.push_back({static_cast<std::int64_t>(t), channel == 0 ? sim::Channel::A : sim::Channel::B});
    };

    if (file.mode == TimestampMode::Text) {
        std::string line;
        for (std::int64_t i = 0; i < n; ++i) {
            if (!std::getline(in, line)) fail("file ends after " + std::to_string(i) + " of " + std::to_string(n) + " events");
            const auto parts = split(line, ' ');
            if (parts.size() != 2 || (parts[1] != "A" && parts[1] != "B"))
                fail("bad event line " + std::to_string(i + 2) + ": '" + line + "'");
            push(parse_number<std::uint64_t>(parts[0], "timestamp"), parts[1] == "A" ? 0 : 1, i);
        }
        while (std::getline(in, line))
            if (!line.empty()) fail("extra data after " + std::to_string(n) + " events");
    } else {
        std::array<char, 9> rec;
        for (std::int64_t i = 0; i < n; ++i) {
            if (!in.read(rec.data(), rec.size())) fail("file ends after " + std::to_string(i) + " of " + std::to_string(n) + " events");
            std::uint64_t t = 0;
            for (int b = 7; b >= 0; --b) t = (t << 8) | static_cast<unsigned char>(rec[b]);
            if (rec[8] != 0 && rec[8] != 1) fail("bad channel byte at event " + std::to_string(i));
            push(t, rec[8], i);
        }
        if (in.peek() != std::char_traits<char>::eof()) fail("extra data after " + std::to_string(n) + " events");
    }
    return file;
}

// ---- series

void write_series(std::ostream& out, const sync::PhotocountSeries& series, const Provenance& prov) {
    check_token(prov.tool, "tool version");
    out << "#photonstat-series v1 " << provenance_fields(prov) << " n_pulses=" << series.counts.size()
        << " tau_rep=" << format_double(series.tau_rep) << " window=" << format_double(series.window) << '\n';
    std::string line;
    for (std::size_t i = 0; i < series.counts.size(); ++i) {
        if (series.counts[i] == 0) continue;
        line = std::to_string(i);
        line += ' ';
        line += std::to_string(series.counts[i]);
        line += '\n';
        out << line;
    }
    check_stream(out);
}

SeriesFile read_series(std::istream& in) {
    const auto fields = parse_header(in, "series");
    SeriesFile file;
    file.provenance = provenance_of(fields);
    auto& s = file.series;
    s.n_pulses = parse_number<std::int64_t>(field(fields, "n_pulses"), "n_pulses");
    if (s.n_pulses < 0) fail("negative n_pulses");
    s.tau_rep = parse_number<double>(field(fields, "tau_rep"), "tau_rep");
    s.window = parse_number<double>(field(fields, "window"), "window");
    s.counts.assign(static_cast<std::size_t>(s.n_pulses), 0);

    std::string line;
    std::int64_t last = -1, line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto parts = split(line, ' ');
        if (parts.size() != 2) fail("bad series line " + std::to_string(line_no));
        const auto k = parse_number<std::int64_t>(parts[0], "pulse index");
        const auto c = parse_number<int>(parts[1], "count");
        if (k <= last || k >= s.n_pulses) fail("pulse index out of order or range on line " + std::to_string(line_no));
        if (c < 1 || c > 255) fail("count out of range on line " + std::to_string(line_no));
        s.counts[k] = static_cast<std::uint8_t>(c);
        last = k;
    }
    return file;
}

// ---- curves

namespace {

void write_curve_header(std::ostream& out, std::string_view kind, double tau_rep, const Provenance& prov) {
    check_token(prov.tool, "tool version");
    out << "#photonstat-curve v1 kind=" << kind << ' ' << provenance_fields(prov)
        << " tau_rep=" << format_double(tau_rep) << '\n';
    out << "#m_pulses\tt_seconds\tvalue\tstd_error\tn_samples\n";
}

struct CurveRows {
    std::map<std::string, std::string> fields;
    std::vector<std::array<double, 5>> rows;
    std::vector<std::pair<std::int64_t, std::string>> skipped;
};

CurveRows read_curve(std::istream& in, std::string_view kind) {
    CurveRows out;
    out.fields = parse_header(in, "curve");
    if (field(out.fields, "kind") != kind) fail("expected a " + std::string(kind) + " curve");
    std::string line;
    std::int64_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line.rfind("#skipped\t", 0) == 0) {
            const auto tab = line.find('\t', 9);
            if (tab == std::string::npos) fail("bad skipped line " + std::to_string(line_no));
            out.skipped.emplace_back(parse_number<std::int64_t>(std::string_view(line).substr(9, tab - 9), "window"),
                                     line.substr(tab + 1));
            continue;
        }
        if (line[0] == '#') continue;
        const auto parts = split(line, '\t');
        if (parts.size() != 5) fail("bad curve line " + std::to_string(line_no));
        std::array<double, 5> row;
        for (int i = 0; i < 5; ++i) row[i] = parse_number<double>(parts[i], "curve value");
        out.rows.push_back(row);
    }
    return out;
}

void write_row(std::ostream& out, std::int64_t x, double t, double value, double se, std::int64_t n) {
    out << x << '\t' << format_double(t) << '\t' << format_double(value) << '\t' << format_double(se) << '\t' << n
        << '\n';
}

}  // namespace

void write_mandel_curve(std::ostream& out, const stats::MandelCurve& curve, double tau_rep, const Provenance& prov) {
    write_curve_header(out, "mandel", tau_rep, prov);
    for (const auto& p : curve.points) write_row(out, p.m_pulses, p.t_seconds, p.q_value, p.std_error, p.n_samples);
    for (const auto& s : curve.skipped) {
        std::string reason = s.reason;
        for (char& c : reason)
            if (c == '\n' || c == '\t') c = ' ';
        out << "#skipped\t" << s.m_pulses << '\t' << reason << '\n';
    }
    check_stream(out);
}

MandelFile read_mandel_curve(std::istream& in) {
    const CurveRows raw = read_curve(in, "mandel");
    MandelFile file;
    file.provenance = provenance_of(raw.fields);
    file.tau_rep = parse_number<double>(field(raw.fields, "tau_rep"), "tau_rep");
    for (const auto& r : raw.rows)
        file.curve.points.push_back(
            {static_cast<std::int64_t>(r[0]), r[1], r[2], r[3], static_cast<std::int64_t>(r[4])});
    for (const auto& [m, reason] : raw.skipped) file.curve.skipped.push_back({m, reason});
    return file;
}

void write_g2_curve(std::ostream& out, const stats::G2Curve& curve, double tau_rep, std::int64_t n_pulses,
                    const Provenance& prov) {
    write_curve_header(out, "g2", tau_rep, prov);
    for (const auto& p : curve.points)
        write_row(out, p.lag, static_cast<double>(p.lag) * tau_rep, p.g2_value, p.std_error, n_pulses - p.lag);
    check_stream(out);
}

G2File read_g2_curve(std::istream& in) {
    const CurveRows raw = read_curve(in, "g2");
    G2File file;
    file.provenance = provenance_of(raw.fields);
    file.tau_rep = parse_number<double>(field(raw.fields, "tau_rep"), "tau_rep");
    for (const auto& r : raw.rows) {
        file.curve.points.push_back({static_cast<std::int64_t>(r[0]), r[2], r[3]});
        file.n_pulses = static_cast<std::int64_t>(r[4]) + static_cast<std::int64_t>(r[0]);
    }
    return file;
}

// ---- reports

void write_report(std::ostream& out, std::string_view kind, const Report& entries, const Provenance& prov) {
    check_token(std::string(kind), "report kind");
    check_token(prov.tool, "tool version");
    out << "#photonstat-report v1 kind=" << kind << ' ' << provenance_fields(prov) << '\n';
    for (const auto& [k, v] : entries) {
        check_token(k, "report key");
        if (v.find('\n') != std::string::npos) throw Error(ErrorKind::InvalidArgument, "report value spans lines");
        out << k << '=' << v << '\n';
    }
    check_stream(out);
}

ReportFile read_report(std::istream& in) {
    const auto fields = parse_header(in, "report");
    ReportFile file;
    file.kind = field(fields, "kind");
    file.provenance = provenance_of(fields);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0) fail("bad report line '" + line + "'");
        file.entries.emplace_back(line.substr(0, eq), line.substr(eq + 1));
    }
    return file;
}

}  // namespace photonstat::io
