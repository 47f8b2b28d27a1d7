#pragma once

// On-disk formats.
//
// Timestamps: a 64-byte header line
//   #photonstat-ts v1 <n_events> <text|bin> <tool> c=<cfg> i=<input>
// padded with spaces and ending in '\n', then either one "<ps> <A|B>" line per
// event or n_events little-endian records of u64 picoseconds + 1 channel byte.
//
// Series, curves and reports are text with a leading "#photonstat-<kind> v1"
// line carrying key=value provenance; data lines follow.

#include "photonstat/simulator.hpp"
#include "photonstat/statistics.hpp"
#include "photonstat/synchronizer.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace photonstat::io {

inline constexpr std::string_view kToolVersion = "0.1.0";

// 32-bit FNV-1a.
std::uint32_t fnv1a(std::string_view bytes, std::uint32_t hash = 2166136261u);
std::uint32_t file_digest(const std::filesystem::path& path);
std::string hex8(std::uint32_t value);

struct Provenance {
    std::string tool = std::string(kToolVersion);
    std::uint32_t config_digest = 0;
    std::uint32_t input_digest = 0;
};

enum class TimestampMode { Text, Binary };

struct TimestampFile {
    sim::TimestampRecord record;
    TimestampMode mode = TimestampMode::Text;
    Provenance provenance;
};

void write_timestamps(std::ostream& out, const sim::TimestampRecord& record, TimestampMode mode,
                      const Provenance& prov);
TimestampFile read_timestamps(std::istream& in);

struct SeriesFile {
    sync::PhotocountSeries series;
    Provenance provenance;
};

// Sparse: only pulses with a nonzero count are listed.
void write_series(std::ostream& out, const sync::PhotocountSeries& series, const Provenance& prov);
SeriesFile read_series(std::istream& in);

struct MandelFile {
    stats::MandelCurve curve;
    double tau_rep = 0.0;
    Provenance provenance;
};

// Columns: m_pulses, t_seconds, q_value, std_error, n_samples.
void write_mandel_curve(std::ostream& out, const stats::MandelCurve& curve, double tau_rep, const Provenance& prov);
MandelFile read_mandel_curve(std::istream& in);

struct G2File {
    stats::G2Curve curve;
    double tau_rep = 0.0;
    std::int64_t n_pulses = 0;
    Provenance provenance;
};

// Same five columns; t_seconds = lag * tau_rep, n_samples = n_pulses - lag.
void write_g2_curve(std::ostream& out, const stats::G2Curve& curve, double tau_rep, std::int64_t n_pulses,
                    const Provenance& prov);
G2File read_g2_curve(std::istream& in);

using Report = std::vector<std::pair<std::string, std::string>>;

struct ReportFile {
    std::string kind;
    Report entries;
    Provenance provenance;
};

void write_report(std::ostream& out, std::string_view kind, const Report& entries, const Provenance& prov);
ReportFile read_report(std::istream& in);

// Writes through a sibling temporary and renames, so a failed command never
// leaves a partial file behind. Io errors on failure.
void write_file(const std::filesystem::path& path, bool binary, const std::function<void(std::ostream&)>& body);

// Io error when the file cannot be opened.
std::ifstream open_input(const std::filesystem::path& path, bool binary);

// Shortest round-trip text for a double.
std::string format_double(double x);

}  // namespace photonstat::io
