#include "photonstat/statistics.hpp"

#include "photonstat/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace photonstat::stats {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    return std::mt19937_64(seq);
}

void check_boot(const BootstrapOptions& boot) {
    require(boot.resamples >= 0, "resamples must be >= 0");
    require(boot.super_blocks >= 2, "super_blocks must be >= 2");
}

// Sample standard deviation; NaN with fewer than two values.
double spread(const std::vector<double>& xs) {
    if (xs.size() < 2) return kNaN;
    long double mean = 0;
    for (double x : xs) mean += x;
    mean /= xs.size();
    long double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return static_cast<double>(std::sqrt(ss / (xs.size() - 1)));
}

// Boundaries of `blocks` near-equal contiguous groups of n items.
std::int64_t block_start(std::int64_t j, std::int64_t blocks, std::int64_t n) {
    return j * n / blocks;
}

struct Moments {
    std::int64_t n = 0;
    std::int64_t s1 = 0;
    std::int64_t s2 = 0;

    Moments& operator+=(const Moments& o) {
        n += o.n;
        s1 += o.s1;
        s2 += o.s2;
        return *this;
    }
};

double q_of(const Moments& m) {
    const long double n = m.n, s1 = m.s1, s2 = m.s2;
    const long double mean = s1 / n;
    const long double var = (s2 - s1 * mean) / n;
    return static_cast<double>(var / mean - 1.0L);
}

}  // namespace

detection::CountDistribution empirical_pmf(std::span<const std::uint8_t> counts) {
    if (counts.empty()) throw Error(ErrorKind::InsufficientData, "empty photocount series");
    std::vector<std::int64_t> hist(3, 0);
    for (std::uint8_t c : counts) {
        if (c >= hist.size()) hist.resize(c + 1, 0);
        ++hist[c];
    }
    std::vector<double> pmf(hist.size());
    const auto n = static_cast<double>(counts.size());
    for (std::size_t k = 0; k < hist.size(); ++k) pmf[k] = static_cast<double>(hist[k]) / n;
    return detection::CountDistribution(std::move(pmf));
}

detection::CountDistribution empirical_pmf(const sync::PhotocountSeries& series) { return empirical_pmf(series.counts); }

WindowQ mandel_window(std::span<const std::uint8_t> counts, std::int64_t m_pulses, const BootstrapOptions& boot) {
    require(m_pulses >= 1, "window length must be >= 1 pulse");
    check_boot(boot);
    const std::int64_t n = static_cast<std::int64_t>(counts.size()) / m_pulses;
    if (n < 2)
        throw Error(ErrorKind::InsufficientData,
                    "fewer than 2 windows of " + std::to_string(m_pulses) + " pulses");

    const std::int64_t blocks = std::min<std::int64_t>(boot.super_blocks, n);
    std::vector<Moments> per_block(blocks);
    Moments total;
    for (std::int64_t j = 0; j < blocks; ++j) {
        Moments& b = per_block[j];
        for (std::int64_t w = block_start(j, blocks, n); w < block_start(j + 1, blocks, n); ++w) {
            std::int64_t sum = 0;
            for (std::int64_t i = w * m_pulses; i < (w + 1) * m_pulses; ++i) sum += counts[i];
            ++b.n;
            b.s1 += sum;
            b.s2 += sum * sum;
        }
        total += b;
    }
    if (total.s1 == 0) throw Error(ErrorKind::UndefinedMean, "all windows are empty");

    WindowQ out;
    out.q_value = q_of(total);
    out.n_samples = n;

    auto rng = make_engine(boot.seed, static_cast<std::uint64_t>(m_pulses));
    std::uniform_int_distribution<std::int64_t> pick(0, blocks - 1);
    std::vector<double> draws;
    draws.reserve(boot.resamples);
    for (int r = 0; r < boot.resamples; ++r) {
        Moments m;
        for (std::int64_t j = 0; j < blocks; ++j) m += per_block[pick(rng)];
        if (m.s1 > 0) draws.push_back(q_of(m));
    }
    out.std_error = spread(draws);
    return out;
}

std::vector<std::int64_t> default_m_grid(std::int64_t n_pulses) {
    const std::int64_t top = std::max<std::int64_t>(1, n_pulses / 10);
    std::vector<std::int64_t> grid;
    for (int k = 0;; ++k) {
        const auto m = std::llround(std::pow(10.0, k / 10.0));
        if (m > top) break;
        if (grid.empty() || grid.back() != m) grid.push_back(m);
    }
    return grid;
}

MandelCurve mandel_sweep(const sync::PhotocountSeries& series, std::vector<std::int64_t> m_grid,
                         const BootstrapOptions& boot) {
    if (m_grid.empty()) m_grid = default_m_grid(static_cast<std::int64_t>(series.counts.size()));
    for (std::size_t i = 0; i < m_grid.size(); ++i) {
        require(m_grid[i] >= 1, "window lengths must be >= 1");
        require(i == 0 || m_grid[i] > m_grid[i - 1], "window grid must be strictly ascending");
    }
    MandelCurve curve;
    for (std::int64_t m : m_grid) {
        try {
            const WindowQ w = mandel_window(series.counts, m, boot);
            curve.points.push_back({m, static_cast<double>(m) * series.tau_rep, w.q_value, w.std_error, w.n_samples});
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::InsufficientData && e.kind() != ErrorKind::UndefinedMean) throw;
            curve.skipped.push_back({m, e.what()});
        }
    }
    return curve;
}

G2Curve g2_empirical(std::span<const std::uint8_t> counts, std::int64_t max_lag, const BootstrapOptions& boot) {
    require(max_lag >= 1, "max_lag must be >= 1");
    check_boot(boot);
    const auto n = static_cast<std::int64_t>(counts.size());
    if (max_lag * 10 >= n)
        throw Error(ErrorKind::InsufficientData, "max_lag must stay below a tenth of the series length");

    const std::int64_t blocks = std::min<std::int64_t>(boot.super_blocks, n);
    const auto lags = static_cast<std::size_t>(max_lag);
    // pairs[j*lags + d-1]: sum of n_i n_{i+d} over i in super-block j.
    std::vector<std::int64_t> pairs(blocks * lags, 0), valid(blocks * lags, 0), sums(blocks, 0);
    for (std::int64_t j = 0; j < blocks; ++j) {
        const std::int64_t lo = block_start(j, blocks, n), hi = block_start(j + 1, blocks, n);
        for (std::size_t d = 1; d <= lags; ++d)
            valid[j * lags + d - 1] = std::max<std::int64_t>(0, std::min(hi, n - static_cast<std::int64_t>(d)) - lo);
    }

    // Counts are sparse, so pair up nonzero entries only.
    std::vector<std::int64_t> nz;
    for (std::int64_t i = 0; i < n; ++i)
        if (counts[i] != 0) nz.push_back(i);
    std::int64_t j = 0;
    for (std::size_t a = 0; a < nz.size(); ++a) {
        const std::int64_t i = nz[a];
        while (i >= block_start(j + 1, blocks, n)) ++j;
        sums[j] += counts[i];
        for (std::size_t b = a + 1; b < nz.size() && nz[b] - i <= max_lag; ++b)
            pairs[j * lags + (nz[b] - i) - 1] += static_cast<std::int64_t>(counts[i]) * counts[nz[b]];
    }

    std::int64_t total = 0;
    for (std::int64_t s : sums) total += s;
    if (total == 0) throw Error(ErrorKind::UndefinedMean, "series has no counts");

    auto estimate = [&](const std::vector<std::int64_t>& chosen, std::vector<double>& out) {
        std::int64_t s = 0, len = 0;
        std::vector<std::int64_t> p(lags, 0), v(lags, 0);
        for (std::int64_t c : chosen) {
            s += sums[c];
            len += block_start(c + 1, blocks, n) - block_start(c, blocks, n);
            for (std::size_t d = 0; d < lags; ++d) {
                p[d] += pairs[c * lags + d];
                v[d] += valid[c * lags + d];
            }
        }
        if (s == 0) return false;
        const long double mean = static_cast<long double>(s) / len;
        out.resize(lags);
        for (std::size_t d = 0; d < lags; ++d)
            out[d] = v[d] > 0 ? static_cast<double>(static_cast<long double>(p[d]) / v[d] / (mean * mean)) : kNaN;
        return true;
    };

    std::vector<std::int64_t> all(blocks);
    for (std::int64_t c = 0; c < blocks; ++c) all[c] = c;
    std::vector<double> point;
    estimate(all, point);

    auto rng = make_engine(boot.seed, 0x6732u);
    std::uniform_int_distribution<std::int64_t> pick(0, blocks - 1);
    std::vector<std::vector<double>> draws(lags);
    std::vector<std::int64_t> chosen(blocks);
    std::vector<double> g;
    for (int r = 0; r < boot.resamples; ++r) {
        for (auto& c : chosen) c = pick(rng);
        if (!estimate(chosen, g)) continue;
        for (std::size_t d = 0; d < lags; ++d)
            if (std::isfinite(g[d])) draws[d].push_back(g[d]);
    }

    G2Curve curve;
    curve.points.reserve(lags);
    for (std::size_t d = 0; d < lags; ++d)
        curve.points.push_back({static_cast<std::int64_t>(d + 1), point[d], spread(draws[d])});
    return curve;
}

G2Curve g2_empirical(const sync::PhotocountSeries& series, std::int64_t max_lag, const BootstrapOptions& boot) {
    return g2_empirical(series.counts, max_lag, boot);
}

}  // namespace photonstat::stats
