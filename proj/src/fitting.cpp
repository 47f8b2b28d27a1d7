#include "photonstat/fitting.hpp"

#include "photonstat/error.hpp"
#include "photonstat/onoff_model.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>
#include <unsupported/Eigen/LevenbergMarquardt>

#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace photonstat::fit {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using AD = Eigen::AutoDiffScalar<VectorXd>;

// Observations with sqrt-weights; `x` is the abscissa (M or lag).
struct Data {
    std::vector<double> x, y, w;
    bool weighted = false;

    std::size_t size() const { return y.size(); }
};

template <class Rows>
Data collect(const Rows& rows, bool use_weights) {
    Data d;
    bool all_se = true;
    for (const auto& [x, y, se] : rows) {
        d.x.push_back(x);
        d.y.push_back(y);
        d.w.push_back(se);
        all_se = all_se && std::isfinite(se) && se > 0.0;
    }
    d.weighted = use_weights && all_se;
    for (double& w : d.w) w = d.weighted ? 1.0 / w : 1.0;
    return d;
}

// Weighted sum of squares about the best constant.
double flat_chi2(const Data& d) {
    double sw = 0, swy = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        sw += d.w[i] * d.w[i];
        swy += d.w[i] * d.w[i] * d.y[i];
    }
    const double mean = swy / sw;
    double chi2 = 0;
    for (std::size_t i = 0; i < d.size(); ++i) chi2 += std::pow(d.w[i] * (d.y[i] - mean), 2);
    return chi2;
}

// Residual functor over any model exposing `valid(x)` and a templated
// `value(x, abscissa)` in log-parameters.
template <class Model>
struct Residuals : Eigen::DenseFunctor<double> {
    const Model& model;
    const Data& data;

    Residuals(const Model& m, const Data& d, int n_params)
        : Eigen::DenseFunctor<double>(n_params, static_cast<int>(d.size())), model(m), data(d) {}

    int operator()(const VectorXd& x, VectorXd& f) const {
        if (!model.valid(x)) {
            f.setConstant(1e10);  // outside the model domain; the step is rejected
            return 0;
        }
        for (std::size_t i = 0; i < data.size(); ++i) f[i] = data.w[i] * (model.value(x, data.x[i]) - data.y[i]);
        if (!f.allFinite()) f.setConstant(1e10);
        return 0;
    }

    int df(const VectorXd& x, MatrixXd& jac) const {
        const auto n = x.size();
        std::vector<AD> ax(n);
        for (Eigen::Index k = 0; k < n; ++k) ax[k] = AD(x[k], n, k);
        Eigen::Matrix<AD, Eigen::Dynamic, 1> xa(n);
        for (Eigen::Index k = 0; k < n; ++k) xa[k] = ax[k];
        for (std::size_t i = 0; i < data.size(); ++i) {
            const AD r = model.value(xa, data.x[i]);
            jac.row(i) = data.w[i] * r.derivatives().transpose();
        }
        return 0;
    }
};

struct Solution {
    VectorXd x;
    MatrixXd cov;  // in log-parameters
    double residual_norm = 0;
    double gradient_norm = 0;
    int iterations = 0;
    bool converged = false;
};

template <class Model>
Solution solve(const Model& model, const Data& data, VectorXd x, const FitOptions& opt) {
    const int n = static_cast<int>(x.size());
    Residuals<Model> fn(model, data, n);
    Eigen::LevenbergMarquardt<Residuals<Model>> lm(fn);
    lm.setXtol(opt.step_tolerance);
    lm.setFtol(1e-14);
    lm.setGtol(opt.gradient_tolerance);
    lm.setMaxfev(20 * opt.max_iterations);

    Solution s;
    auto status = lm.minimizeInit(x);
    if (status == Eigen::LevenbergMarquardtSpace::ImproperInputParameters)
        throw Error(ErrorKind::InvalidArgument, "fit has fewer points than parameters");
    status = Eigen::LevenbergMarquardtSpace::Running;
    while (status == Eigen::LevenbergMarquardtSpace::Running && s.iterations < opt.max_iterations) {
        status = lm.minimizeOneStep(x);
        ++s.iterations;
    }

    VectorXd f(data.size());
    MatrixXd jac(data.size(), n);
    fn(x, f);
    fn.df(x, jac);
    // LM stops once the sum of squares stalls in the last digits; a few
    // undamped Gauss-Newton steps drive the gradient down to rounding level.
    for (int polish = 0; polish < 5 && model.valid(x); ++polish) {
        const VectorXd step = jac.colPivHouseholderQr().solve(-f);
        VectorXd trial = x + step, ft(data.size());
        if (!model.valid(trial)) break;
        fn(trial, ft);
        if (ft.norm() > f.norm() * (1.0 + 1e-12)) break;
        x = trial;
        f = ft;
        fn.df(x, jac);
        ++s.iterations;
        if (step.norm() <= 1e-15 * (1.0 + x.norm())) break;
    }
    s.x = x;
    s.residual_norm = f.norm();
    s.gradient_norm = (jac.transpose() * f).norm();

    using namespace Eigen::LevenbergMarquardtSpace;
    const bool stopped = status == RelativeReductionTooSmall || status == RelativeErrorTooSmall ||
                         status == RelativeErrorAndReductionTooSmall || status == CosinusTooSmall ||
                         status == FtolTooSmall || status == XtolTooSmall || status == GtolTooSmall;
    // The gradient test is relative to the scale of J and r so that it means
    // the same thing for weighted and unweighted curves.
    const double scale = std::max(1.0, jac.norm() * s.residual_norm);
    s.converged = stopped && s.gradient_norm <= opt.gradient_tolerance * scale;
    if (!s.converged)
        throw Error(ErrorKind::NonConvergence,
                    "fit stopped after " + std::to_string(s.iterations) + " iterations (status " +
                        std::to_string(static_cast<int>(status)) + ", |J^T r| = " + std::to_string(s.gradient_norm) +
                        ", |r| = " + std::to_string(s.residual_norm) + ", |J| = " + std::to_string(jac.norm()) + ")");

    const MatrixXd jtj = jac.transpose() * jac;
    Eigen::FullPivLU<MatrixXd> lu(jtj);
    if (!lu.isInvertible())
        throw Error(ErrorKind::DegenerateCurve, "parameters are not identifiable from this curve");
    s.cov = lu.inverse();
    if (!data.weighted && static_cast<int>(data.size()) > n)
        s.cov *= s.residual_norm * s.residual_norm / static_cast<double>(static_cast<int>(data.size()) - n);
    s.cov = 0.5 * (s.cov + s.cov.transpose());
    return s;
}

// Covariance of g(x) from the covariance of x, given dg/dx.
std::array<std::array<double, 2>, 2> propagate(const MatrixXd& cov, const Eigen::Matrix2d& jac) {
    const Eigen::Matrix2d c = jac * cov.topLeftCorner<2, 2>() * jac.transpose();
    return {{{c(0, 0), 0.5 * (c(0, 1) + c(1, 0))}, {0.5 * (c(0, 1) + c(1, 0)), c(1, 1)}}};
}

// x = (log p_tau, log q_tau[, log eta])
struct MandelModel {
    double eta;
    bool free_eta;

    bool valid(const VectorXd& x) const {
        if (!x.allFinite() || x[0] < -300.0 || x[1] < -300.0) return false;
        const double beta = std::exp(x[0]) + std::exp(x[1]);
        return beta < 1.0 && (!free_eta || std::exp(x[2]) <= 1.0);
    }

    template <class V>
    typename V::Scalar value(const V& x, double m) const {
        using std::exp;
        using T = typename V::Scalar;
        const T q = onoff::detail::perfect_mandel<T>(exp(x[0]), exp(x[1]), static_cast<std::int64_t>(m));
        if (free_eta) return exp(x[2]) * q;
        return q * eta;
    }
};

// x = (log A, log lag0)
struct G2Model {
    bool valid(const VectorXd& x) const { return x.allFinite() && x[1] > 0.0 && x[1] < 300.0 && x[0] < 300.0; }

    template <class V>
    typename V::Scalar value(const V& x, double lag) const {
        using std::exp;
        return exp(x[0]) * exp(-lag * exp(-x[1])) + 1.0;
    }
};

// Runs the solver from each start and keeps the smallest residual. A start
// that stalls on a flat plateau or leaves the domain does not sink the fit as
// long as another start converges.
template <class Model>
Solution solve_multistart(const Model& model, const Data& data, const std::vector<VectorXd>& starts,
                          const FitOptions& opt) {
    std::optional<Solution> best;
    std::optional<Error> last;
    for (const VectorXd& x0 : starts) {
        try {
            Solution s = solve(model, data, x0, opt);
            if (!best || s.residual_norm < best->residual_norm) best = std::move(s);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::NonConvergence && e.kind() != ErrorKind::DegenerateCurve) throw;
            last = e;
        }
    }
    if (!best) throw *last;
    return *best;
}

std::vector<double> log_grid(double lo, double hi, int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = std::log(lo) + (std::log(hi) - std::log(lo)) * i / (n - 1);
    return g;
}

double sum_squares(const Data& d, const auto& model, const VectorXd& x) {
    double s = 0;
    for (std::size_t i = 0; i < d.size(); ++i) s += std::pow(d.w[i] * (model.value(x, d.x[i]) - d.y[i]), 2);
    return s;
}

}  // namespace

double FitResult::p_isc_std_error() const { return std::sqrt(covariance[0][0]); }
double FitResult::tau_triplet_std_error() const { return std::sqrt(covariance[1][1]); }

FitResult fit_mandel(const stats::MandelCurve& curve, double eta, double tau_rep, const FitOptions& options) {
    require(eta > 0.0 && eta <= 1.0, "eta must lie in (0,1]");
    require(std::isfinite(tau_rep) && tau_rep > 0.0, "tau_rep must be positive");
    require(options.max_iterations >= 1, "max_iterations must be >= 1");

    struct Row {
        double x, y, se;
    };
    std::vector<Row> rows;
    for (const auto& pt : curve.points)
        if (std::isfinite(pt.q_value)) rows.push_back({static_cast<double>(pt.m_pulses), pt.q_value, pt.std_error});
    if (rows.size() < 5) throw Error(ErrorKind::InsufficientData, "Mandel fit needs at least 5 points");
    if (rows.back().x < 100.0 * rows.front().x)
        throw Error(ErrorKind::InsufficientData, "Mandel fit needs window lengths spanning two decades");
    const Data data = collect(rows, options.use_weights);

    const double dof = static_cast<double>(data.size() - 1);
    const double flat = flat_chi2(data);
    if (data.weighted ? flat <= dof + 3.0 * std::sqrt(2.0 * dof) : flat <= 1e-24 * (1.0 + dof))
        throw Error(ErrorKind::DegenerateCurve, "Q(T) is flat: no blinking signature to fit");

    const MandelModel fixed{eta, false};
    std::vector<VectorXd> starts;
    if (options.init) {
        const auto [p_isc, tau_t] = *options.init;
        require(p_isc > 0.0 && tau_t > 0.0 && tau_t >= tau_rep, "initial values must be positive, tau_T >= tau_rep");
        starts.emplace_back(2);
        starts.back() << std::log(p_isc), std::log(tau_rep / tau_t);
    }
    {
        double best = std::numeric_limits<double>::infinity();
        const auto grid = log_grid(1e-7, 0.3, 29);
        VectorXd x(2), x0(2);
        for (double lp : grid)
            for (double lq : grid) {
                x << lp, lq;
                if (!fixed.valid(x) || std::exp(lp) + std::exp(lq) > 0.5) continue;
                const double ss = sum_squares(data, fixed, x);
                if (ss < best) best = ss, x0 = x;
            }
        starts.push_back(x0);
    }

    Solution s = solve_multistart(fixed, data, starts, options);
    FitResult r;
    r.method = "mandel";
    r.eta = eta;
    if (options.free_eta) {
        const MandelModel loose{eta, true};
        VectorXd x3(3);
        x3 << s.x[0], s.x[1], std::log(eta);
        s = solve(loose, data, x3, options);
        r.eta_free = true;
        r.eta = std::exp(s.x[2]);
        r.eta_std_error = r.eta * std::sqrt(s.cov(2, 2));
    }

    const double p_tau = std::exp(s.x[0]), q_tau = std::exp(s.x[1]);
    r.p_isc = p_tau;
    r.tau_triplet = tau_rep / q_tau;
    Eigen::Matrix2d d;
    d << r.p_isc, 0.0, 0.0, -r.tau_triplet;
    r.covariance = propagate(s.cov, d);
    r.residual_norm = s.residual_norm;
    r.gradient_norm = s.gradient_norm;
    r.converged = s.converged;
    r.n_iterations = s.iterations;
    r.n_points = static_cast<std::int64_t>(data.size());
    r.weighted = data.weighted;
    return r;
}

FitResult fit_g2(const stats::G2Curve& curve, double tau_rep, const FitOptions& options) {
    require(std::isfinite(tau_rep) && tau_rep > 0.0, "tau_rep must be positive");
    require(options.max_iterations >= 1, "max_iterations must be >= 1");
    require(!options.free_eta, "free-eta mode applies to the Mandel fit only");

    struct Row {
        double x, y, se;
    };
    std::vector<Row> rows;
    for (const auto& pt : curve.points) {
        require(pt.lag >= 1, "G2 lags must be >= 1");
        if (std::isfinite(pt.g2_value)) rows.push_back({static_cast<double>(pt.lag), pt.g2_value, pt.std_error});
    }
    if (rows.size() < 10) throw Error(ErrorKind::InsufficientData, "G2 fit needs at least 10 lags");
    const Data data = collect(rows, options.use_weights);

    // For fixed lag0 the contrast enters linearly; scan lag0 for the best
    // linear fit to decide the sign and seed the solver.
    const G2Model model;
    VectorXd x0(2);
    double best = std::numeric_limits<double>::infinity(), best_a = 0.0;
    for (double l0 : log_grid(1.5, 1e7, 300)) {
        const double lag0 = std::exp(l0);
        double num = 0, den = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double e = std::exp(-data.x[i] / lag0), w2 = data.w[i] * data.w[i];
            num += w2 * e * (data.y[i] - 1.0);
            den += w2 * e * e;
        }
        const double a = num / den;
        double ss = 0;
        for (std::size_t i = 0; i < data.size(); ++i)
            ss += std::pow(data.w[i] * (a * std::exp(-data.x[i] / lag0) + 1.0 - data.y[i]), 2);
        if (ss < best) best = ss, best_a = a, x0 << std::log(std::max(a, 1e-300)), l0;
    }
    if (!(best_a > 0.0)) throw Error(ErrorKind::NegativeContrast, "G2 contrast is not positive");
    std::vector<VectorXd> starts;
    if (options.init) {
        const auto [p_isc, tau_t] = *options.init;
        require(p_isc > 0.0 && tau_t > 0.0, "initial values must be positive");
        const double q_tau = tau_rep / tau_t;
        starts.emplace_back(2);
        starts.back() << std::log(p_isc / q_tau), -std::log(p_isc + q_tau);
    }
    starts.push_back(x0);

    const Solution s = solve_multistart(model, data, starts, options);
    const double a = std::exp(s.x[0]), lag0 = std::exp(s.x[1]);
    const double beta = 1.0 / lag0;
    if (!(beta < 1.0)) throw Error(ErrorKind::DegenerateCurve, "G2 decays faster than one pulse");

    FitResult r;
    r.method = "g2";
    r.p_isc = a * beta / (1.0 + a);
    r.tau_triplet = tau_rep * (1.0 + a) * lag0;
    Eigen::Matrix2d d;
    d << r.p_isc / (1.0 + a), -r.p_isc, r.tau_triplet * a / (1.0 + a), r.tau_triplet;
    r.covariance = propagate(s.cov, d);
    r.residual_norm = s.residual_norm;
    r.gradient_norm = s.gradient_norm;
    r.converged = s.converged;
    r.n_iterations = s.iterations;
    r.n_points = static_cast<std::int64_t>(data.size());
    r.weighted = data.weighted;
    return r;
}

}  // namespace photonstat::fit
