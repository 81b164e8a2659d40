#include "volmix/garch.hpp"

#include "volmix/optim.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <thread>

namespace volmix::garch {

void ArmaxSpec::validate() const {
    if (p < 1 || p > 10 || q < 1 || q > 10) throw Error(Errc::InvalidArgument, "ARMA orders must lie in [1, 10]");
    if (use_exog && exog_dim == 0) throw Error(Errc::InvalidArgument, "exogenous fit needs exog_dim > 0");
}

double two_sided_p_value(double estimate, double std_error) noexcept {
    if (!(std_error > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double z = std::abs(estimate / std_error);
    return std::erfc(z / std::numbers::sqrt2);
}

bool is_stationary(std::span<const double> ar) noexcept {
    // Levinson step-down: the polynomial is stable iff every reflection
    // coefficient has modulus below one.
    std::vector<double> a(ar.begin(), ar.end());
    for (std::size_t m = a.size(); m > 0; --m) {
        const double k = a[m - 1];
        if (!std::isfinite(k) || std::abs(k) >= 1.0) return false;
        const double denom = 1.0 - k * k;
        std::vector<double> prev(m - 1);
        for (std::size_t i = 0; i + 1 < m; ++i) prev[i] = (a[i] + k * a[m - 2 - i]) / denom;
        a = std::move(prev);
    }
    return true;
}

namespace {

std::vector<double> column_means(const Matrix& x) {
    std::vector<double> m(x.cols(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        for (std::size_t c = 0; c < x.cols(); ++c) m[c] += x(r, c);
    }
    for (auto& v : m) v /= static_cast<double>(std::max<std::size_t>(x.rows(), 1));
    return m;
}

double level(double mu, std::span<const double> psi, std::span<const double> x) {
    double m = mu;
    for (std::size_t j = 0; j < psi.size(); ++j) m += psi[j] * x[j];
    return m;
}

double sample_variance(std::span<const double> v) {
    if (v.empty()) return 0.0;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return acc / static_cast<double>(v.size());
}

void check_exog(std::span<const double> log_y, const Matrix* exog, std::size_t psi_size) {
    if (psi_size == 0) return;
    if (exog == nullptr || exog->rows() != log_y.size() || exog->cols() != psi_size) {
        throw Error(Errc::ShapeMismatch, "exogenous matrix must have one row per observation and exog_dim columns");
    }
}

}  // namespace

std::vector<double> mean_residuals(std::span<const double> log_y, const Matrix* exog, double mu,
                                   std::span<const double> phi, std::span<const double> theta,
                                   std::span<const double> psi, double presample_y,
                                   std::span<const double> presample_x) {
    check_exog(log_y, exog, psi.size());
    const std::size_t n = log_y.size();
    const std::size_t p = phi.size(), q = theta.size();
    const double z_pre = presample_y - level(mu, psi, presample_x);
    std::vector<double> z(n), eps(n);
    for (std::size_t t = 0; t < n; ++t) {
        const double m = psi.empty() ? mu : level(mu, psi, exog->row(t));
        z[t] = log_y[t] - m;
        double pred = 0.0;
        for (std::size_t i = 1; i <= p; ++i) pred += phi[i - 1] * (t >= i ? z[t - i] : z_pre);
        for (std::size_t j = 1; j <= q && j <= t; ++j) pred += theta[j - 1] * eps[t - j];
        eps[t] = z[t] - pred;
    }
    return eps;
}

std::vector<double> mean_residuals(std::span<const double> log_y, const Matrix* exog, double mu,
                                   std::span<const double> phi, std::span<const double> theta,
                                   std::span<const double> psi) {
    const double ybar =
        log_y.empty() ? 0.0 : std::accumulate(log_y.begin(), log_y.end(), 0.0) / static_cast<double>(log_y.size());
    std::vector<double> xbar;
    if (!psi.empty()) {
        check_exog(log_y, exog, psi.size());
        xbar = column_means(*exog);
    }
    return mean_residuals(log_y, exog, mu, phi, theta, psi, ybar, xbar);
}

std::vector<double> garch_filter(std::span<const double> eps, double omega, double alpha, double beta,
                                 double sigma2_0) {
    std::vector<double> s2(eps.size());
    if (eps.empty()) return s2;
    s2[0] = sigma2_0 > 0.0 ? sigma2_0 : sample_variance(eps);
    for (std::size_t t = 1; t < eps.size(); ++t) s2[t] = omega + alpha * eps[t - 1] * eps[t - 1] + beta * s2[t - 1];
    return s2;
}

double garch_loglik(std::span<const double> eps, double omega, double alpha, double beta) {
    if (eps.empty()) return 0.0;
    constexpr double log2pi = 1.8378770664093454836;
    double s2 = sample_variance(eps);
    double ll = 0.0;
    for (std::size_t t = 0; t < eps.size(); ++t) {
        if (t > 0) s2 = omega + alpha * eps[t - 1] * eps[t - 1] + beta * s2;
        if (!(s2 > 0.0)) return -std::numeric_limits<double>::infinity();
        ll -= 0.5 * (log2pi + std::log(s2) + eps[t] * eps[t] / s2);
    }
    return ll;
}

namespace {

/// Invertible MA polynomial check (1 + theta_1 z + ...), via the AR test on -theta.
bool is_invertible(std::span<const double> theta) {
    std::vector<double> neg(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) neg[i] = -theta[i];
    return is_stationary(neg);
}

/// Hannan-Rissanen starting values: long AR for innovations, then OLS on
/// lagged values and lagged innovations.
std::vector<double> initial_mean_params(std::span<const double> y, const Matrix* exog, const ArmaxSpec& spec) {
    const std::size_t n = y.size();
    const auto p = static_cast<std::size_t>(spec.p), q = static_cast<std::size_t>(spec.q);
    const std::size_t k = spec.use_exog ? spec.exog_dim : 0;
    const std::size_t m = std::min<std::size_t>(std::max(p, q) + 10, n / 10);

    Matrix long_x(n - m, 1 + m + k);
    std::vector<double> long_y(n - m);
    for (std::size_t t = m; t < n; ++t) {
        auto row = long_x.row(t - m);
        row[0] = 1.0;
        for (std::size_t i = 1; i <= m; ++i) row[i] = y[t - i];
        for (std::size_t j = 0; j < k; ++j) row[1 + m + j] = (*exog)(t, j);
        long_y[t - m] = y[t];
    }
    const auto beta_long = optim::least_squares(long_x, long_y);
    std::vector<double> innov(n, 0.0);
    for (std::size_t t = m; t < n; ++t) {
        const auto row = long_x.row(t - m);
        innov[t] = y[t] - std::inner_product(row.begin(), row.end(), beta_long.begin(), 0.0);
    }

    const std::size_t start = m + std::max(p, q);
    Matrix x(n - start, 1 + p + q + k);
    std::vector<double> target(n - start);
    for (std::size_t t = start; t < n; ++t) {
        auto row = x.row(t - start);
        row[0] = 1.0;
        for (std::size_t i = 1; i <= p; ++i) row[i] = y[t - i];
        for (std::size_t j = 1; j <= q; ++j) row[p + j] = innov[t - j];
        for (std::size_t c = 0; c < k; ++c) row[1 + p + q + c] = (*exog)(t, c);
        target[t - start] = y[t];
    }
    auto b = optim::least_squares(x, target);

    std::vector<double> phi(b.begin() + 1, b.begin() + 1 + static_cast<std::ptrdiff_t>(p));
    std::vector<double> theta(b.begin() + 1 + static_cast<std::ptrdiff_t>(p),
                              b.begin() + 1 + static_cast<std::ptrdiff_t>(p + q));
    for (int tries = 0; tries < 50 && !is_stationary(phi); ++tries) {
        for (auto& v : phi) v *= 0.9;
    }
    for (int tries = 0; tries < 50 && !is_invertible(theta); ++tries) {
        for (auto& v : theta) v *= 0.9;
    }
    const double ar_sum = std::accumulate(phi.begin(), phi.end(), 0.0);
    std::vector<double> out;
    out.push_back(b[0] / std::max(1.0 - ar_sum, 1e-3));
    out.insert(out.end(), phi.begin(), phi.end());
    out.insert(out.end(), theta.begin(), theta.end());
    for (std::size_t c = 0; c < k; ++c) out.push_back(b[1 + p + q + c]);
    return out;
}

struct GarchTransform {
    // omega = exp(w); (alpha, beta, 1 - alpha - beta) = softmax(a, b, 0)
    static void to_natural(std::span<const double> u, double& omega, double& alpha, double& beta) {
        omega = std::exp(u[0]);
        const double m = std::max({u[1], u[2], 0.0});
        const double ea = std::exp(u[1] - m), eb = std::exp(u[2] - m), e0 = std::exp(-m);
        const double z = ea + eb + e0;
        alpha = ea / z;
        beta = eb / z;
        // e0 underflows far out on the ridge; keep the process strictly stationary
        constexpr double kMaxPersistence = 1.0 - 1e-8;
        if (alpha + beta > kMaxPersistence) {
            const double s = kMaxPersistence / (alpha + beta);
            alpha *= s;
            beta *= s;
        }
    }
    static std::vector<double> from_natural(double omega, double alpha, double beta) {
        const double rest = 1.0 - alpha - beta;
        return {std::log(omega), std::log(alpha / rest), std::log(beta / rest)};
    }
};

}  // namespace

FittedArmaxGarch fit(std::span<const double> log_y, const Matrix* exog, const ArmaxSpec& spec) {
    spec.validate();
    const std::size_t n = log_y.size();
    const std::size_t min_len = 10 * static_cast<std::size_t>(spec.p + spec.q + 2);
    if (n <= min_len) throw Error(Errc::TooFewSamples, "series too short for the requested orders", n);
    if (spec.use_exog) check_exog(log_y, exog, spec.exog_dim);
    const Matrix* x = spec.use_exog ? exog : nullptr;

    FittedArmaxGarch out;
    out.spec = spec;
    out.series_mean = std::accumulate(log_y.begin(), log_y.end(), 0.0) / static_cast<double>(n);
    if (x != nullptr) out.exog_mean = column_means(*x);

    const auto p = static_cast<std::size_t>(spec.p), q = static_cast<std::size_t>(spec.q);
    auto unpack = [p, q](std::span<const double> v) {
        return std::tuple{v[0], v.subspan(1, p), v.subspan(1 + p, q), v.subspan(1 + p + q)};
    };

    // stage 1: conditional sum of squares
    const optim::Objective css = [&](std::span<const double> v) {
        const auto [mu, phi, theta, psi] = unpack(v);
        const auto eps = mean_residuals(log_y, x, mu, phi, theta, psi, out.series_mean, out.exog_mean);
        double acc = 0.0;
        for (double e : eps) acc += e * e;
        return std::isfinite(acc) ? acc / static_cast<double>(n) : std::numeric_limits<double>::infinity();
    };
    auto start = initial_mean_params(log_y, x, spec);
    optim::BfgsOptions mean_opts;
    mean_opts.gradient_tol = 1e-8;
    mean_opts.value_tol = 1e-13;
    auto mean_fit = optim::minimize(css, start, mean_opts);
    if (!std::isfinite(mean_fit.value)) throw Error(Errc::OptimizerFailed, "CSS objective is not finite");
    {
        const auto [mu, phi, theta, psi] = unpack(mean_fit.x);
        out.mu = mu;
        out.phi.assign(phi.begin(), phi.end());
        out.theta.assign(theta.begin(), theta.end());
        out.psi.assign(psi.begin(), psi.end());
    }
    if (!is_stationary(out.phi)) throw Error(Errc::NonStationaryFit, "AR polynomial has a root inside the unit circle");
    out.residuals = mean_residuals(log_y, x, out.mu, out.phi, out.theta, out.psi, out.series_mean, out.exog_mean);
    out.css = mean_fit.value * static_cast<double>(n);

    // stage 2: GARCH(1,1) Gaussian MLE on the stage-1 residuals
    const std::span<const double> eps(out.residuals);
    const double var = sample_variance(eps);
    out.sigma2_0 = var;
    const optim::Objective nll = [&](std::span<const double> u) {
        double omega, alpha, beta;
        GarchTransform::to_natural(u, omega, alpha, beta);
        const double ll = garch_loglik(eps, omega, alpha, beta);
        return std::isfinite(ll) ? -ll / static_cast<double>(n) : std::numeric_limits<double>::infinity();
    };
    const auto u0 = GarchTransform::from_natural(0.05 * var, 0.05, 0.90);
    optim::BfgsOptions garch_opts;
    garch_opts.gradient_tol = 1e-9;
    garch_opts.value_tol = 1e-14;
    auto gfit = optim::minimize(nll, u0, garch_opts);
    if (!std::isfinite(gfit.value)) throw Error(Errc::OptimizerFailed, "GARCH likelihood is not finite");
    GarchTransform::to_natural(gfit.x, out.garch.omega, out.garch.alpha, out.garch.beta);
    out.optimizer = mean_fit.method + "+" + gfit.method;

    // standard errors from the inverse Hessian of the negative log-likelihood
    const optim::Objective natural_nll = [&](std::span<const double> th) {
        return -garch_loglik(eps, th[0], th[1], th[2]);
    };
    const std::vector<double> theta_hat{out.garch.omega, out.garch.alpha, out.garch.beta};
    const auto hess = optim::numerical_hessian(natural_nll, theta_hat, 1e-4);
    Matrix cov;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (optim::invert_spd(hess, cov)) {
        out.garch.se_omega = cov(0, 0) > 0.0 ? std::sqrt(cov(0, 0)) : nan;
        out.garch.se_alpha = cov(1, 1) > 0.0 ? std::sqrt(cov(1, 1)) : nan;
        out.garch.se_beta = cov(2, 2) > 0.0 ? std::sqrt(cov(2, 2)) : nan;
    } else {
        out.garch.se_omega = out.garch.se_alpha = out.garch.se_beta = nan;
    }

    out.sigma2 = garch_filter(eps, out.garch.omega, out.garch.alpha, out.garch.beta, var);
    out.loglik = garch_loglik(eps, out.garch.omega, out.garch.alpha, out.garch.beta);
    out.aic = 2.0 * static_cast<double>(out.parameter_count()) - 2.0 * out.loglik;
    return out;
}

OrderSelection select_order(std::span<const double> log_y, const Matrix* exog, std::span<const int> p_range,
                            std::span<const int> q_range) {
    struct Job {
        int p, q;
        std::future<FittedArmaxGarch> result;
    };
    const bool use_exog = exog != nullptr;
    std::vector<Job> jobs;
    for (int p : p_range) {
        for (int q : q_range) {
            ArmaxSpec spec{p, q, use_exog, use_exog ? exog->cols() : 0};
            spec.validate();
            jobs.push_back({p, q, std::async(std::launch::deferred, [=] { return fit(log_y, exog, spec); })});
        }
    }
    // run in waves sized to the machine
    const std::size_t wave = std::max(1u, std::thread::hardware_concurrency());
    OrderSelection sel;
    bool have_best = false;
    for (std::size_t first = 0; first < jobs.size(); first += wave) {
        const std::size_t last = std::min(jobs.size(), first + wave);
        std::vector<std::future<std::pair<AicRow, std::optional<FittedArmaxGarch>>>> running;
        for (std::size_t i = first; i < last; ++i) {
            running.push_back(std::async(std::launch::async, [&job = jobs[i]] {
                AicRow row{job.p, job.q, false, 0.0, 0.0, {}};
                try {
                    auto f = job.result.get();
                    row.ok = true;
                    row.loglik = f.loglik;
                    row.aic = f.aic;
                    return std::pair{row, std::optional<FittedArmaxGarch>(std::move(f))};
                } catch (const std::exception& e) {
                    row.error = e.what();
                    return std::pair{row, std::optional<FittedArmaxGarch>()};
                }
            }));
        }
        for (auto& r : running) {
            auto [row, fitted] = r.get();
            sel.table.push_back(row);
            if (!fitted) continue;
            const auto better = [&] {
                if (!have_best) return true;
                const auto& b = sel.best;
                if (fitted->aic != b.aic) return fitted->aic < b.aic;
                const int s1 = fitted->spec.p + fitted->spec.q, s0 = b.spec.p + b.spec.q;
                if (s1 != s0) return s1 < s0;
                return fitted->spec.p < b.spec.p;
            }();
            if (better) {
                sel.best = std::move(*fitted);
                have_best = true;
            }
        }
    }
    if (!have_best) throw Error(Errc::AllFitsFailed, "no ARMA-GARCH candidate could be fitted");
    return sel;
}

History filter_history(const FittedArmaxGarch& fit, std::span<const double> log_y, const Matrix* exog) {
    const Matrix* x = fit.psi.empty() ? nullptr : exog;
    History h;
    h.eps = mean_residuals(log_y, x, fit.mu, fit.phi, fit.theta, fit.psi, fit.series_mean, fit.exog_mean);
    h.z.resize(log_y.size());
    for (std::size_t t = 0; t < log_y.size(); ++t) {
        h.z[t] = log_y[t] - (fit.psi.empty() ? fit.mu : level(fit.mu, fit.psi, x->row(t)));
    }
    const auto s2 = garch_filter(h.eps, fit.garch.omega, fit.garch.alpha, fit.garch.beta, fit.sigma2_0);
    h.sigma2 = s2.empty() ? fit.sigma2_0 : s2.back();
    return h;
}

OneStep forecast(const FittedArmaxGarch& fit, const History& history, std::span<const double> exog_next) {
    const std::size_t p = fit.phi.size(), q = fit.theta.size();
    if (history.z.size() < p || history.eps.size() < q) {
        throw Error(Errc::InvalidArgument, "history shorter than the model orders");
    }
    if (!fit.psi.empty() && exog_next.size() != fit.psi.size()) {
        throw Error(Errc::ShapeMismatch, "exogenous row has wrong length");
    }
    OneStep out;
    out.mean_log = fit.psi.empty() ? fit.mu : level(fit.mu, fit.psi, exog_next);
    for (std::size_t i = 1; i <= p; ++i) out.mean_log += fit.phi[i - 1] * history.z[history.z.size() - i];
    for (std::size_t j = 1; j <= q; ++j) out.mean_log += fit.theta[j - 1] * history.eps[history.eps.size() - j];
    const double last_eps = history.eps.empty() ? 0.0 : history.eps.back();
    out.var_log = fit.garch.omega + fit.garch.alpha * last_eps * last_eps + fit.garch.beta * history.sigma2;
    return out;
}

std::vector<OneStep> rolling_forecasts(const FittedArmaxGarch& fit, std::span<const double> log_y,
                                       const Matrix* exog, std::size_t start) {
    const Matrix* x = fit.psi.empty() ? nullptr : exog;
    const auto eps = mean_residuals(log_y, x, fit.mu, fit.phi, fit.theta, fit.psi, fit.series_mean, fit.exog_mean);
    const auto s2 = garch_filter(eps, fit.garch.omega, fit.garch.alpha, fit.garch.beta, fit.sigma2_0);
    std::vector<OneStep> out;
    // y_t - eps_t is exactly the conditional mean given data up to t - 1
    for (std::size_t t = start; t < log_y.size(); ++t) out.push_back({log_y[t] - eps[t], s2[t]});
    return out;
}

Acf residual_acf(std::span<const double> residuals, std::size_t max_lag) {
    const std::size_t n = residuals.size();
    if (n <= max_lag) throw Error(Errc::InvalidArgument, "need more observations than lags");
    const double mean = std::accumulate(residuals.begin(), residuals.end(), 0.0) / static_cast<double>(n);
    double denom = 0.0;
    for (double r : residuals) denom += (r - mean) * (r - mean);
    Acf acf;
    acf.band = 1.96 / std::sqrt(static_cast<double>(n));
    for (std::size_t k = 1; k <= max_lag; ++k) {
        double num = 0.0;
        for (std::size_t t = k; t < n; ++t) num += (residuals[t] - mean) * (residuals[t - k] - mean);
        acf.values.push_back(denom > 0.0 ? num / denom : 0.0);
    }
    return acf;
}

}  // namespace volmix::garch
