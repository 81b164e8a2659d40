#pragma once

// ARMA(p,q) / ARMAX(p,q) mean equation on log-volume with GARCH(1,1)
// residual variance. Two-stage estimation: conditional sum of squares for the
// mean, then Gaussian maximum likelihood for the variance recursion.

#include "volmix/common.hpp"

#include <span>
#include <string>
#include <vector>

namespace volmix::garch {

struct ArmaxSpec {
    int p = 1;
    int q = 1;
    bool use_exog = false;
    std::size_t exog_dim = 0;

    /// Throws InvalidArgument unless 1 <= p, q <= 10.
    void validate() const;
    [[nodiscard]] std::size_t mean_param_count() const noexcept {
        return 1 + static_cast<std::size_t>(p + q) + (use_exog ? exog_dim : 0);
    }
};

struct GarchParams {
    double omega = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double se_omega = 0.0;
    double se_alpha = 0.0;
    double se_beta = 0.0;

    [[nodiscard]] double unconditional_variance() const noexcept { return omega / (1.0 - alpha - beta); }
};

/// Two-sided normal p-value of est / se (NaN if se is not positive).
[[nodiscard]] double two_sided_p_value(double estimate, double std_error) noexcept;

struct FittedArmaxGarch {
    ArmaxSpec spec;
    double mu = 0.0;
    std::vector<double> phi;
    std::vector<double> theta;
    std::vector<double> psi;
    GarchParams garch;
    double series_mean = 0.0;
    std::vector<double> exog_mean;
    double sigma2_0 = 0.0;
    double css = 0.0;
    double loglik = 0.0;
    double aic = 0.0;
    std::vector<double> residuals;
    std::vector<double> sigma2;
    std::string optimizer;

    /// Free parameters: mean equation plus (omega, alpha, beta).
    [[nodiscard]] std::size_t parameter_count() const noexcept { return spec.mean_param_count() + 3; }
};

/// True when all roots of 1 - c_1 z - ... - c_p z^p lie outside the unit circle.
[[nodiscard]] bool is_stationary(std::span<const double> ar) noexcept;

/// Conditional-sum-of-squares residuals of the mean equation. Pre-sample
/// values sit at the series mean and pre-sample residuals are zero.
/// `exog` has one row per observation holding the lag-1 features.
[[nodiscard]] std::vector<double> mean_residuals(std::span<const double> log_y, const Matrix* exog, double mu,
                                                 std::span<const double> phi, std::span<const double> theta,
                                                 std::span<const double> psi);

/// Same recursion with explicit pre-sample level for log_y and the exogenous
/// columns (used to replay a fitted model over a longer series).
[[nodiscard]] std::vector<double> mean_residuals(std::span<const double> log_y, const Matrix* exog, double mu,
                                                 std::span<const double> phi, std::span<const double> theta,
                                                 std::span<const double> psi, double presample_y,
                                                 std::span<const double> presample_x);

/// sigma2_t = omega + alpha eps_{t-1}^2 + beta sigma2_{t-1}. sigma2_0 defaults
/// to the sample variance of eps.
[[nodiscard]] std::vector<double> garch_filter(std::span<const double> eps, double omega, double alpha, double beta,
                                               double sigma2_0 = -1.0);

/// Gaussian log-likelihood of eps under the GARCH(1,1) recursion.
[[nodiscard]] double garch_loglik(std::span<const double> eps, double omega, double alpha, double beta);

/// Two-stage fit. Throws NonStationaryFit when the AR polynomial has a root
/// on or inside the unit circle, OptimizerFailed when an optimizer returns a
/// non-finite objective.
[[nodiscard]] FittedArmaxGarch fit(std::span<const double> log_y, const Matrix* exog, const ArmaxSpec& spec);

struct AicRow {
    int p = 0;
    int q = 0;
    bool ok = false;
    double loglik = 0.0;
    double aic = 0.0;
    std::string error;
};

struct OrderSelection {
    FittedArmaxGarch best;
    std::vector<AicRow> table;
};

/// Exhaustive AIC grid over p_range x q_range; ties prefer smaller p + q,
/// then smaller p. Throws AllFitsFailed if no candidate fits.
[[nodiscard]] OrderSelection select_order(std::span<const double> log_y, const Matrix* exog,
                                          std::span<const int> p_range, std::span<const int> q_range);

/// Filter state needed for a one-step forecast. Vectors are oldest first.
struct History {
    std::vector<double> z;    // log_y minus its conditional mean level (mu + psi' x)
    std::vector<double> eps;  // mean-equation residuals
    double sigma2 = 0.0;      // conditional variance of the latest residual
};

struct OneStep {
    double mean_log = 0.0;
    double var_log = 0.0;
};

/// Runs the fitted recursions through the whole series and returns the state
/// after the last observation.
[[nodiscard]] History filter_history(const FittedArmaxGarch& fit, std::span<const double> log_y, const Matrix* exog);

/// One-step conditional mean and variance of the next log-volume.
/// `exog_next` holds the lag-1 features of the target (empty when unused).
[[nodiscard]] OneStep forecast(const FittedArmaxGarch& fit, const History& history,
                               std::span<const double> exog_next = {});

/// One-step forecasts for every t in [start, n) using only information up to
/// t - 1.
[[nodiscard]] std::vector<OneStep> rolling_forecasts(const FittedArmaxGarch& fit, std::span<const double> log_y,
                                                     const Matrix* exog, std::size_t start);

struct Acf {
    std::vector<double> values;  // lags 1..max_lag
    double band = 0.0;           // 1.96 / sqrt(n)
};

[[nodiscard]] Acf residual_acf(std::span<const double> residuals, std::size_t max_lag);

}  // namespace volmix::garch
