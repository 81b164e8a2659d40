#pragma once

// Data generators and brute-force oracles for testing the models without
// market data.

#include "volmix/common.hpp"
#include "volmix/market_data.hpp"
#include "volmix/preprocess.hpp"
#include "volmix/tme.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace volmix::synthetic {

struct FeatureProcess {
    /// AR(1) with unit stationary variance; false gives i.i.d. N(0, 1).
    bool ar1 = true;
    double persistence = 0.7;
};

struct TmeGenerativeSpec {
    tme::TmeParams truth;
    std::size_t n = 1000;
    FeatureProcess features;
    std::uint64_t seed = 1;
};

struct GeneratedTme {
    std::vector<preprocess::ModelInstance> instances;
    /// Sampled source index per instance.
    std::vector<std::size_t> z;
    /// n x S true gate probabilities.
    Matrix gate_probs;
    /// True mixture mean and variance of y per instance.
    std::vector<tme::Moments> moments;
    /// -ln of the true mixture density at each sampled y.
    std::vector<double> nll;
};

/// Runs the mixture process forward. Instance i has t = 60 i, a = 1, v = y.
[[nodiscard]] GeneratedTme gen_tme_data(const TmeGenerativeSpec& spec);

/// Ground truth where only source 0's window drives its mean: the other
/// sources have constant means and wider variances. The gate is static with
/// biases (gate_bias0, 0, ..., 0).
[[nodiscard]] tme::TmeParams informative_source_truth(const preprocess::WindowShape& shape, std::uint64_t seed,
                                                      double gate_bias0 = 2.5);

struct GarchSimSpec {
    double omega = 0.0177;
    double alpha = 0.0259;
    double beta = 0.9677;
    std::size_t n = 1000;
    std::uint64_t seed = 1;
    double mu = 0.0;
    std::vector<double> phi;
    std::vector<double> theta;
    /// Leading draws discarded when an ARMA filter is present.
    std::size_t burn_in = 1000;
};

/// y_t = mu + z_t, z_t = sum phi_i z_{t-i} + eps_t + sum theta_j eps_{t-j},
/// eps_t = sigma_t e_t with the GARCH(1,1) recursion started at its
/// stationary variance. Throws InvalidArgument unless alpha + beta < 1.
[[nodiscard]] std::vector<double> gen_garch_series(const GarchSimSpec& spec);

/// Central differences (L(x + step e_i) - L(x - step e_i)) / (2 step).
/// Throws NonFiniteLoss if the loss is not finite at x or at a probe.
[[nodiscard]] std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& loss,
                                              std::span<const double> params, double step);

struct McMoments {
    double mean = 0.0;
    double variance = 0.0;
    double se_mean = 0.0;
    double se_variance = 0.0;
};

/// Monte-Carlo mean and variance of the ensemble mixture with delete-one
/// jackknife standard errors. Requires n_draws >= 10^4.
[[nodiscard]] McMoments mc_mixture_moments(const tme::Ensemble& ensemble, const preprocess::ModelInstance& instance,
                                           std::size_t n_draws, std::uint64_t seed);

struct MarketLikeOptions {
    double zero_rate = 0.0225;
    double target_log_mean = -1.3627;
    double target_log_var = 3.7658;
    /// Variance of the persistent Gaussian log-volume component; the rest
    /// of target_log_var comes from quiet intervals.
    double gaussian_var = 0.5;
    /// Per-minute AR(1) coefficient of the Gaussian component.
    double persistence = 0.98;
    /// Scale of the log diurnal shape.
    double profile_amplitude = 2.0;
    /// Average traded size per minute before the diurnal factor.
    double base_volume = 5.0;
    Epoch start = 1514764800;  // 2018-01-01T00:00:00Z
    /// Also produce trades and book snapshots for both markets.
    bool market_data = true;
    std::size_t book_levels = 10;
};

struct MarketLikeVolume {
    Epoch interval = 60;
    std::vector<Epoch> grid;
    std::vector<double> volume;
    std::vector<double> external_volume;
    /// Injected diurnal factor per intraday slot.
    std::vector<double> profile;
    /// Quiet-interval parameters after calibration.
    double quiet_probability = 0.0;
    double quiet_depth = 0.0;
    std::vector<market_data::TradeRecord> target_trades;
    std::vector<market_data::TradeRecord> external_trades;
    std::vector<market_data::BookSnapshot> target_book;
    std::vector<market_data::BookSnapshot> external_book;
};

/// Raw volume = profile(slot) * exp(g_t - depth * B_t), g a Gaussian AR(1)
/// and B_t an i.i.d. Bernoulli quiet-interval indicator, calibrated so the deseasonalized log-volume has the
/// requested mean and variance. A fraction zero_rate of intervals is set to
/// zero. Trades sum exactly to the interval volume.
[[nodiscard]] MarketLikeVolume gen_market_like_volume(preprocess::Horizon horizon, std::size_t days, std::uint64_t seed,
                                                    const MarketLikeOptions& options = {});

struct QuietDrop {
    double probability = 0.0;
    double depth = 0.0;
};

/// Drop depth * B, B ~ Bernoulli(probability) with probability < 1/2, such
/// that x = g - depth * B, g ~ N(0, gaussian_var), gives
/// ln y = x - ln E[exp x] - ln(1 - zero_rate) the target mean and variance.
/// Throws InvalidArgument when no such drop exists.
[[nodiscard]] QuietDrop calibrate_quiet_drop(double target_mean, double target_var, double zero_rate,
                                             double gaussian_var);

}  // namespace volmix::synthetic
