#pragma once

#include "volmix/common.hpp"
#include "volmix/market_data.hpp"

#include <string>
#include <utility>
#include <vector>

namespace volmix::preprocess {

inline constexpr Epoch kSecondsPerDay = 86400;

enum class Horizon { OneMinute, FiveMinutes, TenMinutes };

[[nodiscard]] Epoch horizon_seconds(Horizon h) noexcept;
[[nodiscard]] std::string to_string(Horizon h);
/// Accepts "1m", "5m", "10m".
[[nodiscard]] Horizon parse_horizon(const std::string& s);

/// Average raw volume per intraday slot, fitted on training data only.
struct SeasonalProfile {
    Epoch interval = 60;
    std::vector<double> values;
    std::string fitted_on;

    [[nodiscard]] std::size_t slot(Epoch t) const noexcept;
    [[nodiscard]] double factor(Epoch t) const noexcept { return values[slot(t)]; }
};

[[nodiscard]] SeasonalProfile fit_seasonal_profile(const std::vector<std::pair<Epoch, double>>& train_volumes,
                                                   Epoch interval, std::string fitted_on = {});

[[nodiscard]] double deseasonalize(double v, Epoch t, const SeasonalProfile& profile) noexcept;

struct ScaledMoments {
    double mean = 0.0;
    double var = 0.0;
};

/// Maps (mean, variance) of y back to the raw-volume scale: (a*mean, a^2*var).
[[nodiscard]] ScaledMoments reseasonalize_mean_var(double mean_y, double var_y, Epoch t,
                                                   const SeasonalProfile& profile);

/// Per-source feature dimensions and lag window length.
struct WindowShape {
    std::vector<std::size_t> dims;
    std::size_t h = 0;

    [[nodiscard]] std::size_t sources() const noexcept { return dims.size(); }
    /// Length of the concatenated (source-major, feature, lag-minor) vector.
    [[nodiscard]] std::size_t flat_size() const noexcept;

    friend bool operator==(const WindowShape&, const WindowShape&) = default;
};

/// One prediction target with its lagged per-source windows. Window s is a
/// d_s x h matrix; column j holds the features of interval t - h + j, so the
/// last column is the interval immediately before the target.
struct ModelInstance {
    Epoch t = 0;
    double v = 0.0;
    double a = 1.0;
    double y = 0.0;
    std::vector<Matrix> windows;
};

[[nodiscard]] WindowShape shape_of(const ModelInstance& instance);

/// Concatenates windows source-major; within a source, feature-major with lag
/// varying fastest.
[[nodiscard]] std::vector<double> flatten(const ModelInstance& instance);

/// Builds one instance per grid index t >= h. `sources[s][i]` must be the
/// feature vector of source s at grid[i]. Instances carry a = 1, y = v until
/// apply_profile() is called.
[[nodiscard]] std::vector<ModelInstance> build_windows(const std::vector<Epoch>& grid,
                                                       const std::vector<std::vector<market_data::FeatureVector>>& sources,
                                                       const std::vector<double>& volumes, std::size_t h);

struct FilterResult {
    std::vector<ModelInstance> kept;
    double dropped_fraction = 0.0;
};

/// Drops instances whose target volume is zero. Their feature rows stay
/// inside neighbouring windows.
[[nodiscard]] FilterResult filter_zero_volume(std::vector<ModelInstance> instances);

struct SplitFractions {
    double train = 0.7;
    double validation = 0.1;
};

struct DatasetSplit {
    std::vector<ModelInstance> train;
    std::vector<ModelInstance> validation;
    std::vector<ModelInstance> test;
};

/// Contiguous time-ordered split: floor(0.7 n), floor(0.1 n), remainder.
[[nodiscard]] DatasetSplit split_dataset(std::vector<ModelInstance> instances, SplitFractions fractions = {});

/// Sets a = profile factor and y = v / a on every instance.
void apply_profile(std::vector<ModelInstance>& instances, const SeasonalProfile& profile);

/// Total traded size per interval of the target market's transaction features.
[[nodiscard]] std::vector<double> target_volume(const std::vector<market_data::FeatureVector>& trade_features);

struct DatasetConfig {
    Horizon horizon = Horizon::OneMinute;
    std::size_t window_h = 10;
    SplitFractions split;
};

struct Dataset {
    DatasetConfig config;
    WindowShape shape;
    SeasonalProfile profile;
    DatasetSplit split;
    double dropped_fraction = 0.0;
    std::size_t total_instances = 0;
};

/// Windows -> zero filter -> split -> seasonal profile on the training span ->
/// deseasonalized targets.
[[nodiscard]] Dataset build_dataset(const std::vector<Epoch>& grid,
                                    const std::vector<std::vector<market_data::FeatureVector>>& sources,
                                    const std::vector<double>& volumes, const DatasetConfig& config);

/// Per (source, feature) z-scores fitted on training windows. Features with
/// zero spread keep scale 1.
struct FeatureScaler {
    std::vector<std::vector<double>> mean;
    std::vector<std::vector<double>> scale;

    [[nodiscard]] bool empty() const noexcept { return mean.empty(); }
    void apply(std::vector<ModelInstance>& instances) const;
};

/// Statistics over the last column of every training window, which visits
/// each interval once for consecutive instances.
[[nodiscard]] FeatureScaler fit_scaler(const std::vector<ModelInstance>& train);

}  // namespace volmix::preprocess
