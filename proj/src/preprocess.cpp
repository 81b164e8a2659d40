#include "volmix/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace volmix::preprocess {

Epoch horizon_seconds(Horizon h) noexcept {
    switch (h) {
        case Horizon::OneMinute: return 60;
        case Horizon::FiveMinutes: return 300;
        case Horizon::TenMinutes: return 600;
    }
    return 60;
}

std::string to_string(Horizon h) {
    switch (h) {
        case Horizon::OneMinute: return "1m";
        case Horizon::FiveMinutes: return "5m";
        case Horizon::TenMinutes: return "10m";
    }
    return "1m";
}

Horizon parse_horizon(const std::string& s) {
    if (s == "1m") return Horizon::OneMinute;
    if (s == "5m") return Horizon::FiveMinutes;
    if (s == "10m") return Horizon::TenMinutes;
    throw Error(Errc::InvalidArgument, "horizon must be one of 1m, 5m, 10m (got '" + s + "')");
}

std::size_t SeasonalProfile::slot(Epoch t) const noexcept {
    Epoch r = t % kSecondsPerDay;
    if (r < 0) r += kSecondsPerDay;
    return static_cast<std::size_t>(r / interval);
}

SeasonalProfile fit_seasonal_profile(const std::vector<std::pair<Epoch, double>>& train_volumes, Epoch interval,
                                     std::string fitted_on) {
    if (interval <= 0 || kSecondsPerDay % interval != 0) {
        throw Error(Errc::InvalidArgument, "interval must divide one day");
    }
    SeasonalProfile profile;
    profile.interval = interval;
    profile.fitted_on = std::move(fitted_on);
    const auto slots = static_cast<std::size_t>(kSecondsPerDay / interval);
    std::vector<double> sum(slots, 0.0);
    std::vector<std::size_t> count(slots, 0);
    profile.values.assign(slots, 0.0);
    for (const auto& [t, v] : train_volumes) {
        const auto i = profile.slot(t);
        sum[i] += v;
        ++count[i];
    }
    for (std::size_t i = 0; i < slots; ++i) {
        if (count[i] == 0) throw Error(Errc::EmptySeasonalSlot, "no training observation for intraday slot", i);
        profile.values[i] = sum[i] / static_cast<double>(count[i]);
        if (!(profile.values[i] > 0.0)) throw Error(Errc::EmptySeasonalSlot, "zero mean volume in slot", i);
    }
    return profile;
}

double deseasonalize(double v, Epoch t, const SeasonalProfile& profile) noexcept { return v / profile.factor(t); }

ScaledMoments reseasonalize_mean_var(double mean_y, double var_y, Epoch t, const SeasonalProfile& profile) {
    if (var_y < 0.0) throw Error(Errc::InvalidArgument, "variance must be non-negative");
    const double a = profile.factor(t);
    return {a * mean_y, a * a * var_y};
}

std::size_t WindowShape::flat_size() const noexcept {
    std::size_t n = 0;
    for (auto d : dims) n += d * h;
    return n;
}

WindowShape shape_of(const ModelInstance& instance) {
    WindowShape shape;
    for (const auto& w : instance.windows) shape.dims.push_back(w.rows());
    shape.h = instance.windows.empty() ? 0 : instance.windows.front().cols();
    return shape;
}

std::vector<double> flatten(const ModelInstance& instance) {
    std::vector<double> x;
    for (const auto& w : instance.windows) x.insert(x.end(), w.data().begin(), w.data().end());
    return x;
}

std::vector<ModelInstance> build_windows(const std::vector<Epoch>& grid,
                                         const std::vector<std::vector<market_data::FeatureVector>>& sources,
                                         const std::vector<double>& volumes, std::size_t h) {
    if (h == 0) throw Error(Errc::InvalidArgument, "window length h must be >= 1");
    if (volumes.size() != grid.size()) throw Error(Errc::SourceGridMismatch, "volume series length differs from grid");
    std::vector<std::size_t> dims;
    for (std::size_t s = 0; s < sources.size(); ++s) {
        const auto& rows = sources[s];
        if (rows.size() != grid.size()) throw Error(Errc::SourceGridMismatch, "source length differs from grid", s);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].interval_start != grid[i]) {
                throw Error(Errc::SourceGridMismatch, "source timestamps not aligned with grid", s);
            }
            if (!rows.empty() && rows[i].values.size() != rows[0].values.size()) {
                throw Error(Errc::SourceGridMismatch, "feature dimension changes within source", s);
            }
        }
        dims.push_back(rows.empty() ? 0 : rows[0].values.size());
    }

    std::vector<ModelInstance> out;
    if (grid.size() <= h) return out;
    out.reserve(grid.size() - h);
    for (std::size_t t = h; t < grid.size(); ++t) {
        ModelInstance inst;
        inst.t = grid[t];
        inst.v = volumes[t];
        inst.a = 1.0;
        inst.y = volumes[t];
        inst.windows.reserve(sources.size());
        for (std::size_t s = 0; s < sources.size(); ++s) {
            Matrix w(dims[s], h);
            for (std::size_t j = 0; j < h; ++j) {
                const auto& fv = sources[s][t - h + j].values;
                for (std::size_t f = 0; f < dims[s]; ++f) w(f, j) = fv[f];
            }
            inst.windows.push_back(std::move(w));
        }
        out.push_back(std::move(inst));
    }
    return out;
}

FilterResult filter_zero_volume(std::vector<ModelInstance> instances) {
    FilterResult r;
    const std::size_t n = instances.size();
    r.kept.reserve(n);
    for (auto& inst : instances) {
        if (inst.v > 0.0) r.kept.push_back(std::move(inst));
    }
    r.dropped_fraction = n == 0 ? 0.0 : static_cast<double>(n - r.kept.size()) / static_cast<double>(n);
    return r;
}

DatasetSplit split_dataset(std::vector<ModelInstance> instances, SplitFractions fractions) {
    const std::size_t n = instances.size();
    if (n < 10) throw Error(Errc::TooFewInstances, "need at least 10 instances to split", n);
    if (!(fractions.train > 0.0) || !(fractions.validation >= 0.0) || fractions.train + fractions.validation >= 1.0) {
        throw Error(Errc::InvalidArgument, "invalid split fractions");
    }
    // the small epsilon keeps 0.7 * 10 = 6.999999999999999 from flooring to 6
    const auto n_train = static_cast<std::size_t>(std::floor(fractions.train * static_cast<double>(n) + 1e-9));
    const auto n_val = static_cast<std::size_t>(std::floor(fractions.validation * static_cast<double>(n) + 1e-9));
    DatasetSplit split;
    auto first = std::make_move_iterator(instances.begin());
    split.train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
    split.validation.assign(first + static_cast<std::ptrdiff_t>(n_train),
                            first + static_cast<std::ptrdiff_t>(n_train + n_val));
    split.test.assign(first + static_cast<std::ptrdiff_t>(n_train + n_val), std::make_move_iterator(instances.end()));
    return split;
}

void apply_profile(std::vector<ModelInstance>& instances, const SeasonalProfile& profile) {
    for (auto& inst : instances) {
        inst.a = profile.factor(inst.t);
        inst.y = inst.v / inst.a;
    }
}

std::vector<double> target_volume(const std::vector<market_data::FeatureVector>& trade_features) {
    std::vector<double> v;
    v.reserve(trade_features.size());
    for (const auto& f : trade_features) {
        if (f.source.kind != market_data::Kind::Transactions) {
            throw Error(Errc::InvalidArgument, "target volume needs transaction features");
        }
        v.push_back(f.values[0] + f.values[1]);
    }
    return v;
}

Dataset build_dataset(const std::vector<Epoch>& grid,
                      const std::vector<std::vector<market_data::FeatureVector>>& sources,
                      const std::vector<double>& volumes, const DatasetConfig& config) {
    const Epoch interval = horizon_seconds(config.horizon);
    for (std::size_t i = 1; i < grid.size(); ++i) {
        if (grid[i] - grid[i - 1] != interval) throw Error(Errc::SourceGridMismatch, "grid step differs from horizon", i);
    }

    Dataset ds;
    ds.config = config;
    auto windows = build_windows(grid, sources, volumes, config.window_h);
    auto filtered = filter_zero_volume(std::move(windows));
    ds.dropped_fraction = filtered.dropped_fraction;
    ds.total_instances = filtered.kept.size();
    ds.split = split_dataset(std::move(filtered.kept), config.split);

    const Epoch train_end = ds.split.train.back().t;
    std::vector<std::pair<Epoch, double>> train_volumes;
    for (std::size_t i = 0; i < grid.size() && grid[i] <= train_end; ++i) train_volumes.emplace_back(grid[i], volumes[i]);
    ds.profile = fit_seasonal_profile(train_volumes, interval,
                                      std::to_string(grid.front()) + ".." + std::to_string(train_end));

    apply_profile(ds.split.train, ds.profile);
    apply_profile(ds.split.validation, ds.profile);
    apply_profile(ds.split.test, ds.profile);
    ds.shape = shape_of(ds.split.train.front());
    return ds;
}

FeatureScaler fit_scaler(const std::vector<ModelInstance>& train) {
    if (train.empty()) throw Error(Errc::EmptySet, "scaler needs training instances");
    const WindowShape shape = shape_of(train.front());
    FeatureScaler sc;
    for (std::size_t s = 0; s < shape.sources(); ++s) {
        const std::size_t d = shape.dims[s];
        std::vector<double> sum(d, 0.0), sq(d, 0.0);
        for (const auto& inst : train) {
            for (std::size_t f = 0; f < d; ++f) {
                const double x = inst.windows[s](f, shape.h - 1);
                sum[f] += x;
                sq[f] += x * x;
            }
        }
        const auto n = static_cast<double>(train.size());
        std::vector<double> mean(d), scale(d);
        for (std::size_t f = 0; f < d; ++f) {
            mean[f] = sum[f] / n;
            const double var = std::max(0.0, sq[f] / n - mean[f] * mean[f]);
            const double sd = std::sqrt(var);
            scale[f] = sd > 1e-12 * std::max(1.0, std::abs(mean[f])) ? sd : 1.0;
        }
        sc.mean.push_back(std::move(mean));
        sc.scale.push_back(std::move(scale));
    }
    return sc;
}

void FeatureScaler::apply(std::vector<ModelInstance>& instances) const {
    for (std::size_t i = 0; i < instances.size(); ++i) {
        auto& inst = instances[i];
        if (inst.windows.size() != mean.size()) throw Error(Errc::ShapeMismatch, "scaler source count differs", i);
        for (std::size_t s = 0; s < mean.size(); ++s) {
            Matrix& w = inst.windows[s];
            if (w.rows() != mean[s].size()) throw Error(Errc::ShapeMismatch, "scaler feature count differs", i);
            for (std::size_t f = 0; f < w.rows(); ++f) {
                for (std::size_t j = 0; j < w.cols(); ++j) w(f, j) = (w(f, j) - mean[s][f]) / scale[s][f];
            }
        }
    }
}

}  // namespace volmix::preprocess
