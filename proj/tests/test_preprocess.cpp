#include "volmix/preprocess.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace volmix;
using namespace volmix::preprocess;
using market_data::FeatureVector;
using market_data::kAllSources;

namespace {

std::vector<std::pair<Epoch, double>> series(Epoch interval, std::size_t n, auto value) {
    std::vector<std::pair<Epoch, double>> out;
    for (std::size_t i = 0; i < n; ++i) out.emplace_back(static_cast<Epoch>(i) * interval, value(i));
    return out;
}

/// Four sources whose feature f of source s at grid index i is 1000 s + 10 f + i.
std::vector<std::vector<FeatureVector>> indexed_sources(const std::vector<Epoch>& grid) {
    std::vector<std::vector<FeatureVector>> out;
    for (std::size_t s = 0; s < 4; ++s) {
        std::vector<FeatureVector> src;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            FeatureVector fv;
            fv.source = kAllSources[s];
            fv.interval_start = grid[i];
            for (std::size_t f = 0; f < market_data::feature_dim(fv.source.kind); ++f) {
                fv.values.push_back(1000.0 * static_cast<double>(s) + 10.0 * static_cast<double>(f) + static_cast<double>(i));
            }
            src.push_back(fv);
        }
        out.push_back(src);
    }
    return out;
}

}  // namespace

TEST(Horizon, ParseAndSeconds) {
    EXPECT_EQ(horizon_seconds(parse_horizon("1m")), 60);
    EXPECT_EQ(horizon_seconds(parse_horizon("5m")), 300);
    EXPECT_EQ(horizon_seconds(parse_horizon("10m")), 600);
    EXPECT_THROW((void)parse_horizon("2m"), Error);
}

TEST(SeasonalProfile, ConstantSeries) {
    const auto p = fit_seasonal_profile(series(60, 2 * 1440, [](std::size_t) { return 5.0; }), 60);
    ASSERT_EQ(p.values.size(), 1440u);
    for (double a : p.values) EXPECT_EQ(a, 5.0);
    EXPECT_EQ(deseasonalize(5.0, 123 * 60, p), 1.0);
}

TEST(SeasonalProfile, SlotMean) {
    auto s = series(60, 2 * 1440, [](std::size_t) { return 1.0; });
    s[0].second = 2.0;
    s[1440].second = 4.0;
    EXPECT_DOUBLE_EQ(fit_seasonal_profile(s, 60).values[0], 3.0);
}

TEST(SeasonalProfile, MissingSlot) {
    auto s = series(60, 1440, [](std::size_t) { return 1.0; });
    s.erase(s.begin() + 17);
    try {
        (void)fit_seasonal_profile(s, 60);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::EmptySeasonalSlot);
        EXPECT_EQ(e.position(), 17u);
    }
}

TEST(SeasonalProfile, ZeroMeanSlotIsEmpty) {
    auto s = series(60, 1440, [](std::size_t) { return 1.0; });
    s[3].second = 0.0;
    EXPECT_THROW((void)fit_seasonal_profile(s, 60), Error);
}

TEST(SeasonalProfile, CoarserHorizonSlotCounts) {
    EXPECT_EQ(fit_seasonal_profile(series(300, 288, [](std::size_t) { return 1.0; }), 300).values.size(), 288u);
    EXPECT_EQ(fit_seasonal_profile(series(600, 144, [](std::size_t) { return 1.0; }), 600).values.size(), 144u);
}

TEST(Deseasonalize, Examples) {
    SeasonalProfile p;
    p.interval = 60;
    p.values.assign(1440, 3.0);
    EXPECT_EQ(deseasonalize(6.0, 0, p), 2.0);
    EXPECT_EQ(deseasonalize(3.0, 60, p), 1.0);
    const auto a = reseasonalize_mean_var(1.0, 0.0, 0, p);
    EXPECT_EQ(a.mean, 3.0);
    EXPECT_EQ(a.var, 0.0);
    const auto b = reseasonalize_mean_var(2.0, 4.0, 0, p);
    EXPECT_EQ(b.mean, 6.0);
    EXPECT_EQ(b.var, 36.0);
}

TEST(Deseasonalize, RoundTripEverySlot) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.01, 50.0);
    SeasonalProfile p;
    p.interval = 60;
    for (int i = 0; i < 1440; ++i) p.values.push_back(u(rng));
    for (int i = 0; i < 1440; ++i) {
        const Epoch t = 60 * i;
        const double v = u(rng);
        const double y = deseasonalize(v, t, p);
        EXPECT_NEAR(reseasonalize_mean_var(y, 0.0, t, p).mean, v, 1e-12 * v);
    }
}

TEST(FilterZero, Fractions) {
    std::vector<ModelInstance> inst(100);
    for (std::size_t i = 0; i < inst.size(); ++i) inst[i].v = 1.0;
    EXPECT_EQ(filter_zero_volume(inst).dropped_fraction, 0.0);
    for (int i : {3, 30, 31, 90}) inst[static_cast<std::size_t>(i)].v = 0.0;
    const auto r = filter_zero_volume(inst);
    EXPECT_DOUBLE_EQ(r.dropped_fraction, 0.04);
    EXPECT_EQ(r.kept.size(), 96u);
}

TEST(BuildWindows, CountAndSingleLag) {
    const auto grid = market_data::make_grid(0, 60, 4);
    const auto src = indexed_sources(grid);
    const std::vector<double> vol{1, 2, 3, 4};
    EXPECT_EQ(build_windows(grid, src, vol, 3).size(), 1u);
    const auto w = build_windows(grid, src, vol, 1);
    ASSERT_EQ(w.size(), 3u);
    EXPECT_EQ(w[0].t, 60);
    EXPECT_EQ(w[0].v, 2.0);
    EXPECT_EQ(w[0].windows[1](2, 0), 1000.0 + 20.0 + 0.0);
}

TEST(BuildWindows, NoLookaheadAgainstBruteForce) {
    const std::size_t n = 30, h = 4;
    const auto grid = market_data::make_grid(600, 60, n);
    const auto src = indexed_sources(grid);
    std::vector<double> vol(n, 1.0);
    const auto w = build_windows(grid, src, vol, h);
    ASSERT_EQ(w.size(), n - h);
    for (const auto& inst : w) {
        const auto ti = static_cast<std::size_t>((inst.t - 600) / 60);
        for (std::size_t s = 0; s < 4; ++s) {
            for (std::size_t f = 0; f < inst.windows[s].rows(); ++f) {
                for (std::size_t j = 0; j < h; ++j) {
                    const std::size_t idx = ti - h + j;
                    EXPECT_LT(grid[idx], inst.t);
                    EXPECT_EQ(inst.windows[s](f, j), src[s][idx].values[f]);
                }
            }
        }
    }
}

TEST(BuildWindows, ShiftedFeaturesChangeWindows) {
    const auto grid = market_data::make_grid(0, 60, 12);
    auto src = indexed_sources(grid);
    const std::vector<double> vol(12, 1.0);
    const auto base = build_windows(grid, src, vol, 3);
    for (auto& s : src) {
        for (std::size_t i = s.size() - 1; i > 0; --i) s[i].values = s[i - 1].values;
    }
    const auto shifted = build_windows(grid, src, vol, 3);
    for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NE(base[i].windows[0], shifted[i].windows[0]);
}

TEST(BuildWindows, GridMismatch) {
    const auto grid = market_data::make_grid(0, 60, 6);
    auto src = indexed_sources(grid);
    src[2][3].interval_start += 1;
    try {
        (void)build_windows(grid, src, std::vector<double>(6, 1.0), 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::SourceGridMismatch);
    }
}

TEST(Split, SizesAndOrder) {
    for (std::size_t n : {100u, 10u}) {
        std::vector<ModelInstance> inst(n);
        for (std::size_t i = 0; i < n; ++i) inst[i].t = static_cast<Epoch>(i);
        const auto sp = split_dataset(inst);
        EXPECT_EQ(sp.train.size(), n * 7 / 10);
        EXPECT_EQ(sp.validation.size(), n / 10);
        EXPECT_EQ(sp.test.size(), n - n * 7 / 10 - n / 10);
        EXPECT_LT(sp.train.back().t, sp.validation.front().t);
        EXPECT_LT(sp.validation.back().t, sp.test.front().t);
    }
    std::vector<ModelInstance> few(9);
    try {
        (void)split_dataset(few);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::TooFewInstances);
    }
}

TEST(Flatten, SourceMajorLagMinor) {
    ModelInstance inst;
    Matrix a(2, 3), b(1, 3);
    for (std::size_t f = 0; f < 2; ++f) {
        for (std::size_t j = 0; j < 3; ++j) a(f, j) = 10.0 * static_cast<double>(f) + static_cast<double>(j);
    }
    for (std::size_t j = 0; j < 3; ++j) b(0, j) = 100.0 + static_cast<double>(j);
    inst.windows = {a, b};
    EXPECT_EQ(flatten(inst), (std::vector<double>{0, 1, 2, 10, 11, 12, 100, 101, 102}));
    EXPECT_EQ(shape_of(inst).flat_size(), 9u);
}

TEST(Dataset, EndToEndInvariants) {
    const std::size_t days = 3;
    const auto grid = market_data::make_grid(0, 60, days * 1440);
    const auto src = indexed_sources(grid);
    // every 37th interval is empty; 37 does not divide 1440 so no slot is empty on two days
    std::vector<double> vol;
    for (std::size_t i = 0; i < grid.size(); ++i) vol.push_back(i % 37 == 0 ? 0.0 : 1.0 + static_cast<double>(i % 1440) / 100.0);
    const auto ds = build_dataset(grid, src, vol, DatasetConfig{});
    EXPECT_EQ(ds.shape.dims, (std::vector<std::size_t>{6, 13, 6, 13}));
    EXPECT_NEAR(ds.dropped_fraction, 1.0 / 37.0, 0.002);
    for (const auto* part : {&ds.split.train, &ds.split.validation, &ds.split.test}) {
        for (const auto& inst : *part) {
            EXPECT_GT(inst.v, 0.0);
            EXPECT_EQ(inst.y, inst.v / inst.a);
            EXPECT_EQ(inst.a, ds.profile.factor(inst.t));
        }
    }
}

TEST(Dataset, HorizonSizeRatios) {
    const std::size_t days = 4;
    auto count = [&](Epoch interval) {
        const auto grid = market_data::make_grid(0, interval, days * static_cast<std::size_t>(kSecondsPerDay / interval));
        return build_windows(grid, indexed_sources(grid), std::vector<double>(grid.size(), 1.0), 10).size();
    };
    const double n1 = static_cast<double>(count(60));
    EXPECT_NEAR(static_cast<double>(count(300)), n1 / 5.0, static_cast<double>(days) + 10.0);
    EXPECT_NEAR(static_cast<double>(count(600)), n1 / 10.0, static_cast<double>(days) + 10.0);
}

TEST(Scaler, StandardizesTrainingColumns) {
    const auto grid = market_data::make_grid(0, 60, 200);
    auto src = indexed_sources(grid);
    const auto inst = build_windows(grid, src, std::vector<double>(200, 1.0), 5);
    auto copy = inst;
    const auto sc = fit_scaler(copy);
    sc.apply(copy);
    double sum = 0.0, sq = 0.0;
    for (const auto& i : copy) {
        sum += i.windows[0](0, 4);
        sq += i.windows[0](0, 4) * i.windows[0](0, 4);
    }
    const double n = static_cast<double>(copy.size());
    EXPECT_NEAR(sum / n, 0.0, 1e-9);
    EXPECT_NEAR(sq / n, 1.0, 1e-9);
    EXPECT_THROW((void)fit_scaler({}), Error);
}
