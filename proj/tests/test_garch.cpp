#include "volmix/garch.hpp"
#include "volmix/synthetic.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace volmix;
using namespace volmix::garch;

namespace {

std::vector<double> white_noise(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> out(n);
    for (double& v : out) v = z(rng);
    return out;
}

FittedArmaxGarch flat_model(double mu, double omega, double alpha, double beta) {
    FittedArmaxGarch f;
    f.spec = {1, 1, false, 0};
    f.mu = mu;
    f.phi = {0.0};
    f.theta = {0.0};
    f.garch.omega = omega;
    f.garch.alpha = alpha;
    f.garch.beta = beta;
    return f;
}

}  // namespace

TEST(Spec, OrderBounds) {
    EXPECT_NO_THROW((ArmaxSpec{1, 10}.validate()));
    EXPECT_THROW((ArmaxSpec{0, 1}.validate()), Error);
    EXPECT_THROW((ArmaxSpec{1, 11}.validate()), Error);
}

TEST(Stationarity, Roots) {
    EXPECT_TRUE(is_stationary(std::vector<double>{0.5}));
    EXPECT_FALSE(is_stationary(std::vector<double>{1.0}));
    EXPECT_FALSE(is_stationary(std::vector<double>{1.2}));
    EXPECT_TRUE(is_stationary(std::vector<double>{0.5, 0.3}));
    // 1 - 0.5 z - 0.6 z^2 has a root inside the unit circle
    EXPECT_FALSE(is_stationary(std::vector<double>{0.5, 0.6}));
}

TEST(Fit, WhiteNoiseHasNoStructure) {
    const auto y = white_noise(20000, 1);
    // ARMA(1,1) on white noise is only identified up to phi = -theta, so the
    // check is on the implied moving-average weights (phi + theta) phi^(j-1)
    const auto f = fit(y, nullptr, {1, 1});
    double w = f.phi[0] + f.theta[0];
    for (int j = 1; j <= 20; ++j, w *= f.phi[0]) EXPECT_LT(std::abs(w), 0.1) << j;
    EXPECT_LT(f.garch.alpha, 0.05);
    EXPECT_GT(f.garch.omega, 0.0);
    EXPECT_LT(f.garch.alpha + f.garch.beta, 1.0);
}

TEST(Fit, RecoversArma21) {
    synthetic::GarchSimSpec s;
    s.n = 20000;
    s.seed = 4;
    s.omega = 1.0;
    s.alpha = 0.0;
    s.beta = 0.0;
    s.mu = 2.0;
    s.phi = {0.5, -0.3};
    s.theta = {0.4};
    const auto y = synthetic::gen_garch_series(s);
    const auto f = fit(y, nullptr, {2, 1});
    EXPECT_NEAR(f.phi[0], 0.5, 0.05);
    EXPECT_NEAR(f.phi[1], -0.3, 0.05);
    EXPECT_NEAR(f.theta[0], 0.4, 0.05);
    EXPECT_NEAR(f.mu, 2.0, 0.05);
}

TEST(Fit, RecoversGarchWithinStandardErrors) {
    synthetic::GarchSimSpec s;
    s.n = 20000;
    s.seed = 8;
    s.omega = 0.1;
    s.alpha = 0.1;
    s.beta = 0.8;
    const auto y = synthetic::gen_garch_series(s);
    const auto f = fit(y, nullptr, {1, 1});
    EXPECT_LT(std::abs(f.garch.alpha - 0.1), 4.0 * f.garch.se_alpha);
    EXPECT_LT(std::abs(f.garch.omega - 0.1), 4.0 * f.garch.se_omega);
    EXPECT_NEAR(f.garch.alpha, 0.1, 0.03);
    EXPECT_NEAR(f.garch.beta, 0.8, 0.08);
    EXPECT_GT(f.garch.se_alpha, 0.0);
}

TEST(Fit, Deterministic) {
    const auto y = white_noise(3000, 2);
    const auto a = fit(y, nullptr, {2, 1});
    const auto b = fit(y, nullptr, {2, 1});
    EXPECT_EQ(a.loglik, b.loglik);
    EXPECT_EQ(a.phi, b.phi);
}

TEST(Fit, AicCountsParameters) {
    const auto y = white_noise(2000, 3);
    const auto f = fit(y, nullptr, {2, 2});
    EXPECT_EQ(f.parameter_count(), 1u + 4u + 3u);
    EXPECT_NEAR(f.aic, 2.0 * static_cast<double>(f.parameter_count()) - 2.0 * f.loglik, 1e-9);
}

TEST(Fit, WhiteNoiseExogRaisesAic) {
    int higher = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto y = white_noise(2000, 100 + seed);
        const auto xcol = white_noise(2000, 200 + seed);
        Matrix x(2000, 1);
        for (std::size_t i = 0; i < 2000; ++i) x(i, 0) = xcol[i];
        const auto plain = fit(y, nullptr, {1, 1});
        const auto with = fit(y, &x, {1, 1, true, 1});
        ASSERT_EQ(with.psi.size(), 1u);
        if (with.aic >= plain.aic) ++higher;
    }
    EXPECT_GE(higher, 8);
}

TEST(SelectOrder, TableAndSingleCandidate) {
    const auto y = white_noise(1500, 5);
    const std::vector<int> one{2}, ps{1, 2}, qs{1, 2, 3};
    const auto single = select_order(y, nullptr, one, one);
    EXPECT_EQ(single.best.spec.p, 2);
    EXPECT_EQ(single.best.spec.q, 2);
    EXPECT_EQ(single.table.size(), 1u);
    const auto grid = select_order(y, nullptr, ps, qs);
    EXPECT_EQ(grid.table.size(), 6u);
    for (const auto& row : grid.table) {
        if (row.ok) EXPECT_GE(row.aic, grid.best.aic);
    }
}

TEST(Forecast, ConstantVarianceAndMean) {
    const auto f = flat_model(1.5, 0.3, 0.0, 0.0);
    History h{{0.4, -0.2}, {1.0, 2.0}, 5.0};
    const auto o = forecast(f, h);
    EXPECT_EQ(o.var_log, 0.3);
    EXPECT_EQ(o.mean_log, 1.5);
}

TEST(Forecast, GarchRecursionOneStep) {
    const auto f = flat_model(0.0, 0.1, 0.2, 0.7);
    History h{{0.0}, {1.5}, 2.0};
    EXPECT_NEAR(forecast(f, h).var_log, 0.1 + 0.2 * 2.25 + 0.7 * 2.0, 1e-14);
}

TEST(Forecast, VarianceAtLeastOmega) {
    synthetic::GarchSimSpec s;
    s.n = 3000;
    s.seed = 6;
    s.omega = 0.05;
    s.alpha = 0.1;
    s.beta = 0.85;
    const auto y = synthetic::gen_garch_series(s);
    const auto f = fit(y, nullptr, {1, 1});
    for (const auto& o : rolling_forecasts(f, y, nullptr, 100)) EXPECT_GE(o.var_log, f.garch.omega);
}

TEST(Forecast, RollingUsesOnlyThePast) {
    const auto y = white_noise(800, 9);
    auto f = fit(y, nullptr, {1, 1});
    // white noise fits alpha near 0; give the variance a visible response
    f.phi[0] = 0.3;
    f.garch.alpha = 0.1;
    f.garch.beta = 0.8;
    const auto all = rolling_forecasts(f, y, nullptr, 700);
    auto changed = y;
    for (std::size_t i = 750; i < changed.size(); ++i) changed[i] += 10.0;
    const auto after = rolling_forecasts(f, changed, nullptr, 700);
    ASSERT_EQ(all.size(), 100u);
    for (std::size_t i = 0; i <= 50; ++i) {
        EXPECT_NEAR(all[i].mean_log, after[i].mean_log, 1e-12) << i;
        EXPECT_EQ(all[i].var_log, after[i].var_log);
    }
    EXPECT_NE(all[51].mean_log, after[51].mean_log);
    EXPECT_NE(all[51].var_log, after[51].var_log);
}

TEST(Simulation, StationaryVariance) {
    synthetic::GarchSimSpec s;
    s.n = 1'000'000;
    s.seed = 12;
    s.omega = 0.2;
    s.alpha = 0.1;
    s.beta = 0.7;
    const auto y = synthetic::gen_garch_series(s);
    double sq = 0.0;
    for (double v : y) sq += v * v;
    EXPECT_NEAR(sq / static_cast<double>(y.size()), 1.0, 0.05);
}

TEST(Filter, LoglikMatchesDirectSum) {
    const auto eps = white_noise(50, 4);
    const auto s2 = garch_filter(eps, 0.2, 0.1, 0.7);
    double ll = 0.0;
    for (std::size_t t = 0; t < eps.size(); ++t) {
        ll += -0.5 * (std::log(2.0 * M_PI) + std::log(s2[t]) + eps[t] * eps[t] / s2[t]);
    }
    EXPECT_NEAR(garch_loglik(eps, 0.2, 0.1, 0.7), ll, 1e-10);
    EXPECT_NEAR(s2[1], 0.2 + 0.1 * eps[0] * eps[0] + 0.7 * s2[0], 1e-14);
}

TEST(Acf, WhiteNoiseMostlyInsideBand) {
    const auto e = residual_acf(white_noise(10000, 21), 20);
    ASSERT_EQ(e.values.size(), 20u);
    EXPECT_DOUBLE_EQ(e.band, 1.96 / 100.0);
    int inside = 0;
    for (double a : e.values) inside += std::abs(a) <= e.band;
    EXPECT_GE(inside, 17);
}

TEST(Acf, AlternatingSeries) {
    std::vector<double> x(1000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 3.0 + (i % 2 == 0 ? 1.0 : -1.0);
    EXPECT_NEAR(residual_acf(x, 2).values[0], -1.0, 1e-2);
    EXPECT_NEAR(residual_acf(x, 2).values[1], 1.0, 1e-2);
}

TEST(PValue, TwoSidedNormal) {
    EXPECT_NEAR(two_sided_p_value(1.96, 1.0), 0.05, 1e-3);
    EXPECT_TRUE(std::isnan(two_sided_p_value(1.0, 0.0)));
}
