#include "volmix/tme.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace volmix;
using namespace volmix::tme;

namespace {

const WindowShape kShape{{3, 2}, 2};

ModelInstance random_instance(const WindowShape& shape, std::mt19937_64& rng, double y = 1.0) {
    std::normal_distribution<double> n(0.0, 1.0);
    ModelInstance inst;
    inst.y = y;
    inst.v = y;
    for (std::size_t d : shape.dims) {
        Matrix m(d, shape.h);
        for (double& x : m.data()) x = n(rng);
        inst.windows.push_back(m);
    }
    return inst;
}

ModelInstance zero_instance(const WindowShape& shape, double y = 1.0) {
    ModelInstance inst;
    inst.y = y;
    inst.v = y;
    for (std::size_t d : shape.dims) inst.windows.emplace_back(d, shape.h);
    return inst;
}

TmeParams random_params(const WindowShape& shape, std::mt19937_64& rng, double scale = 0.3) {
    std::normal_distribution<double> n(0.0, scale);
    TmeParams p(shape);
    for (double& x : p.values()) x = n(rng);
    return p;
}

std::vector<ModelInstance> random_batch(const WindowShape& shape, std::size_t n, std::mt19937_64& rng) {
    std::lognormal_distribution<double> y(0.0, 1.0);
    std::vector<ModelInstance> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(random_instance(shape, rng, y(rng)));
    return out;
}

Ensemble single(const TmeParams& p) { return Ensemble{{p}, {{0, 1, 0}}}; }

double brute_bilinear(const Bilinear& b, const Matrix& x) {
    double s = b.bias;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) s += b.left[i] * x(i, j) * b.right[j];
    }
    return s;
}

struct McMoments {
    double mean, mean_se, var, var_se;
};

McMoments mc_moments(auto draw, std::size_t n, std::mt19937_64& rng) {
    std::vector<double> x(n);
    for (auto& v : x) v = draw(rng);
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(n);
    double m2 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d2 = (v - m) * (v - m);
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= static_cast<double>(n);
    m4 /= static_cast<double>(n);
    const double nn = static_cast<double>(n);
    return {m, std::sqrt(m2 / nn), m2, std::sqrt(std::max(0.0, m4 - m2 * m2) / nn)};
}

}  // namespace

TEST(SourceLogMoments, ZeroWindowGivesBiases) {
    TmeParams p(kShape);
    p.mu(0).bias = 0.7;
    p.sigma(0).bias = -0.4;
    const auto m = source_log_moments(p.source(0), Matrix(3, 2));
    EXPECT_EQ(m.mu, 0.7);
    EXPECT_DOUBLE_EQ(m.sigma2, std::exp(-0.4));
}

TEST(SourceLogMoments, SingleEntrySelection) {
    TmeParams p(kShape);
    p.mu(0).left[0] = 1.0;
    p.mu(0).right[0] = 1.0;
    Matrix x(3, 2);
    x(0, 0) = 3.0;
    EXPECT_EQ(source_log_moments(p.source(0), x).mu, 3.0);
}

TEST(SourceLogMoments, MatchesBruteForce) {
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 100; ++rep) {
        const auto p = random_params(kShape, rng);
        const auto inst = random_instance(kShape, rng);
        for (std::size_t s = 0; s < 2; ++s) {
            const auto th = p.source(s);
            const auto m = source_log_moments(th, inst.windows[s]);
            const double mu = brute_bilinear(th.mu, inst.windows[s]);
            EXPECT_NEAR(m.mu, mu, 1e-12 * std::max(1.0, std::abs(mu)));
            const double s2 = std::exp(brute_bilinear(th.sigma, inst.windows[s]));
            EXPECT_NEAR(m.sigma2, s2, 1e-12 * s2);
        }
    }
}

TEST(SourceLogMoments, ShapeMismatch) {
    TmeParams p(kShape);
    try {
        (void)source_log_moments(p.source(0), Matrix(2, 2));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::ShapeMismatch);
    }
}

TEST(SourceLogMoments, ExponentClamped) {
    TmeParams p(kShape);
    p.sigma(0).bias = 100.0;
    EXPECT_DOUBLE_EQ(source_log_moments(p.source(0), Matrix(3, 2)).sigma2, std::exp(30.0));
    p.sigma(0).bias = -100.0;
    EXPECT_DOUBLE_EQ(source_log_moments(p.source(0), Matrix(3, 2)).sigma2, std::exp(-30.0));
}

TEST(LognormalMoments, DegenerateLimit) {
    const auto m = lognormal_moments(0.0, 1e-14);
    EXPECT_NEAR(m.mean, 1.0, 1e-13);
    EXPECT_NEAR(m.variance, 0.0, 1e-13);
}

TEST(LognormalMoments, StandardCaseAgainstMonteCarlo) {
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> z(0.0, 1.0);
    const auto mc = mc_moments([&](auto& r) { return std::exp(z(r)); }, 10'000'000, rng);
    const auto m = lognormal_moments(0.0, 1.0);
    EXPECT_NEAR(m.mean, 1.64872, 1e-5);
    EXPECT_NEAR(m.variance, 4.67077, 1e-5);
    EXPECT_NEAR(mc.mean, m.mean, 0.01 * m.mean);
    EXPECT_NEAR(mc.var, m.variance, 0.01 * m.variance);
}

TEST(LognormalMoments, ShiftedCaseWithinThreeSe) {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> z(1.0, 0.5);
    const auto mc = mc_moments([&](auto& r) { return std::exp(z(r)); }, 2'000'000, rng);
    const auto m = lognormal_moments(1.0, 0.25);
    EXPECT_LT(std::abs(mc.mean - m.mean), 3.0 * mc.mean_se);
    EXPECT_LT(std::abs(mc.var - m.variance), 3.0 * mc.var_se);
}

TEST(LognormalMoments, OverflowReported) {
    try {
        (void)lognormal_moments(300.0, 100.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::Overflow);
    }
}

TEST(LognormalPdf, IntegratesToOne) {
    // trapezoid over u = ln y, density f(y) dy = f(e^u) e^u du
    for (const auto& [mu, s2] : {std::pair{0.0, 1.0}, std::pair{1.0, 0.25}, std::pair{-2.0, 3.0}}) {
        const double sd = std::sqrt(s2), lo = mu - 12 * sd, hi = mu + 12 * sd;
        const int n = 20000;
        const double du = (hi - lo) / n;
        double sum = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double u = lo + i * du;
            const double w = (i == 0 || i == n) ? 0.5 : 1.0;
            sum += w * std::exp(lognormal_log_pdf(std::exp(u), mu, s2) + u);
        }
        EXPECT_NEAR(sum * du, 1.0, 1e-9);
    }
}

TEST(GateProbs, Examples) {
    const WindowShape shape{{2, 2, 2, 2}, 3};
    TmeParams p(shape);
    const auto inst = zero_instance(shape);
    for (double g : gate_probs(p, inst.windows)) EXPECT_DOUBLE_EQ(g, 0.25);
    p.gate_ref(0).bias = std::log(2.0);
    const auto g = gate_probs(p, inst.windows);
    EXPECT_NEAR(g[0], 0.4, 1e-15);
    for (std::size_t s = 1; s < 4; ++s) EXPECT_NEAR(g[s], 0.2, 1e-15);
}

TEST(GateProbs, SimplexAndShiftInvariance) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> c(-50.0, 50.0);
    for (int rep = 0; rep < 200; ++rep) {
        auto p = random_params(kShape, rng, 2.0);
        const auto inst = random_instance(kShape, rng);
        const auto g = gate_probs(p, inst.windows);
        double sum = 0.0;
        for (double v : g) {
            EXPECT_GT(v, 0.0);
            sum += v;
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
        const double shift = c(rng);
        for (std::size_t s = 0; s < 2; ++s) p.gate_ref(s).bias += shift;
        const auto h = gate_probs(p, inst.windows);
        for (std::size_t s = 0; s < 2; ++s) EXPECT_NEAR(h[s], g[s], 1e-12);
        EXPECT_EQ(std::max_element(g.begin(), g.end()) - g.begin(), std::max_element(h.begin(), h.end()) - h.begin());
    }
}

TEST(GateProbs, ExtremeLogitsStayFinite) {
    TmeParams p(kShape);
    p.gate_ref(0).bias = 800.0;
    p.gate_ref(1).bias = -800.0;
    const auto g = gate_probs(p, zero_instance(kShape).windows);
    EXPECT_EQ(g[0], 1.0);
    EXPECT_GE(g[1], 0.0);
}

TEST(NllLoss, StandardLognormalAtOne) {
    const WindowShape shape{{2}, 2};
    TmeParams p(shape);
    const std::vector<ModelInstance> batch{zero_instance(shape, 1.0)};
    EXPECT_NEAR(nll_loss(p, batch, 0.0), 0.5 * std::log(2.0 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(nll_loss(p, batch, 0.0), 0.91894, 1e-5);
    // zero parameters contribute nothing to the penalty
    EXPECT_EQ(nll_loss(p, batch, 3.0), nll_loss(p, batch, 0.0));
}

TEST(NllLoss, PenaltyIsSquaredNorm) {
    std::mt19937_64 rng(8);
    const auto p = random_params(kShape, rng);
    const auto batch = random_batch(kShape, 4, rng);
    double sq = 0.0;
    for (double x : p.values()) sq += x * x;
    EXPECT_NEAR(nll_loss(p, batch, 0.7) - nll_loss(p, batch, 0.0), 0.7 * sq, 1e-12);
}

TEST(NllLoss, MixtureBoundedByBestSource) {
    std::mt19937_64 rng(9);
    for (int rep = 0; rep < 200; ++rep) {
        const auto p = random_params(kShape, rng, 1.0);
        const auto batch = random_batch(kShape, 1, rng);
        const auto& inst = batch[0];
        const auto g = gate_probs(p, inst.windows);
        double best = INFINITY;
        std::size_t arg = 0;
        for (std::size_t s = 0; s < 2; ++s) {
            const auto m = source_log_moments(p.source(s), inst.windows[s]);
            const double nll = -lognormal_log_pdf(inst.y, m.mu, m.sigma2);
            if (nll < best) {
                best = nll;
                arg = s;
            }
        }
        EXPECT_LE(nll_loss(p, batch, 0.0), best + std::log(1.0 / g[arg]) + 1e-12);
    }
}

TEST(NllLoss, NonPositiveTarget) {
    TmeParams p(kShape);
    const std::vector<ModelInstance> batch{zero_instance(kShape, 0.0)};
    try {
        (void)nll_loss(p, batch, 0.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::NonPositiveTarget);
    }
}

TEST(Gradient, MatchesCentralDifferences) {
    std::mt19937_64 rng(123);
    std::uniform_int_distribution<std::size_t> bsize(1, 6);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        auto p = random_params(kShape, rng);
        const auto batch = random_batch(kShape, bsize(rng), rng);
        const double lambda = rep % 2 == 0 ? 0.0 : 0.5;
        const auto g = loss_gradient(p, batch, lambda);
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double x = p.values()[k];
            const double step = 1e-5;
            p.values()[k] = x + step;
            const double up = nll_loss(p, batch, lambda);
            p.values()[k] = x - step;
            const double down = nll_loss(p, batch, lambda);
            p.values()[k] = x;
            const double fd = (up - down) / (2 * step);
            const double a = g.values()[k];
            const double err = std::abs(a - fd);
            if (err > 1e-7) worst = std::max(worst, err / std::max(std::abs(a), std::abs(fd)));
        }
    }
    EXPECT_LT(worst, 1e-5);
}

TEST(Gradient, PenaltyGradientVanishesAtZero) {
    std::mt19937_64 rng(4);
    TmeParams zero(kShape);
    const auto batch = random_batch(kShape, 3, rng);
    EXPECT_EQ(loss_gradient(zero, batch, 2.0), loss_gradient(zero, batch, 0.0));
}

TEST(Gradient, DuplicatedBatchDoubles) {
    std::mt19937_64 rng(6);
    const auto p = random_params(kShape, rng);
    const auto batch = random_batch(kShape, 5, rng);
    auto twice = batch;
    twice.insert(twice.end(), batch.begin(), batch.end());
    const auto g1 = loss_gradient(p, batch, 0.0);
    const auto g2 = loss_gradient(p, twice, 0.0);
    for (std::size_t k = 0; k < p.size(); ++k) {
        EXPECT_NEAR(g2.values()[k], 2.0 * g1.values()[k], 1e-12 * std::max(1.0, std::abs(g1.values()[k])));
    }
}

TEST(Gradient, BiasExcludedFromPenaltyWhenRequested) {
    std::mt19937_64 rng(12);
    const auto p = random_params(kShape, rng);
    const auto batch = random_batch(kShape, 3, rng);
    const auto with = loss_gradient(p, batch, 1.0, true);
    const auto without = loss_gradient(p, batch, 1.0, false);
    const auto mask = p.bias_mask();
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double diff = with.values()[k] - without.values()[k];
        EXPECT_NEAR(diff, mask[k] ? 2.0 * p.values()[k] : 0.0, 1e-12);
    }
}

namespace {

/// Single source whose log-mean is 0.8 x[0, h-1] - 0.5 x[1, 0] and log-variance ln 0.5.
struct Learnable {
    WindowShape shape{{2}, 2};
    std::vector<ModelInstance> train, validation;
    double generative_nll = 0.0;

    explicit Learnable(std::uint64_t seed, std::size_t n = 5000) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> z(0.0, 1.0);
        const double s2 = 0.5;
        for (std::size_t i = 0; i < n; ++i) {
            auto inst = random_instance(shape, rng);
            // rank one in (feature, lag): left (1, -0.5), right (0.3, 0.8)
            const auto& x = inst.windows[0];
            const double mu = 0.3 * x(0, 0) + 0.8 * x(0, 1) - 0.15 * x(1, 0) - 0.4 * x(1, 1);
            inst.y = std::exp(mu + std::sqrt(s2) * z(rng));
            inst.v = inst.y;
            if (i < n * 9 / 10) {
                generative_nll -= lognormal_log_pdf(inst.y, mu, s2);
                train.push_back(inst);
            } else {
                validation.push_back(inst);
            }
        }
        generative_nll /= static_cast<double>(train.size());
    }
};

TrainConfig fast_config() {
    TrainConfig c;
    c.learning_rate = 0.01;
    c.batch_size = 64;
    c.l2_lambda = 0.0;
    c.max_epochs = 20;
    c.convergence_tol = 0.0;
    return c;
}

}  // namespace

TEST(Training, ReachesGenerativeNll) {
    const Learnable data(31);
    auto c = fast_config();
    c.max_epochs = 60;
    const auto tr = train_trajectory(c, data.train, data.validation, 1);
    EXPECT_LT(std::abs(tr.train_loss.back() - data.generative_nll), 0.05 * std::abs(data.generative_nll));
}

TEST(Training, EpochTwentyBeatsEpochOne) {
    const Learnable data(32, 2000);
    const auto c = fast_config();
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        const auto tr = train_trajectory(c, data.train, data.validation, seed);
        ASSERT_EQ(tr.train_loss.size(), 20u);
        EXPECT_LT(tr.train_loss[19], tr.train_loss[0]) << "seed " << seed;
    }
}

TEST(Training, ZeroLearningRateKeepsInitialization) {
    const Learnable data(33, 500);
    auto c = fast_config();
    c.learning_rate = 0.0;
    c.max_epochs = 3;
    const auto tr = train_trajectory(c, data.train, data.validation, 9);
    for (const auto& it : tr.iterates) EXPECT_EQ(it, tr.initial);
}

TEST(Training, Deterministic) {
    const Learnable data(34, 500);
    auto c = fast_config();
    c.max_epochs = 4;
    const auto a = train_trajectory(c, data.train, data.validation, 5);
    const auto b = train_trajectory(c, data.train, data.validation, 5);
    EXPECT_EQ(a.iterates, b.iterates);
    EXPECT_EQ(a.train_loss, b.train_loss);
}

TEST(Training, InitializationMatchesMarginal) {
    const Learnable data(35, 1000);
    const auto p = initialize(data.shape, data.train, 3);
    double m = 0.0, sq = 0.0;
    for (const auto& i : data.train) {
        m += std::log(i.y);
        sq += std::log(i.y) * std::log(i.y);
    }
    const double n = static_cast<double>(data.train.size());
    m /= n;
    EXPECT_NEAR(p.source(0).mu.bias, m, 1e-12);
    EXPECT_NEAR(p.source(0).sigma.bias, std::log(sq / n - m * m), 1e-6);
    EXPECT_EQ(p.gate(0).bias, 0.0);
    for (double x : p.source(0).mu.left) EXPECT_LE(std::abs(x), 0.05);
}

TEST(Training, RangeValidation) {
    TrainConfig c;
    c.learning_rate = 0.0005;
    c.batch_size = 100;
    c.l2_lambda = 1.0;
    EXPECT_NO_THROW(c.validate_ranges());
    c.batch_size = 5;
    EXPECT_THROW(c.validate_ranges(), Error);
}

TEST(Ensemble, SizesAndProvenance) {
    const Learnable data(36, 400);
    auto c = fast_config();
    c.n_trajectories = 1;
    c.ensemble_size = 1;
    c.max_epochs = 3;
    c.burn_in_epochs = 2;
    EXPECT_EQ(collect_ensemble(c, data.train, data.validation).size(), 1u);

    c.n_trajectories = 5;
    c.ensemble_size = 20;
    c.max_epochs = 6;
    const auto ens = collect_ensemble(c, data.train, data.validation);
    ASSERT_EQ(ens.size(), 20u);
    std::vector<std::size_t> per(5, 0);
    for (const auto& pr : ens.provenance) ++per[pr.trajectory];
    for (std::size_t n : per) EXPECT_EQ(n, 4u);
    bool distinct = false;
    for (std::size_t m = 1; m < ens.size(); ++m) distinct = distinct || !(ens.members[m] == ens.members[0]);
    EXPECT_TRUE(distinct);
}

TEST(Ensemble, BestValidationIterateFirst) {
    Trajectory tr;
    TmeParams p(kShape);
    tr.iterates.assign(5, p);
    tr.train_loss = {5, 4, 3, 2, 1};
    tr.validation_nll = {1.0, 0.5, 0.9, 0.7, 0.5};
    const auto sel = select_iterates(tr, 3, 3);
    ASSERT_EQ(sel.size(), 3u);
    EXPECT_EQ(sel[0], 1u);
    EXPECT_EQ(sel[1], 4u);
    EXPECT_EQ(sel[2], 3u);
}

TEST(Predict, SingleComponentHasNoEpistemic) {
    std::mt19937_64 rng(2);
    const WindowShape shape{{3}, 2};
    const auto f = predict(single(random_params(shape, rng)), random_instance(shape, rng));
    EXPECT_EQ(f.var_epistemic, 0.0);
    EXPECT_EQ(f.var_total, f.var_aleatoric);
}

TEST(Predict, TwoSourceHandExpansion) {
    const WindowShape shape{{1, 1}, 1};
    TmeParams p(shape);
    p.mu(1).bias = std::log(2.0);
    p.sigma(0).bias = -30.0;
    p.sigma(1).bias = -30.0;
    p.gate_ref(0).bias = std::log(0.3);
    p.gate_ref(1).bias = std::log(0.7);
    const auto f = predict(single(p), zero_instance(shape));
    EXPECT_NEAR(f.mean, 1.7, 1e-10);
    EXPECT_NEAR(f.var_aleatoric, 0.0, 1e-10);
    EXPECT_NEAR(f.var_epistemic, 0.21, 1e-10);
    EXPECT_NEAR(f.gate_probs[0], 0.3, 1e-14);
}

TEST(Predict, DecompositionAndGateAverages) {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 50; ++rep) {
        Ensemble ens;
        for (int m = 0; m < 4; ++m) {
            ens.members.push_back(random_params(kShape, rng));
            ens.provenance.push_back({0, static_cast<std::size_t>(m + 1), 0});
        }
        const auto f = predict(ens, random_instance(kShape, rng));
        EXPECT_GE(f.var_aleatoric, 0.0);
        EXPECT_GE(f.var_epistemic, 0.0);
        EXPECT_EQ(f.var_total, f.var_aleatoric + f.var_epistemic);
        EXPECT_NEAR(f.gate_probs[0] + f.gate_probs[1], 1.0, 1e-12);
        EXPECT_EQ(f.member_gate_probs.rows(), 4u);
    }
}

TEST(Predict, MatchesMixtureMonteCarlo) {
    std::mt19937_64 rng(99);
    for (int cfg = 0; cfg < 10; ++cfg) {
        Ensemble ens;
        for (int m = 0; m < 3; ++m) {
            auto p = random_params(kShape, rng, 0.2);
            p.sigma(0).bias = std::log(0.3);
            p.sigma(1).bias = std::log(0.1);
            ens.members.push_back(p);
            ens.provenance.push_back({0, static_cast<std::size_t>(m + 1), 0});
        }
        const auto inst = random_instance(kShape, rng);
        const auto f = predict(ens, inst);

        // generative sampler: member uniform, source by gate, then log-normal
        std::vector<std::vector<double>> gates;
        std::vector<std::vector<LogMoments>> comps;
        for (const auto& p : ens.members) {
            gates.push_back(gate_probs(p, inst.windows));
            comps.push_back({source_log_moments(p.source(0), inst.windows[0]),
                             source_log_moments(p.source(1), inst.windows[1])});
        }
        std::uniform_int_distribution<std::size_t> member(0, ens.size() - 1);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::normal_distribution<double> z(0.0, 1.0);
        auto draw = [&](std::mt19937_64& r) {
            const std::size_t m = member(r);
            const std::size_t s = u(r) < gates[m][0] ? 0 : 1;
            return std::exp(comps[m][s].mu + std::sqrt(comps[m][s].sigma2) * z(r));
        };
        const auto mc = mc_moments(draw, 1'000'000, rng);
        EXPECT_LT(std::abs(mc.mean - f.mean), 3.0 * mc.mean_se) << "config " << cfg;
        EXPECT_LT(std::abs(mc.var - f.var_total), 3.0 * mc.var_se) << "config " << cfg;
    }
}

TEST(Predict, ShapeMismatch) {
    std::mt19937_64 rng(1);
    const auto ens = single(random_params(kShape, rng));
    try {
        (void)predict(ens, random_instance(WindowShape{{3, 2}, 3}, rng));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::ShapeMismatch);
    }
}

TEST(NllPoint, Examples) {
    const WindowShape shape{{2}, 2};
    const TmeParams p(shape);
    const auto inst = zero_instance(shape, 1.0);
    EXPECT_NEAR(nll_point(single(p), inst), 0.91894, 1e-5);
    EXPECT_NEAR(nll_point(single(p), inst, 2.0) - nll_point(single(p), inst), std::log(2.0), 1e-12);
    std::mt19937_64 rng(3);
    const auto q = random_params(kShape, rng);
    const auto i2 = random_instance(kShape, rng, 1.7);
    Ensemble triple{{q, q, q}, {{0, 1, 0}, {0, 2, 0}, {0, 3, 0}}};
    EXPECT_NEAR(nll_point(triple, i2), nll_point(single(q), i2), 1e-12);
    const std::vector<ModelInstance> one{i2};
    EXPECT_NEAR(nll_point(single(q), i2), nll_loss(q, one, 0.0), 1e-12);
}
