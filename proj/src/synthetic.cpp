#include "volmix/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace volmix::synthetic {

namespace {

using preprocess::ModelInstance;
using preprocess::WindowShape;

/// Bilinear form written out independently of the model code.
double bilinear(std::span<const double> left, std::span<const double> right, double bias, const Matrix& x) {
    double acc = bias;
    for (std::size_t i = 0; i < left.size(); ++i) {
        for (std::size_t j = 0; j < right.size(); ++j) acc += left[i] * x(i, j) * right[j];
    }
    return acc;
}

struct Component {
    std::vector<double> prob;
    std::vector<double> mu;
    std::vector<double> sigma2;
};

Component evaluate_truth(const tme::TmeParams& params, const std::vector<Matrix>& windows) {
    const std::size_t s_count = params.sources();
    Component c;
    std::vector<double> score(s_count);
    for (std::size_t s = 0; s < s_count; ++s) {
        const auto src = params.source(s);
        const auto g = params.gate(s);
        c.mu.push_back(bilinear(src.mu.left, src.mu.right, src.mu.bias, windows[s]));
        const double e = bilinear(src.sigma.left, src.sigma.right, src.sigma.bias, windows[s]);
        c.sigma2.push_back(std::exp(std::clamp(e, -tme::kExponentClamp, tme::kExponentClamp)));
        score[s] = bilinear(g.left, g.right, g.bias, windows[s]);
    }
    const double top = *std::max_element(score.begin(), score.end());
    double total = 0.0;
    for (double f : score) total += std::exp(f - top);
    for (double f : score) c.prob.push_back(std::exp(f - top) / total);
    return c;
}

double log_normal_density(double y, double mu, double sigma2) {
    const double d = std::log(y) - mu;
    return std::exp(-0.5 * d * d / sigma2) / (y * std::sqrt(2.0 * std::numbers::pi * sigma2));
}

std::size_t draw_index(std::span<const double> prob, double u) {
    double c = 0.0;
    for (std::size_t k = 0; k < prob.size(); ++k) {
        c += prob[k];
        if (u < c) return k;
    }
    return prob.size() - 1;
}

}  // namespace

GeneratedTme gen_tme_data(const TmeGenerativeSpec& spec) {
    const WindowShape& shape = spec.truth.shape();
    const std::size_t s_count = shape.sources(), h = shape.h;
    const std::size_t len = spec.n + h;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    // series[s] is d_s x len
    std::vector<Matrix> series;
    const double phi = spec.features.ar1 ? spec.features.persistence : 0.0;
    const double innov = std::sqrt(1.0 - phi * phi);
    for (std::size_t s = 0; s < s_count; ++s) {
        Matrix m(shape.dims[s], len);
        for (std::size_t f = 0; f < shape.dims[s]; ++f) {
            m(f, 0) = normal(rng);
            for (std::size_t t = 1; t < len; ++t) m(f, t) = phi * m(f, t - 1) + innov * normal(rng);
        }
        series.push_back(std::move(m));
    }

    GeneratedTme out;
    out.gate_probs = Matrix(spec.n, s_count);
    for (std::size_t i = 0; i < spec.n; ++i) {
        ModelInstance inst;
        inst.t = static_cast<Epoch>(60 * i);
        for (std::size_t s = 0; s < s_count; ++s) {
            Matrix w(shape.dims[s], h);
            for (std::size_t f = 0; f < shape.dims[s]; ++f) {
                for (std::size_t j = 0; j < h; ++j) w(f, j) = series[s](f, i + j);
            }
            inst.windows.push_back(std::move(w));
        }
        const Component c = evaluate_truth(spec.truth, inst.windows);
        const std::size_t z = draw_index(c.prob, unif(rng));
        const double y = std::exp(c.mu[z] + std::sqrt(c.sigma2[z]) * normal(rng));
        inst.v = inst.y = y;
        inst.a = 1.0;

        double mean = 0.0, second = 0.0, density = 0.0;
        for (std::size_t s = 0; s < s_count; ++s) {
            out.gate_probs(i, s) = c.prob[s];
            const double m1 = std::exp(c.mu[s] + 0.5 * c.sigma2[s]);
            mean += c.prob[s] * m1;
            second += c.prob[s] * m1 * m1 * std::exp(c.sigma2[s]);
            density += c.prob[s] * log_normal_density(y, c.mu[s], c.sigma2[s]);
        }
        out.moments.push_back({mean, second - mean * mean});
        out.nll.push_back(-std::log(density));
        out.z.push_back(z);
        out.instances.push_back(std::move(inst));
    }
    return out;
}

tme::TmeParams informative_source_truth(const WindowShape& shape, std::uint64_t seed, double gate_bias0) {
    tme::TmeParams p(shape);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    auto mu0 = p.mu(0);
    double l_norm = 0.0, r_norm = 0.0;
    for (auto& v : mu0.left) {
        v = normal(rng);
        l_norm += v * v;
    }
    for (std::size_t j = 0; j < shape.h; ++j) {
        mu0.right[j] = std::pow(0.6, static_cast<double>(shape.h - 1 - j));
        r_norm += mu0.right[j] * mu0.right[j];
    }
    const double scale = 0.8 / std::sqrt(l_norm * r_norm);
    for (auto& v : mu0.left) v *= scale;
    mu0.bias = 0.0;
    p.sigma(0).bias = std::log(0.1);

    for (std::size_t s = 1; s < shape.sources(); ++s) {
        p.mu(s).bias = 0.0;
        p.sigma(s).bias = std::log(1.0);
    }
    p.gate_ref(0).bias = gate_bias0;
    return p;
}

std::vector<double> gen_garch_series(const GarchSimSpec& spec) {
    if (!(spec.omega > 0.0) || spec.alpha < 0.0 || spec.beta < 0.0 || !(spec.alpha + spec.beta < 1.0)) {
        throw Error(Errc::InvalidArgument, "GARCH simulation needs omega > 0, alpha, beta >= 0, alpha + beta < 1");
    }
    const bool arma = !spec.phi.empty() || !spec.theta.empty();
    const std::size_t burn = arma ? spec.burn_in : 0;
    const std::size_t total = spec.n + burn;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<double> eps(total), z(total);
    double s2 = spec.omega / (1.0 - spec.alpha - spec.beta);
    for (std::size_t t = 0; t < total; ++t) {
        if (t > 0) s2 = spec.omega + spec.alpha * eps[t - 1] * eps[t - 1] + spec.beta * s2;
        eps[t] = std::sqrt(s2) * normal(rng);
        double v = eps[t];
        for (std::size_t i = 1; i <= spec.phi.size() && i <= t; ++i) v += spec.phi[i - 1] * z[t - i];
        for (std::size_t j = 1; j <= spec.theta.size() && j <= t; ++j) v += spec.theta[j - 1] * eps[t - j];
        z[t] = v;
    }
    std::vector<double> y(spec.n);
    for (std::size_t t = 0; t < spec.n; ++t) y[t] = spec.mu + z[t + burn];
    return y;
}

std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& loss,
                                std::span<const double> params, double step) {
    std::vector<double> x(params.begin(), params.end());
    if (!std::isfinite(loss(x))) throw Error(Errc::NonFiniteLoss, "loss is not finite at the base point");
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + step;
        const double up = loss(x);
        x[i] = keep - step;
        const double down = loss(x);
        x[i] = keep;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw Error(Errc::NonFiniteLoss, "loss is not finite at a probe point", i);
        }
        g[i] = (up - down) / (2.0 * step);
    }
    return g;
}

McMoments mc_mixture_moments(const tme::Ensemble& ensemble, const ModelInstance& instance, std::size_t n_draws,
                             std::uint64_t seed) {
    if (n_draws < 10000) throw Error(Errc::InvalidArgument, "mc_mixture_moments needs at least 1e4 draws");
    std::vector<Component> comps;
    for (const auto& m : ensemble.members) comps.push_back(evaluate_truth(m, instance.windows));

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> member(0, comps.size() - 1);
    std::vector<double> y(n_draws);
    for (auto& v : y) {
        const auto& c = comps[member(rng)];
        const std::size_t s = draw_index(c.prob, unif(rng));
        v = std::exp(c.mu[s] + std::sqrt(c.sigma2[s]) * normal(rng));
    }

    const auto n = static_cast<double>(n_draws);
    const double shift = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double s1 = 0.0, s2 = 0.0;
    for (double v : y) {
        s1 += v - shift;
        s2 += (v - shift) * (v - shift);
    }
    McMoments out;
    out.mean = shift + s1 / n;
    out.variance = (s2 - s1 * s1 / n) / (n - 1.0);

    // Delete-one jackknife on the shifted draws, two passes to avoid cancellation.
    auto leave_one_out = [&](double v) {
        const double c = v - shift;
        const double m_i = (s1 - c) / (n - 1.0);
        return std::pair{m_i, (s2 - c * c - (n - 1.0) * m_i * m_i) / (n - 2.0)};
    };
    double mean_bar = 0.0, var_bar = 0.0;
    for (double v : y) {
        const auto [m_i, v_i] = leave_one_out(v);
        mean_bar += m_i;
        var_bar += v_i;
    }
    mean_bar /= n;
    var_bar /= n;
    double mean_ss = 0.0, var_ss = 0.0;
    for (double v : y) {
        const auto [m_i, v_i] = leave_one_out(v);
        mean_ss += (m_i - mean_bar) * (m_i - mean_bar);
        var_ss += (v_i - var_bar) * (v_i - var_bar);
    }
    const double f = (n - 1.0) / n;
    out.se_mean = std::sqrt(f * mean_ss);
    out.se_variance = std::sqrt(f * var_ss);
    return out;
}

QuietDrop calibrate_quiet_drop(double target_mean, double target_var, double zero_rate, double gaussian_var) {
    // var = V_g + c^2 p (1 - p); mean = -V_g / 2 - p c - ln(1 - p + p e^-c) - ln(1 - z).
    // For each depth c >= 2 sqrt(V_j) the variance fixes p on the lower branch;
    // the Jensen gap p c + ln(1 - p + p e^-c) then decreases in c.
    const double jump_var = target_var - gaussian_var;
    if (!(jump_var > 0.0) || gaussian_var < 0.0) {
        throw Error(Errc::InvalidArgument, "gaussian_var must lie in [0, target_log_var)");
    }
    const double gap = -(target_mean + 0.5 * gaussian_var + std::log1p(-zero_rate));
    auto prob = [&](double c) { return 0.5 * (1.0 - std::sqrt(std::max(0.0, 1.0 - 4.0 * jump_var / (c * c)))); };
    auto excess = [&](double c) {
        const double p = prob(c);
        return p * c + std::log1p(p * std::expm1(-c)) - gap;
    };
    double lo = 2.0 * std::sqrt(jump_var), hi = 2.0 * lo;
    if (!(excess(lo) > 0.0)) {
        throw Error(Errc::InvalidArgument, "log-volume targets cannot be met by the quiet-interval calibration");
    }
    while (excess(hi) > 0.0) {
        hi *= 2.0;
        if (hi > 1e6) throw Error(Errc::InvalidArgument, "quiet-interval calibration did not bracket");
    }
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (excess(mid) > 0.0 ? lo : hi) = mid;
    }
    const double c = 0.5 * (lo + hi);
    return {prob(c), c};
}

namespace {

std::vector<double> diurnal_profile(std::size_t slots, double amplitude) {
    auto bump = [](double tau, double centre, double width) {
        const double d = (tau - centre) / width;
        return std::exp(-d * d);
    };
    std::vector<double> p(slots);
    for (std::size_t k = 0; k < slots; ++k) {
        const double tau = (static_cast<double>(k) + 0.5) / static_cast<double>(slots);
        const double shape = 0.6 * std::cos(2.0 * std::numbers::pi * (tau - 0.6)) + 0.5 * bump(tau, 8.0 / 24.0, 0.03) +
                             0.8 * bump(tau, 13.5 / 24.0, 0.03) + 0.4 * bump(tau, 20.0 / 24.0, 0.04);
        p[k] = std::exp(amplitude * shape);
    }
    const double mean = std::accumulate(p.begin(), p.end(), 0.0) / static_cast<double>(slots);
    for (auto& v : p) v /= mean;
    return p;
}

void make_trades(std::vector<market_data::TradeRecord>& out, Epoch start, Epoch interval, double volume,
                 double price, std::mt19937_64& rng) {
    if (!(volume > 0.0)) return;
    std::poisson_distribution<int> extra(2.0);
    std::exponential_distribution<double> weight(1.0);
    std::uniform_int_distribution<Epoch> offset(0, interval - 1);
    std::bernoulli_distribution buy(0.5);
    const auto k = static_cast<std::size_t>(1 + extra(rng));
    std::vector<double> w(k);
    for (auto& x : w) x = weight(rng) + 1e-3;
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    std::vector<Epoch> ts(k);
    for (auto& t : ts) t = start + offset(rng);
    std::sort(ts.begin(), ts.end());
    for (std::size_t i = 0; i < k; ++i) {
        market_data::TradeRecord r;
        r.timestamp = ts[i];
        r.price = price;
        r.size = volume * w[i] / total;
        r.side = buy(rng) ? market_data::Side::BuyInitiated : market_data::Side::SellInitiated;
        out.push_back(r);
    }
}

market_data::BookSnapshot make_book(Epoch ts, double mid, std::size_t levels, std::mt19937_64& rng) {
    std::exponential_distribution<double> size(0.5);
    std::uniform_real_distribution<double> half_spread(0.5, 3.0);
    market_data::BookSnapshot b;
    b.timestamp = ts;
    const double hs = half_spread(rng);
    for (std::size_t k = 0; k < levels; ++k) {
        b.bids.push_back({mid - hs - static_cast<double>(k), size(rng) + 0.01});
        b.asks.push_back({mid + hs + static_cast<double>(k), size(rng) + 0.01});
    }
    return b;
}

}  // namespace

MarketLikeVolume gen_market_like_volume(preprocess::Horizon horizon, std::size_t days, std::uint64_t seed,
                                      const MarketLikeOptions& options) {
    if (days < 2) throw Error(Errc::InvalidArgument, "gen_market_like_volume needs at least 2 days");
    if (options.zero_rate < 0.0 || options.zero_rate >= 1.0) throw Error(Errc::InvalidArgument, "zero_rate must lie in [0, 1)");
    MarketLikeVolume out;
    out.interval = preprocess::horizon_seconds(horizon);
    const auto slots = static_cast<std::size_t>(preprocess::kSecondsPerDay / out.interval);
    const std::size_t n = days * slots;
    out.grid = market_data::make_grid(options.start, out.interval, n);
    out.profile = diurnal_profile(slots, options.profile_amplitude);
    const auto drop = calibrate_quiet_drop(options.target_log_mean, options.target_log_var, options.zero_rate,
                                           options.gaussian_var);
    out.quiet_probability = drop.probability;
    out.quiet_depth = drop.depth;

    std::mt19937_64 rng(derive_seed(seed, 0));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution quiet(out.quiet_probability);
    auto jump = [&](std::mt19937_64& r) { return quiet(r) ? out.quiet_depth : 0.0; };
    std::bernoulli_distribution is_zero(options.zero_rate);
    const double phi = std::pow(options.persistence, static_cast<double>(out.interval) / 60.0);
    const double sd_g = std::sqrt(options.gaussian_var);
    const double innov = sd_g * std::sqrt(1.0 - phi * phi);
    const double ext_noise = sd_g * std::sqrt(1.0 - 0.7 * 0.7);

    out.volume.resize(n);
    out.external_volume.resize(n);
    double g = sd_g * normal(rng);
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) g = phi * g + innov * normal(rng);
        const double a = options.base_volume * out.profile[i % slots];
        const double x = g - jump(rng);
        const bool zero = is_zero(rng);
        out.volume[i] = zero ? 0.0 : a * std::exp(x);
        out.external_volume[i] = a * std::exp(0.7 * g + ext_noise * normal(rng) - jump(rng));
    }
    if (!options.market_data) return out;

    std::mt19937_64 mrng(derive_seed(seed, 1));
    double log_price = std::log(10000.0), ext_log_price = std::log(10010.0);
    for (std::size_t i = 0; i < n; ++i) {
        log_price += 0.001 * normal(mrng);
        ext_log_price = log_price + 0.0005 * normal(mrng);
        const double p = std::round(std::exp(log_price) * 100.0) / 100.0;
        const double pe = std::round(std::exp(ext_log_price) * 100.0) / 100.0;
        make_trades(out.target_trades, out.grid[i], out.interval, out.volume[i], p, mrng);
        make_trades(out.external_trades, out.grid[i], out.interval, out.external_volume[i], pe, mrng);
        const Epoch ts = out.grid[i] + out.interval / 2;
        out.target_book.push_back(make_book(ts, p, options.book_levels, mrng));
        out.external_book.push_back(make_book(ts, pe, options.book_levels, mrng));
    }
    return out;
}

}  // namespace volmix::synthetic
