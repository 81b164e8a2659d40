#include "volmix/tme.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace volmix::tme {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

void check_window(std::span<const double> left, std::span<const double> right, const Matrix& x) {
    if (x.rows() != left.size() || x.cols() != right.size()) {
        throw Error(Errc::ShapeMismatch, "window is " + std::to_string(x.rows()) + "x" + std::to_string(x.cols()) +
                                             ", parameters expect " + std::to_string(left.size()) + "x" +
                                             std::to_string(right.size()));
    }
}

/// Evaluates left^T X right + bias and fills xr = X right, lx = left^T X.
double bilinear_partials(std::span<const double> left, std::span<const double> right, double bias, const Matrix& x,
                         double* xr, double* lx) {
    const std::size_t d = left.size();
    const std::size_t h = right.size();
    std::fill(lx, lx + h, 0.0);
    double value = bias;
    for (std::size_t i = 0; i < d; ++i) {
        const auto row = x.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < h; ++j) {
            acc += row[j] * right[j];
            lx[j] += left[i] * row[j];
        }
        xr[i] = acc;
        value += left[i] * acc;
    }
    return value;
}

double clamp_exponent(double g) noexcept { return std::clamp(g, -kExponentClamp, kExponentClamp); }

}  // namespace

double Bilinear::eval(const Matrix& x) const {
    check_window(left, right, x);
    double value = bias;
    for (std::size_t i = 0; i < left.size(); ++i) {
        const auto row = x.row(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < right.size(); ++j) acc += row[j] * right[j];
        value += left[i] * acc;
    }
    return value;
}

TmeParams::TmeParams(WindowShape shape) : shape_(std::move(shape)) {
    std::size_t offset = 0;
    for (auto d : shape_.dims) {
        source_offsets_.push_back(offset);
        offset += 2 * (d + shape_.h + 1);
    }
    for (auto d : shape_.dims) {
        gate_offsets_.push_back(offset);
        offset += d + shape_.h + 1;
    }
    values_.assign(offset, 0.0);
}

Bilinear TmeParams::view(std::size_t offset, std::size_t d) const {
    const std::span<const double> all(values_);
    return {all.subspan(offset, d), all.subspan(offset + d, shape_.h), values_[offset + d + shape_.h]};
}

BilinearRef TmeParams::ref(std::size_t offset, std::size_t d) {
    const std::span<double> all(values_);
    return {all.subspan(offset, d), all.subspan(offset + d, shape_.h), values_[offset + d + shape_.h]};
}

SourceParams TmeParams::source(std::size_t s) const {
    const auto d = shape_.dims.at(s);
    return {view(source_offset(s), d), view(source_offset(s) + d + shape_.h + 1, d)};
}

Bilinear TmeParams::gate(std::size_t s) const { return view(gate_offset(s), shape_.dims.at(s)); }

BilinearRef TmeParams::mu(std::size_t s) { return ref(source_offset(s), shape_.dims.at(s)); }

BilinearRef TmeParams::sigma(std::size_t s) {
    const auto d = shape_.dims.at(s);
    return ref(source_offset(s) + d + shape_.h + 1, d);
}

BilinearRef TmeParams::gate_ref(std::size_t s) { return ref(gate_offset(s), shape_.dims.at(s)); }

std::vector<bool> TmeParams::bias_mask() const {
    std::vector<bool> mask(values_.size(), false);
    for (std::size_t s = 0; s < shape_.sources(); ++s) {
        const auto d = shape_.dims[s];
        mask[source_offset(s) + d + shape_.h] = true;
        mask[source_offset(s) + 2 * (d + shape_.h) + 1] = true;
        mask[gate_offset(s) + d + shape_.h] = true;
    }
    return mask;
}

LogMoments source_log_moments(const SourceParams& theta, const Matrix& window) {
    check_window(theta.sigma.left, theta.sigma.right, window);
    const double mu = theta.mu.eval(window);
    const double g = theta.sigma.eval(window);
    return {mu, std::exp(clamp_exponent(g))};
}

Moments lognormal_moments(double mu, double sigma2) {
    if (!(sigma2 > 0.0)) throw Error(Errc::InvalidArgument, "log-normal variance parameter must be positive");
    if (mu + sigma2 > kMomentExponentBound) {
        throw Error(Errc::Overflow, "mu + sigma2 = " + std::to_string(mu + sigma2) + " exceeds safe exponent bound");
    }
    const double mean = std::exp(mu + 0.5 * sigma2);
    return {mean, std::expm1(sigma2) * std::exp(2.0 * mu + sigma2)};
}

double lognormal_log_pdf(double y, double mu, double sigma2) noexcept {
    const double s2 = std::max(sigma2, kSigma2Floor);
    const double ly = std::log(y);
    const double e = ly - mu;
    return -ly - kHalfLog2Pi - 0.5 * std::log(s2) - e * e / (2.0 * s2);
}

std::vector<double> gate_probs(const TmeParams& params, const std::vector<Matrix>& windows) {
    const std::size_t S = params.sources();
    if (windows.size() != S) throw Error(Errc::ShapeMismatch, "expected one window per source");
    std::vector<double> f(S);
    for (std::size_t s = 0; s < S; ++s) f[s] = params.gate(s).eval(windows[s]);
    const double m = *std::max_element(f.begin(), f.end());
    double z = 0.0;
    for (auto& v : f) {
        v = std::exp(v - m);
        z += v;
    }
    for (auto& v : f) v /= z;
    return f;
}

namespace {

double l2_norm_sq(const TmeParams& params, bool regularize_bias) {
    const auto v = params.values();
    if (regularize_bias) return std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
    const auto mask = params.bias_mask();
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!mask[i]) acc += v[i] * v[i];
    }
    return acc;
}

void check_instance(const TmeParams& params, const ModelInstance& inst) {
    if (!(inst.y > 0.0)) throw Error(Errc::NonPositiveTarget, "target y must be positive");
    if (inst.windows.size() != params.sources()) throw Error(Errc::ShapeMismatch, "expected one window per source");
}

/// Per-instance forward pass and (optionally) gradient accumulation.
class InstanceEvaluator {
public:
    explicit InstanceEvaluator(const TmeParams& params) : params_(params) {
        const auto& shape = params.shape();
        const std::size_t S = shape.sources();
        std::size_t maxd = 0;
        for (auto d : shape.dims) maxd = std::max(maxd, d);
        const std::size_t h = shape.h;
        xr_.assign(3 * S * maxd, 0.0);
        lx_.assign(3 * S * h, 0.0);
        maxd_ = maxd;
        mu_.resize(S);
        g_.resize(S);
        s2_.resize(S);
        f_.resize(S);
        logp_.resize(S);
        comp_.resize(S);
    }

    /// Returns -ln sum_s p_s pdf_s.
    double forward(const ModelInstance& inst) {
        const std::size_t S = params_.sources();
        const std::size_t h = params_.shape().h;
        for (std::size_t s = 0; s < S; ++s) {
            const auto th = params_.source(s);
            const auto gz = params_.gate(s);
            check_window(th.mu.left, th.mu.right, inst.windows[s]);
            mu_[s] = bilinear_partials(th.mu.left, th.mu.right, th.mu.bias, inst.windows[s], xr(0, s), lx(0, s, h));
            g_[s] = bilinear_partials(th.sigma.left, th.sigma.right, th.sigma.bias, inst.windows[s], xr(1, s),
                                      lx(1, s, h));
            f_[s] = bilinear_partials(gz.left, gz.right, gz.bias, inst.windows[s], xr(2, s), lx(2, s, h));
            s2_[s] = std::exp(clamp_exponent(g_[s]));
        }
        const double lse_f = log_sum_exp(f_);
        for (std::size_t s = 0; s < S; ++s) {
            logp_[s] = f_[s] - lse_f;
            comp_[s] = logp_[s] + lognormal_log_pdf(inst.y, mu_[s], s2_[s]);
        }
        lse_ = log_sum_exp(comp_);
        return -lse_;
    }

    /// Adds d(-ln sum)/dtheta for the last forward() instance into grad.
    void backward(const ModelInstance& inst, TmeParams& grad) {
        const std::size_t S = params_.sources();
        const std::size_t h = params_.shape().h;
        const double ly = std::log(inst.y);
        for (std::size_t s = 0; s < S; ++s) {
            const double r = std::exp(comp_[s] - lse_);
            const double p = std::exp(logp_[s]);
            const double s2 = std::max(s2_[s], kSigma2Floor);
            const double e = ly - mu_[s];
            const double d_mu = -r * e / s2;
            const bool live_var = std::abs(g_[s]) <= kExponentClamp && s2_[s] >= kSigma2Floor;
            const double d_g = live_var ? -r * (-0.5 + e * e / (2.0 * s2)) : 0.0;
            const double d_f = -(r - p);
            accumulate(grad.mu(s), params_.source(s).mu, d_mu, xr(0, s), lx(0, s, h));
            accumulate(grad.sigma(s), params_.source(s).sigma, d_g, xr(1, s), lx(1, s, h));
            accumulate(grad.gate_ref(s), params_.gate(s), d_f, xr(2, s), lx(2, s, h));
        }
    }

private:
    static void accumulate(BilinearRef out, const Bilinear& /*at*/, double coef, const double* xr, const double* lx) {
        if (coef == 0.0) return;
        for (std::size_t i = 0; i < out.left.size(); ++i) out.left[i] += coef * xr[i];
        for (std::size_t j = 0; j < out.right.size(); ++j) out.right[j] += coef * lx[j];
        out.bias += coef;
    }

    double* xr(std::size_t form, std::size_t s) { return xr_.data() + (form * params_.sources() + s) * maxd_; }
    double* lx(std::size_t form, std::size_t s, std::size_t h) {
        return lx_.data() + (form * params_.sources() + s) * h;
    }

    const TmeParams& params_;
    std::size_t maxd_ = 0;
    std::vector<double> xr_, lx_;
    std::vector<double> mu_, g_, s2_, f_, logp_, comp_;
    double lse_ = 0.0;
};

void add_regularizer_gradient(const TmeParams& params, double l2_lambda, bool regularize_bias, TmeParams& grad) {
    if (l2_lambda == 0.0) return;
    const auto v = params.values();
    auto g = grad.values();
    const auto mask = regularize_bias ? std::vector<bool>() : params.bias_mask();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (regularize_bias || !mask[i]) g[i] += 2.0 * l2_lambda * v[i];
    }
}

}  // namespace

double nll_loss(const TmeParams& params, std::span<const ModelInstance> batch, double l2_lambda,
                bool regularize_bias) {
    InstanceEvaluator eval(params);
    double acc = 0.0;
    for (const auto& inst : batch) {
        check_instance(params, inst);
        acc += eval.forward(inst);
    }
    return acc + l2_lambda * l2_norm_sq(params, regularize_bias);
}

LossAndGradient loss_and_gradient(const TmeParams& params, std::span<const ModelInstance> instances,
                                  std::span<const std::size_t> indices, double l2_lambda, bool regularize_bias) {
    LossAndGradient out{0.0, 0.0, TmeParams(params.shape())};
    InstanceEvaluator eval(params);
    for (const auto idx : indices) {
        const auto& inst = instances[idx];
        check_instance(params, inst);
        out.data_loss += eval.forward(inst);
        eval.backward(inst, out.gradient);
    }
    out.loss = out.data_loss + l2_lambda * l2_norm_sq(params, regularize_bias);
    add_regularizer_gradient(params, l2_lambda, regularize_bias, out.gradient);
    return out;
}

TmeParams loss_gradient(const TmeParams& params, std::span<const ModelInstance> batch, double l2_lambda,
                        bool regularize_bias) {
    std::vector<std::size_t> idx(batch.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return loss_and_gradient(params, batch, idx, l2_lambda, regularize_bias).gradient;
}

void TrainConfig::validate_ranges() const {
    if (learning_rate < 1e-4 || learning_rate > 1e-3) {
        throw Error(Errc::InvalidArgument, "learning_rate must lie in [0.0001, 0.001]");
    }
    if (batch_size < 10 || batch_size > 300) throw Error(Errc::InvalidArgument, "batch_size must lie in [10, 300]");
    if (l2_lambda < 0.1 || l2_lambda > 5.0) throw Error(Errc::InvalidArgument, "l2_lambda must lie in [0.1, 5.0]");
    if (n_trajectories == 0) throw Error(Errc::InvalidArgument, "n_trajectories must be >= 1");
    if (ensemble_size == 0) throw Error(Errc::InvalidArgument, "ensemble_size must be >= 1");
    if (max_epochs == 0) throw Error(Errc::InvalidArgument, "max_epochs must be >= 1");
}

TmeParams initialize(const WindowShape& shape, std::span<const ModelInstance> train, std::uint64_t seed) {
    TmeParams params(shape);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> weight(-0.05, 0.05);
    for (auto& v : params.values()) v = weight(rng);

    double mean = 0.0, var = 0.0;
    if (!train.empty()) {
        for (const auto& inst : train) mean += std::log(inst.y);
        mean /= static_cast<double>(train.size());
        for (const auto& inst : train) {
            const double e = std::log(inst.y) - mean;
            var += e * e;
        }
        var /= static_cast<double>(train.size());
    }
    const double log_var = var > 1e-12 ? std::log(var) : 0.0;
    for (std::size_t s = 0; s < shape.sources(); ++s) {
        params.mu(s).bias = mean;
        params.sigma(s).bias = log_var;
        params.gate_ref(s).bias = 0.0;
    }
    return params;
}

namespace {

double mean_nll(const TmeParams& params, std::span<const ModelInstance> data) {
    if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
    return nll_loss(params, data, 0.0) / static_cast<double>(data.size());
}

}  // namespace

Trajectory train_trajectory(const TrainConfig& config, std::span<const ModelInstance> train,
                            std::span<const ModelInstance> validation, std::uint64_t seed, std::size_t trajectory_id) {
    if (train.empty()) throw Error(Errc::InvalidArgument, "training split is empty");
    if (config.batch_size == 0) throw Error(Errc::InvalidArgument, "batch_size must be >= 1");
    if (!(config.learning_rate >= 0.0)) throw Error(Errc::InvalidArgument, "learning_rate must be >= 0");

    const WindowShape shape = preprocess::shape_of(train.front());
    Trajectory traj;
    traj.id = trajectory_id;
    traj.seed = seed;
    traj.initial = initialize(shape, train, derive_seed(seed, 0));

    TmeParams params = traj.initial;
    std::vector<double> m(params.size(), 0.0), v(params.size(), 0.0);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double beta1_pow = 1.0, beta2_pow = 1.0;

    std::mt19937_64 shuffle_rng(derive_seed(seed, 1));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    double previous = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> batch(order.data() + start, stop - start);
            auto lg = loss_and_gradient(params, train, batch, config.l2_lambda, config.regularize_bias);
            if (!std::isfinite(lg.loss)) {
                throw Error(Errc::DivergedLoss, "non-finite loss in epoch " + std::to_string(epoch));
            }
            epoch_loss += lg.data_loss;

            beta1_pow *= beta1;
            beta2_pow *= beta2;
            auto theta = params.values();
            const auto g = lg.gradient.values();
            for (std::size_t i = 0; i < theta.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                const double mhat = m[i] / (1.0 - beta1_pow);
                const double vhat = v[i] / (1.0 - beta2_pow);
                theta[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + eps);
            }
        }
        epoch_loss /= static_cast<double>(train.size());
        traj.train_loss.push_back(epoch_loss);
        traj.validation_nll.push_back(mean_nll(params, validation));
        traj.iterates.push_back(params);

        if (std::isfinite(previous) &&
            std::abs(epoch_loss - previous) <= config.convergence_tol * std::max(std::abs(previous), 1e-12)) {
            break;
        }
        previous = epoch_loss;
    }
    return traj;
}

std::vector<std::size_t> select_iterates(const Trajectory& trajectory, std::size_t burn_in_epochs,
                                         std::size_t quota) {
    std::vector<std::size_t> chosen;
    const std::size_t n = trajectory.iterates.size();
    if (n == 0 || quota == 0) return chosen;

    auto score = [&](std::size_t i) {
        const double v = trajectory.validation_nll[i];
        return std::isnan(v) ? trajectory.train_loss[i] : v;
    };
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::stable_sort(all.begin(), all.end(), [&](std::size_t a, std::size_t b) { return score(a) < score(b); });

    chosen.push_back(all.front());
    for (std::size_t k = 1; k < all.size() && chosen.size() < quota; ++k) {
        // iterate index i was produced at the end of epoch i + 1
        if (all[k] + 1 > burn_in_epochs) chosen.push_back(all[k]);
    }
    return chosen;
}

Ensemble collect_ensemble(const TrainConfig& config, std::span<const ModelInstance> train,
                          std::span<const ModelInstance> validation, std::vector<Trajectory>& trajectories) {
    if (config.n_trajectories == 0) throw Error(Errc::InvalidArgument, "n_trajectories must be >= 1");
    if (config.ensemble_size == 0) throw Error(Errc::InvalidArgument, "ensemble_size must be >= 1");

    std::vector<std::future<Trajectory>> jobs;
    for (std::size_t j = 0; j < config.n_trajectories; ++j) {
        const auto seed = derive_seed(config.seed, j);
        jobs.push_back(std::async(std::launch::async, [&config, train, validation, seed, j] {
            return train_trajectory(config, train, validation, seed, j);
        }));
    }
    trajectories.clear();
    for (auto& job : jobs) trajectories.push_back(job.get());

    Ensemble ens;
    const std::size_t base = config.ensemble_size / config.n_trajectories;
    const std::size_t extra = config.ensemble_size % config.n_trajectories;
    for (std::size_t j = 0; j < trajectories.size(); ++j) {
        const std::size_t quota = std::max<std::size_t>(1, base + (j < extra ? 1 : 0));
        for (const auto i : select_iterates(trajectories[j], config.burn_in_epochs, quota)) {
            ens.members.push_back(trajectories[j].iterates[i]);
            ens.provenance.push_back({j, i + 1, trajectories[j].seed});
        }
    }
    return ens;
}

Ensemble collect_ensemble(const TrainConfig& config, std::span<const ModelInstance> train,
                          std::span<const ModelInstance> validation) {
    std::vector<Trajectory> unused;
    return collect_ensemble(config, train, validation, unused);
}

Forecast predict(const Ensemble& ensemble, const ModelInstance& instance) {
    if (ensemble.members.empty()) throw Error(Errc::InvalidArgument, "empty ensemble");
    const std::size_t M = ensemble.size();
    const std::size_t S = ensemble.members.front().sources();
    if (instance.windows.size() != S) throw Error(Errc::ShapeMismatch, "expected one window per source");

    Forecast fc;
    fc.member_gate_probs = Matrix(M, S);
    fc.gate_probs.assign(S, 0.0);
    double mean = 0.0, alea = 0.0, second = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
        const auto& params = ensemble.members[m];
        const auto p = gate_probs(params, instance.windows);
        for (std::size_t s = 0; s < S; ++s) {
            const auto lm = source_log_moments(params.source(s), instance.windows[s]);
            const auto mom = lognormal_moments(lm.mu, lm.sigma2);
            mean += p[s] * mom.mean;
            alea += p[s] * mom.variance;
            second += p[s] * mom.mean * mom.mean;
            fc.member_gate_probs(m, s) = p[s];
            fc.gate_probs[s] += p[s];
        }
    }
    const double inv_m = 1.0 / static_cast<double>(M);
    fc.mean = mean * inv_m;
    fc.var_aleatoric = alea * inv_m;
    double epi = second * inv_m - fc.mean * fc.mean;
    if (epi < 0.0) {
        if (epi < -1e-12 * std::max(1.0, second * inv_m)) {
            throw std::logic_error("negative epistemic variance " + std::to_string(epi));
        }
        epi = 0.0;
    }
    fc.var_epistemic = epi;
    fc.var_total = fc.var_aleatoric + fc.var_epistemic;
    for (auto& g : fc.gate_probs) g *= inv_m;
    return fc;
}

double nll_point(const Ensemble& ensemble, const ModelInstance& instance, double a) {
    if (!(instance.y > 0.0)) throw Error(Errc::NonPositiveTarget, "target y must be positive");
    if (ensemble.members.empty()) throw Error(Errc::InvalidArgument, "empty ensemble");
    std::vector<double> terms;
    for (const auto& params : ensemble.members) {
        const auto p = gate_probs(params, instance.windows);
        for (std::size_t s = 0; s < params.sources(); ++s) {
            const auto lm = source_log_moments(params.source(s), instance.windows[s]);
            terms.push_back(std::log(p[s]) + lognormal_log_pdf(instance.y, lm.mu, lm.sigma2));
        }
    }
    return -(log_sum_exp(terms) - std::log(static_cast<double>(ensemble.size()))) + std::log(a);
}

}  // namespace volmix::tme
