#pragma once

// Temporal mixture ensemble: per-source bilinear log-normal components mixed
// by a softmax gate, trained by mini-batch Adam on the negative log-likelihood,
// with an ensemble of SGD iterates for predictive uncertainty.

#include "volmix/common.hpp"
#include "volmix/preprocess.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace volmix::tme {

using preprocess::ModelInstance;
using preprocess::WindowShape;

/// Bound applied to the log-variance exponent before exp().
inline constexpr double kExponentClamp = 30.0;
/// Variance floor used when evaluating log-normal densities.
inline constexpr double kSigma2Floor = 1e-8;
/// mu + sigma^2 above this cannot produce a finite log-normal variance.
inline constexpr double kMomentExponentBound = 350.0;

/// Read-only view of one bilinear form  left^T X right + bias.
struct Bilinear {
    std::span<const double> left;
    std::span<const double> right;
    double bias = 0.0;

    [[nodiscard]] double eval(const Matrix& x) const;
};

/// Mutable view of one bilinear form inside a parameter vector.
struct BilinearRef {
    std::span<double> left;
    std::span<double> right;
    double& bias;
};

/// theta_s: the mean and log-variance regressions of one source.
struct SourceParams {
    Bilinear mu;
    Bilinear sigma;
};

/// All trainable parameters stored in one flat vector. Field order per
/// source: L_mu, R_mu, b_mu, L_sigma, R_sigma, b_sigma; then one gate triple
/// (L_z, R_z, b_z) per source.
class TmeParams {
public:
    TmeParams() = default;
    explicit TmeParams(WindowShape shape);

    [[nodiscard]] const WindowShape& shape() const noexcept { return shape_; }
    [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
    [[nodiscard]] std::size_t sources() const noexcept { return shape_.sources(); }

    [[nodiscard]] std::span<double> values() noexcept { return values_; }
    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }

    [[nodiscard]] SourceParams source(std::size_t s) const;
    [[nodiscard]] Bilinear gate(std::size_t s) const;
    [[nodiscard]] BilinearRef mu(std::size_t s);
    [[nodiscard]] BilinearRef sigma(std::size_t s);
    [[nodiscard]] BilinearRef gate_ref(std::size_t s);

    /// True for entries that are bias terms (used when the L2 prior skips biases).
    [[nodiscard]] std::vector<bool> bias_mask() const;

    friend bool operator==(const TmeParams&, const TmeParams&) = default;

private:
    [[nodiscard]] std::size_t source_offset(std::size_t s) const noexcept { return source_offsets_[s]; }
    [[nodiscard]] std::size_t gate_offset(std::size_t s) const noexcept { return gate_offsets_[s]; }
    [[nodiscard]] Bilinear view(std::size_t offset, std::size_t d) const;
    [[nodiscard]] BilinearRef ref(std::size_t offset, std::size_t d);

    WindowShape shape_;
    std::vector<std::size_t> source_offsets_;
    std::vector<std::size_t> gate_offsets_;
    std::vector<double> values_;
};

struct LogMoments {
    double mu = 0.0;
    double sigma2 = 0.0;
};

/// mu = L_mu^T X R_mu + b_mu,  sigma2 = exp(clamp(L_s^T X R_s + b_s, +-30)).
[[nodiscard]] LogMoments source_log_moments(const SourceParams& theta, const Matrix& window);

struct Moments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Mean exp(mu + sigma2/2) and variance (exp(sigma2) - 1) exp(2 mu + sigma2).
[[nodiscard]] Moments lognormal_moments(double mu, double sigma2);

/// ln of the log-normal density at y > 0.
[[nodiscard]] double lognormal_log_pdf(double y, double mu, double sigma2) noexcept;

/// Softmax over gate scores f_s = L_z^T X_s R_z + b_z.
[[nodiscard]] std::vector<double> gate_probs(const TmeParams& params, const std::vector<Matrix>& windows);

/// Sum over the batch of -ln sum_s p_s LogNormal(y; mu_s, sigma2_s), plus
/// l2_lambda * ||params||^2 (biases included unless regularize_bias is false).
[[nodiscard]] double nll_loss(const TmeParams& params, std::span<const ModelInstance> batch, double l2_lambda,
                              bool regularize_bias = true);

/// Analytic gradient of nll_loss, congruent to the parameter layout.
[[nodiscard]] TmeParams loss_gradient(const TmeParams& params, std::span<const ModelInstance> batch,
                                      double l2_lambda, bool regularize_bias = true);

struct LossAndGradient {
    double data_loss = 0.0;
    double loss = 0.0;
    TmeParams gradient;
};

/// Loss and gradient over the instances selected by `indices`.
[[nodiscard]] LossAndGradient loss_and_gradient(const TmeParams& params, std::span<const ModelInstance> instances,
                                                std::span<const std::size_t> indices, double l2_lambda,
                                                bool regularize_bias = true);

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t batch_size = 64;
    double l2_lambda = 0.1;
    bool regularize_bias = true;
    std::size_t n_trajectories = 5;
    std::size_t burn_in_epochs = 5;
    std::size_t max_epochs = 40;
    std::size_t ensemble_size = 20;
    double convergence_tol = 1e-6;
    std::uint64_t seed = 7;

    /// Throws InvalidArgument when a field is outside the supported search
    /// ranges (learning rate [1e-4, 1e-3], batch [10, 300], lambda [0.1, 5]).
    void validate_ranges() const;
};

/// Weights uniform(-0.05, 0.05); b_mu = mean ln y, b_sigma = ln var ln y over
/// the training targets; gate biases zero.
[[nodiscard]] TmeParams initialize(const WindowShape& shape, std::span<const ModelInstance> train, std::uint64_t seed);

struct Trajectory {
    std::size_t id = 0;
    std::uint64_t seed = 0;
    TmeParams initial;
    /// One iterate per completed epoch.
    std::vector<TmeParams> iterates;
    /// Per-epoch mean training NLL per instance (data term, averaged over batches).
    std::vector<double> train_loss;
    /// Per-epoch mean validation NLL per instance (NaN when no validation data).
    std::vector<double> validation_nll;
};

/// One Adam trajectory over shuffled mini-batches. Stops at max_epochs or
/// when the epoch loss changes by less than convergence_tol (relative).
[[nodiscard]] Trajectory train_trajectory(const TrainConfig& config, std::span<const ModelInstance> train,
                                          std::span<const ModelInstance> validation, std::uint64_t seed,
                                          std::size_t trajectory_id = 0);

struct MemberProvenance {
    std::size_t trajectory = 0;
    std::size_t epoch = 0;  // 1-based epoch whose end produced the iterate
    std::uint64_t seed = 0;
};

struct Ensemble {
    std::vector<TmeParams> members;
    std::vector<MemberProvenance> provenance;

    [[nodiscard]] std::size_t size() const noexcept { return members.size(); }
    [[nodiscard]] const WindowShape& shape() const { return members.front().shape(); }
};

/// Selects the iterates kept from one trajectory: ranked by validation NLL
/// (earliest epoch on ties), the best-validation iterate always first, others
/// restricted to post-burn-in epochs, at most `quota` in total.
[[nodiscard]] std::vector<std::size_t> select_iterates(const Trajectory& trajectory, std::size_t burn_in_epochs,
                                                       std::size_t quota);

/// Trains n_trajectories independent trajectories (seeds derived from
/// config.seed) in parallel and collects ensemble_size members.
[[nodiscard]] Ensemble collect_ensemble(const TrainConfig& config, std::span<const ModelInstance> train,
                                        std::span<const ModelInstance> validation);

/// Same as collect_ensemble but also returns the raw trajectories (for logs).
[[nodiscard]] Ensemble collect_ensemble(const TrainConfig& config, std::span<const ModelInstance> train,
                                        std::span<const ModelInstance> validation,
                                        std::vector<Trajectory>& trajectories);

struct Forecast {
    double mean = 0.0;
    double var_total = 0.0;
    double var_aleatoric = 0.0;
    double var_epistemic = 0.0;
    /// M x S gate probabilities of every member.
    Matrix member_gate_probs;
    /// Member-averaged gate probabilities.
    std::vector<double> gate_probs;
};

/// Predictive mean and variance on the deseasonalized scale, with the
/// aleatoric / epistemic split.
[[nodiscard]] Forecast predict(const Ensemble& ensemble, const ModelInstance& instance);

/// -ln of the ensemble mixture density at instance.y; adds ln(a) when a != 1
/// to express the likelihood of the raw volume.
[[nodiscard]] double nll_point(const Ensemble& ensemble, const ModelInstance& instance, double a = 1.0);

}  // namespace volmix::tme
