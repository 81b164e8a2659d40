#include "volmix/gbm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace volmix::gbm {

double Tree::predict(std::span<const double> x) const { return nodes[leaf_of(x)].value; }

std::size_t Tree::leaf_of(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
        const auto& n = nodes[i];
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
    }
    return i;
}

std::size_t Tree::depth() const {
    if (nodes.empty()) return 0;
    std::vector<std::size_t> d(nodes.size(), 0);
    std::size_t best = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        best = std::max(best, d[i]);
        if (!nodes[i].is_leaf()) {
            d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
            d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
        }
    }
    return best;
}

void SearchRanges::validate() const {
    if (n_trees_min < 1 || n_trees_min > n_trees_max || !(max_features_min > 0.0) ||
        max_features_min > max_features_max || max_features_max > 1.0 || min_leaf_min < 1 ||
        min_leaf_min > min_leaf_max || depth_min > depth_max || !(lr_min > 0.0) || lr_min > lr_max) {
        throw Error(Errc::InvalidArgument, "invalid GBM search range");
    }
}

Split best_split(const Matrix& x, std::span<const double> residuals, std::span<const std::size_t> rows,
                 std::span<const std::size_t> features, std::size_t min_leaf) {
    Split best;
    const std::size_t n = rows.size();
    min_leaf = std::max<std::size_t>(min_leaf, 1);
    if (n < 2 * min_leaf) return best;

    double sum = 0.0, sum_sq = 0.0;
    for (auto r : rows) {
        sum += residuals[r];
        sum_sq += residuals[r] * residuals[r];
    }
    const double parent_sse = sum_sq - sum * sum / static_cast<double>(n);

    std::vector<std::size_t> order(rows.begin(), rows.end());
    for (auto f : features) {
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
        double left_sum = 0.0, left_sq = 0.0;
        for (std::size_t k = 0; k + 1 < n; ++k) {
            const double r = residuals[order[k]];
            left_sum += r;
            left_sq += r * r;
            const double xa = x(order[k], f), xb = x(order[k + 1], f);
            if (xa == xb) continue;
            const std::size_t nl = k + 1, nr = n - nl;
            if (nl < min_leaf || nr < min_leaf) continue;
            const double right_sum = sum - left_sum, right_sq = sum_sq - left_sq;
            const double sse = (left_sq - left_sum * left_sum / static_cast<double>(nl)) +
                               (right_sq - right_sum * right_sum / static_cast<double>(nr));
            const double threshold = 0.5 * (xa + xb);
            const bool better = !best.found || sse < best.sse ||
                                (sse == best.sse && (f < best.feature || (f == best.feature && threshold < best.threshold)));
            if (better) best = {true, f, threshold, sse};
        }
    }
    if (best.found && !(best.sse < parent_sse)) best = {};
    return best;
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const Matrix& x, std::span<const double> r, const HyperParams& hyper, std::uint64_t seed)
        : x_(x), r_(r), hyper_(hyper), rng_(seed) {
        all_features_.resize(x.cols());
        std::iota(all_features_.begin(), all_features_.end(), std::size_t{0});
        const double k = std::ceil(hyper.max_features_frac * static_cast<double>(x.cols()) - 1e-9);
        n_sub_ = std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, x.cols());
    }

    int build(std::vector<std::size_t>& rows, std::size_t depth) {
        const auto id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        double mean = 0.0;
        for (auto i : rows) mean += r_[i];
        mean /= static_cast<double>(rows.size());

        Split split;
        if (depth < hyper_.max_depth) split = best_split(x_, r_, rows, sample_features(), hyper_.min_samples_leaf);
        if (!split.found) {
            tree_.nodes[static_cast<std::size_t>(id)].value = mean;
            return id;
        }
        std::vector<std::size_t> left, right;
        for (auto i : rows) (x_(i, split.feature) <= split.threshold ? left : right).push_back(i);
        rows.clear();
        rows.shrink_to_fit();
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = static_cast<int>(split.feature);
        node.threshold = split.threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    Tree take() { return std::move(tree_); }

private:
    std::vector<std::size_t> sample_features() {
        if (n_sub_ == all_features_.size()) return all_features_;
        std::vector<std::size_t> pool = all_features_;
        for (std::size_t i = 0; i < n_sub_; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng_)]);
        }
        pool.resize(n_sub_);
        std::sort(pool.begin(), pool.end());
        return pool;
    }

    const Matrix& x_;
    std::span<const double> r_;
    const HyperParams& hyper_;
    std::mt19937_64 rng_;
    std::vector<std::size_t> all_features_;
    std::size_t n_sub_ = 1;
    Tree tree_;
};

double sse_of(std::span<const double> u, std::span<const double> f) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += (u[i] - f[i]) * (u[i] - f[i]);
    return s;
}

}  // namespace

Tree fit_tree(const Matrix& x, std::span<const double> residuals, const HyperParams& hyper, std::uint64_t seed) {
    if (residuals.size() != x.rows()) throw Error(Errc::ShapeMismatch, "one residual per row required");
    if (x.rows() < 2 * std::max<std::size_t>(hyper.min_samples_leaf, 1)) {
        throw Error(Errc::TooFewSamples, "tree needs at least 2 * min_samples_leaf rows");
    }
    std::vector<std::size_t> rows(x.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    TreeBuilder builder(x, residuals, hyper, seed);
    builder.build(rows, 0);
    return builder.take();
}

double GbmModel::predict(std::span<const double> x) const {
    if (x.size() != n_features) throw Error(Errc::ShapeMismatch, "feature vector length does not match the model");
    double f = init_value;
    for (std::size_t m = 0; m < trees.size(); ++m) f += learning_rate * scales[m] * trees[m].predict(x);
    return f;
}

GbmModel fit(const Matrix& x, std::span<const double> u, const HyperParams& hyper) {
    if (u.empty() || u.size() != x.rows()) throw Error(Errc::ShapeMismatch, "one target per row required");
    GbmModel model;
    model.hyper = hyper;
    model.learning_rate = hyper.learning_rate;
    model.n_features = x.cols();
    model.init_value = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(u.size());

    std::vector<double> f(u.size(), model.init_value), r(u.size());
    model.train_sse.push_back(sse_of(u, f));
    for (std::size_t m = 0; m < hyper.n_trees; ++m) {
        for (std::size_t i = 0; i < u.size(); ++i) r[i] = u[i] - f[i];
        Tree tree = fit_tree(x, r, hyper, derive_seed(hyper.seed, m));
        for (std::size_t i = 0; i < u.size(); ++i) f[i] += hyper.learning_rate * tree.predict(x.row(i));
        model.trees.push_back(std::move(tree));
        model.scales.push_back(1.0);
        model.train_sse.push_back(sse_of(u, f));
    }
    double mean_res = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) mean_res += u[i] - f[i];
    mean_res /= static_cast<double>(u.size());
    double var = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) var += (u[i] - f[i] - mean_res) * (u[i] - f[i] - mean_res);
    model.residual_variance = var / static_cast<double>(u.size());
    return model;
}

namespace {

double rmse_on(const GbmModel& model, const Matrix& x, std::span<const double> u) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double e = u[i] - model.predict(x.row(i));
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(u.size()));
}

}  // namespace

SearchResult random_search(const Matrix& x_train, std::span<const double> u_train, const Matrix& x_valid,
                           std::span<const double> u_valid, std::size_t n_draws, std::uint64_t seed,
                           const SearchRanges& ranges) {
    if (n_draws < 1) throw Error(Errc::InvalidArgument, "n_draws must be at least 1");
    if (u_valid.empty()) throw Error(Errc::EmptySet, "random search needs validation rows");
    ranges.validate();
    std::mt19937_64 rng(seed);
    SearchResult result;
    for (std::size_t d = 0; d < n_draws; ++d) {
        HyperParams hp;
        hp.n_trees = std::uniform_int_distribution<std::size_t>(ranges.n_trees_min, ranges.n_trees_max)(rng);
        hp.max_features_frac = std::uniform_real_distribution<double>(ranges.max_features_min, ranges.max_features_max)(rng);
        hp.min_samples_leaf = std::uniform_int_distribution<std::size_t>(ranges.min_leaf_min, ranges.min_leaf_max)(rng);
        hp.max_depth = std::uniform_int_distribution<std::size_t>(ranges.depth_min, ranges.depth_max)(rng);
        hp.learning_rate = std::exp(
            std::uniform_real_distribution<double>(std::log(ranges.lr_min), std::log(ranges.lr_max))(rng));
        hp.seed = derive_seed(seed, d);

        GbmModel model = fit(x_train, u_train, hp);
        const double score = rmse_on(model, x_valid, u_valid);
        result.table.push_back({hp, score});
        if (d == 0 || score < result.table[result.best_index].validation_rmse) {
            result.best_index = d;
            result.best = hp;
            result.model = std::move(model);
        }
    }
    return result;
}

Matrix design_matrix(std::span<const preprocess::ModelInstance> instances) {
    if (instances.empty()) return {};
    const std::size_t p = preprocess::shape_of(instances.front()).flat_size();
    Matrix x(instances.size(), p);
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto flat = preprocess::flatten(instances[i]);
        if (flat.size() != p) throw Error(Errc::ShapeMismatch, "instances have different window shapes", i);
        std::copy(flat.begin(), flat.end(), x.row(i).begin());
    }
    return x;
}

std::vector<double> log_targets(std::span<const preprocess::ModelInstance> instances) {
    std::vector<double> u;
    u.reserve(instances.size());
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (!(instances[i].y > 0.0)) throw Error(Errc::NonPositiveTarget, "log target needs y > 0", i);
        u.push_back(std::log(instances[i].y));
    }
    return u;
}

}  // namespace volmix::gbm
