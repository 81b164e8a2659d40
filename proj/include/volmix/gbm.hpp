#pragma once

// Gradient boosting with least-squares regression trees on flattened feature
// windows. The target is u = ln y.

#include "volmix/common.hpp"
#include "volmix/preprocess.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace volmix::gbm {

/// Internal nodes send x[feature] <= threshold to `left`. Leaves have feature == -1.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;

    [[nodiscard]] bool is_leaf() const noexcept { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Nodes in preorder; nodes[0] is the root.
struct Tree {
    std::vector<TreeNode> nodes;

    [[nodiscard]] double predict(std::span<const double> x) const;
    /// Index of the leaf reached by x.
    [[nodiscard]] std::size_t leaf_of(std::span<const double> x) const;
    [[nodiscard]] std::size_t depth() const;
    friend bool operator==(const Tree&, const Tree&) = default;
};

struct HyperParams {
    std::size_t n_trees = 300;
    double max_features_frac = 1.0;
    std::size_t min_samples_leaf = 2;
    std::size_t max_depth = 4;
    double learning_rate = 0.05;
    std::uint64_t seed = 0;

    friend bool operator==(const HyperParams&, const HyperParams&) = default;
};

struct SearchRanges {
    std::size_t n_trees_min = 100, n_trees_max = 1000;
    double max_features_min = 0.1, max_features_max = 1.0;
    std::size_t min_leaf_min = 2, min_leaf_max = 9;
    std::size_t depth_min = 4, depth_max = 9;
    double lr_min = 0.005, lr_max = 0.05;

    /// Throws InvalidArgument on empty or inverted ranges.
    void validate() const;
};

struct Split {
    bool found = false;
    std::size_t feature = 0;
    double threshold = 0.0;
    /// Summed squared deviation of the two children from their means.
    double sse = 0.0;
};

/// Best (feature, threshold) over `features` for the rows `rows`, each child
/// holding at least min_leaf rows. Only splits that strictly reduce the
/// parent's squared error are returned. Ties go to the lowest feature, then
/// the lowest threshold.
[[nodiscard]] Split best_split(const Matrix& x, std::span<const double> residuals, std::span<const std::size_t> rows,
                               std::span<const std::size_t> features, std::size_t min_leaf);

/// Greedy least-squares tree on all rows of x. `seed` drives the per-node
/// feature subsample. Throws TooFewSamples with fewer than 2 min_samples_leaf rows.
[[nodiscard]] Tree fit_tree(const Matrix& x, std::span<const double> residuals, const HyperParams& hyper,
                            std::uint64_t seed);

struct GbmModel {
    double init_value = 0.0;
    double learning_rate = 0.0;
    std::vector<Tree> trees;
    /// Line-search coefficient per stage; always 1 under squared loss.
    std::vector<double> scales;
    HyperParams hyper;
    std::size_t n_features = 0;
    /// Variance of u minus the fitted value on the training rows.
    double residual_variance = 0.0;
    /// Training sum of squared errors after stage m (index 0 is F_0).
    std::vector<double> train_sse;

    [[nodiscard]] double predict(std::span<const double> x) const;
};

[[nodiscard]] GbmModel fit(const Matrix& x, std::span<const double> u, const HyperParams& hyper);

struct SearchRow {
    HyperParams hyper;
    double validation_rmse = 0.0;
};

struct SearchResult {
    HyperParams best;
    std::size_t best_index = 0;
    std::vector<SearchRow> table;
    GbmModel model;
};

/// Draws hyperparameters uniformly within `ranges` (learning rate
/// log-uniform), fits each on the training rows and keeps the lowest
/// validation RMSE on u.
[[nodiscard]] SearchResult random_search(const Matrix& x_train, std::span<const double> u_train,
                                         const Matrix& x_valid, std::span<const double> u_valid, std::size_t n_draws,
                                         std::uint64_t seed, const SearchRanges& ranges = {});

/// One row per instance holding the flattened windows.
[[nodiscard]] Matrix design_matrix(std::span<const preprocess::ModelInstance> instances);
/// ln y per instance.
[[nodiscard]] std::vector<double> log_targets(std::span<const preprocess::ModelInstance> instances);

}  // namespace volmix::gbm
