#pragma once

// Shared tree machinery for the classifier families. Not installed; the
// public surface lives in deltarad/learn.hpp.

#include <vector>

#include "deltarad/learn.hpp"
#include "deltarad/rng.hpp"

namespace deltarad::internal {

/// balanced: w_c = N / (2 * N_c); otherwise 1.
std::vector<double> class_weights(const std::vector<int>& labels, bool balanced);

struct ClassTreeConfig {
    int max_depth = 10;
    int min_samples_leaf = 1;
    int max_features = 0;  // <= 0 or >= p: consider every feature
};

/// Weighted-Gini CART. Ties break toward the lowest feature index, then the
/// lowest threshold; zero-gain splits are allowed on impure nodes so
/// parity-style datasets stay learnable. `rng` is only consulted for
/// per-split feature subsets.
TreeModel build_classification_tree(const Dataset& d, const std::vector<double>& sample_weights,
                                    const ClassTreeConfig& cfg, Rng* rng);

/// Second-order regression tree on gradient/curvature statistics with L2
/// leaf penalty; splits with gain <= 0 are rejected. Leaf values are the
/// raw Newton steps -G/(H+lambda), clamped to +/-10.
TreeModel build_regression_tree(const Dataset& d, const std::vector<double>& grad,
                                const std::vector<double>& hess, int max_depth, double l2_lambda);

}  // namespace deltarad::internal
