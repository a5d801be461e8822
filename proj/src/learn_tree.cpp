#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "learn_internal.hpp"

namespace deltarad {

double TreeModel::predict_value(const double* row) const {
    int node = 0;
    while (nodes[node].feature >= 0)
        node = row[nodes[node].feature] < nodes[node].threshold ? nodes[node].left
                                                                : nodes[node].right;
    return nodes[node].value;
}

}  // namespace deltarad

namespace deltarad::internal {

std::vector<double> class_weights(const std::vector<int>& labels, bool balanced) {
    std::vector<double> w(2, 1.0);
    if (!balanced) return w;
    const double n = static_cast<double>(labels.size());
    double n1 = 0;
    for (int y : labels) n1 += y;
    const double n0 = n - n1;
    if (n0 > 0) w[0] = n / (2.0 * n0);
    if (n1 > 0) w[1] = n / (2.0 * n1);
    return w;
}

namespace {

struct ClassBuilder {
    const Dataset& d;
    const std::vector<double>& weights;
    const ClassTreeConfig& cfg;
    Rng* rng;
    TreeModel out;
    double root_weight = 0.0;
    std::vector<std::size_t> scratch;  // feature index pool for subsets

    static double gini(double w0, double w1) {
        const double w = w0 + w1;
        if (w <= 0.0) return 0.0;
        return 1.0 - (w0 * w0 + w1 * w1) / (w * w);
    }

    struct Split {
        bool found = false;
        int feature = -1;
        double threshold = 0.0;
        double gain = 0.0;
        double child_impurity_term = 0.0;  // W_L*g_L + W_R*g_R
    };

    // best split on one feature, sorted scan with prefix class weights
    void scan_feature(int f, std::vector<std::size_t>& idx, double w0, double w1,
                      double parent_gini, Split& best) const {
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const double xa = d.at(a, f), xb = d.at(b, f);
            return xa != xb ? xa < xb : a < b;
        });
        const double w_total = w0 + w1;
        double l0 = 0.0, l1 = 0.0;
        std::size_t left_n = 0;
        for (std::size_t pos = 0; pos + 1 < idx.size(); ++pos) {
            const std::size_t r = idx[pos];
            const double wr = weights[r];
            if (d.labels[r] == 1) l1 += wr;
            else l0 += wr;
            ++left_n;
            const double xv = d.at(r, f), xn = d.at(idx[pos + 1], f);
            if (!(xn > xv)) continue;
            if (left_n < static_cast<std::size_t>(cfg.min_samples_leaf)) continue;
            if (idx.size() - left_n < static_cast<std::size_t>(cfg.min_samples_leaf)) continue;
            const double wl = l0 + l1, wr_side = w_total - wl;
            const double child = wl * gini(l0, l1) + wr_side * gini(w0 - l0, w1 - l1);
            const double gain = parent_gini * w_total - child;
            if (!best.found || gain > best.gain) {
                best.found = true;
                best.feature = f;
                best.threshold = xv + (xn - xv) / 2.0;
                best.gain = gain;
                best.child_impurity_term = child;
            }
        }
    }

    int build(std::vector<std::size_t>& rows, int depth) {
        double w0 = 0.0, w1 = 0.0;
        for (std::size_t r : rows) (d.labels[r] == 1 ? w1 : w0) += weights[r];
        const int node_id = static_cast<int>(out.nodes.size());
        out.nodes.push_back({});
        out.nodes[node_id].value = w1 > w0 ? 1.0 : 0.0;  // tie -> class 0

        const double parent_gini = gini(w0, w1);
        const bool splittable = depth < cfg.max_depth && parent_gini > 0.0 &&
                                rows.size() >= 2 * static_cast<std::size_t>(cfg.min_samples_leaf);
        if (!splittable) return node_id;

        const int p = static_cast<int>(d.n_cols());
        Split best;
        const bool subset = rng != nullptr && cfg.max_features > 0 && cfg.max_features < p;
        if (subset) {
            scratch.resize(p);
            std::iota(scratch.begin(), scratch.end(), 0);
            for (int i = 0; i < cfg.max_features; ++i) {
                const std::size_t j =
                    i + static_cast<std::size_t>(rng->uniform_index(p - i));
                std::swap(scratch[i], scratch[j]);
            }
            std::sort(scratch.begin(), scratch.begin() + cfg.max_features);
            for (int i = 0; i < cfg.max_features; ++i)
                scan_feature(static_cast<int>(scratch[i]), rows, w0, w1, parent_gini, best);
            // a dead subset falls back to the full feature pool
            if (!best.found)
                for (int f = 0; f < p; ++f) scan_feature(f, rows, w0, w1, parent_gini, best);
        } else {
            for (int f = 0; f < p; ++f) scan_feature(f, rows, w0, w1, parent_gini, best);
        }
        if (!best.found) return node_id;

        out.importances[best.feature] +=
            ((w0 + w1) * parent_gini - best.child_impurity_term) / root_weight;

        std::vector<std::size_t> left, right;
        for (std::size_t r : rows)
            (d.at(r, best.feature) < best.threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        out.nodes[node_id].feature = best.feature;
        out.nodes[node_id].threshold = best.threshold;
        out.nodes[node_id].left = build(left, depth + 1);
        out.nodes[node_id].right = build(right, depth + 1);
        return node_id;
    }
};

}  // namespace

TreeModel build_classification_tree(const Dataset& d, const std::vector<double>& sample_weights,
                                    const ClassTreeConfig& cfg, Rng* rng) {
    if (d.n_rows() == 0) throw std::invalid_argument("tree: empty training set");
    ClassBuilder b{d, sample_weights, cfg, rng, {}, 0.0, {}};
    b.out.importances.assign(d.n_cols(), 0.0);
    for (double w : sample_weights) b.root_weight += w;
    std::vector<std::size_t> rows(d.n_rows());
    std::iota(rows.begin(), rows.end(), 0);
    b.build(rows, 0);
    return std::move(b.out);
}

namespace {

struct RegBuilder {
    const Dataset& d;
    const std::vector<double>& grad;
    const std::vector<double>& hess;
    int max_depth;
    double lambda;
    TreeModel out;

    static double leaf_weight(double g, double h, double lambda) {
        const double w = -g / (h + lambda);
        return std::clamp(w, -10.0, 10.0);
    }

    static double score(double g, double h, double lambda) { return g * g / (h + lambda); }

    int build(std::vector<std::size_t>& rows, int depth) {
        double g_sum = 0.0, h_sum = 0.0;
        for (std::size_t r : rows) {
            g_sum += grad[r];
            h_sum += hess[r];
        }
        const int node_id = static_cast<int>(out.nodes.size());
        out.nodes.push_back({});
        out.nodes[node_id].value = leaf_weight(g_sum, h_sum, lambda);
        if (depth >= max_depth || rows.size() < 2) return node_id;

        const int p = static_cast<int>(d.n_cols());
        bool found = false;
        int best_f = -1;
        double best_thr = 0.0, best_gain = 0.0;
        std::vector<std::size_t> idx = rows;
        for (int f = 0; f < p; ++f) {
            std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
                const double xa = d.at(a, f), xb = d.at(b, f);
                return xa != xb ? xa < xb : a < b;
            });
            double gl = 0.0, hl = 0.0;
            for (std::size_t pos = 0; pos + 1 < idx.size(); ++pos) {
                gl += grad[idx[pos]];
                hl += hess[idx[pos]];
                const double xv = d.at(idx[pos], f), xn = d.at(idx[pos + 1], f);
                if (!(xn > xv)) continue;
                const double gain = 0.5 * (score(gl, hl, lambda) +
                                           score(g_sum - gl, h_sum - hl, lambda) -
                                           score(g_sum, h_sum, lambda));
                if (gain > 0.0 && (!found || gain > best_gain)) {
                    found = true;
                    best_f = f;
                    best_thr = xv + (xn - xv) / 2.0;
                    best_gain = gain;
                }
            }
        }
        if (!found) return node_id;

        out.importances[best_f] += best_gain;
        std::vector<std::size_t> left, right;
        for (std::size_t r : rows) (d.at(r, best_f) < best_thr ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        out.nodes[node_id].feature = best_f;
        out.nodes[node_id].threshold = best_thr;
        out.nodes[node_id].left = build(left, depth + 1);
        out.nodes[node_id].right = build(right, depth + 1);
        return node_id;
    }
};

}  // namespace

TreeModel build_regression_tree(const Dataset& d, const std::vector<double>& grad,
                                const std::vector<double>& hess, int max_depth,
                                double l2_lambda) {
    if (d.n_rows() == 0) throw std::invalid_argument("tree: empty training set");
    RegBuilder b{d, grad, hess, max_depth, l2_lambda, {}};
    b.out.importances.assign(d.n_cols(), 0.0);
    std::vector<std::size_t> rows(d.n_rows());
    std::iota(rows.begin(), rows.end(), 0);
    b.build(rows, 0);
    return std::move(b.out);
}

}  // namespace deltarad::internal
