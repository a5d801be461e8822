#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "learn_internal.hpp"

namespace deltarad {

using internal::build_classification_tree;
using internal::build_regression_tree;
using internal::class_weights;
using internal::ClassTreeConfig;

std::string family_name(ModelFamily f) {
    switch (f) {
        case ModelFamily::DT: return "DT";
        case ModelFamily::RF: return "RF";
        case ModelFamily::ADA: return "ADA";
        case ModelFamily::GBT: return "GBT";
        default: return "SVM";
    }
}

ModelFamily parse_family(const std::string& name) {
    if (name == "DT") return ModelFamily::DT;
    if (name == "RF") return ModelFamily::RF;
    if (name == "ADA") return ModelFamily::ADA;
    if (name == "GBT") return ModelFamily::GBT;
    if (name == "SVM") return ModelFamily::SVM;
    throw std::invalid_argument("unknown model family: " + name);
}

TrainedModel train_decision_tree(const Dataset& d, const DecisionTreeParams& p) {
    d.validate();
    if (d.n_rows() == 0) throw std::invalid_argument("train_decision_tree: empty training set");
    const auto cw = class_weights(d.labels, p.balanced_class_weights);
    std::vector<double> weights(d.n_rows());
    for (std::size_t i = 0; i < d.n_rows(); ++i) weights[i] = cw[d.labels[i]];

    ClassTreeConfig cfg{p.max_depth, p.min_samples_leaf, 0};
    TrainedModel m;
    m.family = ModelFamily::DT;
    m.schema = d.columns;
    m.impl = DecisionTreeModel{p, build_classification_tree(d, weights, cfg, nullptr)};
    return m;
}

TrainedModel train_random_forest(const Dataset& d, const RandomForestParams& p,
                                 std::uint64_t seed) {
    d.validate();
    if (d.n_rows() == 0 || p.n_trees < 1)
        throw std::invalid_argument("train_random_forest: empty training set or no trees");
    const auto cw = class_weights(d.labels, p.balanced_class_weights);
    const int pcols = static_cast<int>(d.n_cols());
    const int max_features =
        p.max_features > 0 ? p.max_features
                           : std::max(1, static_cast<int>(std::sqrt(double(pcols))));

    RandomForestModel model;
    model.params = p;
    model.params.max_features = max_features;
    for (int t = 0; t < p.n_trees; ++t) {
        Rng rng(derive_seed(seed, 0x7EEE + t));
        std::vector<double> weights(d.n_rows(), 0.0);
        if (p.bootstrap) {
            for (std::size_t i = 0; i < d.n_rows(); ++i)
                weights[rng.uniform_index(d.n_rows())] += 1.0;
        } else {
            std::fill(weights.begin(), weights.end(), 1.0);
        }
        for (std::size_t i = 0; i < d.n_rows(); ++i) weights[i] *= cw[d.labels[i]];
        ClassTreeConfig cfg{p.max_depth, p.min_samples_leaf, max_features};
        model.trees.push_back(build_classification_tree(d, weights, cfg, &rng));
    }

    TrainedModel m;
    m.family = ModelFamily::RF;
    m.schema = d.columns;
    m.seed = seed;
    m.impl = std::move(model);
    return m;
}

TrainedModel train_adaboost(const Dataset& d, const AdaBoostParams& p, std::uint64_t seed) {
    d.validate();
    if (d.n_rows() == 0) throw std::invalid_argument("train_adaboost: empty training set");
    const auto cw = class_weights(d.labels, p.balanced_class_weights);
    std::vector<double> w(d.n_rows());
    double norm = 0.0;
    for (std::size_t i = 0; i < d.n_rows(); ++i) {
        w[i] = cw[d.labels[i]];
        norm += w[i];
    }
    for (double& x : w) x /= norm;

    AdaBoostModel model;
    model.params = p;
    ClassTreeConfig cfg{p.base_depth, 1, 0};
    for (int t = 0; t < p.n_estimators; ++t) {
        TreeModel tree = build_classification_tree(d, w, cfg, nullptr);
        double err = 0.0;
        std::vector<char> miss(d.n_rows());
        for (std::size_t i = 0; i < d.n_rows(); ++i) {
            miss[i] = tree.predict_value(d.row(i)) != static_cast<double>(d.labels[i]);
            if (miss[i]) err += w[i];
        }
        if (err >= 0.5) break;  // no better than chance on the weighted sample
        const double floored = std::max(err, 1e-10);
        const double alpha = p.learning_rate * std::log((1.0 - floored) / floored);
        model.trees.push_back(std::move(tree));
        model.alphas.push_back(alpha);
        model.round_errors.push_back(err);
        if (err <= 1e-10) break;  // perfect round

        double total = 0.0;
        for (std::size_t i = 0; i < d.n_rows(); ++i) {
            if (miss[i]) w[i] *= std::exp(alpha);
            total += w[i];
        }
        for (double& x : w) x /= total;
    }
    if (model.trees.empty()) {
        // every candidate round was rejected: fall back to one majority stump
        ClassTreeConfig stump{0, 1, 0};
        model.trees.push_back(build_classification_tree(d, w, stump, nullptr));
        model.alphas.push_back(1.0);
        model.round_errors.push_back(0.5);
    }

    TrainedModel m;
    m.family = ModelFamily::ADA;
    m.schema = d.columns;
    m.seed = seed;
    m.impl = std::move(model);
    return m;
}

TrainedModel train_gradient_boosted_trees(const Dataset& d, const GbtParams& p,
                                          std::uint64_t seed) {
    d.validate();
    if (d.n_rows() == 0)
        throw std::invalid_argument("train_gradient_boosted_trees: empty training set");
    const auto cw = class_weights(d.labels, p.balanced_class_weights);
    const std::size_t n = d.n_rows();
    std::vector<double> sw(n);
    for (std::size_t i = 0; i < n; ++i) sw[i] = cw[d.labels[i]];

    // weighted log-odds prior
    double wpos = 0.0, wtotal = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        wtotal += sw[i];
        if (d.labels[i] == 1) wpos += sw[i];
    }
    const double prior = std::clamp(wpos / wtotal, 1e-7, 1.0 - 1e-7);

    GbtModel model;
    model.params = p;
    model.base_score = std::log(prior / (1.0 - prior));

    std::vector<double> margin(n, model.base_score);
    std::vector<double> grad(n), hess(n);
    auto mean_logloss = [&]() {
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double z = margin[i];
            // log(1 + exp(-y*z)) in a stable form
            const double yz = d.labels[i] == 1 ? z : -z;
            loss += sw[i] * (yz > 0 ? std::log1p(std::exp(-yz)) : -yz + std::log1p(std::exp(yz)));
        }
        return loss / wtotal;
    };

    for (int round = 0; round < p.n_rounds; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double prob = 1.0 / (1.0 + std::exp(-margin[i]));
            grad[i] = sw[i] * (prob - static_cast<double>(d.labels[i]));
            hess[i] = sw[i] * prob * (1.0 - prob);
        }
        TreeModel tree = build_regression_tree(d, grad, hess, p.max_depth, p.l2_lambda);
        // fold the learning rate into the stored leaf values
        for (auto& node : tree.nodes)
            if (node.feature < 0) node.value *= p.learning_rate;
        for (std::size_t i = 0; i < n; ++i) margin[i] += tree.predict_value(d.row(i));
        model.trees.push_back(std::move(tree));
        model.train_loss.push_back(mean_logloss());
    }
    (void)seed;

    TrainedModel m;
    m.family = ModelFamily::GBT;
    m.schema = d.columns;
    m.seed = seed;
    m.impl = std::move(model);
    return m;
}

namespace {

int forest_vote(const RandomForestModel& model, const double* row) {
    int votes1 = 0;
    for (const auto& t : model.trees) votes1 += t.predict_value(row) == 1.0 ? 1 : 0;
    const int votes0 = static_cast<int>(model.trees.size()) - votes1;
    return votes1 > votes0 ? 1 : 0;  // tie -> class 0
}

int ada_vote(const AdaBoostModel& model, const double* row) {
    double score = 0.0;
    for (std::size_t t = 0; t < model.trees.size(); ++t)
        score += model.alphas[t] * (model.trees[t].predict_value(row) == 1.0 ? 1.0 : -1.0);
    return score > 0.0 ? 1 : 0;
}

int gbt_predict(const GbtModel& model, const double* row) {
    double margin = model.base_score;
    for (const auto& t : model.trees) margin += t.predict_value(row);
    return margin >= 0.0 ? 1 : 0;  // sigmoid(margin) >= 0.5
}

int svm_predict_row(const SvmModel& model, const double* row);

}  // namespace

// defined in learn_svm.cpp
double svm_decision_value(const SvmModel& model, const double* row);

namespace {
int svm_predict_row(const SvmModel& model, const double* row) {
    return svm_decision_value(model, row) >= 0.0 ? 1 : 0;
}
}  // namespace

std::vector<int> predict(const TrainedModel& m, const Dataset& d) {
    if (d.columns != m.schema)
        throw std::invalid_argument(
            "predict: dataset columns do not match the model's training schema (names and "
            "order)");
    std::vector<int> out(d.n_rows());
    for (std::size_t i = 0; i < d.n_rows(); ++i) {
        const double* row = d.row(i);
        std::visit(
            [&](const auto& impl) {
                using T = std::decay_t<decltype(impl)>;
                if constexpr (std::is_same_v<T, DecisionTreeModel>)
                    out[i] = impl.tree.predict_value(row) == 1.0 ? 1 : 0;
                else if constexpr (std::is_same_v<T, RandomForestModel>)
                    out[i] = forest_vote(impl, row);
                else if constexpr (std::is_same_v<T, AdaBoostModel>)
                    out[i] = ada_vote(impl, row);
                else if constexpr (std::is_same_v<T, GbtModel>)
                    out[i] = gbt_predict(impl, row);
                else
                    out[i] = svm_predict_row(impl, row);
            },
            m.impl);
    }
    return out;
}

std::vector<int> predict_rows(const TrainedModel& m, const Dataset& d,
                              const std::vector<std::size_t>& rows) {
    return predict(m, d.subset(rows));
}

TrainedModel train_family(ModelFamily family, const Dataset& d, const ModelParams& params,
                          std::uint64_t seed) {
    switch (family) {
        case ModelFamily::DT: return train_decision_tree(d, std::get<DecisionTreeParams>(params));
        case ModelFamily::RF:
            return train_random_forest(d, std::get<RandomForestParams>(params), seed);
        case ModelFamily::ADA: return train_adaboost(d, std::get<AdaBoostParams>(params), seed);
        case ModelFamily::GBT:
            return train_gradient_boosted_trees(d, std::get<GbtParams>(params), seed);
        default: return train_svm(d, std::get<SvmParams>(params), seed);
    }
}

namespace {

std::vector<double> normalized(std::vector<double> v) {
    double sum = 0.0;
    for (double x : v) sum += x;
    if (sum > 0.0)
        for (double& x : v) x /= sum;
    return v;
}

}  // namespace

std::vector<double> raw_importances(const TrainedModel& m) {
    const std::size_t p = m.schema.size();
    std::vector<double> imp(p, 0.0);
    std::visit(
        [&](const auto& impl) {
            using T = std::decay_t<decltype(impl)>;
            if constexpr (std::is_same_v<T, DecisionTreeModel>) {
                imp = impl.tree.importances;
            } else if constexpr (std::is_same_v<T, RandomForestModel>) {
                for (const auto& t : impl.trees) {
                    const auto ti = normalized(t.importances);
                    for (std::size_t f = 0; f < p; ++f) imp[f] += ti[f];
                }
            } else if constexpr (std::is_same_v<T, AdaBoostModel>) {
                for (std::size_t t = 0; t < impl.trees.size(); ++t) {
                    const auto ti = normalized(impl.trees[t].importances);
                    for (std::size_t f = 0; f < p; ++f) imp[f] += impl.alphas[t] * ti[f];
                }
            } else if constexpr (std::is_same_v<T, GbtModel>) {
                for (const auto& t : impl.trees)
                    for (std::size_t f = 0; f < p; ++f) imp[f] += t.importances[f];
            } else {
                if (impl.params.kernel != SvmKernel::Linear)
                    throw std::invalid_argument(
                        "feature_importances: RBF-kernel SVM has no defined importance");
                // |w| of the primal weight vector in standardized space
                for (std::size_t s = 0; s < impl.n_sv; ++s)
                    for (std::size_t f = 0; f < p; ++f)
                        imp[f] += impl.coef[s] * impl.support_x[s * p + f];
                for (double& x : imp) x = std::abs(x);
            }
        },
        m.impl);
    return normalized(std::move(imp));
}

std::vector<std::pair<std::string, double>> feature_importances(const TrainedModel& m,
                                                                int top_k) {
    const std::vector<double> imp = raw_importances(m);
    std::vector<std::pair<std::string, double>> ranked;
    for (std::size_t f = 0; f < imp.size(); ++f) ranked.emplace_back(m.schema[f], imp[f]);
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    if (top_k >= 0 && ranked.size() > static_cast<std::size_t>(top_k))
        ranked.resize(static_cast<std::size_t>(top_k));
    return ranked;
}

}  // namespace deltarad
